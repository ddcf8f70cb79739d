"""Exception hierarchy shared by all datagraph modules."""

from __future__ import annotations


class DatagraphError(Exception):
    """Base class for every error raised by this package."""


# --- graph construction / lifecycle ---------------------------------------

class GraphStateError(DatagraphError):
    """Operation attempted in the wrong lifecycle phase (sealed vs. building)."""


class MissingNodeError(DatagraphError):
    """A node id does not exist in the graph."""

    def __init__(self, node_id: object):
        self.node_id = node_id
        super().__init__(f"unknown node id: {node_id!r}")


class SelfLoopError(DatagraphError):
    """An edge may not connect a node to itself."""

    def __init__(self, node_id: int):
        self.node_id = node_id
        super().__init__(f"self-loop on node {node_id} is not allowed")


class DuplicateEdgeError(DatagraphError):
    """At most one edge may exist per unordered node pair."""

    def __init__(self, a: int, b: int):
        self.pair = (min(a, b), max(a, b))
        super().__init__(f"edge {{{self.pair[0]}, {self.pair[1]}}} already exists")


class InvalidLengthError(DatagraphError):
    """Edge lengths must be positive, finite meters."""


class GraphParseError(DatagraphError):
    """A graph document could not be parsed; the message names the location."""


class GraphValidationError(DatagraphError):
    """A graph document parsed fine but violates structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"graph failed validation: {lines}")


# --- backends ---------------------------------------------------------------

class BackendError(DatagraphError):
    """Base class for query-backend failures."""


class ReplayMissError(BackendError):
    """A (node, query) pair was not found in the replay store."""

    def __init__(self, node_id: int, query_hash: str):
        self.node_id = node_id
        self.query_hash = query_hash
        super().__init__(
            f"no recorded response for node {node_id}, query hash {query_hash}"
        )


class RemoteTimeoutError(BackendError):
    """The remote endpoint did not answer within the configured timeout."""


class RemoteProtocolError(BackendError):
    """The remote endpoint answered with a non-2xx status."""

    def __init__(self, status: int, detail: str = ""):
        self.status = status
        suffix = f": {detail}" if detail else ""
        super().__init__(f"remote endpoint returned status {status}{suffix}")


class MalformedResponseError(BackendError):
    """The remote endpoint returned a body that does not match the wire format."""


# --- traversal ---------------------------------------------------------------

class InvalidPathError(DatagraphError):
    """A supplied path contains a consecutive pair that is not adjacent."""

    def __init__(self, a: int, b: int):
        self.pair = (a, b)
        super().__init__(f"path nodes {a} and {b} are not adjacent")


class TraversalAbortedError(DatagraphError):
    """A backend failed mid-traversal; carries the partial result.

    The original backend error is available as ``__cause__`` and the
    responses gathered before the failure as ``partial``.
    """

    def __init__(self, node_id: int, partial):
        self.node_id = node_id
        self.partial = partial
        super().__init__(f"backend failed at node {node_id}; partial result attached")


class DedupUnavailableError(DatagraphError):
    """Deduplication needs object positions the backend did not provide."""


# --- worldgen ----------------------------------------------------------------

class WorldSpecError(DatagraphError):
    """A world specification is invalid."""


class TaskUnavailableError(DatagraphError):
    """The world cannot support the requested task kind."""


# --- harness -----------------------------------------------------------------

class ConfigError(DatagraphError):
    """An experiment configuration is invalid."""


class RouteError(DatagraphError):
    """No route exists between the requested endpoints."""
