"""Traversal strategies: proximity-ordered querying, path querying, baselines.

Proximity traversal expands outward from the agent's node and queries each
scene as it is reached, so the closest satisfying scene is found before any
farther one. Visit order is fully deterministic: nondecreasing distance from
the agent (hop count by default, geodesic meters with ``metric="meters"``),
ties broken by ascending node id. The brute-force baseline ignores space
entirely and walks node ids in order, modeling a search over every captured
frame.

Backend failures never skip a node silently: the traversal aborts with
:class:`TraversalAbortedError` carrying the partial result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from heapq import heappop, heappush
from typing import Iterable, Iterator

from .backends import Query, QueryBackend, QueryResponse
from .errors import (
    BackendError,
    DedupUnavailableError,
    InvalidPathError,
    TraversalAbortedError,
)
from .graph import Datagraph, NodeId, SceneObject

_METRICS = ("hops", "meters")


@dataclass(frozen=True)
class TraversalResult:
    """Ordered per-node responses plus distance and cost accounting.

    ``distances`` maps each visited node to (hops, meters) from the agent
    node; nodes unreachable from the agent are absent. ``first_satisfied``
    is the first satisfied response in visit order as (node, hops, meters),
    or None. ``stopped_early`` is set only when the traversal was actually
    truncated by a satisfied response.
    """

    responses: tuple[QueryResponse, ...]
    visit_order: tuple[NodeId, ...]
    distances: dict[NodeId, tuple[int, float]]
    total_backend_calls: int
    stopped_early: bool
    first_satisfied: tuple[NodeId, int, float] | None

    def to_json_dict(self) -> dict:
        first = None
        if self.first_satisfied is not None:
            node, hops, meters = self.first_satisfied
            first = {"node": node, "hops": hops, "meters": meters}
        return {
            "responses": [r.to_json_dict() for r in self.responses],
            "visit_order": list(self.visit_order),
            "distances": {
                str(v): {"hops": h, "meters": m} for v, (h, m) in self.distances.items()
            },
            "total_backend_calls": self.total_backend_calls,
            "stopped_early": self.stopped_early,
            "first_satisfied": first,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


@dataclass(frozen=True)
class AggregateReport:
    """Cross-scene count aggregation with optional duplicate merging."""

    per_node_counts: dict[NodeId, int]
    raw_total: int
    deduped_total: int
    merged_groups: tuple[tuple[tuple[NodeId, SceneObject], ...], ...]

    def to_json_dict(self) -> dict:
        return {
            "per_node_counts": {str(v): c for v, c in self.per_node_counts.items()},
            "raw_total": self.raw_total,
            "deduped_total": self.deduped_total,
            "merged_groups": [
                [{"node": v, "object": obj.to_json_dict()} for v, obj in group]
                for group in self.merged_groups
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


# --- visit orders ---------------------------------------------------------------


def _hop_order(graph: Datagraph, agent: NodeId) -> Iterator[NodeId]:
    """Level-synchronized BFS: nondecreasing hop distance, ascending id within
    a level. Nodes are marked visited at enqueue time, so each reachable node
    is yielded exactly once. Lazy, so early stops never touch deeper levels."""
    visited = {agent}
    level = [agent]
    while level:
        yield from level
        frontier: set[NodeId] = set()
        for v in level:
            for w in graph.neighbors(v):
                if w not in visited:
                    visited.add(w)
                    frontier.add(w)
        level = sorted(frontier)


def _geodesic_order(graph: Datagraph, agent: NodeId) -> Iterator[NodeId]:
    """Dijkstra-ordered frontier: nondecreasing meters, ties by node id."""
    done: set[NodeId] = set()
    best = {agent: 0.0}
    heap: list[tuple[float, NodeId]] = [(0.0, agent)]
    while heap:
        dist, v = heappop(heap)
        if v in done:
            continue
        done.add(v)
        yield v
        for w, edge in graph.adjacency(v):
            nd = dist + edge.length_m
            if w not in done and (w not in best or nd < best[w]):
                best[w] = nd
                heappush(heap, (nd, w))


# --- shared runner ----------------------------------------------------------------


def _run(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    order: Iterable[NodeId],
    agent: NodeId,
    stop_on_first: bool,
) -> TraversalResult:
    hop_map = graph.hop_distances(agent)
    geo_map = graph.geodesic_distances(agent)
    responses: list[QueryResponse] = []
    visit_order: list[NodeId] = []
    distances: dict[NodeId, tuple[int, float]] = {}
    first_satisfied: tuple[NodeId, int, float] | None = None
    stopped_early = False

    def result() -> TraversalResult:
        return TraversalResult(
            responses=tuple(responses),
            visit_order=tuple(visit_order),
            distances=distances,
            total_backend_calls=sum(r.backend_calls for r in responses),
            stopped_early=stopped_early,
            first_satisfied=first_satisfied,
        )

    for v in order:
        try:
            response = backend.answer(graph.node(v), query)
        except BackendError as exc:
            raise TraversalAbortedError(v, result()) from exc
        if response.node != v:
            response = replace(response, node=v)
        responses.append(response)
        visit_order.append(v)
        if v in hop_map:
            distances[v] = (hop_map[v], geo_map[v])
        if response.satisfied and first_satisfied is None:
            hops = hop_map.get(v)
            meters = geo_map.get(v)
            first_satisfied = (v, hops, meters)
        if stop_on_first and response.satisfied:
            stopped_early = True
            break
    return result()


# --- public operations ----------------------------------------------------------------


def proximity_query_all(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    agent: NodeId,
    metric: str = "hops",
) -> TraversalResult:
    """Query every node reachable from the agent, closest first.

    Visit order is nondecreasing distance from ``agent`` under ``metric``
    with ascending node ids inside each tie; unreachable nodes are never
    queried.
    """
    order = _make_order(graph, agent, metric)
    return _run(graph, backend, query, order, agent, stop_on_first=False)


def proximity_search_first(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    agent: NodeId,
    metric: str = "hops",
) -> TraversalResult:
    """Proximity traversal truncated right after the first satisfied response.

    Because the visit order is nondecreasing in distance, the reported hit
    is a closest satisfying node, not just any satisfying node. With no
    satisfied response this equals the full traversal.
    """
    order = _make_order(graph, agent, metric)
    return _run(graph, backend, query, order, agent, stop_on_first=True)


def path_query(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    path: Iterable[NodeId],
) -> TraversalResult:
    """Query exactly the given nodes, in path order.

    Consecutive path nodes must be adjacent. A node repeated in the path is
    queried once per occurrence unless a caching backend suppresses the
    duplicate call. Distances are reported relative to the path start.
    """
    path = list(path)
    if not path:
        raise ValueError("path must be non-empty")
    for v in path:
        graph.node(v)
    for u, v in zip(path, path[1:]):
        if graph.edge_between(u, v) is None:
            raise InvalidPathError(u, v)
    return _run(graph, backend, query, path, path[0], stop_on_first=False)


def brute_force_query(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    agent: NodeId,
    stop_on_first: bool = False,
) -> TraversalResult:
    """Spatially blind baseline: query all nodes in ascending id order.

    Models a search over every captured frame. ``agent`` is used only to
    report distances for comparison with proximity traversals.
    """
    graph.node(agent)
    order = range(len(graph))
    return _run(graph, backend, query, order, agent, stop_on_first=stop_on_first)


def aggregate_count(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    dedup_radius_m: float = 0.0,
) -> AggregateReport:
    """Count matches across all scenes, merging cross-scene duplicates.

    Matched objects from different nodes are merged (single-linkage) when
    their world positions lie within ``dedup_radius_m`` of each other and
    their labels and attributes are equal. Radius 0 disables merging.
    """
    if query.mode != "count":
        raise ValueError(f"aggregate_count requires a count query, got mode {query.mode!r}")
    if dedup_radius_m < 0:
        raise ValueError("dedup_radius_m must be non-negative")
    per_node_counts: dict[NodeId, int] = {}
    matches: list[tuple[NodeId, SceneObject]] = []
    for v in range(len(graph)):
        response = backend.answer(graph.node(v), query)
        per_node_counts[v] = response.count
        matches.extend((v, obj) for obj in response.matches)
        if dedup_radius_m > 0 and response.count != len(response.matches):
            raise DedupUnavailableError(
                f"node {v} reported {response.count} matches but itemized "
                f"{len(response.matches)}; dedup needs every matched object"
            )
    raw_total = sum(per_node_counts.values())
    if dedup_radius_m == 0:
        return AggregateReport(per_node_counts, raw_total, raw_total, ())
    for v, obj in matches:
        if obj.world_position is None:
            raise DedupUnavailableError(
                f"object {obj.label!r} from node {v} has no world position; "
                "use radius 0 with backends that omit coordinates"
            )
    groups = _single_linkage(matches, dedup_radius_m)
    merged = tuple(tuple(g) for g in groups if len(g) > 1)
    deduped_total = raw_total - sum(len(g) - 1 for g in merged)
    return AggregateReport(per_node_counts, raw_total, deduped_total, merged)


def _single_linkage(
    matches: list[tuple[NodeId, SceneObject]], radius: float
) -> list[list[tuple[NodeId, SceneObject]]]:
    """Cluster matches whose positions chain within radius and whose
    label+attributes are identical. Quadratic per signature group; match
    lists are small."""
    by_signature: dict[tuple, list[int]] = {}
    for idx, (_, obj) in enumerate(matches):
        sig = (obj.label, tuple(sorted(obj.attributes.items())))
        by_signature.setdefault(sig, []).append(idx)

    parent = list(range(len(matches)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    for indices in by_signature.values():
        for i, idx_a in enumerate(indices):
            pos_a = matches[idx_a][1].world_position
            for idx_b in indices[i + 1 :]:
                pos_b = matches[idx_b][1].world_position
                if math.dist(pos_a, pos_b) <= radius:
                    union(idx_a, idx_b)

    clusters: dict[int, list[tuple[NodeId, SceneObject]]] = {}
    for idx, item in enumerate(matches):
        clusters.setdefault(find(idx), []).append(item)
    return [clusters[root] for root in sorted(clusters)]


def _make_order(graph: Datagraph, agent: NodeId, metric: str) -> Iterator[NodeId]:
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {_METRICS}, got {metric!r}")
    graph.node(agent)
    return _hop_order(graph, agent) if metric == "hops" else _geodesic_order(graph, agent)
