"""Independent oracles and tiny builders shared across test modules.

Everything here is deliberately implemented without the library's own
distance/traversal code so tests check against a second route.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from datagraph import Datagraph, Pose, SceneObject, Snapshot


def simple_path_distances(
    n: int,
    edges: dict[tuple[int, int], float],
    source: int,
    weighted: bool,
) -> dict[int, float]:
    """Exhaustive simple-path enumeration; only sane for tiny graphs."""
    adjacency: dict[int, list[tuple[int, float]]] = {v: [] for v in range(n)}
    for (a, b), length in edges.items():
        adjacency[a].append((b, length))
        adjacency[b].append((a, length))
    best: dict[int, float] = {source: 0.0}

    def walk(v: int, cost: float, seen: set[int]) -> None:
        for w, length in adjacency[v]:
            if w in seen:
                continue
            new_cost = cost + (length if weighted else 1.0)
            if w not in best or new_cost < best[w]:
                best[w] = new_cost
            walk(w, new_cost, seen | {w})

    walk(source, 0.0, {source})
    return best


def queue_bfs_levels(n: int, edges: dict[tuple[int, int], float], source: int) -> dict[int, int]:
    """Plain queue-based BFS over an edge dict; no library code involved."""
    adjacency: dict[int, set[int]] = {v: set() for v in range(n)}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    hops = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if w not in hops:
                hops[w] = hops[v] + 1
                queue.append(w)
    return hops


def bfs_visit_order(n: int, edges: dict[tuple[int, int], float], source: int) -> list[int]:
    """(hop level, node id) visit order derived from queue-based BFS levels."""
    hops = queue_bfs_levels(n, edges, source)
    return [v for _, v in sorted((d, v) for v, d in hops.items())]


def edge_dict(graph: Datagraph) -> dict[tuple[int, int], float]:
    return {(e.a, e.b): e.length_m for e in graph.edges()}


def build_graph(
    n: int,
    edges,
    positions=None,
    objects: dict[int, list[SceneObject]] | None = None,
    seal: bool = True,
) -> Datagraph:
    """Small-world builder: edges as (a, b) or (a, b, length) or (a, b, length, traversable)."""
    graph = Datagraph()
    for v in range(n):
        pos = positions[v] if positions is not None else (float(v), 0.0, 0.0)
        objs = tuple(objects.get(v, [])) if objects else ()
        graph.add_node(Pose(pos), Snapshot(objs))
    for spec in edges:
        a, b = spec[0], spec[1]
        length = spec[2] if len(spec) > 2 else None
        traversable = spec[3] if len(spec) > 3 else True
        graph.add_edge(a, b, traversable=traversable, length_m=length)
    if seal:
        graph.seal()
    return graph


def random_connected_graph(seed: int, max_nodes: int = 200) -> Datagraph:
    """Random tree plus chords, random poses; connected by construction."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    graph = Datagraph()
    for v in range(n):
        position = tuple(float(c) for c in rng.uniform(-50.0, 50.0, size=3))
        graph.add_node(Pose(position), Snapshot())
    pairs = set()
    for v in range(1, n):
        parent = int(rng.integers(v))
        graph.add_edge(parent, v)
        pairs.add((min(parent, v), max(parent, v)))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        a, b = int(rng.integers(n)), int(rng.integers(n))
        key = (min(a, b), max(a, b))
        if a == b or key in pairs:
            continue
        pairs.add(key)
        graph.add_edge(a, b)
    return graph.seal()


def random_decorated_graph(seed: int, max_nodes: int = 40) -> Datagraph:
    """Random graph with orientations, payload refs, objects, and
    non-traversable edges; for serialization round-trips."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_nodes + 1))
    graph = Datagraph()
    labels = ["extinguisher", "keyfob", "door", "crate"]
    for v in range(n):
        position = tuple(float(c) for c in rng.uniform(-9.0, 9.0, size=3))
        orientation = None
        if rng.random() < 0.5:
            raw = rng.normal(size=4)
            raw = raw / np.linalg.norm(raw)
            orientation = tuple(float(c) for c in raw)
        payload = f"scene://node/{v}" if rng.random() < 0.3 else None
        objs = []
        for k in range(int(rng.integers(0, 4))):
            objs.append(
                SceneObject(
                    label=labels[int(rng.integers(len(labels)))],
                    attributes={"number": str(int(rng.integers(1, 99)))} if rng.random() < 0.5 else {},
                    world_position=tuple(float(c) for c in rng.uniform(-9.0, 9.0, size=3)),
                    instance_id=v * 100 + k,
                )
            )
        graph.add_node(Pose(position, orientation), Snapshot(tuple(objs), payload))
    pairs = set()
    for v in range(1, n):
        parent = int(rng.integers(v))
        graph.add_edge(parent, v, traversable=bool(rng.random() < 0.8))
        pairs.add((parent, v) if parent < v else (v, parent))
    for _ in range(int(rng.integers(0, n))):
        a, b = int(rng.integers(n)), int(rng.integers(n))
        key = (min(a, b), max(a, b))
        if a == b or key in pairs:
            continue
        pairs.add(key)
        graph.add_edge(a, b, traversable=bool(rng.random() < 0.8), length_m=float(rng.uniform(0.5, 30.0)))
    return graph.seal()
