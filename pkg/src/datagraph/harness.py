"""Experiment harness: seeded trials comparing traversal strategies.

``run_compare`` realizes the core comparison (spatially blind brute force
vs. proximity-ordered search) over seeded tasks, scoring each trial against
the ground-truth nearest-instance oracle. ``run_route_scan`` checks candidate
routes for hazards, and ``run_aggregate`` demonstrates cross-scene counting
with duplicate merging. Reports serialize with stable field order so reruns
of the same config are byte-identical apart from wall-clock fields; the
harness only ever consults ground truth to score results, never to steer a
traversal.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backends import (
    CachingBackend,
    OracleBackend,
    Predicate,
    Query,
    QueryBackend,
    RecordingBackend,
    RemoteBackend,
    RemoteEndpointConfig,
    ReplayBackend,
    ReplayStore,
)
from .errors import ConfigError, DatagraphError, RouteError, TaskUnavailableError
from .graph import Datagraph, NodeId
from .traversal import (
    AggregateReport,
    TraversalResult,
    aggregate_count,
    brute_force_query,
    path_query,
    proximity_search_first,
)
from .worldgen import (
    GroundTruth,
    TaskSpec,
    WorldSpec,
    generate_world,
    ground_truth_nearest,
    make_keyfob_task,
    make_nearest_search_task,
)

STRATEGIES = ("proximity", "brute_force")
REPORT_FORMATS = ("json", "csv")
COMPARE_TASK_KINDS = ("nearest_search", "keyfob_match")

CSV_HEADER = [
    "task_id",
    "strategy",
    "backend_calls",
    "hops_of_found",
    "meters_of_found",
    "optimal_hops",
    "found_is_closest",
    "wall_time_ms",
    "cache_hits",
    "error",
]

_TASK_RETRY_ATTEMPTS = 20


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit child seed from integer parts."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TaskConfig:
    kind: str
    count: int
    seed: int

    def __post_init__(self):
        if self.kind not in ("nearest_search", "keyfob_match", "route_hazard"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.count < 1:
            raise ConfigError("task count must be >= 1")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "count": self.count, "seed": self.seed}


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "oracle"
    store_path: str | None = None  # replay source
    record_path: str | None = None  # capture target
    remote: RemoteEndpointConfig | None = None
    forward_annotations: bool = False

    def __post_init__(self):
        if self.kind not in ("oracle", "replay", "remote"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "replay" and not self.store_path:
            raise ConfigError("replay backend needs a store_path")
        if self.kind == "remote" and self.remote is None:
            raise ConfigError("remote backend needs endpoint settings")

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.store_path:
            doc["store_path"] = self.store_path
        if self.record_path:
            doc["record_path"] = self.record_path
        if self.remote is not None:
            doc["remote"] = {  # auth token deliberately not echoed into reports
                "base_url": self.remote.base_url,
                "timeout_ms": self.remote.timeout_ms,
                "max_in_flight": self.remote.max_in_flight,
            }
        if self.forward_annotations:
            doc["forward_annotations"] = True
        return doc


@dataclass(frozen=True)
class WorldFiles:
    """A saved world plus its ground-truth sidecar."""

    path: str
    ground_truth_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSpec | WorldFiles
    tasks: TaskConfig
    backend: BackendConfig = field(default_factory=BackendConfig)
    strategies: tuple[str, ...] = STRATEGIES
    cache_enabled: bool = True
    output_dir: str | None = None
    report_formats: tuple[str, ...] = ("json",)
    metric: str = "hops"
    shared_cache: bool = False
    # the blind baseline ingests every frame by default; flip this to let it stop
    brute_force_stop_on_first: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "report_formats", tuple(self.report_formats))
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        for strategy in self.strategies:
            if strategy not in STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}")
        for fmt in self.report_formats:
            if fmt not in REPORT_FORMATS:
                raise ConfigError(f"unknown report format {fmt!r}")
        if self.metric not in ("hops", "meters"):
            raise ConfigError(f"metric must be 'hops' or 'meters', got {self.metric!r}")

    def to_json_dict(self) -> dict:
        world_doc = (
            self.world.to_json_dict()
            if isinstance(self.world, WorldSpec)
            else {"path": self.world.path, "ground_truth": self.world.ground_truth_path}
        )
        return {
            "world": world_doc,
            "tasks": self.tasks.to_json_dict(),
            "backend": self.backend.to_json_dict(),
            "strategies": list(self.strategies),
            "cache_enabled": self.cache_enabled,
            "report_formats": list(self.report_formats),
            "metric": self.metric,
            "shared_cache": self.shared_cache,
            "brute_force_stop_on_first": self.brute_force_stop_on_first,
        }

    @classmethod
    def from_json_dict(cls, doc: dict, overrides: dict | None = None) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config: expected an object")
        merged = dict(doc)
        if overrides:
            merged.update({k: v for k, v in overrides.items() if v is not None})
        world_doc = merged.get("world")
        if isinstance(world_doc, str):
            world: WorldSpec | WorldFiles = WorldFiles(world_doc)
        elif isinstance(world_doc, dict) and "path" in world_doc:
            world = WorldFiles(world_doc["path"], world_doc.get("ground_truth"))
        elif isinstance(world_doc, dict):
            world = WorldSpec.from_json_dict(world_doc)
        else:
            raise ConfigError("config.world must be a world spec or a file reference")
        tasks_doc = merged.get("tasks")
        if not isinstance(tasks_doc, dict):
            raise ConfigError("config.tasks must be an object")
        try:
            tasks = TaskConfig(
                kind=tasks_doc["kind"],
                count=int(tasks_doc.get("count", 1)),
                seed=int(tasks_doc.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"config.tasks: missing field {exc}") from exc
        backend_doc = merged.get("backend", {"kind": "oracle"})
        if isinstance(backend_doc, str):
            backend_doc = {"kind": backend_doc}
        remote = None
        if backend_doc.get("kind") == "remote":
            remote_doc = backend_doc.get("remote", backend_doc)
            try:
                remote = RemoteEndpointConfig(
                    base_url=remote_doc["base_url"],
                    timeout_ms=int(remote_doc.get("timeout_ms", 10_000)),
                    max_in_flight=int(remote_doc.get("max_in_flight", 4)),
                    auth_token=remote_doc.get("auth_token"),
                )
            except KeyError as exc:
                raise ConfigError(f"config.backend: missing field {exc}") from exc
        backend = BackendConfig(
            kind=backend_doc.get("kind", "oracle"),
            store_path=backend_doc.get("store_path"),
            record_path=backend_doc.get("record_path"),
            remote=remote,
            forward_annotations=bool(backend_doc.get("forward_annotations", False)),
        )
        return cls(
            world=world,
            tasks=tasks,
            backend=backend,
            strategies=tuple(merged.get("strategies", STRATEGIES)),
            cache_enabled=bool(merged.get("cache_enabled", True)),
            output_dir=merged.get("output_dir"),
            report_formats=tuple(merged.get("report_formats", ("json",))),
            metric=merged.get("metric", "hops"),
            shared_cache=bool(merged.get("shared_cache", False)),
            brute_force_stop_on_first=bool(merged.get("brute_force_stop_on_first", False)),
        )

    @classmethod
    def load(cls, source, overrides: dict | None = None) -> ExperimentConfig:
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_json_dict(doc, overrides)


@dataclass(frozen=True)
class TrialRecord:
    task_id: int
    strategy: str
    backend_calls: int | None = None
    hops_of_found: int | None = None
    meters_of_found: float | None = None
    optimal_hops: int | None = None
    found_is_closest: bool | None = None
    wall_time_ms: float = 0.0
    cache_hits: int = 0
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "strategy": self.strategy,
            "backend_calls": self.backend_calls,
            "hops_of_found": self.hops_of_found,
            "meters_of_found": self.meters_of_found,
            "optimal_hops": self.optimal_hops,
            "found_is_closest": self.found_is_closest,
            "wall_time_ms": self.wall_time_ms,
            "cache_hits": self.cache_hits,
            "error": self.error,
        }


@dataclass(frozen=True)
class MetricsReport:
    per_trial: tuple[TrialRecord, ...]
    summary: dict[str, dict]
    config: dict

    @property
    def error_count(self) -> int:
        return sum(1 for row in self.per_trial if row.error is not None)

    def rows_for(self, strategy: str) -> list[TrialRecord]:
        return [r for r in self.per_trial if r.strategy == strategy]

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "config": self.config,
            "per_trial": [row.to_json_dict() for row in self.per_trial],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.per_trial:
            doc = row.to_json_dict()
            writer.writerow(["" if doc[k] is None else doc[k] for k in CSV_HEADER])
        return buffer.getvalue()

    def write(self, output_dir, formats=("json",), basename: str = "compare") -> list[Path]:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            path = out / f"{basename}.json"
            path.write_text(self.to_json(), encoding="utf-8")
            written.append(path)
        if "csv" in formats:
            path = out / f"{basename}.csv"
            path.write_text(self.to_csv(), encoding="utf-8")
            written.append(path)
        return written


# --- world/task plumbing ------------------------------------------------------------


def load_world_files(files: WorldFiles) -> tuple[Datagraph, GroundTruth | None]:
    graph = Datagraph.load(files.path)
    ground_truth = None
    if files.ground_truth_path:
        ground_truth = GroundTruth.load(files.ground_truth_path)
    return graph, ground_truth


def _make_task(kind: str, graph: Datagraph, ground_truth: GroundTruth, seed: int) -> TaskSpec:
    if kind == "nearest_search":
        return make_nearest_search_task(graph, ground_truth, seed)
    if kind == "keyfob_match":
        return make_keyfob_task(graph, ground_truth, seed)
    raise ConfigError(f"run_compare cannot run task kind {kind!r}; use the route scan")


def _trial_setup(
    config: ExperimentConfig, trial: int
) -> tuple[Datagraph, GroundTruth, TaskSpec]:
    """World + task for one trial; deterministic in the config seeds.

    With an inline WorldSpec a fresh world is generated per trial. Worlds
    that cannot host the requested task kind (say, no keyfob got placed)
    are skipped by bumping a derived attempt seed; everything stays a pure
    function of the config.
    """
    if isinstance(config.world, WorldFiles):
        graph, ground_truth = load_world_files(config.world)
        if ground_truth is None:
            raise ConfigError("task generation against a saved world needs its ground truth file")
        task_seed = derive_seed(config.tasks.seed, trial)
        return graph, ground_truth, _make_task(config.tasks.kind, graph, ground_truth, task_seed)
    for attempt in range(_TASK_RETRY_ATTEMPTS):
        world_spec = replace(config.world, seed=derive_seed(config.world.seed, trial, attempt))
        graph, ground_truth = generate_world(world_spec)
        task_seed = derive_seed(config.tasks.seed, trial, attempt)
        try:
            task = _make_task(config.tasks.kind, graph, ground_truth, task_seed)
        except TaskUnavailableError:
            continue
        return graph, ground_truth, task
    raise TaskUnavailableError(
        f"no world supporting task kind {config.tasks.kind!r} within "
        f"{_TASK_RETRY_ATTEMPTS} attempts for trial {trial}"
    )


def build_base_backend(config: BackendConfig) -> tuple[QueryBackend, ReplayStore | None]:
    """The shared backend for a run, plus the recording store when capturing."""
    if config.kind == "oracle":
        backend: QueryBackend = OracleBackend()
    elif config.kind == "replay":
        backend = ReplayBackend(ReplayStore.load(config.store_path))
    else:
        backend = RemoteBackend(config.remote, forward_annotations=config.forward_annotations)
    record_store = None
    if config.record_path:
        recorder = RecordingBackend(backend)
        backend = recorder
        record_store = recorder.store
    return backend, record_store


# --- compare ---------------------------------------------------------------------


def run_compare(config: ExperimentConfig) -> MetricsReport:
    """Run every seeded task under every selected strategy and score it.

    Both strategies of a trial see the identical world and task, each behind
    an independent fresh cache (unless ``shared_cache``). Backend failures
    mark the trial errored and the run continues.
    """
    if config.tasks.kind not in COMPARE_TASK_KINDS:
        raise ConfigError(f"run_compare supports task kinds {COMPARE_TASK_KINDS}")
    base_backend, record_store = build_base_backend(config.backend)
    shared_caches: dict[str, CachingBackend] = {}
    rows: list[TrialRecord] = []
    for trial in range(config.tasks.count):
        try:
            graph, ground_truth, task = _trial_setup(config, trial)
        except DatagraphError as exc:
            for strategy in sorted(config.strategies):
                rows.append(TrialRecord(task_id=trial, strategy=strategy, error=str(exc)))
            continue
        optimal = ground_truth_nearest(
            graph, ground_truth, task.agent_node, task.query.predicate, config.metric
        )
        optimal_hops = ground_truth_nearest(
            graph, ground_truth, task.agent_node, task.query.predicate, "hops"
        )
        for strategy in sorted(config.strategies):
            backend: QueryBackend = base_backend
            cache = None
            if config.cache_enabled:
                if config.shared_cache:
                    cache = shared_caches.setdefault(strategy, CachingBackend(base_backend))
                else:
                    cache = CachingBackend(base_backend)
                backend = cache
            hits_before = cache.hits if cache else 0
            started = time.perf_counter()
            try:
                result = _run_strategy(config, strategy, graph, backend, task)
            except DatagraphError as exc:
                rows.append(
                    TrialRecord(
                        task_id=trial,
                        strategy=strategy,
                        wall_time_ms=(time.perf_counter() - started) * 1000.0,
                        error=str(exc),
                    )
                )
                continue
            wall_ms = (time.perf_counter() - started) * 1000.0
            rows.append(
                _score_trial(
                    trial,
                    strategy,
                    result,
                    optimal,
                    optimal_hops,
                    config.metric,
                    wall_ms,
                    (cache.hits - hits_before) if cache else 0,
                )
            )
    report = MetricsReport(
        per_trial=tuple(sorted(rows, key=lambda r: (r.task_id, r.strategy))),
        summary=_summarize(rows, config.strategies),
        config=config.to_json_dict(),
    )
    if record_store is not None and config.backend.record_path:
        record_store.save(config.backend.record_path)
    if config.output_dir is not None:
        report.write(config.output_dir, config.report_formats)
    return report


def _run_strategy(
    config: ExperimentConfig,
    strategy: str,
    graph: Datagraph,
    backend: QueryBackend,
    task: TaskSpec,
) -> TraversalResult:
    if strategy == "proximity":
        return proximity_search_first(
            graph, backend, task.query, task.agent_node, metric=config.metric
        )
    return brute_force_query(
        graph,
        backend,
        task.query,
        task.agent_node,
        stop_on_first=config.brute_force_stop_on_first,
    )


def _score_trial(
    trial: int,
    strategy: str,
    result: TraversalResult,
    optimal: tuple[NodeId, float] | None,
    optimal_hops: tuple[NodeId, float] | None,
    metric: str,
    wall_ms: float,
    cache_hits: int,
) -> TrialRecord:
    hops_found = meters_found = None
    if result.first_satisfied is not None:
        _, hops_found, meters_found = result.first_satisfied
    if optimal is None:
        closest = result.first_satisfied is None
    elif result.first_satisfied is None:
        closest = False
    elif metric == "hops":
        closest = hops_found == optimal[1]
    else:
        closest = meters_found == optimal[1]
    return TrialRecord(
        task_id=trial,
        strategy=strategy,
        backend_calls=result.total_backend_calls,
        hops_of_found=hops_found,
        meters_of_found=meters_found,
        optimal_hops=int(optimal_hops[1]) if optimal_hops is not None else None,
        found_is_closest=closest,
        wall_time_ms=wall_ms,
        cache_hits=cache_hits,
    )


def _summarize(rows: list[TrialRecord], strategies) -> dict[str, dict]:
    summary: dict[str, dict] = {}
    for strategy in sorted(set(strategies)):
        good = [r for r in rows if r.strategy == strategy and r.error is None]
        errors = sum(1 for r in rows if r.strategy == strategy and r.error is not None)
        calls = [r.backend_calls for r in good]
        summary[strategy] = {
            "trials": len(good) + errors,
            "errors": errors,
            "mean_backend_calls": statistics.mean(calls) if calls else None,
            "median_backend_calls": statistics.median(calls) if calls else None,
            "closest_rate": (
                sum(1 for r in good if r.found_is_closest) / len(good) if good else None
            ),
            "total_wall_time_ms": sum(r.wall_time_ms for r in good),
        }
    return summary


# --- route scan -----------------------------------------------------------------


def default_hazard_query() -> Query:
    return Query(
        text="check the route for hazardous objects",
        predicate=Predicate(attribute_equals=(("hazard", "true"),)),
        mode="assess_hazard",
    )


@dataclass(frozen=True)
class RouteReportEntry:
    route: tuple[NodeId, ...]
    verdicts: tuple[tuple[NodeId, bool], ...]
    hazard_nodes: tuple[NodeId, ...]
    hazard_count: int
    length_hops: int
    length_m: float

    def to_json_dict(self) -> dict:
        return {
            "route": list(self.route),
            "verdicts": [{"node": v, "satisfied": s} for v, s in self.verdicts],
            "hazard_nodes": list(self.hazard_nodes),
            "hazard_count": self.hazard_count,
            "length_hops": self.length_hops,
            "length_m": self.length_m,
        }


@dataclass(frozen=True)
class RouteScanReport:
    start: NodeId
    goal: NodeId
    metric: str
    entries: tuple[RouteReportEntry, ...]
    selected_index: int
    total_backend_calls: int
    cache_hits: int | None = None

    @property
    def selected_route(self) -> tuple[NodeId, ...]:
        return self.entries[self.selected_index].route

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "start": self.start,
            "goal": self.goal,
            "metric": self.metric,
            "routes": [entry.to_json_dict() for entry in self.entries],
            "selected_index": self.selected_index,
            "selected_route": list(self.selected_route),
            "total_backend_calls": self.total_backend_calls,
            "cache_hits": self.cache_hits,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def run_route_scan(
    graph: Datagraph,
    backend: QueryBackend,
    start: NodeId,
    goal: NodeId,
    metric: str = "hops",
    candidate_routes: list[list[NodeId]] | None = None,
    hazard_query: Query | None = None,
) -> RouteScanReport:
    """Scan route(s) for hazards and pick the safest.

    Without candidates the shortest traversable route is scanned. With a
    comparison set, exactly those routes are scanned and the one with the
    fewest hazard-positive nodes wins; ties go to the shorter route under
    the metric, then to the lexicographically smallest node sequence.
    """
    query = hazard_query if hazard_query is not None else default_hazard_query()
    if candidate_routes:
        routes = [list(route) for route in candidate_routes]
    else:
        shortest = graph.shortest_path(start, goal, metric=metric, traversable_only=True)
        if shortest is None:
            raise RouteError(f"goal {goal} is unreachable from {start}")
        routes = [shortest]
    entries = []
    total_calls = 0
    cache_hits_before = backend.hits if isinstance(backend, CachingBackend) else None
    for route in routes:
        result = path_query(graph, backend, query, route)
        total_calls += result.total_backend_calls
        hazard_nodes = []
        for response in result.responses:
            if response.satisfied and response.node not in hazard_nodes:
                hazard_nodes.append(response.node)
        length_m = sum(
            graph.edge_between(u, v).length_m for u, v in zip(route, route[1:])
        )
        entries.append(
            RouteReportEntry(
                route=tuple(route),
                verdicts=tuple((r.node, r.satisfied) for r in result.responses),
                hazard_nodes=tuple(hazard_nodes),
                hazard_count=len(hazard_nodes),
                length_hops=len(route) - 1,
                length_m=length_m,
            )
        )

    def rank(indexed: tuple[int, RouteReportEntry]):
        _, entry = indexed
        length_key = entry.length_m if metric == "meters" else entry.length_hops
        return (entry.hazard_count, length_key, entry.route)

    selected_index = min(enumerate(entries), key=rank)[0]
    cache_hits = None
    if cache_hits_before is not None:
        cache_hits = backend.hits - cache_hits_before
    return RouteScanReport(
        start=start,
        goal=goal,
        metric=metric,
        entries=tuple(entries),
        selected_index=selected_index,
        total_backend_calls=total_calls,
        cache_hits=cache_hits,
    )


# --- aggregation -----------------------------------------------------------------


@dataclass(frozen=True)
class AggregateRunReport:
    aggregate: AggregateReport
    dedup_radius_m: float
    true_count: int | None = None

    @property
    def count_error(self) -> int | None:
        if self.true_count is None:
            return None
        return self.aggregate.deduped_total - self.true_count

    def to_json_dict(self) -> dict:
        doc = {
            "format_version": 1,
            "dedup_radius_m": self.dedup_radius_m,
            "raw_total": self.aggregate.raw_total,
            "deduped_total": self.aggregate.deduped_total,
            "true_count": self.true_count,
            "count_error": self.count_error,
            "per_node_counts": {str(v): c for v, c in self.aggregate.per_node_counts.items()},
            "merged_group_sizes": [len(g) for g in self.aggregate.merged_groups],
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def run_aggregate(
    graph: Datagraph,
    backend: QueryBackend,
    query: Query,
    dedup_radius_m: float,
    ground_truth: GroundTruth | None = None,
) -> AggregateRunReport:
    """Count matches over the whole world; score against ground truth if given."""
    report = aggregate_count(graph, backend, query, dedup_radius_m)
    true_count = None
    if ground_truth is not None:
        true_count = ground_truth.count_matching(query.predicate)
    return AggregateRunReport(report, dedup_radius_m, true_count)
