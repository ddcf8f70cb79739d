"""Command line entry points for world generation, experiments, and linting."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backends import (
    CachingBackend,
    OracleBackend,
    Predicate,
    Query,
    RemoteBackend,
    RemoteEndpointConfig,
    ReplayBackend,
    ReplayStore,
)
from .errors import DatagraphError, GraphParseError, GraphValidationError
from .graph import Datagraph
from .harness import (
    ExperimentConfig,
    run_aggregate,
    run_compare,
    run_route_scan,
)
from .worldgen import GroundTruth, WorldSpec, generate_world


@click.group()
@click.version_option(package_name="datagraph")
def main():
    """Spatial datagraph experiments: generate worlds, compare search
    strategies, scan routes, aggregate counts."""


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="World spec JSON file.")
@click.option("--grid-w", type=int, default=6, show_default=True)
@click.option("--grid-h", type=int, default=6, show_default=True)
@click.option("--room-size", type=float, default=6.0, show_default=True)
@click.option("--door-prob", type=float, default=0.35, show_default=True)
@click.option("--objects-mean", type=float, default=2.0, show_default=True)
@click.option("--dup-prob", type=float, default=0.0, show_default=True,
              help="Probability of duplicating a near-wall object into the neighbor scene.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.argument("out_dir", type=click.Path())
def gen(spec_path, grid_w, grid_h, room_size, door_prob, objects_mean, dup_prob, seed, out_dir):
    """Generate a seeded world into OUT_DIR (world, ground truth, spec)."""
    if spec_path:
        spec = WorldSpec.load(spec_path)
    else:
        spec = WorldSpec(
            grid_w=grid_w,
            grid_h=grid_h,
            room_size_m=room_size,
            door_prob=door_prob,
            objects_per_room_mean=objects_mean,
            boundary_duplicate_prob=dup_prob,
            seed=seed,
        )
    graph, ground_truth = generate_world(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph.save(out / "world.json")
    ground_truth.save(out / "ground_truth.json")
    spec.save(out / "worldspec.json")
    click.echo(
        f"wrote {out / 'world.json'} ({len(graph)} nodes, {len(graph.edges())} edges, "
        f"{len(ground_truth.instances)} object records)"
    )


def _config_from_flags(config_path, output_dir, count, seed, kind, backend, strategies,
                       cache, formats, store_path=None, record_path=None):
    doc = {}
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if count is not None:
        doc.setdefault("tasks", {})["count"] = count
    if seed is not None:
        doc.setdefault("tasks", {})["seed"] = seed
    if kind is not None:
        doc.setdefault("tasks", {})["kind"] = kind
    if backend is not None:
        existing = doc.get("backend", {})
        if isinstance(existing, str):
            existing = {"kind": existing}
        existing["kind"] = backend
        doc["backend"] = existing
    if store_path is not None:
        doc.setdefault("backend", {})["store_path"] = store_path
    if record_path is not None:
        doc.setdefault("backend", {})["record_path"] = record_path
    if strategies is not None:
        doc["strategies"] = [s.strip() for s in strategies.split(",") if s.strip()]
    if cache is not None:
        doc["cache_enabled"] = cache
    if formats is not None:
        doc["report_formats"] = [f.strip() for f in formats.split(",") if f.strip()]
    if output_dir is not None:
        doc["output_dir"] = output_dir
    return ExperimentConfig.from_json_dict(doc)


_compare_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 help="Experiment config JSON; flags override its fields."),
    click.option("--output-dir", "-o", type=click.Path(), default=None),
    click.option("--count", type=int, default=None, help="Number of seeded tasks."),
    click.option("--seed", type=int, default=None, help="Master task seed."),
    click.option("--kind", type=click.Choice(["nearest_search", "keyfob_match"]), default=None),
    click.option("--backend", type=click.Choice(["oracle", "replay", "remote"]), default=None),
    click.option("--strategies", default=None, help="Comma list: proximity,brute_force."),
    click.option("--cache/--no-cache", "cache", default=None),
    click.option("--formats", default=None, help="Comma list: json,csv."),
]


def _apply_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


def _echo_compare_summary(report) -> None:
    for strategy, stats in report.summary.items():
        click.echo(
            f"{strategy}: trials={stats['trials']} errors={stats['errors']} "
            f"mean_calls={stats['mean_backend_calls']} closest_rate={stats['closest_rate']}"
        )


@main.command()
@_apply_options(_compare_options)
def compare(config_path, output_dir, count, seed, kind, backend, strategies, cache, formats):
    """Compare brute-force vs proximity search over seeded tasks."""
    config = _config_from_flags(
        config_path, output_dir, count, seed, kind, backend, strategies, cache, formats
    )
    report = run_compare(config)
    _echo_compare_summary(report)
    if report.error_count:
        click.echo(f"{report.error_count} trial run(s) errored", err=True)
        sys.exit(1)


@main.command("replay-record")
@click.option("--store", "store_path", type=click.Path(), required=True,
              help="Where to write the recorded session.")
@_apply_options(_compare_options)
def replay_record(store_path, config_path, output_dir, count, seed, kind, backend,
                  strategies, cache, formats):
    """Run an experiment while recording every backend answer."""
    config = _config_from_flags(
        config_path, output_dir, count, seed, kind, backend, strategies, cache, formats,
        record_path=store_path,
    )
    report = run_compare(config)
    _echo_compare_summary(report)
    click.echo(f"recorded session -> {store_path}")
    if report.error_count:
        sys.exit(1)


@main.command("replay-run")
@click.option("--store", "store_path", type=click.Path(exists=True), required=True,
              help="Recorded session to replay.")
@_apply_options(_compare_options)
def replay_run(store_path, config_path, output_dir, count, seed, kind, backend,
               strategies, cache, formats):
    """Re-run an experiment hermetically from a recorded session."""
    config = _config_from_flags(
        config_path, output_dir, count, seed, kind, "replay", strategies, cache, formats,
        store_path=store_path,
    )
    report = run_compare(config)
    _echo_compare_summary(report)
    if report.error_count:
        sys.exit(1)


def _build_cli_backend(backend, store, base_url, timeout_ms, auth_token, cache):
    if backend == "replay":
        if not store:
            raise click.UsageError("--backend replay needs --store")
        inner = ReplayBackend(ReplayStore.load(store))
    elif backend == "remote":
        if not base_url:
            raise click.UsageError("--backend remote needs --base-url")
        inner = RemoteBackend(
            RemoteEndpointConfig(base_url=base_url, timeout_ms=timeout_ms, auth_token=auth_token)
        )
    else:
        inner = OracleBackend()
    return CachingBackend(inner) if cache else inner


@main.command()
@click.option("--world", "world_path", type=click.Path(exists=True), required=True)
@click.option("--start", type=int, required=True)
@click.option("--goal", type=int, required=True)
@click.option("--metric", type=click.Choice(["hops", "meters"]), default="hops", show_default=True)
@click.option("--routes", "routes_path", type=click.Path(exists=True), default=None,
              help="JSON array of candidate routes (arrays of node ids).")
@click.option("--backend", type=click.Choice(["oracle", "replay", "remote"]), default="oracle")
@click.option("--store", type=click.Path(exists=True), default=None)
@click.option("--base-url", default=None)
@click.option("--timeout-ms", type=int, default=10_000)
@click.option("--auth-token", default=None)
@click.option("--cache/--no-cache", default=True, show_default=True)
@click.option("--output", type=click.Path(), default=None, help="Write the scan report JSON here.")
def route(world_path, start, goal, metric, routes_path, backend, store, base_url,
          timeout_ms, auth_token, cache, output):
    """Scan route(s) between START and GOAL for hazards; pick the safest."""
    graph = Datagraph.load(world_path)
    candidates = None
    if routes_path:
        candidates = json.loads(Path(routes_path).read_text(encoding="utf-8"))
    query_backend = _build_cli_backend(backend, store, base_url, timeout_ms, auth_token, cache)
    report = run_route_scan(graph, query_backend, start, goal, metric, candidates)
    if output:
        Path(output).write_text(report.to_json(), encoding="utf-8")
    for entry in report.entries:
        click.echo(
            f"route {list(entry.route)}: hazards={entry.hazard_count} "
            f"({list(entry.hazard_nodes)}) length={entry.length_hops} hops / {entry.length_m:.2f} m"
        )
    click.echo(f"selected route: {list(report.selected_route)}")


@main.command()
@click.option("--world", "world_path", type=click.Path(exists=True), required=True)
@click.option("--ground-truth", "gt_path", type=click.Path(exists=True), default=None)
@click.option("--label", required=True, help="Object label to count.")
@click.option("--attr", "attrs", multiple=True, help="Extra key=value attribute clauses.")
@click.option("--radius", type=float, default=0.5, show_default=True,
              help="Dedup radius in meters; 0 disables merging.")
@click.option("--backend", type=click.Choice(["oracle", "replay", "remote"]), default="oracle")
@click.option("--store", type=click.Path(exists=True), default=None)
@click.option("--base-url", default=None)
@click.option("--timeout-ms", type=int, default=10_000)
@click.option("--auth-token", default=None)
@click.option("--output", type=click.Path(), default=None)
def aggregate(world_path, gt_path, label, attrs, radius, backend, store, base_url,
              timeout_ms, auth_token, output):
    """Count instances of LABEL across all scenes, merging boundary duplicates."""
    graph = Datagraph.load(world_path)
    ground_truth = GroundTruth.load(gt_path) if gt_path else None
    clauses = []
    for raw in attrs:
        if "=" not in raw:
            raise click.UsageError(f"--attr needs key=value, got {raw!r}")
        key, value = raw.split("=", 1)
        clauses.append((key, value))
    query = Query(
        text=f"how many {label} are there?",
        predicate=Predicate(label_equals=label, attribute_equals=tuple(clauses)),
        mode="count",
    )
    query_backend = _build_cli_backend(backend, store, base_url, timeout_ms, auth_token, False)
    report = run_aggregate(graph, query_backend, query, radius, ground_truth)
    if output:
        Path(output).write_text(report.to_json(), encoding="utf-8")
    click.echo(f"raw_total={report.aggregate.raw_total} deduped_total={report.aggregate.deduped_total}")
    if report.true_count is not None:
        click.echo(f"true_count={report.true_count} count_error={report.count_error}")


@main.command()
@click.argument("world_path", type=click.Path(exists=True))
def validate(world_path):
    """Lint a saved world document; non-zero exit on any problem."""
    try:
        graph = Datagraph.load(world_path)
    except GraphValidationError as exc:
        for violation in exc.violations:
            click.echo(str(violation), err=True)
        sys.exit(1)
    except (GraphParseError, DatagraphError) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"ok: {len(graph)} nodes, {len(graph.edges())} edges, 0 violations")


if __name__ == "__main__":
    main()
