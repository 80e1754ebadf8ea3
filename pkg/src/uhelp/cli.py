"""Command line entry point: ``uhelp validate|run|sweep MANIFEST``.

Exit status is 0 on success, 3 when a fixture fails validation and 4 when a
validated run fails at runtime.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from .ontology import HierarchyError, Kind, SimilarityParams, load_hierarchy_file
from .protocol import FloodParams
from .simnet import (
    SimConfig,
    SimError,
    World,
    apply_point,
    build_graph,
    grid_points,
    load_scenario,
    parse_graph,
    run,
    sweep,
)
from .trust import ShareConfig, TrustError, TrustParams, load_ledger, save_ledger

logger = logging.getLogger("uhelp")

EXIT_OK = 0
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

FIXTURE_ENV = "UHELP_FIXTURES"
PACKAGE_DATA = Path(__file__).parent / "data"

FLOOD_KEYS = {"sigma", "tnorm", "response_offset"}
TRUST_KEYS = {"trust_weight_alpha", "eta", "default_trust", "sharing_policy"}
SIM_KEYS = {"sim_alpha", "sim_beta", "sim_lambda", "zeta"}
RUN_KEYS = {"tau", "hops"}


class ValidationFailed(Exception):
    def __init__(self, report: list[str]):
        super().__init__("\n".join(report))
        self.report = report


@dataclass
class RunManifest:
    path: Path
    taxonomy: Path
    meronomy: Path
    graph: Path
    scenario: Path
    output_dir: Path
    seed: Optional[int] = None
    params: dict[str, Any] = field(default_factory=dict)
    share: dict[str, Any] = field(default_factory=dict)
    grid: dict[str, list] = field(default_factory=dict)
    ledger_dir: Optional[Path] = None


def resolve(name: str, base: Path) -> Path:
    """Find a referenced file next to the manifest, then in the fixture dirs."""
    candidate = Path(name)
    if candidate.is_absolute():
        return candidate
    search = [base]
    if os.environ.get(FIXTURE_ENV):
        search.append(Path(os.environ[FIXTURE_ENV]))
    search.append(PACKAGE_DATA)
    for root in search:
        if (root / candidate).exists():
            return root / candidate
    return base / candidate


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if not path.exists() and not path.is_absolute():
        path = resolve(str(path), Path.cwd())
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationFailed([f"FAIL manifest {path}: {exc}"]) from exc
    base = path.parent
    missing = [k for k in ("taxonomy", "meronomy", "graph", "scenario") if k not in doc]
    if missing:
        raise ValidationFailed([f"FAIL manifest {path}: missing field {missing[0]!r}"])
    return RunManifest(
        path=path,
        taxonomy=resolve(doc["taxonomy"], base),
        meronomy=resolve(doc["meronomy"], base),
        graph=resolve(doc["graph"], base),
        scenario=resolve(doc["scenario"], base),
        output_dir=base / doc.get("output_dir", "out"),
        seed=doc.get("seed"),
        params=dict(doc.get("params", {})),
        share=dict(doc.get("share", {})),
        grid=dict(doc.get("grid", {})),
        ledger_dir=base / doc["ledger_dir"] if doc.get("ledger_dir") else None,
    )


@dataclass
class Prepared:
    config: SimConfig
    graph_doc: Any
    taxonomy: Any
    meronomy: Any
    ledgers: dict

    def world(self) -> World:
        import copy

        return build_graph(self.graph_doc, self.taxonomy, self.meronomy, copy.deepcopy(self.ledgers))


def prepare(manifest: RunManifest) -> tuple[Prepared, list[str]]:
    """Load and check every fixture; raises ValidationFailed listing each check."""
    report: list[str] = []
    failed = False

    def check(name: str, fn):
        nonlocal failed
        try:
            value = fn()
        except (HierarchyError, SimError, TrustError, ValueError, KeyError, TypeError, OSError) as exc:
            report.append(f"FAIL {name}: {exc}")
            failed = True
            return None
        report.append(f"ok   {name}")
        return value

    def hierarchy(path, kind):
        h = load_hierarchy_file(path)
        if h.kind is not kind:
            raise HierarchyError(f"{path} is a {h.kind.value}, expected a {kind.value}")
        return h

    tax = check(f"taxonomy {manifest.taxonomy}", lambda: hierarchy(manifest.taxonomy, Kind.TAXONOMY))
    mer = check(f"meronomy {manifest.meronomy}", lambda: hierarchy(manifest.meronomy, Kind.MERONOMY))
    graph_doc = check(f"graph {manifest.graph}", lambda: json.loads(manifest.graph.read_text(encoding="utf-8")))
    graph = check("graph structure", lambda: parse_graph(graph_doc)) if graph_doc is not None else None
    if graph is not None and tax is not None and mer is not None:
        check("graph rating seeds", lambda: build_graph(graph, tax, mer))

    def params():
        p = manifest.params
        unknown = set(p) - FLOOD_KEYS - TRUST_KEYS - SIM_KEYS - RUN_KEYS
        if unknown:
            raise ValueError(f"unknown parameter {sorted(unknown)[0]!r}")
        return SimConfig(
            flood=FloodParams(**{k: p[k] for k in FLOOD_KEYS & set(p)}),
            trust=TrustParams(**{k: p[k] for k in TRUST_KEYS & set(p)}),
            similarity=SimilarityParams(**{k: p[k] for k in SIM_KEYS & set(p)}),
            share=ShareConfig(**manifest.share),
            tau=p.get("tau"),
            hops=p.get("hops"),
        )

    base = check("parameters", params)
    config = None
    if base is not None:
        config = check(f"scenario {manifest.scenario}",
                       lambda: load_scenario(manifest.scenario.read_text(encoding="utf-8"), base))
    if config is not None and graph is not None:
        def script_refs():
            nodes = set(graph.nodes)
            for act in config.script:
                if act.node not in nodes:
                    raise SimError(f"action at t={act.time} names unknown member {act.node!r}")
                if act.action == "help" and tax is not None and mer is not None:
                    tax.require(act.args["object"])
                    mer.require(act.args["activity"])
        check("scenario references", script_refs)
        if manifest.seed is not None:
            config = replace(config, seed=int(manifest.seed))

    ledgers = {}
    if manifest.ledger_dir is not None and graph is not None:
        def read_ledgers():
            if not manifest.ledger_dir.exists():
                return
            if not manifest.ledger_dir.is_dir():
                raise OSError(f"{manifest.ledger_dir} is not a directory")
            for n in graph.nodes:
                f = manifest.ledger_dir / f"{n}.tsv"
                if f.exists():
                    ledgers[n] = load_ledger(f, n)
        check(f"ledgers {manifest.ledger_dir}", read_ledgers)

    if manifest.grid and config is not None:
        check("sweep grid", lambda: [apply_point(config, point) for point in grid_points(manifest.grid)])

    if failed:
        raise ValidationFailed(report)
    return Prepared(config, graph_doc, tax, mer, ledgers), report


def write_metrics(metrics_rows: list[dict], out: Path, stem: str) -> None:
    columns: list[str] = []
    for row in metrics_rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with (out / f"{stem}.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", restval="")
        writer.writeheader()
        writer.writerows(metrics_rows)
    with (out / f"{stem}.jsonl").open("w", encoding="utf-8") as fh:
        for row in metrics_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_validate(manifest: RunManifest) -> int:
    try:
        _, report = prepare(manifest)
    except ValidationFailed as exc:
        print("\n".join(exc.report))
        return EXIT_VALIDATION
    print("\n".join(report))
    return EXIT_OK


def cmd_run(manifest: RunManifest) -> int:
    try:
        prepared, _ = prepare(manifest)
    except ValidationFailed as exc:
        print("\n".join(exc.report), file=sys.stderr)
        return EXIT_VALIDATION
    out = manifest.output_dir
    try:
        world = prepared.world()
        result = run(prepared.config, world)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.jsonl").write_text("".join(line + "\n" for line in result.trace_lines()), encoding="utf-8")
        transitions = [
            json.dumps({k: line[k] for k in ("t", "node", "task_id", "event", "old", "new")}, sort_keys=True)
            for line in result.trace if line["kind"] == "transition"
        ]
        (out / "transitions.jsonl").write_text("".join(t + "\n" for t in transitions), encoding="utf-8")
        write_metrics([result.metrics.flat()], out, "metrics")
        # with a ledger directory the run updates it in place, so a rerun sees the new ratings
        ledger_out = manifest.ledger_dir or out / "ledgers"
        ledger_out.mkdir(parents=True, exist_ok=True)
        for name, ledger in world.ledgers.items():
            save_ledger(ledger, ledger_out / f"{name}.tsv")
    except (SimError, TrustError, ValueError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    m = result.metrics
    print(f"wrote {out}: {m.events_processed} events, HELP={m.messages_by_type['HELP']}, "
          f"reached={m.nodes_reached}, volunteers={m.volunteers_count}")
    return EXIT_OK


def cmd_sweep(manifest: RunManifest, grid: Optional[dict] = None) -> int:
    grid = grid if grid is not None else manifest.grid
    if not grid:
        print("FAIL sweep grid: empty", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = replace(manifest, grid=grid)
    try:
        prepared, _ = prepare(manifest)
    except ValidationFailed as exc:
        print("\n".join(exc.report), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        rows = sweep(prepared.config, prepared.world, grid)
        out = manifest.output_dir
        out.mkdir(parents=True, exist_ok=True)
        table = [{**{k: (v.value if hasattr(v, "value") else v) for k, v in point.items()}, **m.flat()}
                 for point, m in rows]
        write_metrics(table, out, "sweep")
    except (SimError, TrustError, ValueError, OSError) as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(table)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def parse_grid(items: list[str]) -> dict[str, list]:
    """``["sigma=0,0.1", "tnorm=min,product"]`` -> ``{"sigma": [0.0, 0.1], ...}``."""
    grid: dict[str, list] = {}
    for item in items:
        key, _, values = item.partition("=")
        if not values:
            raise argparse.ArgumentTypeError(f"grid axis {item!r} must look like key=v1,v2")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                parsed.append(v)
        grid[key.strip()] = parsed
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhelp", description="Trust-based volunteer search simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("manifest", help="run manifest (JSON)")
        p.add_argument("--seed", type=int, help="override the manifest seed")
        p.add_argument("--out", help="output directory")

    common(sub.add_parser("validate", help="load and check every fixture"))
    p_run = sub.add_parser("run", help="run the scenario once")
    common(p_run)
    p_run.add_argument("--ledger-dir", help="read persisted ledgers from this directory")
    p_sweep = sub.add_parser("sweep", help="run the scenario over a parameter grid")
    common(p_sweep)
    p_sweep.add_argument("--grid", nargs="+", metavar="KEY=V1,V2", help="grid axes (tau, hops, sigma, tnorm)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = load_manifest(args.manifest)
    except ValidationFailed as exc:
        print("\n".join(exc.report), file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        manifest.seed = args.seed
    if args.out:
        manifest.output_dir = Path(args.out)
    if getattr(args, "ledger_dir", None):
        manifest.ledger_dir = Path(args.ledger_dir)

    if args.command == "validate":
        return cmd_validate(manifest)
    if args.command == "run":
        return cmd_run(manifest)
    return cmd_sweep(manifest, parse_grid(args.grid) if args.grid else None)


if __name__ == "__main__":
    sys.exit(main())
