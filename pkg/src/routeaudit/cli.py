"""Command-line entry point: ``routeaudit run`` plus one subcommand per stage.

The per-stage subcommands read and write plain files so they compose in
shell pipelines; ``run`` drives the whole cached pipeline from a TOML config.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, RouteAuditError, StageFailure

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _buffers(items: list[str] | None) -> dict:
    from .geo_ingest import FeatureClass

    out = {}
    for item in items or []:
        name, _, val = item.partition("=")
        try:
            out[FeatureClass(name)] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad --buffer {item!r}: expected CLASS=METERS") from exc
    return out


# subcommands -------------------------------------------------------------------


def cmd_run(args) -> int:
    from .pipeline import STAGES, load_config, run_all

    cfg = load_config(args.config, out_dir=args.out, resolution=args.resolution, seed=args.seed)
    stages = None
    if args.stage:
        stages = [s.strip() for s in args.stage.split(",") if s.strip()]
        bad = [s for s in stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; choose from {', '.join(STAGES)}")
    status = run_all(cfg, mock=args.mock, model=args.model, stages=stages, echo=print)
    print(f"done: {sum(v == 'ran' for v in status.values())} ran, "
          f"{sum(v == 'cached' for v in status.values())} cached -> {cfg.out_dir}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .geo_ingest import extract_road_graph, load_geojson

    fs = load_geojson(args.map)
    g = extract_road_graph(fs)
    _write(args.out, json.dumps(g.to_json()) + "\n")
    print(json.dumps({"feature_counts": fs.counts(), "dropped": fs.dropped,
                      "road_graph": {"nodes": len(g.nodes), "edges": len(g.edges)}}), file=sys.stderr)
    return EXIT_OK


def cmd_sample(args) -> int:
    from .geo_ingest import load_geojson
    from .sampling import SampleConfig, cluster_points, densify, two_stage_sample

    pts = densify(load_geojson(args.map), args.spacing)
    clustering = cluster_points(pts, min(args.k, len(pts)), args.seed)
    ss = two_stage_sample(clustering, SampleConfig(args.m, args.n_min, args.n_max, args.cap, args.seed))
    _write(args.out, ss.dumps() + "\n")
    return EXIT_OK


def cmd_solve(args) -> int:
    from .sampling import StopSet
    from .solver import Instance, solve_exact, solve_heuristic, validate

    ss = StopSet.from_json(json.loads(Path(args.stops).read_text()))
    inst = Instance.from_stops(ss, args.vehicles)
    plan = solve_exact(inst) if args.exact else solve_heuristic(inst, seed=args.seed)
    rep = validate(inst, plan)
    if not rep.ok:
        print(f"plan fails validation: {rep.violations}", file=sys.stderr)
        return EXIT_STAGE
    _write(args.out, json.dumps(plan.to_json(), indent=2) + "\n")
    return EXIT_OK


def cmd_expand(args) -> int:
    from .geo_ingest import RoadGraph
    from .router import expand, legs_to_geojson
    from .sampling import StopSet
    from .solver import RoutePlan

    g = RoadGraph.from_json(json.loads(Path(args.graph).read_text()))
    ss = StopSet.from_json(json.loads(Path(args.stops).read_text()))
    plan = RoutePlan.from_json(json.loads(Path(args.plan).read_text()))
    _write(args.out, legs_to_geojson(expand(g, ss, plan, args.route_id)) + "\n")
    return EXIT_OK


def cmd_render(args) -> int:
    from .geo_ingest import load_geojson
    from .render import StyleSheet, render_leg, render_plan
    from .router import legs_from_geojson

    fs = load_geojson(args.map)
    style = StyleSheet.load(args.style) if args.style else StyleSheet()
    legs = legs_from_geojson(Path(args.legs).read_text())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for leg in legs:
        render_leg(fs, leg, style, args.resolution).save(out / f"{leg.leg_id}.png")
    if args.plan_image:
        render_plan(fs, legs, style, args.resolution).save(out / args.plan_image)
    print(f"rendered {len(legs)} legs to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_label(args) -> int:
    from .geo_ingest import load_geojson
    from .oracle import dump_labels, import_annotations, label_leg
    from .router import legs_from_geojson

    legs = legs_from_geojson(Path(args.legs).read_text())
    if args.annotations:
        imported = import_annotations(args.annotations)
        labels = [imported[l.leg_id] for l in legs if l.leg_id in imported]
    else:
        fs = load_geojson(args.map)
        bufs = _buffers(args.buffer)
        labels = [label_leg(l, fs, bufs) for l in legs]
    _write(args.out, dump_labels(labels))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import contextlib

    from .extraction import dump_verdict_map, to_verdict
    from .llm_client import ErrorRecord, ModelEndpoint, batch_evaluate

    images = sorted(Path(args.images).glob("*.png"))
    if not images:
        raise ConfigError(f"no PNG images in {args.images}")
    items = [(p.stem, p) for p in images]
    with contextlib.ExitStack() as stack:
        base = args.endpoint
        if args.mock:
            from .mock_server import MockChatServer, load_fixture

            base = stack.enter_context(MockChatServer(load_fixture(args.fixture))).url
        if not base:
            raise ConfigError("--endpoint URL or --mock required")
        ep = ModelEndpoint(base, args.model, api_key_env=args.api_key_env, temperature=args.temperature,
                           top_k=args.top_k, timeout=args.timeout)
        ex = None
        if args.extractor_model:
            ex = ModelEndpoint(args.extractor_endpoint or base, args.extractor_model, api_key_env=args.api_key_env)
        results = batch_evaluate(ep, items, args.parallelism, per_question=args.per_question)
        verdicts = {r.leg_id: None if isinstance(r, ErrorRecord) else to_verdict(r, ex) for r in results}
    _write(args.out, "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in results))
    if args.verdicts:
        _write(args.verdicts, dump_verdict_map(verdicts))
    return EXIT_OK


def _load_any_labels(path: str):
    from .oracle import import_annotations, load_labels

    if path.endswith(".jsonl"):
        return load_labels(Path(path).read_text())
    return import_annotations(path)


def cmd_score(args) -> int:
    from .evaluation import metrics_csv, score
    from .extraction import load_verdict_map

    verdicts = load_verdict_map(Path(args.verdicts).read_text())
    labels = _load_any_labels(args.labels)
    s = score(verdicts, labels, args.unanswered)
    _write(args.out, metrics_csv(s))
    return EXIT_OK


def cmd_report(args) -> int:
    from .evaluation import ModelReport, emit_report

    reports = [ModelReport.from_json(json.loads(Path(p).read_text())) for p in args.scores]
    for p in emit_report(reports, args.out_dir):
        print(p)
    return EXIT_OK


def cmd_mock_server(args) -> int:
    from .mock_server import main as serve

    serve(["--port", str(args.port)] + (["--fixture", args.fixture] if args.fixture else []))
    return EXIT_OK


# parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="routeaudit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the whole pipeline from a config")
    p.add_argument("--config", help="TOML config (default: the bundled fixture config)")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--stage", help="run only these stages (comma separated)")
    p.add_argument("--model", help="evaluate only this vision endpoint (name or model)")
    p.add_argument("--mock", action="store_true", help="serve all endpoints from the bundled mock")
    p.add_argument("--resolution", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ingest", help="GeoJSON -> road graph JSON")
    p.add_argument("--map", required=True)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="GeoJSON -> StopSet JSON")
    p.add_argument("--map", required=True)
    p.add_argument("--spacing", type=float, default=25.0)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--n-min", type=int, default=10)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--cap", type=int, default=8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("solve", help="StopSet JSON -> RoutePlan JSON")
    p.add_argument("--stops", required=True)
    p.add_argument("--vehicles", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="brute force (small instances only)")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("expand", help="graph + stops + plan -> legs GeoJSON")
    p.add_argument("--graph", required=True)
    p.add_argument("--stops", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--route-id", default="r000")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("render", help="legs -> one PNG (+ sidecar) per leg")
    p.add_argument("--map", required=True)
    p.add_argument("--legs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resolution", type=int, default=1024)
    p.add_argument("--style")
    p.add_argument("--plan-image", help="also render the whole route to this file name")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("label", help="legs + map -> labels JSONL")
    p.add_argument("--legs", required=True)
    p.add_argument("--map")
    p.add_argument("--annotations", help="label-studio export to import instead of geometry")
    p.add_argument("--buffer", action="append", metavar="CLASS=METERS")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="images -> raw responses (+ verdicts)")
    p.add_argument("--images", required=True, help="directory of leg PNGs")
    p.add_argument("--endpoint", help="chat-completions base URL")
    p.add_argument("--model", default="mock-vlm")
    p.add_argument("--api-key-env")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--per-question", action="store_true")
    p.add_argument("--extractor-model")
    p.add_argument("--extractor-endpoint")
    p.add_argument("--mock", action="store_true")
    p.add_argument("--fixture", help="mock fixture JSON")
    p.add_argument("--verdicts", help="also write verdicts JSONL here")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="verdicts + labels -> metrics CSV")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--labels", required=True, help="labels JSONL or label-studio export JSON")
    p.add_argument("--unanswered", choices=("negative", "exclude"), default="negative")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="model score JSONs -> report files")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("mock-server", help="serve the mock chat-completions endpoint")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--fixture")
    p.set_defaults(func=cmd_mock_server)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"error: {exc}\n  failing artifact: {exc.artifact}", file=sys.stderr)
        return EXIT_STAGE
    except (RouteAuditError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    raise SystemExit(main())
