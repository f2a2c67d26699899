"""Config loading and the staged, digest-cached experiment pipeline.

Stages run in a fixed order and communicate only through files under the
output directory:

    ingest    map/graph.json, map/summary.json
    sample    routes/rNNN/stops.json
    solve     routes/rNNN/plan.json
    expand    routes/rNNN/legs.geojson
    render    images/<leg>.png (+ .json sidecar), routes/rNNN/plan.png (+ plan.georef.json)
    label     labels.jsonl
    evaluate  responses/<model>.jsonl, verdicts/<model>.jsonl, verdicts/<model>.stats.json
    score     scores/<model>.json, scores/<model>.csv
    report    report/*

A stage is skipped ("cached") when a record in ``_stages/`` shows the same
cache key (config section + upstream artifact digests) and its recorded
outputs are still on disk unchanged.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import ConfigError, Infeasible, RouteAuditError, StageFailure
from .evaluation import ModelReport, emit_report, metrics_csv, score
from .extraction import DIRECT, dump_verdict_map, load_verdict_map, to_verdict
from .geo_ingest import FeatureClass, FeatureSet, RoadGraph, extract_road_graph, load_geojson
from .llm_client import ErrorRecord, ModelEndpoint, RawResponse, batch_evaluate, latency_stats, load_responses, prompt_digest
from .oracle import DEFAULT_BUFFERS, dump_labels, import_annotations, label_leg, load_labels
from .render import StyleSheet, render_leg, render_plan
from .router import expand, legs_from_geojson, legs_to_geojson
from .sampling import SampleConfig, StopSet, cluster_points, densify, two_stage_sample
from .solver import Instance, RoutePlan, solve_heuristic, validate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("ingest", "sample", "solve", "expand", "render", "label", "evaluate", "score", "report")
DEPS = {
    "ingest": (),
    "sample": ("ingest",),
    "solve": ("sample",),
    "expand": ("ingest", "sample", "solve"),
    "render": ("expand",),
    "label": ("expand",),
    "evaluate": ("render",),
    "score": ("evaluate", "label"),
    "report": ("score",),
}
BUNDLED = "bundled:"

# keys whose values depend on wall-clock timing; left out of determinism digests
VOLATILE_KEYS = frozenset({"timestamp", "latency_s", "latency_mean_s", "latency_std_s", "mean_s", "std_s"})
# files whose content is laid out by measured latency
TIMING_FILES = ("report/accuracy.csv", "report/accuracy_vs_latency.svg")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def json_digest(obj) -> str:
    return sha256_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("routeaudit.data").joinpath(name)))


# config ---------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointConfig:
    name: str
    role: str  # "vision" or "extractor"
    base_url: str
    model: str
    api_key_env: str | None = None
    temperature: float = 0.0
    top_k: int | None = 1
    max_tokens: int = 512
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0
    params_b: float | None = None
    per_question: bool = False

    def endpoint(self, base_url: str | None = None) -> ModelEndpoint:
        return ModelEndpoint(
            base_url=base_url or self.base_url,
            model=self.model,
            api_key_env=self.api_key_env,
            temperature=self.temperature,
            top_k=self.top_k,
            max_tokens=self.max_tokens,
            timeout=self.timeout,
            max_retries=self.max_retries,
            backoff_base=self.backoff_base,
            params_b=self.params_b,
        )


@dataclass(frozen=True)
class PipelineConfig:
    map_path: Path
    seed: int
    spacing_m: float = 25.0
    k: int = 40
    m: int = 3
    n_min: int = 10
    n_max: int = 20
    per_cluster_cap: int = 8
    routes: int = 10
    vehicle_count: int = 1
    capacity: int | None = None  # None: the sampled StopSet's own capacity
    resolution: int = 1024
    style_path: Path | None = None
    buffers: dict = field(default_factory=lambda: {c.value: b for c, b in DEFAULT_BUFFERS.items()})
    label_source: str = "geometry"
    annotations_path: Path | None = None
    endpoints: tuple[EndpointConfig, ...] = ()
    parallelism: int = 4
    unanswered: str = "negative"
    out_dir: Path = Path("routeaudit-out")

    def section(self, name: str) -> dict:
        """The config values a stage depends on (part of its cache key)."""
        if name == "sampling":
            keys = ("spacing_m", "k", "m", "n_min", "n_max", "per_cluster_cap", "routes", "seed")
            return {k: getattr(self, k) for k in keys}
        if name == "solver":
            return {"vehicle_count": self.vehicle_count, "capacity": self.capacity, "seed": self.seed}
        if name == "render":
            return {"resolution": self.resolution, "style": self.style().digest()}
        if name == "label":
            d = {"source": self.label_source, "buffers": dict(sorted(self.buffers.items()))}
            if self.label_source == "annotations":
                d["annotations"] = file_digest(self.annotations_path)
            return d
        if name == "evaluate":
            eps = [asdict(e) for e in self.endpoints]
            return {"endpoints": eps, "parallelism": self.parallelism, "prompt": prompt_digest()}
        if name == "score":
            return {"unanswered": self.unanswered}
        raise KeyError(name)

    def style(self) -> StyleSheet:
        return StyleSheet.load(self.style_path) if self.style_path else StyleSheet()

    def buffer_map(self) -> dict[FeatureClass, float]:
        return {FeatureClass(k): float(v) for k, v in self.buffers.items()}

    def vision(self, model: str | None = None) -> list[EndpointConfig]:
        eps = [e for e in self.endpoints if e.role == "vision"]
        if model is not None:
            eps = [e for e in eps if model in (e.name, e.model)]
            if not eps:
                raise ConfigError(f"no vision endpoint named {model!r}")
        return eps

    def extractor(self) -> EndpointConfig | None:
        return next((e for e in self.endpoints if e.role == "extractor"), None)

    def route_ids(self) -> list[str]:
        return [f"r{r:03d}" for r in range(self.routes)]

    def route_seed(self, r: int) -> int:
        return int(np.random.SeedSequence([self.seed, r]).generate_state(1)[0])

    def to_json(self) -> dict:
        d = asdict(self)
        for k in ("map_path", "style_path", "annotations_path", "out_dir"):
            d[k] = None if d[k] is None else str(d[k])
        return d


_SECTIONS = {
    "map": {"path"},
    "sampling": {"spacing_m", "k", "m", "n_min", "n_max", "per_cluster_cap", "seed", "routes"},
    "solver": {"vehicle_count", "capacity"},
    "render": {"resolution", "style"},
    "oracle": {"buffers_m"},
    "labels": {"source", "annotations"},
    "evaluate": {"parallelism", "unanswered"},
    "endpoints": None,
    "output": {"dir"},
}
_ENDPOINT_KEYS = set(EndpointConfig.__dataclass_fields__)


def _resolve(base: Path, value: str) -> Path:
    if value.startswith(BUNDLED):
        return bundled_path(value[len(BUNDLED):])
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base / p)


def _typed(section: str, key: str, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"[{section}] {key} must be {kind.__name__}, got {value!r}")
    return value


def parse_config(doc: dict, base: Path) -> PipelineConfig:
    """Validate a parsed TOML document into a PipelineConfig."""
    for name, val in doc.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        allowed = _SECTIONS[name]
        if allowed is not None:
            extra = set(val) - allowed
            if extra:
                raise ConfigError(f"[{name}] unknown keys {sorted(extra)}")
    if "map" not in doc or "path" not in doc["map"]:
        raise ConfigError("[map] path is required")
    smp = doc.get("sampling", {})
    if "seed" not in smp:
        raise ConfigError("[sampling] seed is required (no wall-clock default)")
    kw: dict = {"map_path": _resolve(base, _typed("map", "path", doc["map"]["path"], str))}
    for key, kind in (("spacing_m", float), ("k", int), ("m", int), ("n_min", int), ("n_max", int),
                      ("per_cluster_cap", int), ("seed", int), ("routes", int)):
        if key in smp:
            kw[key] = _typed("sampling", key, smp[key], kind)
    sol = doc.get("solver", {})
    if "vehicle_count" in sol:
        kw["vehicle_count"] = _typed("solver", "vehicle_count", sol["vehicle_count"], int)
    if "capacity" in sol:
        kw["capacity"] = _typed("solver", "capacity", sol["capacity"], int)
    ren = doc.get("render", {})
    if "resolution" in ren:
        kw["resolution"] = _typed("render", "resolution", ren["resolution"], int)
    if "style" in ren:
        kw["style_path"] = _resolve(base, _typed("render", "style", ren["style"], str))
    buffers = {c.value: b for c, b in DEFAULT_BUFFERS.items()}
    for cls_name, b in doc.get("oracle", {}).get("buffers_m", {}).items():
        if cls_name not in buffers:
            raise ConfigError(f"[oracle] buffers_m: unknown class {cls_name!r}")
        b = _typed("oracle", f"buffers_m.{cls_name}", b, float)
        if b < 0:
            raise ConfigError(f"[oracle] buffers_m.{cls_name} must be >= 0")
        buffers[cls_name] = b
    kw["buffers"] = buffers
    lab = doc.get("labels", {})
    kw["label_source"] = lab.get("source", "geometry")
    if kw["label_source"] not in ("geometry", "annotations"):
        raise ConfigError("[labels] source must be 'geometry' or 'annotations'")
    if kw["label_source"] == "annotations":
        if "annotations" not in lab:
            raise ConfigError("[labels] annotations path required when source = 'annotations'")
        kw["annotations_path"] = _resolve(base, lab["annotations"])
    ev = doc.get("evaluate", {})
    if "parallelism" in ev:
        kw["parallelism"] = _typed("evaluate", "parallelism", ev["parallelism"], int)
    if "unanswered" in ev:
        kw["unanswered"] = ev["unanswered"]
    eps = []
    for i, e in enumerate(doc.get("endpoints", [])):
        extra = set(e) - _ENDPOINT_KEYS
        if extra:
            raise ConfigError(f"[[endpoints]] #{i}: unknown keys {sorted(extra)}")
        missing = {"name", "role", "base_url", "model"} - set(e)
        if missing:
            raise ConfigError(f"[[endpoints]] #{i}: missing {sorted(missing)}")
        if e["role"] not in ("vision", "extractor"):
            raise ConfigError(f"[[endpoints]] #{i}: role must be 'vision' or 'extractor'")
        try:
            ec = EndpointConfig(**e)
            ec.endpoint()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[[endpoints]] #{i}: {exc}") from exc
        eps.append(ec)
    names = [e.name for e in eps]
    if len(set(names)) != len(names):
        raise ConfigError("endpoint names must be unique")
    kw["endpoints"] = tuple(eps)
    # the output directory is relative to the working directory, not the config
    kw["out_dir"] = Path(_typed("output", "dir", doc.get("output", {}).get("dir", "routeaudit-out"), str))
    try:
        cfg = PipelineConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    check_config(cfg)
    return cfg


def check_config(cfg: PipelineConfig) -> None:
    """Value checks plus existence of every referenced file."""
    if not cfg.map_path.is_file():
        raise ConfigError(f"map file not found: {cfg.map_path}")
    if cfg.style_path is not None and not cfg.style_path.is_file():
        raise ConfigError(f"style file not found: {cfg.style_path}")
    if cfg.annotations_path is not None and not cfg.annotations_path.is_file():
        raise ConfigError(f"annotations file not found: {cfg.annotations_path}")
    if cfg.spacing_m <= 0:
        raise ConfigError("spacing_m must be > 0")
    if cfg.k < 1 or not 1 <= cfg.m <= cfg.k:
        raise ConfigError("need k >= 1 and 1 <= m <= k")
    if not 1 <= cfg.n_min <= cfg.n_max:
        raise ConfigError("need 1 <= n_min <= n_max")
    if cfg.per_cluster_cap < 1 or cfg.routes < 1 or cfg.vehicle_count < 1:
        raise ConfigError("per_cluster_cap, routes and vehicle_count must be >= 1")
    if cfg.capacity is not None and cfg.capacity < 1:
        raise ConfigError("capacity must be >= 1")
    if not 256 <= cfg.resolution <= 4096:
        raise ConfigError("resolution must be within [256, 4096]")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if cfg.unanswered not in ("negative", "exclude"):
        raise ConfigError("unanswered must be 'negative' or 'exclude'")
    try:
        cfg.style()
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"bad style sheet: {exc}") from exc


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Read a TOML config (default: the bundled one) and apply CLI overrides.

    Overrides with value None are ignored. Input file paths in the TOML are
    relative to the config's directory (``bundled:<name>`` names a file
    shipped with the package); the output directory is relative to the
    working directory.
    """
    p = Path(path) if path is not None else bundled_path("default_config.toml")
    try:
        doc = tomllib.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    cfg = parse_config(doc, p.parent)
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "out_dir" in changes:
        changes["out_dir"] = Path(changes["out_dir"])
    if changes:
        try:
            cfg = replace(cfg, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        check_config(cfg)
    return cfg


# determinism digests ----------------------------------------------------------


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def stable_digest(path: Path) -> str:
    """Content digest with wall-clock fields removed from JSON documents."""
    if path.suffix == ".json":
        return json_digest(_strip_volatile(json.loads(path.read_text(encoding="utf-8"))))
    if path.suffix == ".jsonl":
        rows = [_strip_volatile(json.loads(l)) for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
        return json_digest(rows)
    return file_digest(path)


# pipeline ------------------------------------------------------------------


class Pipeline:
    """Runs stages against one output directory.

    ``mock=True`` starts the bundled mock chat server for the evaluate stage
    and points every endpoint at it. ``model`` restricts evaluation to one
    vision endpoint.
    """

    def __init__(self, cfg: PipelineConfig, mock: bool = False, model: str | None = None,
                 echo: Callable[[str], None] | None = None):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.mock = mock
        self.model = model
        self.echo = echo or (lambda s: None)
        self._fs: FeatureSet | None = None
        self._artifact = ""
        self.status: dict[str, str] = {}
        if mock and not cfg.vision():
            mock_ep = EndpointConfig("mock-vlm", "vision", "http://127.0.0.1/v1", "mock-vlm")
            mock_ex = EndpointConfig("mock-extractor", "extractor", "http://127.0.0.1/v1", "mock-extractor")
            self.cfg = replace(cfg, endpoints=(mock_ep, mock_ex))
        self.cfg.vision(model)  # fail early on an unknown --model

    # helpers
    @property
    def fs(self) -> FeatureSet:
        if self._fs is None:
            self._fs = load_geojson(self.cfg.map_path)
        return self._fs

    def path(self, rel: str) -> Path:
        return self.out / rel

    def _write(self, rel: str, text: str | bytes) -> str:
        p = self.path(rel)
        self._artifact = str(p)
        p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(text, bytes):
            p.write_bytes(text)
        else:
            with open(p, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return rel

    def _target(self, rel: str) -> None:
        """Name the artifact being produced, for error reports."""
        self._artifact = str(self.path(rel))

    def _read(self, rel: str) -> str:
        p = self.path(rel)
        self._artifact = str(p)
        return p.read_text(encoding="utf-8")

    def _record_path(self, stage: str) -> Path:
        return self.path(f"_stages/{stage}.json")

    def _record(self, stage: str) -> dict | None:
        p = self._record_path(stage)
        return json.loads(p.read_text()) if p.is_file() else None

    def _outputs_digest(self, stage: str) -> dict[str, str]:
        rec = self._record(stage)
        if rec is None:
            raise StageFailure(stage, str(self._record_path(stage)), FileNotFoundError("stage has not run"))
        out = {}
        for rel in rec["outputs"]:
            p = self.path(rel)
            if not p.is_file():
                raise StageFailure(stage, str(p), FileNotFoundError("artifact missing"))
            out[rel] = file_digest(p)
        return out

    def _params(self, stage: str) -> dict:
        c = self.cfg
        map_d = file_digest(c.map_path)
        if stage == "ingest":
            return {"map": map_d}
        if stage == "sample":
            return {"map": map_d, "sampling": c.section("sampling")}
        if stage == "solve":
            return c.section("solver")
        if stage == "expand":
            return {}
        if stage == "render":
            return {"map": map_d, **c.section("render")}
        if stage == "label":
            return {"map": map_d, **c.section("label")}
        if stage == "evaluate":
            ev = c.section("evaluate")
            ev["model"] = self.model
            if self.mock:
                ev["mock_fixture"] = file_digest(bundled_path("mock_responses.json"))
                for e in ev["endpoints"]:
                    e["base_url"] = "mock"
            return ev
        if stage == "score":
            return c.section("score")
        if stage == "report":
            return self.provenance()
        raise KeyError(stage)

    def cache_key(self, stage: str) -> str:
        inputs = {dep: json_digest(self._outputs_digest(dep)) for dep in DEPS[stage]}
        return json_digest({"stage": stage, "version": __version__, "params": self._params(stage), "inputs": inputs})

    def is_cached(self, stage: str, key: str) -> bool:
        rec = self._record(stage)
        if rec is None or rec.get("key") != key:
            return False
        for rel, d in rec["outputs"].items():
            p = self.path(rel)
            if not p.is_file() or file_digest(p) != d:
                return False
        return True

    def provenance(self) -> dict:
        c = self.cfg
        return {
            "version": __version__,
            "prompt_digest": prompt_digest(),
            "style_digest": c.style().digest(),
            "buffers_digest": json_digest(dict(sorted(c.buffers.items()))),
            "buffers_m": dict(sorted(c.buffers.items())),
            "seeds": {"sampling": c.seed, "routes": {rid: c.route_seed(r) for r, rid in enumerate(c.route_ids())}},
            "map_digest": file_digest(c.map_path),
            "config_digest": json_digest({k: v for k, v in c.to_json().items() if k not in ("out_dir", "map_path")}),
            "mock": self.mock,
        }

    # running
    def run(self, stages: list[str] | None = None) -> dict[str, str]:
        """Run ``stages`` (default: all) in pipeline order; returns stage -> "ran"/"cached"."""
        todo = [s for s in STAGES if stages is None or s in stages]
        unknown = set(stages or ()) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stage(s): {sorted(unknown)}")
        self.out.mkdir(parents=True, exist_ok=True)
        for stage in todo:
            key = self.cache_key(stage)
            if self.is_cached(stage, key):
                self.status[stage] = "cached"
                self.echo(f"{stage:<9} cached")
                continue
            t0 = time.perf_counter()
            self._artifact = str(self.out)
            try:
                outputs = getattr(self, f"_stage_{stage}")()
            except StageFailure:
                raise
            except (RouteAuditError, ValueError, KeyError, OSError) as exc:
                raise StageFailure(stage, self._artifact, exc) from exc
            rec = {"stage": stage, "key": key, "outputs": {rel: file_digest(self.path(rel)) for rel in outputs}}
            self._record_path(stage).parent.mkdir(parents=True, exist_ok=True)
            self._record_path(stage).write_text(json.dumps(rec, indent=2, sort_keys=True))
            self.status[stage] = "ran"
            self.echo(f"{stage:<9} ran    {len(outputs):4d} artifacts  {time.perf_counter() - t0:6.2f}s")
        self.write_digests()
        return self.status

    def write_digests(self) -> dict:
        """Stable digests of every recorded artifact, written to digests.json."""
        files: dict[str, str] = {}
        for stage in STAGES:
            rec = self._record(stage)
            if rec is None:
                continue
            for rel in rec["outputs"]:
                p = self.path(rel)
                if p.is_file():
                    files[rel] = "timing-dependent" if rel in TIMING_FILES else stable_digest(p)
        files = dict(sorted(files.items()))
        doc = {"tree": json_digest(files), "files": files}
        self.path("digests.json").write_text(json.dumps(doc, indent=2) + "\n")
        return doc

    # stages
    def _stage_ingest(self) -> list[str]:
        self._artifact = str(self.cfg.map_path)
        fs = self.fs
        self._target("map/graph.json")
        g = extract_road_graph(fs)
        summary = {
            "source": self.cfg.map_path.name,
            "feature_counts": fs.counts(),
            "dropped": fs.dropped,
            "extent": [fs.extent.min_lat, fs.extent.min_lon, fs.extent.max_lat, fs.extent.max_lon],
            "road_graph": {"nodes": len(g.nodes), "edges": len(g.edges)},
        }
        return [
            self._write("map/graph.json", json.dumps(g.to_json())),
            self._write("map/summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"),
        ]

    def _stage_sample(self) -> list[str]:
        c = self.cfg
        pts = densify(self.fs, c.spacing_m)
        clustering = cluster_points(pts, min(c.k, len(pts)), c.seed)
        out = []
        for r, rid in enumerate(c.route_ids()):
            sc = SampleConfig(c.m, c.n_min, c.n_max, c.per_cluster_cap, c.route_seed(r))
            self._target(f"routes/{rid}/stops.json")
            ss = two_stage_sample(clustering, sc)
            out.append(self._write(f"routes/{rid}/stops.json", ss.dumps() + "\n"))
        return out

    def _stage_solve(self) -> list[str]:
        c = self.cfg
        out = []
        for rid in c.route_ids():
            ss = StopSet.from_json(json.loads(self._read(f"routes/{rid}/stops.json")))
            self._target(f"routes/{rid}/plan.json")
            inst = Instance.from_stops(ss, c.vehicle_count)
            if c.capacity is not None:
                inst = replace(inst, capacity=c.capacity)
            plan = solve_heuristic(inst, seed=c.seed)
            rep = validate(inst, plan)
            if not rep.ok:
                raise Infeasible(f"{rid}: plan fails validation: {rep.violations}")
            out.append(self._write(f"routes/{rid}/plan.json", json.dumps(plan.to_json(), indent=2) + "\n"))
        return out

    def _stage_expand(self) -> list[str]:
        g = RoadGraph.from_json(json.loads(self._read("map/graph.json")))
        out = []
        for rid in self.cfg.route_ids():
            ss = StopSet.from_json(json.loads(self._read(f"routes/{rid}/stops.json")))
            plan = RoutePlan.from_json(json.loads(self._read(f"routes/{rid}/plan.json")))
            self._target(f"routes/{rid}/legs.geojson")
            legs = expand(g, ss, plan, rid)
            out.append(self._write(f"routes/{rid}/legs.geojson", legs_to_geojson(legs) + "\n"))
        return out

    def legs(self) -> list:
        out = []
        for rid in self.cfg.route_ids():
            out.extend(legs_from_geojson(self._read(f"routes/{rid}/legs.geojson")))
        return out

    def _stage_render(self) -> list[str]:
        c = self.cfg
        style = c.style()
        out = []
        for rid in c.route_ids():
            legs = legs_from_geojson(self._read(f"routes/{rid}/legs.geojson"))
            for leg in legs:
                self._target(f"images/{leg.leg_id}.png")
                img = render_leg(self.fs, leg, style, c.resolution)
                out.append(self._write(f"images/{leg.leg_id}.png", img.png_bytes()))
                out.append(self._write(f"images/{leg.leg_id}.json", json.dumps(img.sidecar(), indent=2, sort_keys=True)))
            self._target(f"routes/{rid}/plan.png")
            img = render_plan(self.fs, legs, style, c.resolution)
            out.append(self._write(f"routes/{rid}/plan.png", img.png_bytes()))
            out.append(self._write(f"routes/{rid}/plan.georef.json", json.dumps(img.sidecar(), indent=2, sort_keys=True)))
        return out

    def _stage_label(self) -> list[str]:
        c = self.cfg
        legs = self.legs()
        if c.label_source == "annotations":
            self._artifact = str(c.annotations_path)
            imported = import_annotations(c.annotations_path)
            labels = [imported[l.leg_id] for l in legs if l.leg_id in imported]
        else:
            bufs = c.buffer_map()
            labels = [label_leg(l, self.fs, bufs) for l in legs]
        return [self._write("labels.jsonl", dump_labels(labels))]

    @contextlib.contextmanager
    def _endpoints(self):
        """Yield (vision endpoints, extractor endpoint), served by the mock if requested."""
        c = self.cfg
        vision = c.vision(self.model)
        ex = c.extractor()
        if not self.mock:
            yield [(e, e.endpoint()) for e in vision], ex.endpoint() if ex else None
            return
        from .mock_server import MockChatServer

        with MockChatServer() as srv:
            yield [(e, replace(e.endpoint(srv.url), backoff_base=0.01)) for e in vision], (
                replace(ex.endpoint(srv.url), backoff_base=0.01) if ex else None
            )

    def _stage_evaluate(self) -> list[str]:
        c = self.cfg
        items = [(l.leg_id, self.path(f"images/{l.leg_id}.png")) for l in self.legs()]
        out = []
        with self._endpoints() as (vision, extractor):
            for ec, ep in vision:
                self._artifact = str(self.path(f"responses/{ec.name}.jsonl"))
                results = batch_evaluate(ep, items, c.parallelism, per_question=ec.per_question)
                verdicts = {}
                stats = {"direct": 0, "extracted": 0, "unanswered": 0, "errors": 0}
                for r in results:
                    if isinstance(r, ErrorRecord):
                        verdicts[r.leg_id] = None
                        stats["errors"] += 1
                        stats["unanswered"] += 1
                        continue
                    v = to_verdict(r, extractor)
                    verdicts[r.leg_id] = v
                    if v is None:
                        stats["unanswered"] += 1
                    elif v.source == DIRECT:
                        stats["direct"] += 1
                    else:
                        stats["extracted"] += 1
                responses = "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in results)
                out.append(self._write(f"responses/{ec.name}.jsonl", responses))
                out.append(self._write(f"verdicts/{ec.name}.jsonl", dump_verdict_map(verdicts)))
                out.append(self._write(f"verdicts/{ec.name}.stats.json", json.dumps(stats, indent=2, sort_keys=True) + "\n"))
        return out

    def _stage_score(self) -> list[str]:
        c = self.cfg
        labels = load_labels(self._read("labels.jsonl"))
        out = []
        for ec in c.vision(self.model):
            verdicts = load_verdict_map(self._read(f"verdicts/{ec.name}.jsonl"))
            stats = json.loads(self._read(f"verdicts/{ec.name}.stats.json"))
            responses = load_responses(self._read(f"responses/{ec.name}.jsonl"))
            s = score(verdicts, labels, c.unanswered)
            rep = ModelReport.build(
                ec.name,
                s,
                latency_stats(responses),
                params_b=ec.params_b,
                parse_failures=stats["extracted"] + stats["unanswered"] - stats["errors"],
                sources={"direct-parse": stats["direct"], "llm-extracted": stats["extracted"]},
            )
            out.append(self._write(f"scores/{ec.name}.json", json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n"))
            out.append(self._write(f"scores/{ec.name}.csv", metrics_csv(s)))
        return out

    def _stage_report(self) -> list[str]:
        reports = [
            ModelReport.from_json(json.loads(self._read(f"scores/{ec.name}.json"))) for ec in self.cfg.vision(self.model)
        ]
        self._artifact = str(self.path("report"))
        paths = emit_report(reports, self.path("report"), self.provenance())
        return [p.relative_to(self.out).as_posix() for p in paths]


def run_all(cfg: PipelineConfig, mock: bool = False, model: str | None = None, stages: list[str] | None = None,
            echo: Callable[[str], None] | None = None) -> dict[str, str]:
    """Run the pipeline; raises StageFailure on the first failing stage."""
    return Pipeline(cfg, mock=mock, model=model, echo=echo).run(stages)
