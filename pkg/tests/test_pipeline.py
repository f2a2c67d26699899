from __future__ import annotations

import csv
import json
import shutil
from pathlib import Path

import pytest

from routeaudit.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from routeaudit.errors import ConfigError, StageFailure
from routeaudit.evaluation import compute_metrics, score
from routeaudit.extraction import load_verdict_map
from routeaudit.oracle import load_labels
from routeaudit.pipeline import STAGES, Pipeline, bundled_path, load_config, run_all
from routeaudit.router import legs_from_geojson
from routeaudit.solver import RoutePlan

SMALL = dict(routes=2, resolution=384)


def write_config(tmp_path: Path, text: str) -> Path:
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


MINIMAL = f"""
[map]
path = "{bundled_path('blr_extract.geojson')}"
[sampling]
seed = 3
"""


# configuration ----------------------------------------------------------------------------


def test_default_config():
    cfg = load_config()
    assert cfg.routes == 10 and len(cfg.route_ids()) == 10
    assert cfg.seed == 20240611
    assert cfg.buffers["Railway"] == 5.0
    assert cfg.out_dir == Path("routeaudit-out")


def test_minimal_config(tmp_path):
    cfg = load_config(write_config(tmp_path, MINIMAL))
    assert cfg.seed == 3 and cfg.endpoints == ()


def test_route_seeds_differ_and_repeat():
    cfg = load_config()
    a = [cfg.route_seed(r) for r in range(3)]
    assert len(set(a)) == 3 and a == [cfg.route_seed(r) for r in range(3)]


@pytest.mark.parametrize(
    "text",
    [
        "[map]\npath = 'x.geojson'\n[sampling]\nseed = 1\n",  # missing map file
        MINIMAL.replace("seed = 3", "k = 5"),  # no seed
        MINIMAL + "[bogus]\nx = 1\n",
        MINIMAL + "[render]\nresolution = 100\n",
        MINIMAL + "[render]\ncolour = 'red'\n",
        MINIMAL + "[oracle]\nbuffers_m = { Lava = 3.0 }\n",
        MINIMAL + "[oracle]\nbuffers_m = { Railway = -1.0 }\n",
        MINIMAL.replace("seed = 3", "seed = 'three'"),
        MINIMAL + "[[endpoints]]\nname = 'a'\nrole = 'vision'\nbase_url = 'http://x'\n",
        MINIMAL + "[labels]\nsource = 'annotations'\n",
        "this is not toml = [",
    ],
)
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, text))


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = write_config(tmp_path, MINIMAL + "[bogus]\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--stage", "nope", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_stage_failure_exit_code(tmp_path, capsys):
    p = write_config(tmp_path, MINIMAL.replace("seed = 3", "seed = 3\nn_min = 500\nn_max = 600"))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_STAGE
    err = capsys.readouterr().err
    assert "failing artifact" in err and "routes/r000/stops.json" in err


def test_stage_failure_names_stage(tmp_path):
    cfg = load_config(write_config(tmp_path, MINIMAL), out_dir=tmp_path / "o", n_min=500, n_max=600)
    with pytest.raises(StageFailure) as ei:
        run_all(cfg)
    assert ei.value.stage == "sample"


# a small end-to-end mock run ------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    cfg = load_config(out_dir=out, **SMALL)
    lines: list[str] = []
    status = run_all(cfg, mock=True, echo=lines.append)
    return cfg, out, status, lines


def test_all_stages_ran(small_run):
    _, out, status, lines = small_run
    assert status == {s: "ran" for s in STAGES}
    assert len(lines) == len(STAGES)
    assert (out / "digests.json").is_file()


def test_route_artifacts(small_run):
    cfg, out, _, _ = small_run
    assert sorted(p.name for p in (out / "routes").iterdir()) == ["r000", "r001"]
    for rid in cfg.route_ids():
        d = out / "routes" / rid
        for name in ("stops.json", "plan.json", "legs.geojson", "plan.png", "plan.georef.json"):
            assert (d / name).is_file(), name
        plan = RoutePlan.from_json(json.loads((d / "plan.json").read_text()))
        stops = json.loads((d / "stops.json").read_text())
        assert 10 <= len(stops["stops"]) <= 20
        legs = legs_from_geojson((d / "legs.geojson").read_text())
        assert len(legs) == sum(len(r) + 1 for r in plan.routes)
        for leg in legs:
            assert (out / "images" / f"{leg.leg_id}.png").is_file()


def test_label_per_leg(small_run):
    _, out, _, _ = small_run
    n_legs = len(list((out / "images").glob("*.png")))
    labels = load_labels((out / "labels.jsonl").read_text())
    assert len(labels) == n_legs


def test_score_matches_recomputation(small_run):
    _, out, _, _ = small_run
    (vfile,) = (out / "verdicts").glob("*.jsonl")
    verdicts = load_verdict_map(vfile.read_text())
    labels = load_labels((out / "labels.jsonl").read_text())
    m = compute_metrics(score(verdicts, labels).micro)
    rows = list(csv.reader(open(out / "scores" / f"{vfile.stem}.csv", newline="")))
    micro = rows[1]
    assert micro[0] == "micro"
    assert float(micro[5]) == pytest.approx(m.accuracy, abs=1e-6)
    assert float(micro[6]) == pytest.approx(m.tpr, abs=1e-6)


def test_report_files(small_run):
    _, out, _, _ = small_run
    names = sorted(p.name for p in (out / "report").iterdir())
    assert names == sorted(["accuracy.csv", "rates.csv", "accuracy_vs_latency.svg", "per_question.csv", "report.json"])
    prov = json.loads((out / "report" / "report.json").read_text())["provenance"]
    assert prov["mock"] is True and len(prov["prompt_digest"]) == 64


def test_rerun_is_cached(small_run):
    cfg, out, _, _ = small_run
    before = json.loads((out / "digests.json").read_text())
    status = run_all(cfg, mock=True)
    assert set(status.values()) == {"cached"}
    assert json.loads((out / "digests.json").read_text())["tree"] == before["tree"]


def test_resolution_change_invalidates_downstream_only(small_run, tmp_path):
    cfg, out, _, _ = small_run
    copy = tmp_path / "out"
    shutil.copytree(out, copy)
    cfg2 = load_config(out_dir=copy, routes=2, resolution=320)
    status = run_all(cfg2, mock=True)
    assert [s for s in STAGES if status[s] == "cached"] == ["ingest", "sample", "solve", "expand", "label"]
    assert [s for s in STAGES if status[s] == "ran"] == ["render", "evaluate", "score", "report"]


def test_tampered_artifact_reruns_stage(small_run, tmp_path):
    cfg, out, _, _ = small_run
    copy = tmp_path / "out"
    shutil.copytree(out, copy)
    (copy / "routes" / "r001" / "plan.json").write_text("{}")
    status = Pipeline(load_config(out_dir=copy, **SMALL), mock=True).run(["ingest", "sample", "solve"])
    assert status == {"ingest": "cached", "sample": "cached", "solve": "ran"}


# stage subcommands ---------------------------------------------------------------------------


def test_subcommand_chain(tmp_path, capsys):
    m = str(bundled_path("blr_extract.geojson"))
    t = lambda n: str(tmp_path / n)  # noqa: E731
    assert main(["ingest", "--map", m, "-o", t("graph.json")]) == EXIT_OK
    assert main(["sample", "--map", m, "--seed", "5", "--k", "20", "-o", t("stops.json")]) == EXIT_OK
    assert main(["solve", "--stops", t("stops.json"), "-o", t("plan.json")]) == EXIT_OK
    assert main(["expand", "--graph", t("graph.json"), "--stops", t("stops.json"), "--plan", t("plan.json"), "-o", t("legs.geojson")]) == EXIT_OK
    legs = legs_from_geojson(Path(t("legs.geojson")).read_text())
    assert main(["label", "--legs", t("legs.geojson"), "--map", m, "-o", t("labels.jsonl")]) == EXIT_OK
    assert len(Path(t("labels.jsonl")).read_text().splitlines()) == len(legs)
    assert main(["render", "--map", m, "--legs", t("legs.geojson"), "--out-dir", t("img"), "--resolution", "256"]) == EXIT_OK
    assert len(list(Path(t("img")).glob("r000_leg*.png"))) == len(legs)
    assert main(["evaluate", "--images", t("img"), "--mock", "--extractor-model", "mock-extractor",
                 "--verdicts", t("verdicts.jsonl"), "-o", t("responses.jsonl")]) == EXIT_OK
    assert len(Path(t("responses.jsonl")).read_text().splitlines()) == len(legs)
    assert main(["score", "--verdicts", t("verdicts.jsonl"), "--labels", t("labels.jsonl"), "-o", t("m.csv")]) == EXIT_OK
    rows = list(csv.reader(open(t("m.csv"), newline="")))
    assert [r[0] for r in rows] == ["Scope", "micro", "q1", "q2", "q3", "q4"]
    assert sum(int(x) for x in rows[1][1:5]) == 4 * len(legs)
    assert main(["render", "--map", m, "--legs", t("legs.geojson"), "--out-dir", t("plan"), "--resolution", "256",
                 "--plan-image", "plan.png"]) == EXIT_OK
    assert (Path(t("plan")) / "plan.json").is_file()
    capsys.readouterr()


def test_cli_score_on_400_fixture(tmp_path):
    out = tmp_path / "m.csv"
    rc = main([
        "score",
        "--verdicts", str(bundled_path("metrics_400.verdicts.jsonl")),
        "--labels", str(bundled_path("metrics_400.labels.json")),
        "-o", str(out),
    ])
    assert rc == EXIT_OK
    man = json.loads(bundled_path("metrics_400.manifest.json").read_text())
    micro = list(csv.reader(open(out, newline="")))[1]
    assert [int(x) for x in micro[1:5]] == [man["counts"][k] for k in ("tp", "fp", "tn", "fn")]
    assert float(micro[5]) == pytest.approx(man["metrics"]["accuracy"], abs=1e-6)


def test_cli_solve_exact(tmp_path):
    stops = tmp_path / "s.json"
    assert main(["sample", "--map", str(bundled_path("blr_extract.geojson")), "--seed", "2", "--k", "10",
                 "--n-min", "5", "--n-max", "7", "-o", str(stops)]) == EXIT_OK
    assert main(["solve", "--stops", str(stops), "--exact", "-o", str(tmp_path / "p.json")]) == EXIT_OK


def test_cli_report(tmp_path, small_run):
    _, out, _, _ = small_run
    scores = [str(p) for p in (out / "scores").glob("*.json")]
    assert main(["report", "--scores", *scores, "--out-dir", str(tmp_path / "rep")]) == EXIT_OK
    assert (tmp_path / "rep" / "accuracy.csv").is_file()
