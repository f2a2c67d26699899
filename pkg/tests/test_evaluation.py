from __future__ import annotations

import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from routeaudit.errors import MissingLabel
from routeaudit.evaluation import (
    KEYS,
    REPORT_FILES,
    UNDEFINED,
    ConfusionMatrix,
    ModelReport,
    Score,
    accuracy_by_scan,
    accuracy_table_csv,
    compute_metrics,
    emit_report,
    metrics_csv,
    rates_table_csv,
    scatter_svg,
    score,
)
from routeaudit.extraction import Verdict, load_verdict_map
from routeaudit.oracle import GroundTruthLabel, import_annotations
from routeaudit.pipeline import bundled_path


def V(leg_id, *a):
    return Verdict(leg_id, *a, "direct-parse", "d")


def L(leg_id, *a):
    ev = {k: ("x",) for k, v in zip(KEYS, a) if v}
    return GroundTruthLabel(leg_id, *a, evidence=ev)


# metrics ----------------------------------------------------------------------------------


def test_metrics_worked_example():
    m = compute_metrics(ConfusionMatrix(tp=3, fp=1, tn=4, fn=2))
    assert m.accuracy == 0.7
    assert m.tpr == pytest.approx(0.6)
    assert m.fpr == pytest.approx(0.2)
    assert m.precision == pytest.approx(0.75)
    assert m.recall == m.tpr


def test_undefined_rates_are_none_not_zero():
    m = compute_metrics(ConfusionMatrix(tp=0, fp=0, tn=5, fn=0))
    assert m.accuracy == 1.0 and m.fpr == 0.0
    assert m.tpr is None and m.precision is None


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        compute_metrics(ConfusionMatrix())


def test_undefined_rendered_as_dash():
    s = score({"a": V("a", False, False, False, False)}, {"a": L("a", False, False, False, False)})
    rows = list(csv.reader(io.StringIO(metrics_csv(s))))
    assert rows[1][0] == "micro"
    assert rows[1][6] == UNDEFINED and rows[1][8] == UNDEFINED  # TPR, precision
    assert rows[1][5] == "1.000000"


# scoring ----------------------------------------------------------------------------------


def test_score_example():
    verdicts = {"a": V("a", True, False, True, False), "b": V("b", False, False, True, True)}
    labels = {"a": L("a", True, False, False, False), "b": L("b", True, False, True, False)}
    s = score(verdicts, labels)
    assert s.micro == ConfusionMatrix(tp=2, fp=2, tn=3, fn=1)
    assert s.per_question["q1"] == ConfusionMatrix(tp=1, fn=1)
    assert s.per_question["q3"] == ConfusionMatrix(tp=1, fp=1)
    assert s.scored_legs == 2


def test_unanswered_policies():
    verdicts = {"a": None, "b": V("b", True, True, True, True)}
    labels = {"a": L("a", True, False, False, False), "b": L("b", True, True, True, True)}
    neg = score(verdicts, labels)
    assert neg.micro == ConfusionMatrix(tp=4, tn=3, fn=1) and neg.unanswered == 1
    exc = score(verdicts, labels, unanswered="exclude")
    assert exc.micro == ConfusionMatrix(tp=4) and exc.excluded == 1 and exc.scored_legs == 1
    with pytest.raises(ValueError):
        score(verdicts, labels, unanswered="positive")


def test_missing_label():
    with pytest.raises(MissingLabel):
        score({"a": V("a", True, True, True, True)}, {})


def test_sequence_of_verdicts_accepted():
    s = score([V("a", True, False, False, False)], {"a": L("a", True, False, False, False)})
    assert s.micro == ConfusionMatrix(tp=1, tn=3)


four = st.tuples(st.booleans(), st.booleans(), st.booleans(), st.booleans())


@given(st.lists(st.tuples(st.one_of(st.none(), four), four), min_size=1, max_size=40))
def test_micro_is_sum_and_accuracy_matches_scan(rows):
    verdicts = {f"l{i}": None if p is None else V(f"l{i}", *p) for i, (p, _) in enumerate(rows)}
    labels = {f"l{i}": L(f"l{i}", *a) for i, (_, a) in enumerate(rows)}
    s = score(verdicts, labels)
    total = ConfusionMatrix()
    for k in KEYS:
        total = total + s.per_question[k]
    assert total == s.micro
    assert s.micro.total == 4 * len(rows)
    assert compute_metrics(s.micro).accuracy == pytest.approx(accuracy_by_scan(verdicts, labels), abs=1e-12)


def test_400_leg_fixture_counts():
    man = json.loads(bundled_path("metrics_400.manifest.json").read_text())
    labels = import_annotations(bundled_path("metrics_400.labels.json"))
    verdicts = load_verdict_map(bundled_path("metrics_400.verdicts.jsonl").read_text())
    s = score(verdicts, labels)
    assert s.micro == ConfusionMatrix(**man["counts"])
    for k in KEYS:
        assert s.per_question[k] == ConfusionMatrix(**man["per_question"][k])


# reports ----------------------------------------------------------------------------------


def report(name, tp, fp, tn, fn, lat=1.0, size=7.0):
    s = Score(ConfusionMatrix(tp, fp, tn, fn), {k: ConfusionMatrix() for k in KEYS}, 0, 0, 0)
    return ModelReport.build(name, s, {"mean_s": lat, "std_s": 0.1, "n_success": 10}, params_b=size)


SEVEN = [
    report("m-a", 50, 10, 30, 10, 2.0, 4),
    report("m-b", 60, 5, 30, 5, 3.0, 12),
    report("m-c", 40, 20, 20, 20, 1.0, 7),
    report("m-d", 55, 5, 35, 5, 4.5, 27),
    report("m-e", 45, 15, 25, 15, 0.5, 3),
    report("m-f", 30, 30, 10, 30, 6.0, 70),
    report("m-g", 58, 6, 32, 4, 2.2, None),
]


def test_emit_report_files(tmp_path):
    paths = emit_report(SEVEN, tmp_path, {"prompt_sha256": "abc"})
    assert sorted(p.name for p in paths) == sorted(REPORT_FILES)
    rows = list(csv.reader(open(tmp_path / "accuracy.csv", newline="")))
    assert len(rows) == 1 + 7
    accs = [float(r[1]) for r in rows[1:]]
    assert accs == sorted(accs, reverse=True)
    # m-b and m-d tie at 0.90; the name breaks the tie
    assert [r[0] for r in rows[1:3]] == ["m-b", "m-d"] and rows[-1][0] == "m-f"
    assert rows[-2][4] != UNDEFINED and [r for r in rows if r[0] == "m-g"][0][4] == UNDEFINED
    rates = list(csv.reader(open(tmp_path / "rates.csv", newline="")))
    assert [r[0] for r in rates[1:]] == [str(i) for i in range(1, 8)]
    assert [r[1] for r in rates[1:]] == [r[0] for r in rows[1:]]
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["provenance"]["prompt_sha256"] == "abc"
    assert [r["model"] for r in doc["reports"]] == [r[0] for r in rows[1:]]


def test_rates_recall_equals_tpr():
    rows = list(csv.reader(io.StringIO(rates_table_csv(SEVEN))))
    assert all(r[2] == r[5] for r in rows[1:])


def test_ties_break_by_name():
    a, b = report("zeta", 5, 5, 5, 5), report("alpha", 5, 5, 5, 5)
    rows = list(csv.reader(io.StringIO(accuracy_table_csv([a, b]))))
    assert [r[0] for r in rows[1:]] == ["alpha", "zeta"]


def test_svg_byte_identical(tmp_path):
    assert scatter_svg(SEVEN) == scatter_svg(list(reversed(SEVEN)))
    emit_report(SEVEN, tmp_path / "a")
    emit_report(SEVEN, tmp_path / "b")
    for name in REPORT_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_svg_is_wellformed():
    import xml.etree.ElementTree as ET

    root = ET.fromstring(scatter_svg(SEVEN).split("\n", 1)[1])
    circles = [e for e in root.iter() if e.tag.endswith("circle")]
    assert len(circles) == 7


def test_report_json_roundtrip():
    r = SEVEN[0]
    assert ModelReport.from_json(json.loads(json.dumps(r.to_json()))).to_json() == r.to_json()


def test_report_rejects_negative_std():
    with pytest.raises(ValueError):
        ModelReport("x", compute_metrics(ConfusionMatrix(1)), ConfusionMatrix(1), {}, {}, 1.0, -1.0)


def test_emit_needs_reports(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path)
