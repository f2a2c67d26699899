"""Confusion counts, detection metrics and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import MissingLabel

KEYS = ("q1", "q2", "q3", "q4")
UNDEFINED = "—"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    def add(self, predicted: bool, actual: bool) -> "ConfusionMatrix":
        if predicted and actual:
            return ConfusionMatrix(self.tp + 1, self.fp, self.tn, self.fn)
        if predicted:
            return ConfusionMatrix(self.tp, self.fp + 1, self.tn, self.fn)
        if actual:
            return ConfusionMatrix(self.tp, self.fp, self.tn, self.fn + 1)
        return ConfusionMatrix(self.tp, self.fp, self.tn + 1, self.fn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class Metrics:
    accuracy: float | None
    tpr: float | None
    fpr: float | None
    precision: float | None

    @property
    def recall(self) -> float | None:
        return self.tpr

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "precision": self.precision,
            "recall": self.recall,
        }


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    """Rates from counts; a zero denominator gives None (undefined), never 0."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    return Metrics(
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        tpr=_ratio(cm.tp, cm.tp + cm.fn),
        fpr=_ratio(cm.fp, cm.fp + cm.tn),
        precision=_ratio(cm.tp, cm.tp + cm.fp),
    )


@dataclass(frozen=True)
class Score:
    micro: ConfusionMatrix
    per_question: dict[str, ConfusionMatrix]
    scored_legs: int
    unanswered: int
    excluded: int


def score(
    verdicts: Mapping[str, object] | Sequence,
    labels: Mapping[str, object],
    unanswered: str = "negative",
) -> Score:
    """Pool every (leg, question) pair; "problem present" is the positive class.

    ``verdicts`` maps leg id to a Verdict, or to None for a leg the model left
    unanswered (a sequence of Verdicts is also accepted). Unanswered legs count
    as all-"no" predictions with ``unanswered="negative"`` or are left out with
    ``unanswered="exclude"``.
    """
    if unanswered not in ("negative", "exclude"):
        raise ValueError("unanswered must be 'negative' or 'exclude'")
    if not isinstance(verdicts, Mapping):
        verdicts = {v.leg_id: v for v in verdicts}
    per_q = {k: ConfusionMatrix() for k in KEYS}
    n_unans = n_excl = n_scored = 0
    for leg_id, v in verdicts.items():
        lab = labels.get(leg_id)
        if lab is None:
            raise MissingLabel(leg_id)
        if v is None:
            n_unans += 1
            if unanswered == "exclude":
                n_excl += 1
                continue
            pred = (False, False, False, False)
        else:
            pred = v.answers
        n_scored += 1
        for k, p, a in zip(KEYS, pred, lab.answers):
            per_q[k] = per_q[k].add(bool(p), bool(a))
    micro = ConfusionMatrix()
    for k in KEYS:
        micro = micro + per_q[k]
    return Score(micro, per_q, n_scored, n_unans, n_excl)


def accuracy_by_scan(verdicts: Mapping[str, object], labels: Mapping[str, object]) -> float:
    """Accuracy as the share of (leg, question) pairs where prediction equals label."""
    same = total = 0
    for leg_id, v in verdicts.items():
        pred = v.answers if v is not None else (False,) * 4
        for p, a in zip(pred, labels[leg_id].answers):
            total += 1
            same += p == a
    return same / total


@dataclass
class ModelReport:
    model: str
    micro: Metrics
    micro_counts: ConfusionMatrix
    per_question: dict[str, Metrics]
    per_question_counts: dict[str, ConfusionMatrix]
    latency_mean_s: float | None
    latency_std_s: float | None
    params_b: float | None = None
    parse_failures: int = 0
    unanswered: int = 0
    n_success: int = 0
    n_failure: int = 0
    sources: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.latency_std_s is not None and self.latency_std_s < 0:
            raise ValueError("latency std must be >= 0")

    @classmethod
    def build(cls, model: str, s: Score, latency: Mapping, **kw) -> "ModelReport":
        return cls(
            model=model,
            micro=compute_metrics(s.micro),
            micro_counts=s.micro,
            per_question={k: compute_metrics(c) for k, c in s.per_question.items() if c.total},
            per_question_counts=dict(s.per_question),
            latency_mean_s=latency.get("mean_s"),
            latency_std_s=latency.get("std_s"),
            unanswered=s.unanswered,
            n_success=latency.get("n_success", 0),
            n_failure=latency.get("n_failure", 0),
            **kw,
        )

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "params_b": self.params_b,
            "micro": self.micro.to_json(),
            "micro_counts": asdict(self.micro_counts),
            "per_question": {k: m.to_json() for k, m in self.per_question.items()},
            "per_question_counts": {k: asdict(c) for k, c in self.per_question_counts.items()},
            "latency_mean_s": self.latency_mean_s,
            "latency_std_s": self.latency_std_s,
            "parse_failures": self.parse_failures,
            "unanswered": self.unanswered,
            "n_success": self.n_success,
            "n_failure": self.n_failure,
            "sources": dict(sorted(self.sources.items())),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "ModelReport":
        def metrics(m):
            return Metrics(m["accuracy"], m["tpr"], m["fpr"], m["precision"])

        return cls(
            model=d["model"],
            micro=metrics(d["micro"]),
            micro_counts=ConfusionMatrix(**d["micro_counts"]),
            per_question={k: metrics(m) for k, m in d["per_question"].items()},
            per_question_counts={k: ConfusionMatrix(**c) for k, c in d["per_question_counts"].items()},
            latency_mean_s=d["latency_mean_s"],
            latency_std_s=d["latency_std_s"],
            params_b=d.get("params_b"),
            parse_failures=d.get("parse_failures", 0),
            unanswered=d.get("unanswered", 0),
            n_success=d.get("n_success", 0),
            n_failure=d.get("n_failure", 0),
            sources=dict(d.get("sources", {})),
        )


def fmt(x: float | None, digits: int = 2) -> str:
    return UNDEFINED if x is None else f"{x:.{digits}f}"


def _sorted_reports(reports: Sequence[ModelReport]) -> list[ModelReport]:
    return sorted(
        reports,
        key=lambda r: (-(r.micro.accuracy if r.micro.accuracy is not None else -1.0), r.model),
    )


def accuracy_table_csv(reports: Sequence[ModelReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["Model Name", "Accuracy", "Average Inference Time (s) mean", "Average Inference Time (s) std", "Model Size (Billion)"])
    for r in _sorted_reports(reports):
        size = UNDEFINED if r.params_b is None else f"{r.params_b:g}"
        w.writerow([r.model, fmt(r.micro.accuracy), fmt(r.latency_mean_s), fmt(r.latency_std_s), size])
    return buf.getvalue()


def rates_table_csv(reports: Sequence[ModelReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["Sr. No.", "Model Name", "TPR", "FPR", "Precision", "Recall"])
    for i, r in enumerate(_sorted_reports(reports), start=1):
        m = r.micro
        w.writerow([i, r.model, fmt(m.tpr), fmt(m.fpr), fmt(m.precision), fmt(m.recall)])
    return buf.getvalue()


def per_question_csv(reports: Sequence[ModelReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["Model Name", "Question", "TP", "FP", "TN", "FN", "Accuracy", "TPR", "FPR", "Precision", "Recall"])
    for r in _sorted_reports(reports):
        for k in KEYS:
            c = r.per_question_counts.get(k, ConfusionMatrix())
            m = r.per_question.get(k) or Metrics(None, None, None, None)
            w.writerow([r.model, k, c.tp, c.fp, c.tn, c.fn, fmt(m.accuracy), fmt(m.tpr), fmt(m.fpr), fmt(m.precision), fmt(m.recall)])
    return buf.getvalue()


def metrics_csv(s: Score, digits: int = 6) -> str:
    """Counts and metrics for the pooled matrix and each question, one row each."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["Scope", "TP", "FP", "TN", "FN", "Accuracy", "TPR", "FPR", "Precision", "Recall"])
    rows = [("micro", s.micro)] + [(k, s.per_question[k]) for k in KEYS]
    for name, c in rows:
        m = compute_metrics(c) if c.total else Metrics(None, None, None, None)
        w.writerow([name, c.tp, c.fp, c.tn, c.fn, *(fmt(v, digits) for v in (m.accuracy, m.tpr, m.fpr, m.precision, m.recall))])
    return buf.getvalue()


def _svg_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def scatter_svg(reports: Sequence[ModelReport], width: int = 640, height: int = 420) -> str:
    """Accuracy against mean latency; circle area grows with parameter count."""
    ml, mr, mt, mb = 60, 20, 30, 50
    pts = [r for r in _sorted_reports(reports) if r.micro.accuracy is not None]
    lat = [r.latency_mean_s or 0.0 for r in pts]
    xmax = max(lat + [1e-9]) * 1.1
    sizes = [r.params_b for r in pts if r.params_b]
    smax = max(sizes) if sizes else 1.0

    def sx(v: float) -> float:
        return ml + (width - ml - mr) * v / xmax

    def sy(v: float) -> float:
        return height - mb - (height - mt - mb) * v

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="#000000"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="#000000"/>',
        f'<text x="{(width + ml - mr) / 2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">Mean inference time (s)</text>',
        f'<text x="14" y="{(height - mb + mt) / 2:.1f}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {(height - mb + mt) / 2:.1f})">Accuracy</text>',
    ]
    for i in range(6):
        v = i / 5
        out.append(f'<line x1="{ml - 4}" y1="{sy(v):.2f}" x2="{ml}" y2="{sy(v):.2f}" stroke="#000000"/>')
        out.append(f'<text x="{ml - 6}" y="{sy(v) + 4:.2f}" font-size="10" text-anchor="end">{v:.1f}</text>')
    for i in range(6):
        v = xmax * i / 5
        out.append(f'<line x1="{sx(v):.2f}" y1="{height - mb}" x2="{sx(v):.2f}" y2="{height - mb + 4}" stroke="#000000"/>')
        out.append(f'<text x="{sx(v):.2f}" y="{height - mb + 16}" font-size="10" text-anchor="middle">{v:.3g}</text>')
    for r, x in zip(pts, lat):
        radius = 4 + 16 * math.sqrt((r.params_b or 0) / smax) if r.params_b else 4
        out.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(r.micro.accuracy):.2f}" r="{radius:.2f}" '
            f'fill="#1f77b4" fill-opacity="0.6" stroke="#1f77b4"/>'
        )
        out.append(
            f'<text x="{sx(x) + radius + 3:.2f}" y="{sy(r.micro.accuracy) + 4:.2f}" font-size="11">{_svg_escape(r.model)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


REPORT_FILES = ("accuracy.csv", "rates.csv", "accuracy_vs_latency.svg", "per_question.csv", "report.json")


def emit_report(reports: Sequence[ModelReport], out_dir: str | Path, provenance: Mapping | None = None) -> list[Path]:
    """Write the accuracy/latency CSV, the detection-rate CSV, the scatter SVG
    and a JSON bundle with provenance digests.

    A per-question breakdown CSV is written alongside.
    """
    if not reports:
        raise ValueError("need at least one report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "accuracy.csv": accuracy_table_csv(reports),
        "rates.csv": rates_table_csv(reports),
        "accuracy_vs_latency.svg": scatter_svg(reports),
        "per_question.csv": per_question_csv(reports),
        "report.json": json.dumps(
            {
                "provenance": dict(provenance or {}),
                "reports": [r.to_json() for r in _sorted_reports(reports)],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    }
    paths = []
    for name, text in files.items():
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(p)
    return paths
