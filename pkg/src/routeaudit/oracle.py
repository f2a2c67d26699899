"""Ground-truth answers to the four route questions by plain geometry."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DegenerateGeometry, MalformedAnnotation
from .geo_ingest import BBox, Feature, FeatureClass, FeatureSet
from .geometry import EARTH_RADIUS_M, GeoPoint, LocalProjection

QUESTION_CLASSES = {
    "q1": FeatureClass.WATER,
    "q2": FeatureClass.RAILWAY,
    "q3": FeatureClass.PEDESTRIAN,
    "q4": FeatureClass.PARK_FOREST,
}

DEFAULT_BUFFERS = {
    FeatureClass.WATER: 0.0,
    FeatureClass.RAILWAY: 5.0,
    FeatureClass.PEDESTRIAN: 0.0,
    FeatureClass.PARK_FOREST: 0.0,
}

XY = tuple[float, float]


@dataclass(frozen=True)
class HitResult:
    hit: bool
    locations: tuple[GeoPoint, ...] = ()

    def __bool__(self) -> bool:
        return self.hit


def _cross(o: XY, a: XY, b: XY) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p: XY, a: XY, b: XY) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segment_intersection(a: XY, b: XY, c: XY, d: XY) -> XY | None:
    """A point shared by closed segments ab and cd, or None."""
    d1, d2 = _cross(c, d, a), _cross(c, d, b)
    d3, d4 = _cross(a, b, c), _cross(a, b, d)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        t = d1 / (d1 - d2)
        return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    if d1 == 0 and _on_segment(a, c, d):
        return a
    if d2 == 0 and _on_segment(b, c, d):
        return b
    if d3 == 0 and _on_segment(c, a, b):
        return c
    if d4 == 0 and _on_segment(d, a, b):
        return d
    return None


def point_segment_distance(p: XY, a: XY, b: XY) -> tuple[float, XY]:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
    q = (ax + t * dx, ay + t * dy)
    return math.hypot(p[0] - q[0], p[1] - q[1]), q


def segment_distance(a: XY, b: XY, c: XY, d: XY) -> tuple[float, XY]:
    """Distance between closed segments and the closest point on ab."""
    x = segment_intersection(a, b, c, d)
    if x is not None:
        return 0.0, x
    best = (math.inf, a)
    for p in (a, b):
        dist, _ = point_segment_distance(p, c, d)
        if dist < best[0]:
            best = (dist, p)
    for p in (c, d):
        dist, q = point_segment_distance(p, a, b)
        if dist < best[0]:
            best = (dist, q)
    return best


def point_in_ring(p: XY, ring: Sequence[XY]) -> bool:
    """Even-odd rule; the ring is closed (first == last)."""
    x, y = p
    inside = False
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def _buffer_deg(bb: BBox, meters: float) -> BBox:
    dlat = meters / (math.radians(1) * EARTH_RADIUS_M)
    coslat = max(0.01, math.cos(math.radians(max(abs(bb.min_lat), abs(bb.max_lat)))))
    dlon = dlat / coslat
    return BBox(bb.min_lat - dlat, bb.min_lon - dlon, bb.max_lat + dlat, bb.max_lon + dlon)


def polyline_hits(path: Sequence[GeoPoint], feature: Feature, buffer: float) -> HitResult:
    """Does ``path`` touch ``feature`` dilated by ``buffer`` meters?

    Polyline features: some path segment comes within ``buffer`` of some
    feature segment. Polygon features: a path vertex lies inside the ring
    (even-odd) or some path segment comes within ``buffer`` of the boundary.
    Geometry is projected to local meters around the path's bounding-box
    centre, so reversing the path changes nothing.
    """
    if buffer < 0:
        raise ValueError("buffer must be >= 0")
    if len(path) < 2 or len(set(path)) < 2:
        raise DegenerateGeometry("path needs two distinct points")
    if not _buffer_deg(BBox.of(path), buffer + 1.0).intersects(feature.bbox):
        return HitResult(False)
    proj = LocalProjection.around(path)
    pxy = [proj.forward(p) for p in path]
    fxy = [proj.forward(p) for p in feature.geometry]
    hits: list[XY] = []
    if feature.kind == "polygon":
        for v in pxy:
            if point_in_ring(v, fxy):
                hits.append(v)
    for a, b in zip(pxy, pxy[1:]):
        if a == b:
            continue
        for c, d in zip(fxy, fxy[1:]):
            dist, q = segment_distance(a, b, c, d)
            if dist <= buffer:
                hits.append(q)
    if not hits:
        return HitResult(False)
    uniq = sorted(set(hits))
    return HitResult(True, tuple(proj.inverse(x, y) for x, y in uniq))


@dataclass(frozen=True)
class GroundTruthLabel:
    leg_id: str
    q1: bool
    q2: bool
    q3: bool
    q4: bool
    evidence: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for q in QUESTION_CLASSES:
            if getattr(self, q) and not self.evidence.get(q):
                raise ValueError(f"{self.leg_id}: positive {q} without evidence")

    @property
    def answers(self) -> tuple[bool, bool, bool, bool]:
        return (self.q1, self.q2, self.q3, self.q4)

    def to_json(self) -> dict:
        return {
            "leg_id": self.leg_id,
            "q1": self.q1,
            "q2": self.q2,
            "q3": self.q3,
            "q4": self.q4,
            "evidence": {q: list(self.evidence.get(q, ())) for q in QUESTION_CLASSES},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruthLabel":
        ev = doc.get("evidence") or {}
        return cls(
            doc["leg_id"],
            *(bool(doc[q]) for q in QUESTION_CLASSES),
            evidence={q: tuple(ev.get(q, ())) for q in QUESTION_CLASSES},
        )


def label_leg(
    leg, fs: FeatureSet, buffers: Mapping[FeatureClass, float] | None = None
) -> GroundTruthLabel:
    """Answer the four questions for one leg from the feature geometry.

    A leg whose path has a single distinct point (both stops snapped to the
    same road node) travels nowhere and is labelled all-false.
    """
    buf = dict(DEFAULT_BUFFERS)
    if buffers:
        buf.update(buffers)
    answers: dict[str, bool] = {}
    evidence: dict[str, tuple[str, ...]] = {}
    moving = len(set(leg.path)) >= 2
    for q, cls in QUESTION_CLASSES.items():
        ids = []
        if moving:
            ids = [f.id for f in fs.features if f.cls is cls and polyline_hits(leg.path, f, buf[cls])]
        answers[q] = bool(ids)
        evidence[q] = tuple(ids)
    return GroundTruthLabel(leg.leg_id, **answers, evidence=evidence)


def dump_labels(labels: Sequence[GroundTruthLabel]) -> str:
    return "".join(json.dumps(l.to_json(), sort_keys=True) + "\n" for l in labels)


def load_labels(text: str) -> dict[str, GroundTruthLabel]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            lab = GroundTruthLabel.from_json(json.loads(line))
            out[lab.leg_id] = lab
    return out


# label-studio export -------------------------------------------------------

_YES = {"yes", "true"}
_NO = {"no", "false"}


def _task_leg_id(task: dict) -> str:
    data = task.get("data") or {}
    if "leg_id" in data:
        return str(data["leg_id"])
    image = data.get("image")
    if image:
        return Path(str(image).split("?")[0]).stem
    raise MalformedAnnotation(f"task {task.get('id')}: no leg_id or image in data")


def import_annotations(path: str | Path) -> dict[str, GroundTruthLabel]:
    """Read a label-studio JSON export with one ``choices`` result per question.

    Question keys are the result ``from_name`` values ``q1``..``q4``; any other
    key, a missing answer, or a choice other than Yes/No is rejected. The
    latest annotation of each task is used. Positive answers carry the
    annotation id as evidence.
    """
    try:
        tasks = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedAnnotation(f"{path}: {exc}") from exc
    if not isinstance(tasks, list):
        raise MalformedAnnotation(f"{path}: expected a JSON array of tasks")
    out: dict[str, GroundTruthLabel] = {}
    for task in tasks:
        if not isinstance(task, dict):
            raise MalformedAnnotation("task entries must be objects")
        leg_id = _task_leg_id(task)
        anns = [a for a in task.get("annotations") or [] if not a.get("was_cancelled")]
        if not anns:
            raise MalformedAnnotation(f"{leg_id}: no annotation")
        ann = anns[-1]
        answers: dict[str, bool] = {}
        for res in ann.get("result") or []:
            key = res.get("from_name")
            if key not in QUESTION_CLASSES:
                raise MalformedAnnotation(f"{leg_id}: unknown question key {key!r}")
            choices = (res.get("value") or {}).get("choices") or []
            if len(choices) != 1:
                raise MalformedAnnotation(f"{leg_id}: {key} needs exactly one choice")
            c = str(choices[0]).strip().lower()
            if c in _YES:
                val = True
            elif c in _NO:
                val = False
            else:
                raise MalformedAnnotation(f"{leg_id}: {key} choice {choices[0]!r}")
            if key in answers and answers[key] != val:
                raise MalformedAnnotation(f"{leg_id}: conflicting answers for {key}")
            answers[key] = val
        missing = [q for q in QUESTION_CLASSES if q not in answers]
        if missing:
            raise MalformedAnnotation(f"{leg_id}: missing answers {missing}")
        tag = f"annotation:{ann.get('id', task.get('id'))}"
        evidence = {q: (tag,) if answers[q] else () for q in QUESTION_CLASSES}
        out[leg_id] = GroundTruthLabel(leg_id, **answers, evidence=evidence)
    return out
