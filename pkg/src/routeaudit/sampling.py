"""Candidate delivery points: road densification, clustering, two-stage sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NoRoads, TooFewPoints
from .geo_ingest import FeatureClass, FeatureSet
from .geometry import GeoPoint, LocalProjection, haversine_deg

MAX_KMEANS_ITER = 100
KMEANS_TOL_M = 1.0
DEDUP_M = 0.1

# Production scale used K ~ 20,000 clusters; the desk-scale default is smaller.
DEFAULT_K = 200


def _resample(line: tuple[GeoPoint, ...], spacing: float) -> list[GeoPoint]:
    seg = [haversine_deg(a.lat, a.lon, b.lat, b.lon) for a, b in zip(line, line[1:])]
    total = math.fsum(seg)
    if total == 0.0:
        return [line[0]]
    # tolerate float round-off so an exact multiple of the spacing is not split once more
    n_int = max(1, math.ceil(total / spacing - 1e-9))
    out = [line[0]]
    cum = 0.0
    i = 0
    for k in range(1, n_int):
        target = total * k / n_int
        while i < len(seg) - 1 and cum + seg[i] < target:
            cum += seg[i]
            i += 1
        a, b = line[i], line[i + 1]
        t = 0.0 if seg[i] == 0 else (target - cum) / seg[i]
        t = min(1.0, max(0.0, t))
        out.append(GeoPoint(a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)))
    out.append(line[-1])
    return out


def densify(fs: FeatureSet, spacing: float) -> list[GeoPoint]:
    """Resample every road polyline at equal arc-length steps no longer than ``spacing``.

    Points closer than 0.1 m to an already emitted point (shared junctions,
    mostly) are skipped so downstream stops are always distinct.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    roads = [f for f in fs.features if f.cls is FeatureClass.ROAD and f.kind == "polyline"]
    if not roads:
        raise NoRoads("no road features to densify")
    proj = LocalProjection(
        (fs.extent.min_lat + fs.extent.max_lat) / 2, (fs.extent.min_lon + fs.extent.max_lon) / 2
    )
    grid: dict[tuple[int, int], list[tuple[float, float]]] = {}
    out: list[GeoPoint] = []
    for f in roads:
        for p in _resample(f.geometry, spacing):
            x, y = proj.forward(p)
            ci, cj = math.floor(x / DEDUP_M), math.floor(y / DEDUP_M)
            dup = any(
                math.hypot(x - qx, y - qy) < DEDUP_M
                for di in (-1, 0, 1)
                for dj in (-1, 0, 1)
                for qx, qy in grid.get((ci + di, cj + dj), ())
            )
            if dup:
                continue
            grid.setdefault((ci, cj), []).append((x, y))
            out.append(p)
    return out


@dataclass(frozen=True)
class Clustering:
    points: tuple[GeoPoint, ...]
    assignment: tuple[int, ...]
    k: int
    seed: int

    def members(self, c: int) -> list[int]:
        return [i for i, a in enumerate(self.assignment) if a == c]

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k)]
        for i, a in enumerate(self.assignment):
            out[a].append(i)
        return out


def _kmeans_pp_init(xy: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(xy)
    centers = [int(rng.integers(n))]
    d2 = np.sum((xy - xy[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0.0:
            # all remaining points coincide with a center; pick the lowest unused index
            used = set(centers)
            nxt = next(i for i in range(n) if i not in used)
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((xy - xy[nxt]) ** 2, axis=1))
    return xy[centers].copy()


def _repair_empty(xy: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> None:
    while True:
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if len(empty) == 0:
            return
        big = int(np.argmax(sizes))
        idx = np.flatnonzero(labels == big)
        far = idx[int(np.argmax(np.sum((xy[idx] - centers[big]) ** 2, axis=1)))]
        labels[far] = empty[0]
        centers[empty[0]] = xy[far]
        centers[big] = xy[labels == big].mean(axis=0)


def cluster_points(points: list[GeoPoint], k: int, seed: int) -> Clustering:
    """Seeded k-means (k-means++ init) on locally projected meters."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(points) < k:
        raise TooFewPoints(f"{len(points)} points for k={k}")
    proj = LocalProjection.around(points)
    xy = proj.forward_many(points)
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(xy, k, rng)
    labels = np.zeros(len(xy), dtype=np.int64)
    for _ in range(MAX_KMEANS_ITER):
        d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        _repair_empty(xy, labels, centers, k)
        new = np.array([xy[labels == c].mean(axis=0) for c in range(k)])
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < KMEANS_TOL_M:
            break
    d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    _repair_empty(xy, labels, centers, k)
    return Clustering(tuple(points), tuple(int(a) for a in labels), k, seed)


@dataclass(frozen=True)
class SampleConfig:
    m: int
    n_min: int
    n_max: int
    per_cluster_cap: int
    seed: int

    def check(self, c: Clustering) -> None:
        if not 1 <= self.m <= c.k:
            raise ValueError(f"m={self.m} outside [1, {c.k}]")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.per_cluster_cap < 1:
            raise ValueError("per_cluster_cap must be >= 1")


@dataclass(frozen=True)
class StopSet:
    depot: GeoPoint
    stops: tuple[GeoPoint, ...]
    demands: tuple[int, ...]
    capacity: int
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.demands) != len(self.stops):
            raise ValueError("one demand per stop required")
        if any(d <= 0 for d in self.demands):
            raise ValueError("demands must be positive")
        if sum(self.demands) >= self.capacity:
            raise ValueError("total demand must stay below vehicle capacity")
        if len(set(self.stops) | {self.depot}) != len(self.stops) + 1:
            raise ValueError("stops and depot must be distinct")

    def to_json(self) -> dict:
        return {
            "depot": self.depot.to_list(),
            "stops": [p.to_list() for p in self.stops],
            "demands": list(self.demands),
            "capacity": self.capacity,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StopSet":
        return cls(
            GeoPoint.from_list(doc["depot"]),
            tuple(GeoPoint.from_list(p) for p in doc["stops"]),
            tuple(int(d) for d in doc["demands"]),
            int(doc["capacity"]),
            doc.get("seed"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def two_stage_sample(c: Clustering, cfg: SampleConfig) -> StopSet:
    """Draw a depot plus ``n_min..n_max`` distinct stops.

    Stage I picks ``m`` clusters uniformly without replacement. The depot is
    then drawn from a uniformly chosen selected cluster. Stage II fixes a total
    ``n`` uniformly in the attainable range and allocates it unit by unit to
    clusters with probability proportional to remaining room (room is
    ``min(per_cluster_cap, |C_k|)``, minus the depot in its cluster), then draws
    that many members of each cluster without replacement.
    """
    cfg.check(c)
    rng = np.random.default_rng(cfg.seed)
    members = c.clusters()
    selected = [int(s) for s in rng.choice(c.k, size=cfg.m, replace=False)]

    depot_cluster = selected[int(rng.integers(cfg.m))]
    pool = {s: list(members[s]) for s in selected}
    depot_idx = pool[depot_cluster].pop(int(rng.integers(len(pool[depot_cluster]))))

    room = {s: min(cfg.per_cluster_cap, len(pool[s])) for s in selected}
    reachable = sum(room.values())
    if reachable < cfg.n_min:
        raise Infeasible(
            f"selected clusters hold at most {reachable} stops, need >= {cfg.n_min}"
        )
    n = int(rng.integers(cfg.n_min, min(cfg.n_max, reachable) + 1))

    alloc = {s: 0 for s in selected}
    for _ in range(n):
        weights = np.array([room[s] - alloc[s] for s in selected], dtype=float)
        pick = selected[int(rng.choice(len(selected), p=weights / weights.sum()))]
        alloc[pick] += 1

    stop_idx: list[int] = []
    for s in selected:
        if alloc[s]:
            chosen = rng.choice(len(pool[s]), size=alloc[s], replace=False)
            stop_idx.extend(pool[s][int(i)] for i in chosen)

    stops = tuple(c.points[i] for i in stop_idx)
    return StopSet(
        depot=c.points[depot_idx],
        stops=stops,
        demands=tuple(1 for _ in stops),
        capacity=10 * len(stops),
        seed=cfg.seed,
        meta={"clusters": selected, "depot_cluster": depot_cluster, "allocation": alloc},
    )
