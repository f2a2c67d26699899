"""Crow-fly distances and the pairwise matrix consumed by the solver."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DuplicateNodes
from .geometry import GeoPoint, haversine_deg, haversine_np

MIN_SEPARATION_M = 0.1


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters using the mean Earth radius."""
    return haversine_deg(a.lat, a.lon, b.lat, b.lon)


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray  # (n, n) meters, index 0 is the depot

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def scaled(self, factor: float) -> "DistanceMatrix":
        return DistanceMatrix(self.d * factor)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + list(range(self.n)))
            for i, row in enumerate(self.d):
                w.writerow([i] + [repr(float(x)) for x in row])


def build_matrix(stops) -> DistanceMatrix:
    """Pairwise haversine matrix over ``[depot] + stops`` of a StopSet."""
    nodes = [stops.depot, *stops.stops]
    if len(nodes) < 2:
        raise ValueError("need at least one stop")
    lat = np.array([p.lat for p in nodes])
    lon = np.array([p.lon for p in nodes])
    d = haversine_np(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    # exact symmetry and zero diagonal regardless of float evaluation order
    d = np.triu(d, 1)
    d = d + d.T
    n = len(nodes)
    off = d.copy()
    np.fill_diagonal(off, np.inf)
    i, j = np.unravel_index(np.argmin(off), off.shape)
    if off[i, j] < MIN_SEPARATION_M:
        raise DuplicateNodes(int(min(i, j)), int(max(i, j)), float(off[i, j]))
    return DistanceMatrix(d)
