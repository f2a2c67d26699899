"""Coordinates, great-circle distance and a local planar projection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_008.8


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")

    def to_list(self) -> list[float]:
        return [self.lat, self.lon]

    @classmethod
    def from_list(cls, v: Sequence[float]) -> "GeoPoint":
        return cls(float(v[0]), float(v[1]))


def haversine_deg(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_np(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised great-circle distance in meters; arguments broadcast."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


class LocalProjection:
    """Equirectangular projection to meters around a fixed origin.

    Accurate to well under 0.1% over a few kilometres, which is all the
    intersection and clustering code needs.
    """

    def __init__(self, lat0: float, lon0: float):
        self.lat0 = lat0
        self.lon0 = lon0
        self._kx = math.radians(1.0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
        self._ky = math.radians(1.0) * EARTH_RADIUS_M

    @classmethod
    def around(cls, points: Iterable[GeoPoint]) -> "LocalProjection":
        pts = list(points)
        lats = [p.lat for p in pts]
        lons = [p.lon for p in pts]
        return cls((min(lats) + max(lats)) / 2, (min(lons) + max(lons)) / 2)

    def forward(self, p: GeoPoint) -> tuple[float, float]:
        return ((p.lon - self.lon0) * self._kx, (p.lat - self.lat0) * self._ky)

    def forward_many(self, points: Sequence[GeoPoint]) -> np.ndarray:
        arr = np.array([[p.lon, p.lat] for p in points], dtype=float).reshape(-1, 2)
        arr[:, 0] = (arr[:, 0] - self.lon0) * self._kx
        arr[:, 1] = (arr[:, 1] - self.lat0) * self._ky
        return arr

    def inverse(self, x: float, y: float) -> GeoPoint:
        return GeoPoint(self.lat0 + y / self._ky, self.lon0 + x / self._kx)
