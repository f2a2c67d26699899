"""Expand a stop order into driving legs over the road graph."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import Unreachable
from .geo_ingest import RoadGraph
from .geometry import GeoPoint, haversine_np


@dataclass(frozen=True)
class Leg:
    leg_id: str
    vehicle: int
    from_stop: int
    to_stop: int
    nodes: tuple[int, ...]
    path: tuple[GeoPoint, ...]
    length: float

    @property
    def degenerate(self) -> bool:
        return len(set(self.path)) < 2

    def to_feature(self) -> dict:
        """GeoJSON LineString feature (a Point when the leg has no extent)."""
        coords = [[p.lon, p.lat] for p in self.path]
        geom = (
            {"type": "Point", "coordinates": coords[0]}
            if self.degenerate
            else {"type": "LineString", "coordinates": coords}
        )
        return {
            "type": "Feature",
            "id": self.leg_id,
            "geometry": geom,
            "properties": {
                "leg_id": self.leg_id,
                "vehicle": self.vehicle,
                "from_stop": self.from_stop,
                "to_stop": self.to_stop,
                "nodes": list(self.nodes),
                "length_m": self.length,
            },
        }

    @classmethod
    def from_feature(cls, feat: dict) -> "Leg":
        props = feat["properties"]
        geom = feat["geometry"]
        coords = [geom["coordinates"]] if geom["type"] == "Point" else geom["coordinates"]
        return cls(
            props["leg_id"],
            int(props["vehicle"]),
            int(props["from_stop"]),
            int(props["to_stop"]),
            tuple(int(n) for n in props["nodes"]),
            tuple(GeoPoint(float(c[1]), float(c[0])) for c in coords),
            float(props["length_m"]),
        )


def legs_to_geojson(legs: list[Leg]) -> str:
    return json.dumps({"type": "FeatureCollection", "features": [l.to_feature() for l in legs]})


def legs_from_geojson(text: str) -> list[Leg]:
    return [Leg.from_feature(f) for f in json.loads(text)["features"]]


class _SnapIndex:
    def __init__(self, g: RoadGraph):
        self.ids = np.array(sorted(g.nodes), dtype=np.int64)
        self.lat = np.array([g.nodes[i].lat for i in self.ids])
        self.lon = np.array([g.nodes[i].lon for i in self.ids])


def snap(g: RoadGraph, p: GeoPoint) -> int:
    """Nearest graph node by great-circle distance; ties go to the lowest id."""
    if not g.nodes:
        raise ValueError("empty graph")
    idx = getattr(g, "_snap_index", None)
    if idx is None or len(idx.ids) != len(g.nodes):
        idx = _SnapIndex(g)
        g._snap_index = idx
    d = haversine_np(p.lat, p.lon, idx.lat, idx.lon)
    return int(idx.ids[int(np.argmin(d))])


def shortest_path(g: RoadGraph, a: int, b: int) -> tuple[tuple[int, ...], float]:
    """Dijkstra over edge lengths.

    Equal-length paths are ordered by their node-id sequence and the
    lexicographically smallest wins; heap entries carry the whole path so
    the comparison is exact.
    """
    if a not in g.nodes or b not in g.nodes:
        raise KeyError(f"node {a if a not in g.nodes else b} not in graph")
    if a == b:
        return (a,), 0.0
    adj = g.adjacency
    best: dict[int, tuple[float, tuple[int, ...]]] = {a: (0.0, (a,))}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (a,))]
    done: set[int] = set()
    while heap:
        dist, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == b:
            return path, dist
        for v, w in adj[u]:
            if v in done:
                continue
            cand = (dist + w, path + (v,))
            cur = best.get(v)
            if cur is None or cand < cur:
                best[v] = cand
                heapq.heappush(heap, cand)
    raise Unreachable(f"no path from {a} to {b}")


def expand(g: RoadGraph, stops, plan, route_id: str = "r000") -> list[Leg]:
    """Driving legs for every route: depot -> first, stop -> stop, last -> depot.

    Legs are numbered consecutively across the whole plan.
    """
    points = [stops.depot, *stops.stops]
    snapped = [snap(g, p) for p in points]
    legs: list[Leg] = []
    for k, route in enumerate(plan.routes):
        seq = (0, *route, 0)
        for s, t in zip(seq, seq[1:]):
            nodes, length = shortest_path(g, snapped[s], snapped[t])
            path = tuple(g.nodes[n] for n in nodes)
            legs.append(Leg(f"{route_id}_leg{len(legs)}", k, s, t, nodes, path, length))
    return legs


def path_length(path: tuple[GeoPoint, ...]) -> float:
    if len(path) < 2:
        return 0.0
    lat = np.array([p.lat for p in path])
    lon = np.array([p.lon for p in path])
    return math.fsum(haversine_np(lat[:-1], lon[:-1], lat[1:], lon[1:]).tolist())
