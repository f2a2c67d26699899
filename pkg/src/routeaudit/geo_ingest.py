"""GeoJSON ingestion, tag classification and road-graph construction."""

from __future__ import annotations

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import shapely
from shapely.geometry import LineString, Polygon, box

from .errors import EmptyExtent, MalformedFile, NoRoads
from .geometry import GeoPoint, haversine_deg

log = logging.getLogger(__name__)

MERGE_TOL_DEG = 1e-7


class FeatureClass(str, enum.Enum):
    ROAD = "Road"
    WATER = "Water"
    RAILWAY = "Railway"
    PEDESTRIAN = "Pedestrian"
    PARK_FOREST = "ParkForest"


@dataclass(frozen=True)
class BBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def contains(self, p: GeoPoint, tol: float = 1e-12) -> bool:
        return (
            self.min_lat - tol <= p.lat <= self.max_lat + tol
            and self.min_lon - tol <= p.lon <= self.max_lon + tol
        )

    def intersects(self, other: "BBox") -> bool:
        return not (
            other.min_lat > self.max_lat
            or other.max_lat < self.min_lat
            or other.min_lon > self.max_lon
            or other.max_lon < self.min_lon
        )

    @classmethod
    def of(cls, points) -> "BBox":
        lats = [p.lat for p in points]
        lons = [p.lon for p in points]
        return cls(min(lats), min(lons), max(lats), max(lons))


@dataclass(frozen=True)
class Feature:
    id: str
    cls: FeatureClass
    kind: str  # "polyline" | "polygon"
    geometry: tuple[GeoPoint, ...]
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "polyline":
            if len(self.geometry) < 2:
                raise ValueError(f"{self.id}: polyline needs >= 2 points")
        elif self.kind == "polygon":
            if len(self.geometry) < 4 or self.geometry[0] != self.geometry[-1]:
                raise ValueError(f"{self.id}: polygon ring must be closed with >= 4 points")
        else:
            raise ValueError(f"unknown geometry kind {self.kind!r}")

    @property
    def bbox(self) -> BBox:
        return BBox.of(self.geometry)


@dataclass(frozen=True)
class FeatureSet:
    features: tuple[Feature, ...]
    extent: BBox
    dropped: int = 0

    def of_class(self, cls: FeatureClass) -> list[Feature]:
        return [f for f in self.features if f.cls is cls]

    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in FeatureClass}
        for f in self.features:
            out[f.cls.value] += 1
        return out


def classify_feature(tags: Mapping[str, str], geometry_kind: str) -> FeatureClass | None:
    """Map OSM-style tags to a policy class.

    Precedence Water > Railway > Pedestrian > ParkForest > Road, so a
    feature carrying several relevant tags always lands in the same class.
    ``geometry_kind`` does not change the mapping today; it is accepted so
    kind-specific rules can be added without touching callers.
    """
    t = {str(k): str(v) for k, v in tags.items()}
    if t.get("natural") == "water" or "waterway" in t:
        return FeatureClass.WATER
    if "railway" in t:
        return FeatureClass.RAILWAY
    if t.get("highway") in ("pedestrian", "footway") or t.get("area") == "pedestrian":
        return FeatureClass.PEDESTRIAN
    if t.get("leisure") == "park" or t.get("landuse") == "forest" or t.get("natural") == "wood":
        return FeatureClass.PARK_FOREST
    if "highway" in t:
        return FeatureClass.ROAD
    return None


def _coords_to_points(coords) -> tuple[GeoPoint, ...]:
    # GeoJSON positions are [lon, lat]
    return tuple(GeoPoint(float(c[1]), float(c[0])) for c in coords)


def _shapely_parts(geom) -> list:
    if geom.is_empty:
        return []
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(_shapely_parts(g))
        return out
    return [geom]


def _clip(kind: str, pts: tuple[GeoPoint, ...], ext: BBox) -> list[tuple[GeoPoint, ...]]:
    if all(ext.contains(p) for p in pts):
        return [pts]
    xy = [(p.lon, p.lat) for p in pts]
    rect = box(ext.min_lon, ext.min_lat, ext.max_lon, ext.max_lat)
    geom = LineString(xy) if kind == "polyline" else Polygon(xy)
    clipped = shapely.clip_by_rect(geom, *rect.bounds)
    out = []
    for part in _shapely_parts(clipped):
        if kind == "polyline" and isinstance(part, LineString) and len(part.coords) >= 2:
            out.append(tuple(GeoPoint(y, x) for x, y in part.coords))
        elif kind == "polygon" and isinstance(part, Polygon):
            ring = tuple(GeoPoint(y, x) for x, y in part.exterior.coords)
            if len(ring) >= 4:
                out.append(ring)
    return out


def _raw_parts(geometry: dict) -> list[tuple[str, list]]:
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "LineString":
        return [("polyline", coords)]
    if gtype == "MultiLineString":
        return [("polyline", c) for c in coords]
    if gtype == "Polygon":
        # holes are ignored: only the exterior ring is kept
        return [("polygon", coords[0])]
    if gtype == "MultiPolygon":
        return [("polygon", poly[0]) for poly in coords]
    return []


def _collection_extent(doc: dict, parts: list[tuple[str, tuple[GeoPoint, ...]]]) -> BBox:
    bb = doc.get("bbox")
    if bb is not None:
        # RFC 7946 order: west, south, east, north
        return BBox(float(bb[1]), float(bb[0]), float(bb[3]), float(bb[2]))
    return BBox.of([p for _, pts in parts for p in pts])


def load_geojson(path: str | Path) -> FeatureSet:
    """Read a FeatureCollection, classify every geometry and clip it to the extent.

    The extent is the collection's ``bbox`` member when present, otherwise the
    bounding box of all geometries. Multi-part geometries become one feature
    per part with ids suffixed ``#k``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise MalformedFile(f"{path}: not a GeoJSON FeatureCollection")
    raw = doc.get("features")
    if not isinstance(raw, list):
        raise MalformedFile(f"{path}: 'features' must be a list")

    candidates: list[tuple[str, FeatureClass, str, tuple[GeoPoint, ...], dict]] = []
    dropped = 0
    for idx, item in enumerate(raw):
        try:
            props = item.get("properties") or {}
            tags = {str(k): str(v) for k, v in props.items() if v is not None}
            fid = str(item.get("id", props.get("@id", props.get("osm_id", f"f{idx}"))))
            parts = _raw_parts(item.get("geometry") or {})
        except (AttributeError, TypeError, IndexError) as exc:
            raise MalformedFile(f"{path}: feature {idx}: {exc}") from exc
        if not parts:
            dropped += 1
            continue
        for k, (kind, coords) in enumerate(parts):
            cls = classify_feature(tags, kind)
            if cls is None:
                dropped += 1
                continue
            try:
                pts = _coords_to_points(coords)
            except (TypeError, ValueError, IndexError) as exc:
                raise MalformedFile(f"{path}: feature {fid}: bad coordinates ({exc})") from exc
            pid = fid if len(parts) == 1 else f"{fid}#{k}"
            candidates.append((pid, cls, kind, pts, tags))

    if not candidates:
        raise EmptyExtent(f"{path}: no usable features ({dropped} dropped)")
    extent = _collection_extent(doc, [(c[2], c[3]) for c in candidates])

    features: list[Feature] = []
    for pid, cls, kind, pts, tags in candidates:
        pieces = _clip(kind, pts, extent)
        for k, piece in enumerate(pieces):
            fid = pid if len(pieces) == 1 else f"{pid}~{k}"
            try:
                features.append(Feature(fid, cls, kind, piece, dict(sorted(tags.items()))))
            except ValueError:
                dropped += 1
        if not pieces:
            dropped += 1
    if not features:
        raise EmptyExtent(f"{path}: every feature fell outside the extent")
    if dropped:
        log.info("%s: dropped %d unclassifiable or empty geometries", path, dropped)
    return FeatureSet(tuple(features), extent, dropped)


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    length: float
    bidirectional: bool = True


@dataclass
class RoadGraph:
    nodes: dict[int, GeoPoint]
    edges: list[Edge]

    def __post_init__(self):
        self._adj: dict[int, list[tuple[int, float]]] | None = None

    @property
    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        if self._adj is None:
            adj: dict[int, list[tuple[int, float]]] = {n: [] for n in self.nodes}
            for e in self.edges:
                adj[e.a].append((e.b, e.length))
                if e.bidirectional:
                    adj[e.b].append((e.a, e.length))
            for lst in adj.values():
                lst.sort()
            self._adj = adj
        return self._adj

    def to_json(self) -> dict:
        return {
            "nodes": [[i, p.lat, p.lon] for i, p in sorted(self.nodes.items())],
            "edges": [[e.a, e.b, e.length, e.bidirectional] for e in self.edges],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RoadGraph":
        nodes = {int(i): GeoPoint(lat, lon) for i, lat, lon in doc["nodes"]}
        edges = [Edge(int(a), int(b), float(l), bool(bi)) for a, b, l, bi in doc["edges"]]
        return cls(nodes, edges)


class _NodeIndex:
    """Merges points closer than ``tol`` degrees (per axis) into one node id."""

    def __init__(self, tol: float):
        self.tol = tol
        self.points: list[GeoPoint] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def get(self, p: GeoPoint) -> int:
        ci, cj = round(p.lat / self.tol), round(p.lon / self.tol)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for nid in self._grid.get((ci + di, cj + dj), ()):
                    q = self.points[nid]
                    if abs(q.lat - p.lat) <= self.tol and abs(q.lon - p.lon) <= self.tol:
                        return nid
        nid = len(self.points)
        self.points.append(p)
        self._grid.setdefault((ci, cj), []).append(nid)
        return nid


def extract_road_graph(fs: FeatureSet) -> RoadGraph:
    """Build the routable graph from Road polylines, keeping the largest component.

    Node ids are dense and follow first appearance in feature order, so the
    same FeatureSet always yields the same numbering.
    """
    roads = [f for f in fs.features if f.cls is FeatureClass.ROAD and f.kind == "polyline"]
    if not roads:
        raise NoRoads("feature set has no road polylines")
    index = _NodeIndex(MERGE_TOL_DEG)
    seen: dict[tuple[int, int], float] = {}
    for f in roads:
        ids = [index.get(p) for p in f.geometry]
        for a, b in zip(ids, ids[1:]):
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            if key not in seen:
                pa, pb = index.points[key[0]], index.points[key[1]]
                seen[key] = haversine_deg(pa.lat, pa.lon, pb.lat, pb.lon)
    if not seen:
        raise NoRoads("road polylines have no non-degenerate segments")

    adj: dict[int, list[int]] = {}
    for a, b in seen:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    best: list[int] = []
    visited: set[int] = set()
    for start in sorted(adj):
        if start in visited:
            continue
        comp = [start]
        visited.add(start)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in visited:
                    visited.add(v)
                    comp.append(v)
                    queue.append(v)
        if len(comp) > len(best):
            best = comp
    keep = sorted(best)
    remap = {old: new for new, old in enumerate(keep)}
    nodes = {remap[o]: index.points[o] for o in keep}
    edges = [
        Edge(remap[a], remap[b], length)
        for (a, b), length in sorted(seen.items())
        if a in remap and b in remap
    ]
    edges.sort(key=lambda e: (e.a, e.b))
    return RoadGraph(nodes, edges)
