#!/usr/bin/env python
"""Independent counts for a GeoJSON extract, written to a manifest.

Deliberately shares no code with the package: its own tag rules, shapely
clipping, union-find connectivity with exact-coordinate node merging and a
brute-force resample/dedup count. The package tests compare against the
manifest this produces.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
from shapely.geometry import LineString, Polygon, box

R = 6_371_008.8


def cls_of(t: dict) -> str | None:
    if t.get("natural") == "water" or "waterway" in t:
        return "Water"
    if "railway" in t:
        return "Railway"
    if t.get("highway") in ("pedestrian", "footway") or t.get("area") == "pedestrian":
        return "Pedestrian"
    if t.get("leisure") == "park" or t.get("landuse") == "forest" or t.get("natural") == "wood":
        return "ParkForest"
    if "highway" in t:
        return "Road"
    return None


def gc(a, b):
    (lon1, lat1), (lon2, lat2) = a, b
    p1, p2 = math.radians(lat1), math.radians(lat2)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2 * R * math.asin(math.sqrt(h))


def parts(geom):
    if geom.is_empty:
        return []
    if hasattr(geom, "geoms"):
        return [g for sub in geom.geoms for g in parts(sub)]
    return [geom]


def main(src: Path, dst: Path, spacing: float = 25.0) -> None:
    doc = json.loads(src.read_text())
    w, s, e, n = doc["bbox"]
    rect = box(w, s, e, n)
    counts = {"Road": 0, "Water": 0, "Railway": 0, "Pedestrian": 0, "ParkForest": 0}
    road_lines = []
    dropped = 0
    for f in doc["features"]:
        g = f["geometry"]
        c = cls_of(f["properties"])
        if g["type"] == "LineString":
            raw = [LineString(g["coordinates"])]
        elif g["type"] == "Polygon":
            raw = [Polygon(g["coordinates"][0])]
        elif g["type"] == "MultiPolygon":
            raw = [Polygon(p[0]) for p in g["coordinates"]]
        else:
            dropped += 1
            continue
        if c is None:
            dropped += len(raw)
            continue
        for geom in raw:
            clipped = geom if rect.covers(geom) else geom.intersection(rect)
            ps = [p for p in parts(clipped) if p.geom_type == geom.geom_type]
            counts[c] += len(ps)
            if c == "Road":
                road_lines.extend(list(p.coords) for p in ps)

    # graph: exact coordinate merge, union-find, largest component
    ids: dict[tuple, int] = {}
    edges = set()
    for line in road_lines:
        seq = [ids.setdefault((round(x, 9), round(y, 9)), len(ids)) for x, y in line]
        for a, b in zip(seq, seq[1:]):
            if a != b:
                edges.add((min(a, b), max(a, b)))
    parent = list(range(len(ids)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    touched = {v for ed in edges for v in ed}
    comp: dict[int, int] = {}
    for v in touched:
        comp[find(v)] = comp.get(find(v), 0) + 1
    root = max(comp, key=lambda r: (comp[r], -min(v for v in touched if find(v) == r)))
    nodes = comp[root]
    n_edges = sum(1 for a, b in edges if find(a) == root)

    # densify: ceil(L / spacing) equal steps per way, then 0.1 m dedup
    pts = []
    for line in road_lines:
        seg = [gc(a, b) for a, b in zip(line, line[1:])]
        total = sum(seg)
        k = max(1, math.ceil(total / spacing))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        for t in range(k + 1):
            target = total * t / k
            i = min(int(np.searchsorted(cum, target, side="right")) - 1, len(seg) - 1)
            i = max(i, 0)
            u = 0.0 if seg[i] == 0 else min(1.0, max(0.0, (target - cum[i]) / seg[i]))
            (x1, y1), (x2, y2) = line[i], line[i + 1]
            pts.append((x1 + u * (x2 - x1), y1 + u * (y2 - y1)))
    lat0 = (s + n) / 2
    xy = np.array([((x - (w + e) / 2) * math.radians(1) * R * math.cos(math.radians(lat0)), (y - lat0) * math.radians(1) * R) for x, y in pts])
    keep = []
    for i in range(len(xy)):
        if keep:
            d = np.hypot(*(xy[keep] - xy[i]).T)
            if d.min() < 0.1:
                continue
        keep.append(i)

    manifest = {
        "source": src.name,
        "feature_counts": counts,
        "dropped": dropped,
        "road_graph": {"nodes": nodes, "edges": n_edges},
        "densify": {"spacing_m": spacing, "points": len(keep)},
    }
    dst.write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest, indent=2))


if __name__ == "__main__":
    here = Path(__file__).resolve().parents[1] / "src/routeaudit/data"
    src = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "blr_extract.geojson"
    dst = Path(sys.argv[2]) if len(sys.argv) > 2 else here / "blr_extract.manifest.json"
    main(src, dst)
