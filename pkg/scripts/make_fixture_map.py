#!/usr/bin/env python
"""Generate the bundled blr_extract.geojson fixture (synthetic, seeded).

A ~2.4 km square around central Bengaluru with a jittered street grid, a
lake with one bridge, a storm-water canal, a railway with level crossings,
parks, a forest patch, pedestrian plazas and footways, buildings (which the
ingester drops) and a small disconnected road island.
"""

from __future__ import annotations

import json
import math
import random
import sys
from pathlib import Path

LAT0, LON0 = 12.9716, 77.5946
M_LAT = 1 / 111_195.0
M_LON = 1 / (111_195.0 * math.cos(math.radians(LAT0)))
N = 13  # grid lines per axis
STEP = 200.0  # meters


def ll(x: float, y: float) -> list[float]:
    """Local meters -> [lon, lat], rounded to 1e-6 degrees."""
    return [round(LON0 + x * M_LON, 6), round(LAT0 + y * M_LAT, 6)]


def ring(cx, cy, rx, ry, n, rng, wobble=0.12, rot=0.0):
    pts = []
    for i in range(n):
        a = 2 * math.pi * i / n
        r = 1 + rng.uniform(-wobble, wobble)
        x, y = rx * r * math.cos(a), ry * r * math.sin(a)
        xr = x * math.cos(rot) - y * math.sin(rot)
        yr = x * math.sin(rot) + y * math.cos(rot)
        pts.append(ll(cx + xr, cy + yr))
    pts.append(pts[0])
    return pts


def feat(fid, props, gtype, coords):
    return {"type": "Feature", "id": fid, "properties": props, "geometry": {"type": gtype, "coordinates": coords}}


def point_in(pt, poly_xy):
    x, y = pt
    inside = False
    for (x1, y1), (x2, y2) in zip(poly_xy, poly_xy[1:]):
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


def main(out: Path) -> None:
    rng = random.Random(20250917)
    half = (N - 1) * STEP / 2
    grid = {}
    for i in range(N):
        for j in range(N):
            jx = rng.uniform(-18, 18) if 0 < i < N - 1 else 0.0
            jy = rng.uniform(-18, 18) if 0 < j < N - 1 else 0.0
            grid[i, j] = (-half + i * STEP + jx, -half + j * STEP + jy)

    lake_c = (-half + 2.5 * STEP, -half + 9.5 * STEP)
    lake_rx, lake_ry = 260.0, 170.0

    def in_lake(p):
        return ((p[0] - lake_c[0]) / (lake_rx * 0.95)) ** 2 + ((p[1] - lake_c[1]) / (lake_ry * 0.95)) ** 2 < 1

    feats = []
    levels = ["residential", "residential", "residential", "tertiary", "secondary", "unclassified"]
    bridge_row = 9  # E-W street allowed to cross the lake
    seg_id = 0
    # streets as block-length ways with one jittered interior vertex
    for direction in ("ew", "ns"):
        for a in range(N):
            kind = "primary" if a in (3, 9) else rng.choice(levels)
            for b in range(N - 1):
                p, q = (grid[b, a], grid[b + 1, a]) if direction == "ew" else (grid[a, b], grid[a, b + 1])
                mid = ((p[0] + q[0]) / 2 + rng.uniform(-6, 6), (p[1] + q[1]) / 2 + rng.uniform(-6, 6))
                wet = in_lake(p) or in_lake(q) or in_lake(mid)
                if wet and not (direction == "ew" and a == bridge_row):
                    continue
                if not wet and rng.random() < 0.07:
                    continue  # missing links keep the grid irregular
                seg_id += 1
                props = {"highway": kind, "name": f"{direction.upper()} {a} Cross"}
                if wet:
                    props["bridge"] = "yes"
                feats.append(feat(f"way/{1000 + seg_id}", props, "LineString", [ll(*p), ll(*mid), ll(*q)]))

    # diagonal arterial joining two grid corners, no junctions in between (flyover)
    d0, d1 = grid[6, 0], grid[12, 6]
    diag = [ll(d0[0] + (d1[0] - d0[0]) * t / 8, d0[1] + (d1[1] - d0[1]) * t / 8) for t in range(9)]
    feats.append(feat("way/900", {"highway": "trunk", "name": "Old Airport Road", "layer": "1"}, "LineString", diag))

    # disconnected road island outside the grid's reach
    isl = [(half + 60, -half + 40), (half + 120, -half + 40), (half + 120, -half + 110)]
    feats.append(feat("way/901", {"highway": "service"}, "LineString", [ll(*p) for p in isl]))

    # lake
    feats.append(feat("way/2001", {"natural": "water", "name": "Ulsoor-like Lake"}, "Polygon", [ring(*lake_c, lake_rx, lake_ry, 28, rng, 0.06)]))
    # canal meandering SW -> NE
    canal = []
    for t in range(41):
        s = t / 40
        x = -half - 100 + (2 * half + 200) * s
        y = -half * 0.2 + 600 * s - 350 + 120 * math.sin(s * 7)
        canal.append(ll(x, y))
    feats.append(feat("way/2002", {"waterway": "canal", "name": "Storm Drain"}, "LineString", canal))
    # small pond polygon with a building tag too: precedence puts it in Water
    feats.append(feat("way/2003", {"natural": "water", "building": "no"}, "Polygon", [ring(half - 300, half - 250, 60, 45, 14, rng)]))

    # railway running slightly off E-W, extends past the collection bbox
    rail = []
    for t in range(31):
        s = t / 30
        x = -half - 300 + (2 * half + 600) * s
        y = -half + 4.5 * STEP + 140 * s + 25 * math.sin(s * 5)
        rail.append(ll(x, y))
    feats.append(feat("way/3001", {"railway": "rail", "name": "Bangalore-Chennai line"}, "LineString", rail))
    feats.append(feat("way/3002", {"railway": "platform"}, "Polygon", [ring(-half + 6.5 * STEP, -half + 4.5 * STEP + 85, 70, 10, 10, rng, 0.02, 0.05)]))

    # parks: one large central park crossed by streets, a two-part MultiPolygon, a forest
    parks = [
        ("way/4001", {"leisure": "park", "name": "Cubbon-like Park"}, (-half + 7.5 * STEP, -half + 8.0 * STEP, 300, 230)),
        ("way/4002", {"leisure": "park"}, (-half + 10.4 * STEP, -half + 2.4 * STEP, 110, 90)),
        ("way/4003", {"landuse": "forest"}, (-half + 1.5 * STEP, -half + 1.5 * STEP, 150, 120)),
        ("way/4004", {"natural": "wood"}, (-half + 4.6 * STEP, -half + 11.3 * STEP, 90, 60)),
    ]
    for fid, props, (cx, cy, rx, ry) in parks:
        feats.append(feat(fid, props, "Polygon", [ring(cx, cy, rx, ry, 22, rng)]))
    mp = [[ring(-half + 8.6 * STEP, -half + 0.6 * STEP, 80, 60, 12, rng)], [ring(-half + 11.5 * STEP, -half + 6.5 * STEP, 70, 70, 12, rng)]]
    feats.append(feat("relation/4100", {"leisure": "park", "name": "Twin Gardens"}, "MultiPolygon", mp))

    # pedestrian plazas over junctions and footways inside the big park
    for k, (i, j) in enumerate([(5, 5), (8, 3), (3, 7), (10, 10)]):
        cx, cy = grid[i, j]
        feats.append(feat(f"way/{5001 + k}", {"highway": "pedestrian", "area": "yes"}, "Polygon", [ring(cx + 20, cy - 15, 45, 35, 10, rng)]))
    feats.append(feat("way/5010", {"area": "pedestrian", "name": "Church Street-like"}, "Polygon", [ring(-half + 6.5 * STEP, -half + 6.0 * STEP, 90, 25, 12, rng, 0.05)]))
    pc = (-half + 7.5 * STEP, -half + 8.0 * STEP)
    for k in range(3):
        a = k * math.pi / 3
        foot = [ll(pc[0] - 220 * math.cos(a), pc[1] - 160 * math.sin(a)), ll(pc[0], pc[1] + 8), ll(pc[0] + 220 * math.cos(a), pc[1] + 160 * math.sin(a))]
        feats.append(feat(f"way/{5020 + k}", {"highway": "footway"}, "LineString", foot))

    # buildings and a POI: unclassified, dropped by the ingester
    for k in range(40):
        i, j = rng.randrange(N - 1), rng.randrange(N - 1)
        cx = (grid[i, j][0] + grid[i + 1, j][0]) / 2 + rng.uniform(-40, 40)
        cy = (grid[i, j][1] + grid[i, j + 1][1]) / 2 + rng.uniform(-40, 40)
        sq = [ll(cx - 12, cy - 9), ll(cx + 12, cy - 9), ll(cx + 12, cy + 9), ll(cx - 12, cy + 9), ll(cx - 12, cy - 9)]
        feats.append(feat(f"way/{7000 + k}", {"building": "yes"}, "Polygon", [sq]))
    feats.append(feat("node/8000", {"amenity": "cafe"}, "Point", ll(0, 0)))

    west, south = ll(-half - 150, -half - 150)
    east, north = ll(half + 150, half + 150)
    doc = {"type": "FeatureCollection", "bbox": [west, south, east, north], "features": feats}
    out.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    print(f"wrote {len(feats)} features to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/routeaudit/data/blr_extract.geojson")
