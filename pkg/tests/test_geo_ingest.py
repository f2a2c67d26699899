from __future__ import annotations

import json
import random
from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from routeaudit.errors import EmptyExtent, MalformedFile, NoRoads
from routeaudit.geo_ingest import (
    BBox,
    FeatureClass,
    FeatureSet,
    RoadGraph,
    classify_feature,
    extract_road_graph,
    load_geojson,
)
from routeaudit.geometry import GeoPoint, haversine_deg

from conftest import line_feature, polygon_feature, write_geojson


# classification ----------------------------------------------------------------


@pytest.mark.parametrize(
    "tags, kind, expected",
    [
        ({"natural": "water"}, "polygon", FeatureClass.WATER),
        ({"waterway": "canal"}, "polyline", FeatureClass.WATER),
        ({"railway": "rail"}, "polyline", FeatureClass.RAILWAY),
        ({"railway": "platform"}, "polygon", FeatureClass.RAILWAY),
        ({"highway": "pedestrian"}, "polygon", FeatureClass.PEDESTRIAN),
        ({"highway": "footway"}, "polyline", FeatureClass.PEDESTRIAN),
        ({"area": "pedestrian"}, "polygon", FeatureClass.PEDESTRIAN),
        ({"leisure": "park"}, "polygon", FeatureClass.PARK_FOREST),
        ({"landuse": "forest"}, "polygon", FeatureClass.PARK_FOREST),
        ({"natural": "wood"}, "polygon", FeatureClass.PARK_FOREST),
        ({"highway": "residential"}, "polyline", FeatureClass.ROAD),
        ({"highway": "primary", "bridge": "yes"}, "polyline", FeatureClass.ROAD),
        ({"building": "yes"}, "polygon", None),
        ({}, "polyline", None),
        ({"natural": "tree"}, "polygon", None),
    ],
)
def test_classify(tags, kind, expected):
    assert classify_feature(tags, kind) is expected


def test_precedence_order():
    assert classify_feature({"railway": "rail", "natural": "water"}, "polygon") is FeatureClass.WATER
    assert classify_feature({"railway": "rail", "highway": "footway"}, "polyline") is FeatureClass.RAILWAY
    assert classify_feature({"highway": "footway", "leisure": "park"}, "polygon") is FeatureClass.PEDESTRIAN
    assert classify_feature({"leisure": "park", "highway": "service"}, "polygon") is FeatureClass.PARK_FOREST


tag_keys = st.sampled_from(["natural", "waterway", "railway", "highway", "area", "leisure", "landuse", "building", "name"])
tag_vals = st.sampled_from(["water", "canal", "rail", "pedestrian", "footway", "park", "forest", "wood", "yes", "residential"])


@given(st.dictionaries(tag_keys, tag_vals, max_size=5), st.sampled_from(["polyline", "polygon"]), st.randoms())
def test_classify_is_pure_and_order_free(tags, kind, rnd):
    items = list(tags.items())
    rnd.shuffle(items)
    assert classify_feature(dict(items), kind) is classify_feature(tags, kind)


# loading -----------------------------------------------------------------------


def test_single_road(tmp_path):
    p = write_geojson(tmp_path, [line_feature([[77.59, 12.97], [77.591, 12.971], [77.592, 12.971]], highway="residential")])
    fs = load_geojson(p)
    assert len(fs.features) == 1
    f = fs.features[0]
    assert f.cls is FeatureClass.ROAD and f.kind == "polyline" and len(f.geometry) == 3
    assert f.geometry[0] == GeoPoint(12.97, 77.59)


def test_empty_collection(tmp_path):
    with pytest.raises(EmptyExtent):
        load_geojson(write_geojson(tmp_path, []))


def test_only_unclassifiable(tmp_path):
    ring = [[77.59, 12.97], [77.591, 12.97], [77.591, 12.971], [77.59, 12.97]]
    with pytest.raises(EmptyExtent):
        load_geojson(write_geojson(tmp_path, [polygon_feature(ring, building="yes")]))


@pytest.mark.parametrize("content", ["not json", "[1, 2]", '{"type": "Feature"}', '{"type": "FeatureCollection", "features": 3}'])
def test_malformed(tmp_path, content):
    p = tmp_path / "bad.geojson"
    p.write_text(content)
    with pytest.raises(MalformedFile):
        load_geojson(p)


def test_missing_file(tmp_path):
    with pytest.raises(MalformedFile):
        load_geojson(tmp_path / "nope.geojson")


def test_clipping_to_collection_bbox(tmp_path):
    # road runs from inside the bbox to well outside it
    feats = [line_feature([[77.590, 12.970], [77.600, 12.970]], highway="primary")]
    p = write_geojson(tmp_path, feats, bbox=[77.589, 12.969, 77.595, 12.971])
    fs = load_geojson(p)
    (f,) = fs.features
    assert f.geometry[-1].lon == pytest.approx(77.595)
    assert all(fs.extent.contains(q) for q in f.geometry)


def test_clip_splits_into_pieces(tmp_path):
    # a U-shaped road leaving and re-entering the bbox -> two pieces
    u = [[77.590, 12.970], [77.590, 12.980], [77.594, 12.980], [77.594, 12.970]]
    p = write_geojson(tmp_path, [line_feature(u, highway="primary")], bbox=[77.589, 12.969, 77.595, 12.975])
    fs = load_geojson(p)
    assert sorted(f.id for f in fs.features) == ["f0~0", "f0~1"]


def test_multipolygon_parts_and_holes(tmp_path):
    sq = lambda x: [[x, 12.97], [x + 0.001, 12.97], [x + 0.001, 12.971], [x, 12.971], [x, 12.97]]
    hole = [[77.5902, 12.9702], [77.5905, 12.9702], [77.5905, 12.9705], [77.5902, 12.9702]]
    feat = {
        "type": "Feature",
        "id": "relation/1",
        "properties": {"leisure": "park"},
        "geometry": {"type": "MultiPolygon", "coordinates": [[sq(77.590), hole], [sq(77.595)]]},
    }
    fs = load_geojson(write_geojson(tmp_path, [feat]))
    assert [f.id for f in fs.features] == ["relation/1#0", "relation/1#1"]
    assert all(len(f.geometry) == 5 for f in fs.features)  # hole dropped


def test_reingest_is_identical(fixture_map_path):
    a, b = load_geojson(fixture_map_path), load_geojson(fixture_map_path)
    assert a == b
    assert [f.id for f in a.features] == [f.id for f in b.features]


def test_fixture_counts_match_manifest(fs, manifest):
    assert fs.counts() == manifest["feature_counts"]
    assert fs.dropped == manifest["dropped"]


def test_fixture_features_inside_extent(fs):
    for f in fs.features:
        assert all(fs.extent.contains(p, tol=1e-9) for p in f.geometry), f.id


def test_bbox_helpers():
    bb = BBox(0, 0, 1, 1)
    assert bb.contains(GeoPoint(0.5, 0.5)) and not bb.contains(GeoPoint(1.5, 0.5))
    assert bb.intersects(BBox(0.9, 0.9, 2, 2)) and not bb.intersects(BBox(1.1, 1.1, 2, 2))


# road graph -----------------------------------------------------------------------


def test_two_point_road(tmp_path):
    fs = load_geojson(write_geojson(tmp_path, [line_feature([[77.59, 12.97], [77.591, 12.97]], highway="residential")]))
    g = extract_road_graph(fs)
    assert len(g.nodes) == 2 and len(g.edges) == 1


def test_shared_endpoint_merges(tmp_path):
    feats = [
        line_feature([[77.590, 12.970], [77.591, 12.970]], highway="residential"),
        line_feature([[77.591, 12.970], [77.591, 12.971]], highway="residential"),
    ]
    g = extract_road_graph(load_geojson(write_geojson(tmp_path, feats)))
    assert len(g.nodes) == 3 and len(g.edges) == 2
    assert _components(g) == 1


def test_near_vertices_merge_but_distinct_ones_do_not(tmp_path):
    feats = [
        line_feature([[77.590, 12.970], [77.591, 12.970]], highway="residential"),
        line_feature([[77.591 + 5e-8, 12.970], [77.591, 12.971]], highway="residential"),  # ~5 mm off
        line_feature([[77.591 + 5e-6, 12.970], [77.592, 12.970]], highway="residential"),  # ~50 cm off
    ]
    g = extract_road_graph(load_geojson(write_geojson(tmp_path, feats)))
    # first two ways join; the third is its own component and loses
    assert len(g.nodes) == 3 and len(g.edges) == 2


def test_no_roads(tmp_path):
    ring = [[77.59, 12.97], [77.591, 12.97], [77.591, 12.971], [77.59, 12.97]]
    fs = load_geojson(write_geojson(tmp_path, [polygon_feature(ring, natural="water")]))
    with pytest.raises(NoRoads):
        extract_road_graph(fs)


def test_only_roads_enter_graph(tmp_path):
    feats = [
        line_feature([[77.590, 12.970], [77.591, 12.970]], highway="residential"),
        line_feature([[77.590, 12.970], [77.590, 12.971]], railway="rail"),
        line_feature([[77.591, 12.970], [77.591, 12.971]], highway="footway"),
    ]
    g = extract_road_graph(load_geojson(write_geojson(tmp_path, feats)))
    assert len(g.nodes) == 2


def _components(g: RoadGraph) -> int:
    adj = {n: set() for n in g.nodes}
    for e in g.edges:
        adj[e.a].add(e.b)
        adj[e.b].add(e.a)
    seen, comps = set(), 0
    for s in adj:
        if s in seen:
            continue
        comps += 1
        q = deque([s])
        seen.add(s)
        while q:
            u = q.popleft()
            for v in adj[u] - seen:
                seen.add(v)
                q.append(v)
    return comps


def test_fixture_graph_matches_manifest_and_is_connected(graph, manifest):
    assert len(graph.nodes) == manifest["road_graph"]["nodes"]
    assert len(graph.edges) == manifest["road_graph"]["edges"]
    assert _components(graph) == 1


def test_fixture_graph_edge_lengths(graph):
    for e in graph.edges:
        a, b = graph.nodes[e.a], graph.nodes[e.b]
        assert e.length > 0
        assert e.length == pytest.approx(haversine_deg(a.lat, a.lon, b.lat, b.lon), rel=1e-3)


def test_graph_json_roundtrip(graph):
    g2 = RoadGraph.from_json(json.loads(json.dumps(graph.to_json())))
    assert g2.nodes == graph.nodes and g2.edges == graph.edges


def test_island_is_dropped(fs, graph):
    island = next(f for f in fs.features if f.id == "way/901")
    assert not any(p in set(graph.nodes.values()) for p in island.geometry)
