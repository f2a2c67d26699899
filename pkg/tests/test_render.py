from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from routeaudit.errors import ResolutionOutOfRange
from routeaudit.geo_ingest import BBox, Feature, FeatureClass, FeatureSet
from routeaudit.geometry import GeoPoint
from routeaudit.render import StyleSheet, channel_distance, render_leg, render_plan
from routeaudit.router import Leg, expand
from routeaudit.sampling import SampleConfig, cluster_points, densify, two_stage_sample
from routeaudit.solver import Instance, solve_heuristic

from conftest import DATA

RED = np.array([255, 0, 0])


def red_mask(img) -> np.ndarray:
    return np.all(img.pixels[..., :3] == RED, axis=-1)


def straight_leg(a: GeoPoint, b: GeoPoint, leg_id="r000_leg0") -> Leg:
    return Leg(leg_id, 0, 0, 1, (0, 1), (a, b), 100.0)


A, B = GeoPoint(12.970, 77.590), GeoPoint(12.970, 77.600)
EMPTY = FeatureSet((), BBox(12.96, 77.58, 12.98, 77.61))


@pytest.fixture(scope="module")
def fixture_legs(fs, graph):
    ss = two_stage_sample(cluster_points(densify(fs, 25), 20, 3), SampleConfig(3, 10, 20, 8, 5))
    return expand(graph, ss, solve_heuristic(Instance.from_stops(ss)))


def test_empty_basemap_still_draws_route():
    img = render_leg(EMPTY, straight_leg(A, B), resolution=256)
    assert red_mask(img).sum() > 0
    assert img.width == img.height == 256


def test_route_overwrites_water():
    ring = (
        GeoPoint(12.968, 77.594),
        GeoPoint(12.968, 77.596),
        GeoPoint(12.972, 77.596),
        GeoPoint(12.972, 77.594),
        GeoPoint(12.968, 77.594),
    )
    water = Feature("w", FeatureClass.WATER, "polygon", ring, {"natural": "water"})
    fs = FeatureSet((water,), EMPTY.extent)
    img = render_leg(fs, straight_leg(A, B), resolution=512)
    col, row = img.georef.to_pixel(GeoPoint(12.970, 77.595))
    px = img.pixels[int(round(row)), int(round(col)), :3]
    assert tuple(px) == (255, 0, 0)
    # just off the line the water colour is visible
    px_off = img.pixels[int(round(row)) + 10, int(round(col)), :3]
    assert tuple(px_off) == (0xAA, 0xD3, 0xDF)


def test_render_is_deterministic(fs, fixture_legs):
    a = render_leg(fs, fixture_legs[1], resolution=384)
    b = render_leg(fs, fixture_legs[1], resolution=384)
    assert a.png_bytes() == b.png_bytes()
    assert a.sidecar() == b.sidecar()


def test_golden_leg_image(fs, fixture_legs):
    golden = json.loads((DATA / "golden_leg.json").read_text())
    leg = next(l for l in fixture_legs if l.leg_id == golden["leg_id"])
    img = render_leg(fs, leg, resolution=golden["resolution"])
    assert hashlib.sha256(img.pixels.tobytes()).hexdigest() == golden["pixels_sha256"]
    ref = np.asarray(Image.open(DATA / "golden_leg.png"))
    assert np.array_equal(ref, img.pixels)


@pytest.mark.parametrize("res", [0, 100, 255, 4097, 10_000])
def test_resolution_out_of_range(res):
    with pytest.raises(ResolutionOutOfRange):
        render_leg(EMPTY, straight_leg(A, B), resolution=res)


@pytest.mark.parametrize("res", [256, 4096])
def test_resolution_bounds_accepted(res):
    assert render_leg(EMPTY, straight_leg(A, B), resolution=res).width == res


def test_georeference_round_trip(fixture_legs):
    img = render_leg(EMPTY, fixture_legs[0], resolution=1024)
    gr = img.georef
    for leg in fixture_legs:
        for p in leg.path:
            col, row = gr.to_pixel(p)
            q = gr.to_geo(col, row)
            c2, r2 = gr.to_pixel(q)
            assert abs(c2 - col) <= 0.5 and abs(r2 - row) <= 0.5
            assert q.lat == pytest.approx(p.lat, abs=1e-9) and q.lon == pytest.approx(p.lon, abs=1e-9)


def test_leg_has_margin(fixture_legs):
    for leg in fixture_legs:
        img = render_leg(EMPTY, leg, resolution=400)
        pix = np.array([img.georef.to_pixel(p) for p in leg.path])
        margin = 0.05 * 400
        assert pix.min() >= margin and pix.max() <= 400 - margin


def test_plan_markers(fs, fixture_legs):
    # first route: depot -> 3 stops -> depot
    legs = fixture_legs[:3] + [Leg("r000_leg3", 0, fixture_legs[2].to_stop, 0, (), (fixture_legs[2].path[-1], fixture_legs[0].path[0]), 1.0)]
    img = render_plan(fs, legs, resolution=512)
    assert [m.label for m in img.markers] == ["D", "1", "2", "3", "4"]
    assert [m.kind for m in img.markers] == ["depot", "stop", "stop", "stop", "depot_return"]
    assert len(img.sidecar()["markers"]) == 5


def test_plan_needs_legs(fs):
    with pytest.raises(ValueError):
        render_plan(fs, [])


def test_leg_markers_and_sidecar(tmp_path):
    img = render_leg(EMPTY, straight_leg(A, B), resolution=256)
    assert [m.kind for m in img.markers] == ["start", "end"]
    img.save(tmp_path / "leg.png")
    side = json.loads((tmp_path / "leg.json").read_text())
    assert side["georeference"]["crs"] == "EPSG:3857"
    assert side["style_digest"] == StyleSheet().digest()
    assert Image.open(tmp_path / "leg.png").size == (256, 256)


def test_degenerate_leg_renders_markers_only():
    img = render_leg(EMPTY, Leg("x", 0, 0, 1, (0,), (A,), 0.0), resolution=256)
    assert red_mask(img).sum() == 0
    assert len(img.markers) == 2


def test_style_rejects_route_color_near_basemap():
    with pytest.raises(ValueError):
        StyleSheet(route_color="#F0EEE8")
    s = StyleSheet()
    assert all(channel_distance(s.route_color, getattr(s, n)) >= 64 for n in s.basemap_colors())


def test_style_digest_changes_with_style():
    assert StyleSheet().digest() != StyleSheet(route_width=5).digest()


def test_style_load(tmp_path):
    p = tmp_path / "style.json"
    p.write_text(json.dumps({"route_width": 4}))
    assert StyleSheet.load(p).route_width == 4
