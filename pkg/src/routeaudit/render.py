"""Rasterise a styled basemap with a route overlay (Web Mercator, Pillow)."""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import ResolutionOutOfRange
from .geo_ingest import BBox, Feature, FeatureClass, FeatureSet
from .geometry import EARTH_RADIUS_M, GeoPoint

MIN_RES, MAX_RES = 256, 4096
PAD_FRACTION = 0.2
MIN_SPAN_M = 150.0

DRAW_ORDER = (
    FeatureClass.WATER,
    FeatureClass.PARK_FOREST,
    FeatureClass.PEDESTRIAN,
    FeatureClass.RAILWAY,
    FeatureClass.ROAD,
)


def _rgb(hexcolor: str) -> tuple[int, int, int]:
    h = hexcolor.lstrip("#")
    return int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)


def channel_distance(a: str, b: str) -> int:
    return max(abs(x - y) for x, y in zip(_rgb(a), _rgb(b)))


@dataclass(frozen=True)
class StyleSheet:
    background: str = "#F2EFE9"
    water_fill: str = "#AAD3DF"
    water_stroke: str = "#AAD3DF"
    water_width: int = 6
    park_fill: str = "#ADD19E"
    park_stroke: str = "#ADD19E"
    park_width: int = 2
    pedestrian_fill: str = "#DDDDE8"
    pedestrian_stroke: str = "#B0B0C8"
    pedestrian_width: int = 2
    railway_color: str = "#707070"
    railway_width: int = 1
    railway_gauge_px: int = 2
    railway_tick_spacing_px: int = 6
    road_fill: str = "#FFFFFF"
    road_casing: str = "#C4C4C4"
    road_width: int = 4
    route_color: str = "#FF0000"
    route_width: int = 3
    depot_marker: str = "#1F4FD8"
    stop_marker: str = "#202020"
    marker_radius: int = 7
    label_font_size: int = 11

    def __post_init__(self):
        for name in self.basemap_colors():
            if channel_distance(self.route_color, getattr(self, name)) < 64:
                raise ValueError(f"route color too close to {name}")

    @staticmethod
    def basemap_colors() -> tuple[str, ...]:
        return (
            "background",
            "water_fill",
            "water_stroke",
            "park_fill",
            "park_stroke",
            "pedestrian_fill",
            "pedestrian_stroke",
            "railway_color",
            "road_fill",
            "road_casing",
        )

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def load(cls, path: str | Path) -> "StyleSheet":
        return cls(**json.loads(Path(path).read_text()))


def mercator(p: GeoPoint) -> tuple[float, float]:
    lat = max(-85.05112878, min(85.05112878, p.lat))
    x = EARTH_RADIUS_M * math.radians(p.lon)
    y = EARTH_RADIUS_M * math.log(math.tan(math.pi / 4 + math.radians(lat) / 2))
    return x, y


def inverse_mercator(x: float, y: float) -> GeoPoint:
    lon = math.degrees(x / EARTH_RADIUS_M)
    lat = math.degrees(2 * math.atan(math.exp(y / EARTH_RADIUS_M)) - math.pi / 2)
    return GeoPoint(lat, lon)


@dataclass(frozen=True)
class Georeference:
    """pixel (col, row) = ((x - x0) / mpp, (y0 - y) / mpp) in Web Mercator meters."""

    x0: float
    y0: float
    mpp: float
    width: int
    height: int

    def to_pixel(self, p: GeoPoint) -> tuple[float, float]:
        x, y = mercator(p)
        return (x - self.x0) / self.mpp, (self.y0 - y) / self.mpp

    def to_geo(self, col: float, row: float) -> GeoPoint:
        return inverse_mercator(self.x0 + col * self.mpp, self.y0 - row * self.mpp)

    def bbox(self) -> BBox:
        nw = self.to_geo(0, 0)
        se = self.to_geo(self.width, self.height)
        return BBox(se.lat, nw.lon, nw.lat, se.lon)

    def to_json(self) -> dict:
        return {"crs": "EPSG:3857", **asdict(self)}


@dataclass(frozen=True)
class Marker:
    label: str
    kind: str  # depot | stop | start | end
    point: GeoPoint
    pixel: tuple[float, float]


@dataclass
class RenderedImage:
    image: Image.Image
    georef: Georeference
    style_digest: str
    markers: list[Marker] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def pixels(self) -> np.ndarray:
        return np.asarray(self.image)

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.image.save(buf, format="PNG", optimize=False)
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "georeference": self.georef.to_json(),
            "style_digest": self.style_digest,
            "markers": [
                {"label": m.label, "kind": m.kind, "lat": m.point.lat, "lon": m.point.lon}
                for m in self.markers
            ],
        }

    def save(self, png_path: str | Path) -> None:
        png_path = Path(png_path)
        png_path.write_bytes(self.png_bytes())
        png_path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True))


def _viewport(points: Sequence[GeoPoint], resolution: int) -> Georeference:
    xy = [mercator(p) for p in points]
    xs = [x for x, _ in xy]
    ys = [y for _, y in xy]
    cx, cy = (min(xs) + max(xs)) / 2, (min(ys) + max(ys)) / 2
    span = max(max(xs) - min(xs), max(ys) - min(ys))
    side = max(span * (1 + 2 * PAD_FRACTION), MIN_SPAN_M)
    mpp = side / resolution
    return Georeference(cx - side / 2, cy + side / 2, mpp, resolution, resolution)


def _offset_polyline(px: list[tuple[float, float]], off: float) -> list[tuple[float, float]]:
    out = []
    for i, (x, y) in enumerate(px):
        a = px[max(0, i - 1)]
        b = px[min(len(px) - 1, i + 1)]
        dx, dy = b[0] - a[0], b[1] - a[1]
        L = math.hypot(dx, dy) or 1.0
        out.append((x - dy / L * off, y + dx / L * off))
    return out


def _draw_railway(draw: ImageDraw.ImageDraw, px: list[tuple[float, float]], style: StyleSheet):
    color = style.railway_color
    g = style.railway_gauge_px
    for side in (-g, g):
        draw.line(_offset_polyline(px, side), fill=color, width=style.railway_width)
    carry = 0.0
    for (x1, y1), (x2, y2) in zip(px, px[1:]):
        L = math.hypot(x2 - x1, y2 - y1)
        if L == 0:
            continue
        ux, uy = (x2 - x1) / L, (y2 - y1) / L
        t = style.railway_tick_spacing_px - carry
        while t <= L:
            cx, cy = x1 + ux * t, y1 + uy * t
            draw.line(
                [(cx - uy * (g + 1), cy + ux * (g + 1)), (cx + uy * (g + 1), cy - ux * (g + 1))],
                fill=color,
                width=1,
            )
            t += style.railway_tick_spacing_px
        carry = L - (t - style.railway_tick_spacing_px)


def _draw_feature(draw: ImageDraw.ImageDraw, f: Feature, gr: Georeference, style: StyleSheet, casing: bool):
    px = [gr.to_pixel(p) for p in f.geometry]
    cls = f.cls
    if cls is FeatureClass.RAILWAY:
        if f.kind == "polygon":
            draw.polygon(px, outline=style.railway_color)
        else:
            _draw_railway(draw, px, style)
        return
    if cls is FeatureClass.ROAD:
        if f.kind == "polygon":
            draw.polygon(px, fill=style.road_fill, outline=style.road_casing)
        elif casing:
            draw.line(px, fill=style.road_casing, width=style.road_width + 2, joint="curve")
        else:
            draw.line(px, fill=style.road_fill, width=style.road_width, joint="curve")
        return
    fill, stroke, width = {
        FeatureClass.WATER: (style.water_fill, style.water_stroke, style.water_width),
        FeatureClass.PARK_FOREST: (style.park_fill, style.park_stroke, style.park_width),
        FeatureClass.PEDESTRIAN: (style.pedestrian_fill, style.pedestrian_stroke, style.pedestrian_width),
    }[cls]
    if f.kind == "polygon":
        draw.polygon(px, fill=fill, outline=stroke)
    else:
        draw.line(px, fill=stroke, width=width, joint="curve")


def _basemap(fs: FeatureSet, gr: Georeference, style: StyleSheet) -> Image.Image:
    img = Image.new("RGB", (gr.width, gr.height), style.background)
    draw = ImageDraw.Draw(img)
    view = gr.bbox()
    visible = [f for f in fs.features if f.bbox.intersects(view)]
    for cls in DRAW_ORDER:
        group = [f for f in visible if f.cls is cls]
        if cls is FeatureClass.ROAD:
            for f in group:
                _draw_feature(draw, f, gr, style, casing=True)
        for f in group:
            _draw_feature(draw, f, gr, style, casing=False)
    return img


def _font(size: int):
    try:
        return ImageFont.load_default(size=size)
    except TypeError:  # Pillow < 10.1
        return ImageFont.load_default()


def _draw_marker(draw, pix, color, radius, label=None, font=None, ring=False):
    x, y = pix
    box = [x - radius, y - radius, x + radius, y + radius]
    if ring:
        draw.ellipse([x - radius - 3, y - radius - 3, x + radius + 3, y + radius + 3], outline=color, width=2)
        return
    draw.ellipse(box, fill=color, outline="#FFFFFF", width=1)
    if label is not None and font is not None:
        draw.text((x, y), label, fill="#FFFFFF", font=font, anchor="mm")


def _draw_route(draw, legs, gr: Georeference, style: StyleSheet):
    for leg in legs:
        if len(set(leg.path)) >= 2:
            draw.line([gr.to_pixel(p) for p in leg.path], fill=style.route_color, width=style.route_width, joint="curve")


def _check_resolution(resolution: int) -> None:
    if not MIN_RES <= resolution <= MAX_RES:
        raise ResolutionOutOfRange(f"resolution {resolution} outside [{MIN_RES}, {MAX_RES}]")


def render_leg(fs: FeatureSet, leg, style: StyleSheet | None = None, resolution: int = 1024) -> RenderedImage:
    """One leg in red over the basemap, with start and end markers."""
    _check_resolution(resolution)
    style = style or StyleSheet()
    gr = _viewport(list(leg.path), resolution)
    img = _basemap(fs, gr, style)
    draw = ImageDraw.Draw(img)
    _draw_route(draw, [leg], gr, style)
    markers = []
    for kind, p, color in (
        ("start", leg.path[0], style.depot_marker),
        ("end", leg.path[-1], style.stop_marker),
    ):
        pix = gr.to_pixel(p)
        _draw_marker(draw, pix, color, style.marker_radius)
        markers.append(Marker(kind, kind, p, pix))
    return RenderedImage(img, gr, style.digest(), markers)


def render_plan(fs: FeatureSet, legs, style: StyleSheet | None = None, resolution: int = 1024) -> RenderedImage:
    """Whole plan: all legs in red, a depot marker and numbered arrival markers.

    Every leg's arrival gets the next number in visit order; the closing leg
    of a route arrives back at the depot, which is drawn as a numbered ring
    around the depot marker.
    """
    _check_resolution(resolution)
    style = style or StyleSheet()
    legs = list(legs)
    if not legs:
        raise ValueError("no legs to render")
    pts = [p for leg in legs for p in leg.path]
    gr = _viewport(pts, resolution)
    img = _basemap(fs, gr, style)
    draw = ImageDraw.Draw(img)
    _draw_route(draw, legs, gr, style)
    font = _font(style.label_font_size)
    depot = legs[0].path[0]
    dpix = gr.to_pixel(depot)
    markers = [Marker("D", "depot", depot, dpix)]
    _draw_marker(draw, dpix, style.depot_marker, style.marker_radius + 1, "D", font)
    for n, leg in enumerate(legs, start=1):
        p = leg.path[-1]
        pix = gr.to_pixel(p)
        if leg.to_stop == 0:
            _draw_marker(draw, pix, style.depot_marker, style.marker_radius + 1, ring=True)
            markers.append(Marker(str(n), "depot_return", p, pix))
        else:
            _draw_marker(draw, pix, style.stop_marker, style.marker_radius, str(n), font)
            markers.append(Marker(str(n), "stop", p, pix))
    return RenderedImage(img, gr, style.digest(), markers)
