"""Focus+context lens: magnification mappings, lens rendering, split screen, scale ticks.

Coordinate mappings send a displayed point inside the lens to the source
point whose data it shows. All three magnifiers fix the center; fisheye and
plateau are identity at the rim so the lens joins the context seamlessly,
while the normal magnifier occludes an annulus of context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, SchemaError
from .geometry import CIRCLE, RECTANGLE, LensGeometry, RegionRect
from .render import ChannelSet, composite, render_cell_boundaries, render_region

MAG_NONE = "none"
MAG_NORMAL = "normal"
MAG_FISHEYE = "fisheye"
MAG_PLATEAU = "plateau"
MAGNIFIERS = (MAG_NONE, MAG_NORMAL, MAG_FISHEYE, MAG_PLATEAU)

MODE_MAGNIFY = "magnify"
MODE_SINGLE = "single_channel"
MODE_MULTI = "multi_channel"
MODE_SPLIT = "split_screen"
MODE_HISTOGRAM = "histogram"
MODE_RADIAL = "radial"
MODE_CELL_TYPE = "cell_type"
MODE_SEARCH = "search"
MODES = (
    MODE_MAGNIFY,
    MODE_SINGLE,
    MODE_MULTI,
    MODE_SPLIT,
    MODE_HISTOGRAM,
    MODE_RADIAL,
    MODE_CELL_TYPE,
    MODE_SEARCH,
)

# modes whose in-lens raster uses the lens channel set (possibly magnified)
_RASTER_MODES = (MODE_MAGNIFY, MODE_SINGLE, MODE_MULTI, MODE_SPLIT)


@dataclass(frozen=True)
class LensState:
    geometry: LensGeometry
    lens_channel_set: ChannelSet
    mode: str = MODE_MULTI
    magnifier: str = MAG_NONE
    mag_factor: float = 1.0
    plateau_fraction: float = 0.75
    blend_alpha: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise SchemaError(f"mode: unknown lens mode {self.mode!r}")
        if self.magnifier not in MAGNIFIERS:
            raise SchemaError(f"magnifier: unknown magnifier {self.magnifier!r}")
        if self.mag_factor < 1.0:
            raise SchemaError(f"mag_factor: must be >= 1, got {self.mag_factor}")
        if not 0.0 < self.plateau_fraction <= 1.0:
            raise SchemaError(f"plateau_fraction: must be in (0, 1], got {self.plateau_fraction}")
        if not 0.0 <= self.blend_alpha <= 1.0:
            raise SchemaError(f"blend_alpha: must be in [0, 1], got {self.blend_alpha}")
        if self.geometry.shape == RECTANGLE and self.magnifier != MAG_NONE:
            raise SchemaError("magnifier: rectangle lenses support magnifier 'none' only")

    def to_json_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_json_dict(),
            "lens_channel_set": self.lens_channel_set.to_json_dict(),
            "mode": self.mode,
            "magnifier": self.magnifier,
            "mag_factor": self.mag_factor,
            "plateau_fraction": self.plateau_fraction,
            "blend_alpha": self.blend_alpha,
        }

    @staticmethod
    def from_json_dict(d: dict, path: str = "lens") -> "LensState":
        if not isinstance(d, dict):
            raise SchemaError(f"{path}: expected object")
        if "geometry" not in d or "lens_channel_set" not in d:
            raise SchemaError(f"{path}: geometry and lens_channel_set are required")
        kwargs = {}
        for k in ("mode", "magnifier"):
            if k in d:
                kwargs[k] = d[k]
        for k in ("mag_factor", "plateau_fraction", "blend_alpha"):
            if k in d:
                if not isinstance(d[k], (int, float)):
                    raise SchemaError(f"{path}.{k}: expected number")
                kwargs[k] = float(d[k])
        return LensState(
            geometry=LensGeometry.from_json_dict(d["geometry"]),
            lens_channel_set=ChannelSet.from_json_dict(d["lens_channel_set"], f"{path}.lens_channel_set"),
            **kwargs,
        )


def source_radius_fraction(rho, magnifier: str, mag_factor: float, plateau_fraction: float = 0.75):
    """Source radius as a fraction of the lens radius, for rho = |p - c| / R in [0, 1].

    normal:  s = rho / m everywhere (center magnification m, occluding rim)
    fisheye: s = rho / (m - (m - 1) * rho)   (magnification m at center, identity rim)
    plateau: s = rho / m up to the plateau fraction f, then linear to s(1) = 1
    """
    rho = np.asarray(rho, dtype=np.float64)
    m = float(mag_factor)
    if magnifier == MAG_NONE:
        out = rho.copy()
    elif magnifier == MAG_NORMAL:
        out = rho / m
    elif magnifier == MAG_FISHEYE:
        out = rho / (m - (m - 1.0) * rho)
    elif magnifier == MAG_PLATEAU:
        f = float(plateau_fraction)
        inner = rho / m
        if f >= 1.0:
            out = inner  # empty interpolation band degenerates to the normal magnifier
        else:
            ramp = f / m + (rho - f) / (1.0 - f) * (1.0 - f / m)
            out = np.where(rho <= f, inner, ramp)
    else:
        raise SchemaError(f"unknown magnifier {magnifier!r}")
    return out if out.ndim else float(out)


def lens_source_coord(
    p: tuple[float, float],
    geometry: LensGeometry,
    magnifier: str,
    mag_factor: float,
    plateau_fraction: float = 0.75,
) -> tuple[float, float]:
    """Source point for a displayed point inside the lens (level-0 coordinates)."""
    x, y = float(p[0]), float(p[1])
    if not bool(geometry.contains(x, y)):
        raise BoundsError(f"point ({x}, {y}) outside the lens")
    if magnifier == MAG_NONE:
        return x, y
    if geometry.shape != CIRCLE:
        raise SchemaError("distortion magnifiers are defined for circle lenses only")
    r = geometry.radius_px
    dx, dy = x - geometry.cx, y - geometry.cy
    dist = math.hypot(dx, dy)
    if dist == 0.0 or r == 0.0:
        return geometry.cx, geometry.cy
    s = source_radius_fraction(dist / r, magnifier, mag_factor, plateau_fraction) * r
    return geometry.cx + dx / dist * s, geometry.cy + dy / dist * s


def sampling_level(viewport_level: int, magnifier: str, mag_factor: float) -> int:
    """Finer pyramid level for in-lens sampling so magnified pixels keep native detail."""
    if magnifier == MAG_NONE or mag_factor <= 1.0:
        return viewport_level
    return max(0, viewport_level - math.ceil(math.log2(mag_factor)))


def _patch_bounds(lens: LensState, viewport: RegionRect) -> tuple[int, int, int, int] | None:
    scale = 1 << viewport.level
    bx0, by0, bx1, by1 = lens.geometry.bbox()
    px0 = max(int(math.floor(bx0 / scale)), viewport.x0)
    py0 = max(int(math.floor(by0 / scale)), viewport.y0)
    px1 = min(int(math.ceil(bx1 / scale)) + 1, viewport.x1)
    py1 = min(int(math.ceil(by1 / scale)) + 1, viewport.y1)
    if px0 >= px1 or py0 >= py1:
        return None
    return px0, py0, px1, py1


def _sample_lens_planes(handle, lens: LensState, viewport: RegionRect, cset: ChannelSet):
    """Sample every channel of `cset` through the lens mapping.

    Returns (planes, inside_mask, placement) where placement is the patch
    origin relative to the viewport, or None if the lens misses the viewport.
    """
    bounds = _patch_bounds(lens, viewport)
    if bounds is None:
        return None
    px0, py0, px1, py1 = bounds
    scale = 1 << viewport.level

    ys, xs = np.mgrid[py0:py1, px0:px1]
    cx0 = (xs + 0.5) * scale  # level-0 centers of displayed pixels
    cy0 = (ys + 0.5) * scale
    inside = lens.geometry.contains(cx0, cy0)

    if lens.magnifier == MAG_NONE:
        sx, sy = cx0, cy0
    else:
        g = lens.geometry
        dx, dy = cx0 - g.cx, cy0 - g.cy
        dist = np.hypot(dx, dy)
        rho = np.divide(dist, g.radius_px, out=np.zeros_like(dist), where=g.radius_px > 0)
        frac = source_radius_fraction(rho, lens.magnifier, lens.mag_factor, lens.plateau_fraction)
        s = frac * g.radius_px
        safe = dist > 0
        ux = np.divide(dx, dist, out=np.zeros_like(dx), where=safe)
        uy = np.divide(dy, dist, out=np.zeros_like(dy), where=safe)
        sx = g.cx + ux * s
        sy = g.cy + uy * s

    lvl = sampling_level(viewport.level, lens.magnifier, lens.mag_factor)
    lw, lh = handle.meta.level_size(lvl)
    ix = np.clip(np.floor(sx / (1 << lvl)).astype(np.int64), 0, lw - 1)
    iy = np.clip(np.floor(sy / (1 << lvl)).astype(np.int64), 0, lh - 1)
    # one bounding read per channel, then gather
    gx0, gx1 = int(ix.min()), int(ix.max()) + 1
    gy0, gy1 = int(iy.min()), int(iy.max()) + 1
    region = RegionRect(lvl, gx0, gy0, gx1, gy1)
    planes = []
    for setting in cset.settings:
        src = handle.read_region(setting.channel, region)
        planes.append(src[iy - gy0, ix - gx0])
    return planes, inside, (px0 - viewport.x0, py0 - viewport.y0)


def render_lens(handle, viewport: RegionRect, lens: LensState):
    """RGBA patch for the in-lens raster plus its placement in viewport pixels.

    Alpha is blend_alpha inside the lens footprint and 0 outside; callers
    blend the patch over their context render.
    """
    sampled = _sample_lens_planes(handle, lens, viewport, lens.lens_channel_set)
    if sampled is None:
        return None
    planes, inside, placement = sampled
    rgb = composite(planes, lens.lens_channel_set)
    patch = np.zeros(inside.shape + (4,), dtype=np.uint8)
    patch[..., :3] = rgb
    patch[..., 3] = np.where(inside, int(np.floor(lens.blend_alpha * 255 + 0.5)), 0)
    return patch, placement


def split_screen(handle, viewport: RegionRect, lens: LensState, context_set: ChannelSet):
    """Two juxtaposed patches over the same source region: lens set vs context set.

    Returns ((patch_a, place_a), (patch_b, place_b)); placements never overlap.
    """
    a = render_lens(handle, viewport, lens)
    if a is None:
        return None
    sampled = _sample_lens_planes(handle, lens, viewport, context_set)
    planes, inside, place_a = sampled
    rgb = composite(planes, context_set)
    patch_b = np.zeros(inside.shape + (4,), dtype=np.uint8)
    patch_b[..., :3] = rgb
    patch_b[..., 3] = np.where(inside, int(np.floor(lens.blend_alpha * 255 + 0.5)), 0)
    patch_a, _ = a
    place_b = (place_a[0] + patch_a.shape[1], place_a[1])
    return (patch_a, place_a), (patch_b, place_b)


def _blend_patch(base: np.ndarray, patch: np.ndarray, placement: tuple[int, int]):
    """Alpha-blend an RGBA patch onto an RGBA base in place, clipping to the base."""
    ph, pw = patch.shape[:2]
    bh, bw = base.shape[:2]
    x0, y0 = placement
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    w = min(pw - sx0, bw - dx0)
    h = min(ph - sy0, bh - dy0)
    if w <= 0 or h <= 0:
        return
    sub = patch[sy0 : sy0 + h, sx0 : sx0 + w]
    dst = base[dy0 : dy0 + h, dx0 : dx0 + w]
    alpha = sub[..., 3:4].astype(np.float64) / 255.0
    blended = np.floor(alpha * sub[..., :3] + (1.0 - alpha) * dst[..., :3] + 0.5)
    dst[..., :3] = blended.astype(np.uint8)


def render_viewport(
    handle,
    viewport: RegionRect,
    context_set: ChannelSet,
    lens: LensState | None = None,
    cell_types: dict[int, str] | None = None,
    type_colors: dict[str, tuple[int, int, int]] | None = None,
) -> np.ndarray:
    """Full RGBA viewport render: context composite plus the active lens, if any."""
    rgb = render_region(handle, viewport, context_set)
    out = np.empty(rgb.shape[:2] + (4,), dtype=np.uint8)
    out[..., :3] = rgb
    out[..., 3] = 255

    if lens is None:
        return out
    if lens.mode in _RASTER_MODES:
        patches = []
        if lens.mode == MODE_SPLIT:
            pair = split_screen(handle, viewport, lens, context_set)
            if pair is not None:
                patches = [pair[0], pair[1]]
        else:
            one = render_lens(handle, viewport, lens)
            if one is not None:
                patches = [one]
        for patch, placement in patches:
            _blend_patch(out, patch, placement)
    elif lens.mode == MODE_CELL_TYPE and handle.meta.has_mask:
        bounds = _patch_bounds(lens, viewport)
        if bounds is not None:
            px0, py0, px1, py1 = bounds
            mask = handle.read_mask_region(RegionRect(viewport.level, px0, py0, px1, py1))
            overlay = render_cell_boundaries(mask, cell_types or {}, type_colors or {})
            ys, xs = np.mgrid[py0:py1, px0:px1]
            scale = 1 << viewport.level
            inside = lens.geometry.contains((xs + 0.5) * scale, (ys + 0.5) * scale)
            overlay[~inside] = 0
            a = int(np.floor(lens.blend_alpha * 255 + 0.5))
            overlay[..., 3] = np.where(overlay[..., 3] > 0, a, 0)
            _blend_patch(out, overlay, (px0 - viewport.x0, py0 - viewport.y0))
    # histogram / radial / search lenses keep the context raster; their
    # overlays are chart-space, not pixel-space
    return out


def lens_scale_ticks(
    geometry: LensGeometry,
    pixel_size_um: float,
    zoom: float,
    max_ticks: int = 8,
) -> list[tuple[float, float]]:
    """Axis ticks along the lens width: (screen px from the left edge, micron label).

    Tick steps come from the 1-2-5 decade so labels are round micron values;
    `zoom` is screen pixels per level-0 pixel.
    """
    if pixel_size_um <= 0:
        raise SchemaError(f"pixel_size_um must be > 0, got {pixel_size_um}")
    if zoom <= 0:
        raise SchemaError(f"zoom must be > 0, got {zoom}")
    hw, _ = geometry.half_extents
    span_um = 2.0 * hw * pixel_size_um
    if span_um <= 0:
        return [(0.0, 0.0)]
    step = None
    for k in range(-6, 12):
        for b in (1.0, 2.0, 5.0):
            cand = b * 10.0**k
            if span_um / cand <= max_ticks:
                step = cand
                break
        if step is not None:
            break
    ticks = []
    label = 0.0
    i = 0
    while label <= span_um + 1e-9:
        ticks.append((label / pixel_size_um * zoom, label))
        i += 1
        label = i * step
    return ticks
