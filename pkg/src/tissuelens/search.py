"""Spatial histogram similarity search.

Pipeline: quantize each channel against its active render range, build an
integral histogram, compare every pixel's neighborhood histogram (the lens
bounding rectangle) to the exact-shape lens histogram with the chi-square
distance, average across channels, and map distances to a [0, 1] similarity.

Histograms are normalized to unit mass before comparison, so the per-channel
chi-square is bounded by 2 (disjoint distributions) and similarity is
1 - d/2. Pixels whose window would leave the plane are flagged invalid, not
clamped, to avoid biased distributions at the borders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contours import ContourSet, contours_of_field
from .errors import BoundsError, SchemaError
from .geometry import CIRCLE, LensGeometry, RegionRect
from .render import ChannelRenderSetting

DEFAULT_BINS = 32
DEFAULT_THRESHOLD = 0.8

# rows per strip in the vectorized distance pass; bounds peak memory without
# changing per-pixel arithmetic
_ROW_CHUNK = 256


def quantize(plane: np.ndarray, setting: ChannelRenderSetting, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Bin raw intensities against the channel's render range: floor((v-lo)/(hi-lo)*B)."""
    if bins < 2 or bins > 256:
        raise SchemaError(f"bins must be in 2..256, got {bins}")
    lo, hi = setting.range_lo, setting.range_hi
    q = (plane.astype(np.int64) - lo) * bins // (hi - lo)
    return np.clip(q, 0, bins - 1).astype(np.uint8)


def build_integral(q: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Integral histogram I[b, y, x] = count of bin-b pixels in [0, y) x [0, x).

    Stored bin-major for cache-friendly cumulative sums; I[:, 0, :] and
    I[:, :, 0] are zero and I[:, H, W] sums to H*W.
    """
    if q.size == 0:
        raise SchemaError("empty plane")
    h, w = q.shape
    out = np.zeros((bins, h + 1, w + 1), dtype=np.int32)
    for b in range(bins):
        view = out[b, 1:, 1:]
        np.cumsum(q == b, axis=0, out=view)
        np.cumsum(view, axis=1, out=view)
    return out


def window_histogram(integral: np.ndarray, rect: tuple[int, int, int, int]) -> np.ndarray:
    """Histogram of the half-open rect (x0, y0, x1, y1) via four integral corners."""
    x0, y0, x1, y1 = rect
    _, h1, w1 = integral.shape
    if not (0 <= x0 < x1 <= w1 - 1 and 0 <= y0 < y1 <= h1 - 1):
        raise BoundsError(f"rect {rect} outside plane {w1 - 1}x{h1 - 1}")
    return (
        integral[:, y1, x1]
        - integral[:, y0, x1]
        - integral[:, y1, x0]
        + integral[:, y0, x0]
    ).astype(np.int64)


def lens_histogram(q: np.ndarray, geometry: LensGeometry, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Exact-shape histogram of the lens area, clipped to the plane.

    Pixel (x, y) belongs to a circle lens iff its distance to the center is
    <= r; rectangle lenses reduce to the integer bounding window.
    """
    h, w = q.shape
    if geometry.shape == CIRCLE:
        bx0, by0, bx1, by1 = geometry.bbox()
        x0, y0 = max(0, int(math.floor(bx0))), max(0, int(math.floor(by0)))
        x1, y1 = min(w, int(math.ceil(bx1)) + 1), min(h, int(math.ceil(by1)) + 1)
        if x0 >= x1 or y0 >= y1:
            raise BoundsError("lens does not intersect the plane")
        ys, xs = np.mgrid[y0:y1, x0:x1]
        inside = geometry.contains(xs, ys)
        return np.bincount(q[y0:y1, x0:x1][inside].ravel(), minlength=bins).astype(np.int64)
    x0, y0, x1, y1 = _window_rect(geometry, w, h, clip=True)
    if x0 >= x1 or y0 >= y1:
        raise BoundsError("lens does not intersect the plane")
    return np.bincount(q[y0:y1, x0:x1].ravel(), minlength=bins).astype(np.int64)


def _window_half(geometry: LensGeometry) -> tuple[int, int]:
    hw, hh = geometry.half_extents
    return int(round(hw)), int(round(hh))


def _window_rect(geometry: LensGeometry, w: int, h: int, clip: bool) -> tuple[int, int, int, int]:
    hx, hy = _window_half(geometry)
    cx, cy = int(round(geometry.cx)), int(round(geometry.cy))
    x0, y0, x1, y1 = cx - hx, cy - hy, cx + hx + 1, cy + hy + 1
    if clip:
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(w, x1), min(h, y1)
    return x0, y0, x1, y1


def chi_square(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of (x_i - y_i)^2 / (x_i + y_i), skipping bins with no mass."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise SchemaError(f"histogram shapes differ: {x.shape} vs {y.shape}")
    den = x + y
    num = (x - y) ** 2
    nz = den > 0
    return float(np.sum(num[nz] / den[nz]))


def normalized(counts: np.ndarray) -> np.ndarray:
    """Counts scaled to unit mass."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise SchemaError("cannot normalize an empty histogram")
    return counts / total


@dataclass
class SimilarityMap:
    """Per-pixel similarity in [0, 1]; border pixels with truncated windows are invalid."""

    values: np.ndarray  # float64, NaN where invalid
    valid: np.ndarray  # bool
    channel_count: int
    window_half: tuple[int, int]

    @property
    def shape(self):
        return self.values.shape


def _accumulate_channel_distance(
    d: np.ndarray, integral: np.ndarray, lens_hist: np.ndarray, hx: int, hy: int
):
    """Add one channel's chi-square field (valid interior only) onto ``d``."""
    bins = integral.shape[0]
    h, w = integral.shape[1] - 1, integral.shape[2] - 1
    sx, sy = 2 * hx + 1, 2 * hy + 1
    if sy > h or sx > w:
        return  # no pixel has a complete window
    narea = float(sx * sy)
    x = normalized(lens_hist)
    hv, wv = h - 2 * hy, w - 2 * hx
    view = d[hy : hy + hv, hx : hx + wv]
    for y0 in range(0, hv, _ROW_CHUNK):
        y1 = min(y0 + _ROW_CHUNK, hv)
        acc = np.zeros((y1 - y0, wv), dtype=np.float64)
        for b in range(bins):
            ib = integral[b]
            wb = (
                ib[y0 + sy : y1 + sy, sx:]
                - ib[y0 : y1, sx:]
                - ib[y0 + sy : y1 + sy, :-sx]
                + ib[y0 : y1, :-sx]
            ).astype(np.float64)
            wb /= narea
            den = wb + x[b]
            num = wb - x[b]
            np.square(num, out=num)
            nz = den > 0
            np.divide(num, den, out=num, where=nz)
            num[~nz] = 0.0
            acc += num
        view[y0:y1] += acc


def similarity_map(
    planes: list[np.ndarray],
    geometry: LensGeometry,
    bins: int = DEFAULT_BINS,
    lens_histograms: list[np.ndarray] | None = None,
) -> SimilarityMap:
    """Combined similarity field over quantized planes.

    `geometry` is expressed in the planes' own pixel coordinates. When
    `lens_histograms` is given (whole-image tiling), the lens side is not
    recomputed from these planes.
    """
    if not planes:
        raise SchemaError("at least one channel plane required")
    shape = planes[0].shape
    for p in planes:
        if p.shape != shape:
            raise SchemaError(f"plane shape {p.shape} != {shape}")
    h, w = shape
    hx, hy = _window_half(geometry)
    if lens_histograms is None:
        lens_histograms = [lens_histogram(q, geometry, bins) for q in planes]
    d = np.zeros(shape, dtype=np.float64)
    for q, lh in zip(planes, lens_histograms):
        _accumulate_channel_distance(d, build_integral(q, bins), lh, hx, hy)
    return _finalize_map(d, len(planes), (hx, hy))


def _finalize_map(d: np.ndarray, channel_count: int, window_half: tuple[int, int]) -> SimilarityMap:
    """Mean the accumulated chi-square field over channels and map to [0, 1]."""
    h, w = d.shape
    hx, hy = window_half
    valid = np.zeros(d.shape, dtype=bool)
    if h - 2 * hy > 0 and w - 2 * hx > 0:
        valid[hy : h - hy, hx : w - hx] = True
    values = np.full(d.shape, np.nan)
    values[valid] = np.clip(1.0 - d[valid] / channel_count / 2.0, 0.0, 1.0)
    return SimilarityMap(values=values, valid=valid, channel_count=channel_count, window_half=window_half)


def extract_contours(simmap: SimilarityMap, threshold: float) -> ContourSet:
    """Closed iso-contours of a similarity map at `threshold`."""
    return contours_of_field(simmap.values, simmap.valid, threshold)


def _check_settings(handle, settings) -> list[ChannelRenderSetting]:
    if not settings:
        raise SchemaError("at least one channel must be selected for search")
    for s in settings:
        if s.channel not in handle.meta.channel_names:
            raise SchemaError(f"unknown search channel {s.channel!r}")
    return list(settings)


def _lens_histograms_at_level(handle, settings, geometry_lvl: LensGeometry, level: int, bins: int):
    """Exact-shape lens histograms read from the lens's own location at `level`."""
    w, h = handle.meta.level_size(level)
    bx0, by0, bx1, by1 = geometry_lvl.bbox()
    x0, y0 = max(0, int(math.floor(bx0))), max(0, int(math.floor(by0)))
    x1, y1 = min(w, int(math.ceil(bx1)) + 1), min(h, int(math.ceil(by1)) + 1)
    if x0 >= x1 or y0 >= y1:
        raise BoundsError("lens does not intersect the image")
    region = RegionRect(level, x0, y0, x1, y1)
    local = geometry_lvl.translated(-x0, -y0)
    return [
        lens_histogram(quantize(handle.read_region(s.channel, region), s, bins), local, bins)
        for s in settings
    ]


def search_viewport(
    handle,
    settings: list[ChannelRenderSetting],
    viewport: RegionRect,
    geometry: LensGeometry,
    threshold: float = DEFAULT_THRESHOLD,
    bins: int = DEFAULT_BINS,
) -> ContourSet:
    """Similarity search over the viewport at its own pyramid level.

    `geometry` is in level-0 coordinates; the lens may lie outside the
    viewport, its histogram is always read from the lens's own location.
    Returned contours carry the transform back to level 0.
    """
    settings = _check_settings(handle, settings)
    scale = 1 << viewport.level
    g_level = geometry.scaled(1.0 / scale)
    lens_hists = _lens_histograms_at_level(handle, settings, g_level, viewport.level, bins)
    local = g_level.translated(-viewport.x0, -viewport.y0)
    planes = [quantize(handle.read_region(s.channel, viewport), s, bins) for s in settings]
    simmap = similarity_map(planes, local, bins, lens_histograms=lens_hists)
    cs = extract_contours(simmap, threshold)
    return ContourSet(
        contours=cs.contours,
        threshold=threshold,
        scale=float(scale),
        offset=(float(viewport.x0), float(viewport.y0)),
    )


def _whole_image_distance(
    handle,
    settings: list[ChannelRenderSetting],
    geometry: LensGeometry,
    bins: int,
    tile_px: int | None,
) -> SimilarityMap:
    w, h = handle.meta.level_size(0)
    hx, hy = _window_half(geometry)
    lens_hists = _lens_histograms_at_level(handle, settings, geometry, 0, bins)

    if tile_px is None:
        full = RegionRect(0, 0, 0, w, h)
        planes = [quantize(handle.read_region(s.channel, full), s, bins) for s in settings]
        return similarity_map(planes, geometry, bins, lens_histograms=lens_hists)

    d = np.zeros((h, w), dtype=np.float64)
    for ty0 in range(0, h, tile_px):
        ty1 = min(ty0 + tile_px, h)
        for tx0 in range(0, w, tile_px):
            tx1 = min(tx0 + tile_px, w)
            # expand by the window half so every interior pixel sees its full window
            ex0, ey0 = max(0, tx0 - hx), max(0, ty0 - hy)
            ex1, ey1 = min(w, tx1 + hx), min(h, ty1 + hy)
            region = RegionRect(0, ex0, ey0, ex1, ey1)
            local_d = np.zeros((ey1 - ey0, ex1 - ex0), dtype=np.float64)
            for s, lh in zip(settings, lens_hists):
                q = quantize(handle.read_region(s.channel, region), s, bins)
                _accumulate_channel_distance(local_d, build_integral(q, bins), lh, hx, hy)
            # copy back only pixels whose window is complete in the local read
            vy0, vy1 = ey0 + hy, ey1 - hy
            vx0, vx1 = ex0 + hx, ex1 - hx
            cy0, cy1 = max(ty0, vy0), min(ty1, vy1)
            cx0, cx1 = max(tx0, vx0), min(tx1, vx1)
            if cy0 < cy1 and cx0 < cx1:
                d[cy0:cy1, cx0:cx1] = local_d[cy0 - ey0 : cy1 - ey0, cx0 - ex0 : cx1 - ex0]
    return _finalize_map(d, len(settings), (hx, hy))


def search_whole_image(
    handle,
    settings: list[ChannelRenderSetting],
    geometry: LensGeometry,
    threshold: float = DEFAULT_THRESHOLD,
    bins: int = DEFAULT_BINS,
    tile_px: int | None = 1024,
) -> ContourSet:
    """Full-resolution search over the whole image, processed in overlapping tiles.

    Results are independent of `tile_px`; `None` runs a single untiled pass
    (the reference path for small images).
    """
    settings = _check_settings(handle, settings)
    simmap = _whole_image_distance(handle, settings, geometry, bins, tile_px)
    return extract_contours(simmap, threshold)


def whole_image_similarity(
    handle,
    settings: list[ChannelRenderSetting],
    geometry: LensGeometry,
    bins: int = DEFAULT_BINS,
    tile_px: int | None = 1024,
) -> SimilarityMap:
    """The whole-image similarity field itself (used by equality tests)."""
    return _whole_image_distance(handle, _check_settings(handle, settings), geometry, bins, tile_px)
