"""Color mapping and CPU compositing for channel and cell-based rendering.

Intensities map to colors per channel through an adjustable [lo, hi) range;
multi-channel views are additive with clamp, matching the fluorescence
convention where co-located markers blend toward white.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError

FALLBACK_TYPE_COLOR = (128, 128, 128)

# deterministic palette for cell types when the caller supplies none
TYPE_PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 190),
    (0, 128, 128),
)


@dataclass(frozen=True)
class ChannelRenderSetting:
    channel: str
    color: tuple[int, int, int]
    range_lo: int = 0
    range_hi: int = 65535

    def __post_init__(self):
        if not self.range_lo < self.range_hi:
            raise SchemaError(f"range_lo {self.range_lo} must be < range_hi {self.range_hi}")
        if len(self.color) != 3 or not all(0 <= c <= 255 for c in self.color):
            raise SchemaError(f"color must be an RGB triple 0..255, got {self.color}")

    def to_json_dict(self) -> dict:
        return {
            "channel": self.channel,
            "color": list(self.color),
            "range_lo": self.range_lo,
            "range_hi": self.range_hi,
        }

    @staticmethod
    def from_json_dict(d: dict, path: str = "setting") -> "ChannelRenderSetting":
        if not isinstance(d, dict):
            raise SchemaError(f"{path}: expected object")
        if not isinstance(d.get("channel"), str):
            raise SchemaError(f"{path}.channel: expected string")
        color = d.get("color")
        if not (isinstance(color, (list, tuple)) and len(color) == 3):
            raise SchemaError(f"{path}.color: expected [r, g, b]")
        for k in ("range_lo", "range_hi"):
            if not isinstance(d.get(k), int):
                raise SchemaError(f"{path}.{k}: expected integer")
        return ChannelRenderSetting(d["channel"], tuple(int(c) for c in color), d["range_lo"], d["range_hi"])


@dataclass(frozen=True)
class ChannelSet:
    label: str
    settings: tuple[ChannelRenderSetting, ...]

    def __post_init__(self):
        names = [s.channel for s in self.settings]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate channels in set {self.label!r}: {names}")

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(s.channel for s in self.settings)

    def to_json_dict(self) -> dict:
        return {"label": self.label, "settings": [s.to_json_dict() for s in self.settings]}

    @staticmethod
    def from_json_dict(d: dict, path: str = "channel_set") -> "ChannelSet":
        if not isinstance(d, dict):
            raise SchemaError(f"{path}: expected object")
        if not isinstance(d.get("label"), str):
            raise SchemaError(f"{path}.label: expected string")
        raw = d.get("settings")
        if not isinstance(raw, list) or not raw:
            raise SchemaError(f"{path}.settings: expected non-empty array")
        return ChannelSet(
            d["label"],
            tuple(ChannelRenderSetting.from_json_dict(s, f"{path}.settings[{i}]") for i, s in enumerate(raw)),
        )


def map_intensity(v: int, setting: ChannelRenderSetting) -> tuple[int, int, int]:
    """Map one raw intensity to RGB: clamp-normalize then scale the color, half-up."""
    t = (float(v) - setting.range_lo) / (setting.range_hi - setting.range_lo)
    t = min(max(t, 0.0), 1.0)
    return tuple(int(np.floor(t * c + 0.5)) for c in setting.color)


def map_plane(plane: np.ndarray, setting: ChannelRenderSetting) -> np.ndarray:
    """Vectorized map_intensity over a u16 plane -> (H, W, 3) uint8."""
    t = (plane.astype(np.float64) - setting.range_lo) / (setting.range_hi - setting.range_lo)
    np.clip(t, 0.0, 1.0, out=t)
    out = np.empty(plane.shape + (3,), dtype=np.uint8)
    for i, c in enumerate(setting.color):
        out[..., i] = np.floor(t * c + 0.5).astype(np.uint8)
    return out


def composite(planes: list[np.ndarray], cset: ChannelSet) -> np.ndarray:
    """Additive blend of per-channel mapped colors, clamped to 255 -> (H, W, 3) uint8."""
    if len(planes) != len(cset.settings):
        raise SchemaError(f"{len(planes)} planes for {len(cset.settings)} settings")
    shape = planes[0].shape
    for p in planes:
        if p.shape != shape:
            raise SchemaError(f"plane shape {p.shape} != {shape}")
    acc = np.zeros(shape + (3,), dtype=np.int32)
    for plane, setting in zip(planes, cset.settings):
        acc += map_plane(plane, setting)
    return np.minimum(acc, 255).astype(np.uint8)


def render_region(handle, region, cset: ChannelSet) -> np.ndarray:
    """Read all channels of a set for a region and composite them."""
    planes = [handle.read_region(s.channel, region) for s in cset.settings]
    return composite(planes, cset)


def default_type_colors(types) -> dict[str, tuple[int, int, int]]:
    ordered = sorted(set(types))
    return {t: TYPE_PALETTE[i % len(TYPE_PALETTE)] for i, t in enumerate(ordered)}


def render_cell_boundaries(
    mask: np.ndarray,
    cell_types: dict[int, str],
    type_colors: dict[str, tuple[int, int, int]],
    fallback: tuple[int, int, int] = FALLBACK_TYPE_COLOR,
) -> np.ndarray:
    """RGBA overlay: opaque type color on boundary pixels, transparent elsewhere.

    A pixel is a boundary pixel iff it belongs to a cell and one of its
    4-neighbors inside the region carries a different ID (or background).
    """
    boundary = np.zeros(mask.shape, dtype=bool)
    boundary[1:, :] |= mask[1:, :] != mask[:-1, :]
    boundary[:-1, :] |= mask[:-1, :] != mask[1:, :]
    boundary[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    boundary[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    boundary &= mask != 0

    out = np.zeros(mask.shape + (4,), dtype=np.uint8)
    ids = np.unique(mask[boundary])
    for cid in ids:
        t = cell_types.get(int(cid))
        color = type_colors.get(t, fallback) if t is not None else fallback
        sel = boundary & (mask == cid)
        out[sel, 0] = color[0]
        out[sel, 1] = color[1]
        out[sel, 2] = color[2]
        out[sel, 3] = 255
    return out
