"""On-disk chunked multi-resolution datasets.

Layout of a dataset directory:

    meta.json
    channels/<name>/<level>/<tx>_<ty>.bin   raw little-endian row-major uint16
    mask/<level>/<tx>_<ty>.bin              raw little-endian row-major uint32
    cells.csv                               optional single-cell table
    manifest.json                           optional synthetic ground truth

Edge tiles are truncated to the actual plane extent. Intensity levels are
2x2 means (rounded half-up, absent edge pixels excluded); mask levels take
the majority nonzero label of each block (ties go to the smallest ID).
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BoundsError,
    CapabilityError,
    ChannelNotFoundError,
    IntegrityError,
    SchemaError,
)
from .geometry import RegionRect

INTENSITY_DTYPE = np.dtype("<u2")
MASK_DTYPE = np.dtype("<u4")
DEFAULT_TILE_SIZE = 1024
DEFAULT_CACHE_TILES = 256
MASK_SOURCE = "__mask__"

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.+-]*$")


def pyramid_levels(width_px: int, height_px: int, tile_size: int) -> int:
    """Number of levels so the top level fits within a single tile."""
    levels = 1
    longest = max(width_px, height_px)
    while longest > tile_size:
        longest = -(-longest // 2)
        levels += 1
    return levels


def level_size(width_px: int, height_px: int, level: int) -> tuple[int, int]:
    f = 1 << level
    return -(-width_px // f), -(-height_px // f)


@dataclass(frozen=True)
class ChannelMeta:
    name: str
    modality_group: str | None = None
    bit_depth: int = 16


@dataclass(frozen=True)
class DatasetMeta:
    width_px: int
    height_px: int
    pixel_size_um: float
    tile_size: int
    levels: int
    channels: tuple[ChannelMeta, ...]
    has_mask: bool

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def level_size(self, level: int) -> tuple[int, int]:
        if not 0 <= level < self.levels:
            raise BoundsError(f"level {level} outside 0..{self.levels - 1}")
        return level_size(self.width_px, self.height_px, level)

    def to_json_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "pixel_size_um": self.pixel_size_um,
            "tile_size": self.tile_size,
            "levels": self.levels,
            "channels": [
                {"name": c.name, "modality_group": c.modality_group} for c in self.channels
            ],
            "has_mask": self.has_mask,
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def make_meta(
    width_px: int,
    height_px: int,
    pixel_size_um: float,
    channels: list[ChannelMeta],
    has_mask: bool,
    tile_size: int = DEFAULT_TILE_SIZE,
) -> DatasetMeta:
    meta = DatasetMeta(
        width_px=int(width_px),
        height_px=int(height_px),
        pixel_size_um=float(pixel_size_um),
        tile_size=int(tile_size),
        levels=pyramid_levels(width_px, height_px, tile_size),
        channels=tuple(channels),
        has_mask=bool(has_mask),
    )
    _validate_meta(meta)
    return meta


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise SchemaError(f"{path}: {msg}")


def _validate_meta(meta: DatasetMeta):
    _require(isinstance(meta.width_px, int) and meta.width_px >= 1, "width_px", "positive integer required")
    _require(isinstance(meta.height_px, int) and meta.height_px >= 1, "height_px", "positive integer required")
    _require(meta.pixel_size_um > 0, "pixel_size_um", "must be > 0")
    _require(
        isinstance(meta.tile_size, int) and meta.tile_size >= 1 and (meta.tile_size & (meta.tile_size - 1)) == 0,
        "tile_size",
        "power-of-two integer required",
    )
    expected = pyramid_levels(meta.width_px, meta.height_px, meta.tile_size)
    _require(meta.levels == expected, "levels", f"expected {expected} for these dimensions, got {meta.levels}")
    _require(len(meta.channels) >= 1, "channels", "at least one channel required")
    seen = set()
    for i, c in enumerate(meta.channels):
        _require(isinstance(c.name, str) and bool(_NAME_RE.match(c.name)), f"channels[{i}].name", "invalid channel name")
        _require(c.name not in seen, f"channels[{i}].name", f"duplicate channel name {c.name!r}")
        _require(c.modality_group is None or isinstance(c.modality_group, str), f"channels[{i}].modality_group", "string or null required")
        seen.add(c.name)


def parse_meta(raw: dict) -> DatasetMeta:
    """Validate a meta.json document; SchemaError messages carry the field path."""
    _require(isinstance(raw, dict), "meta", "expected a JSON object")
    for key in ("width_px", "height_px", "pixel_size_um", "tile_size", "levels", "channels", "has_mask"):
        _require(key in raw, key, "missing required field")
    for key in ("width_px", "height_px", "tile_size", "levels"):
        _require(isinstance(raw[key], int) and not isinstance(raw[key], bool), key, "integer required")
    _require(isinstance(raw["pixel_size_um"], (int, float)), "pixel_size_um", "number required")
    _require(isinstance(raw["has_mask"], bool), "has_mask", "boolean required")
    _require(isinstance(raw["channels"], list), "channels", "array required")
    channels = []
    for i, c in enumerate(raw["channels"]):
        _require(isinstance(c, dict), f"channels[{i}]", "object required")
        _require("name" in c, f"channels[{i}].name", "missing required field")
        channels.append(ChannelMeta(name=c["name"], modality_group=c.get("modality_group")))
    meta = DatasetMeta(
        width_px=raw["width_px"],
        height_px=raw["height_px"],
        pixel_size_um=float(raw["pixel_size_um"]),
        tile_size=raw["tile_size"],
        levels=raw["levels"],
        channels=tuple(channels),
        has_mask=raw["has_mask"],
    )
    _validate_meta(meta)
    return meta


# ---------------------------------------------------------------------------
# downsampling


def downsample_intensity(plane: np.ndarray) -> np.ndarray:
    """2x2 block mean rounded half-up; absent pixels at odd edges are excluded."""
    h, w = plane.shape
    oh, ow = -(-h // 2), -(-w // 2)
    acc = np.zeros((oh, ow), dtype=np.int64)
    cnt = np.zeros((oh, ow), dtype=np.int64)
    for dy in (0, 1):
        for dx in (0, 1):
            q = plane[dy::2, dx::2]
            acc[: q.shape[0], : q.shape[1]] += q
            cnt[: q.shape[0], : q.shape[1]] += 1
    out = (2 * acc + cnt) // (2 * cnt)
    return out.astype(plane.dtype)


def downsample_mask(plane: np.ndarray) -> np.ndarray:
    """Majority nonzero label per 2x2 block; ties -> smallest ID; all-zero -> 0.

    Absent edge pixels are treated as zeros, which never outvote a real label.
    """
    h, w = plane.shape
    oh, ow = -(-h // 2), -(-w // 2)
    cand = np.zeros((4, oh, ow), dtype=plane.dtype)
    for k, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        q = plane[dy::2, dx::2]
        cand[k, : q.shape[0], : q.shape[1]] = q
    # 4 candidates per pixel: pick the nonzero value with the highest count,
    # ties resolved toward the smallest value by scanning in ascending order.
    order = np.sort(cand, axis=0)
    counts = np.zeros_like(order)
    for i in range(4):
        eq = np.zeros(order.shape[1:], dtype=order.dtype)
        for j in range(4):
            eq += (order[j] == order[i]).astype(order.dtype)
        counts[i] = eq
    best = np.zeros((oh, ow), dtype=plane.dtype)
    best_count = np.zeros((oh, ow), dtype=np.int64)
    for i in range(4):
        v = order[i]
        c = counts[i]
        take = (v != 0) & (c > best_count)
        best[take] = v[take]
        best_count[take] = c[take]
    return best


def build_pyramid(level0: np.ndarray, levels: int, kind: str) -> list[np.ndarray]:
    """All pyramid levels for one plane, level 0 first. kind: 'intensity' | 'mask'."""
    fn = downsample_intensity if kind == "intensity" else downsample_mask
    planes = [level0]
    for _ in range(1, levels):
        planes.append(fn(planes[-1]))
    return planes


# ---------------------------------------------------------------------------
# writing


def _write_plane_tiles(root: Path, plane: np.ndarray, tile_size: int, dtype: np.dtype):
    root.mkdir(parents=True, exist_ok=True)
    h, w = plane.shape
    for ty in range(-(-h // tile_size)):
        for tx in range(-(-w // tile_size)):
            tile = plane[
                ty * tile_size : min((ty + 1) * tile_size, h),
                tx * tile_size : min((tx + 1) * tile_size, w),
            ]
            (root / f"{tx}_{ty}.bin").write_bytes(np.ascontiguousarray(tile.astype(dtype)).tobytes())


def write_dataset(
    out_dir: Path | str,
    meta: DatasetMeta,
    channel_planes: dict[str, np.ndarray],
    mask_plane: np.ndarray | None = None,
):
    """Build all pyramid levels from level-0 planes and write the chunked format."""
    out_dir = Path(out_dir)
    if set(channel_planes) != set(meta.channel_names):
        raise SchemaError(
            f"channels: plane names {sorted(channel_planes)} do not match meta {sorted(meta.channel_names)}"
        )
    if meta.has_mask and mask_plane is None:
        raise SchemaError("has_mask: meta declares a mask but no mask plane was given")
    if not meta.has_mask and mask_plane is not None:
        raise SchemaError("has_mask: mask plane given but meta declares has_mask=false")
    shape = (meta.height_px, meta.width_px)
    for name, plane in channel_planes.items():
        if plane.shape != shape:
            raise SchemaError(f"channels.{name}: plane shape {plane.shape} != meta {shape}")
    if mask_plane is not None and mask_plane.shape != shape:
        raise SchemaError(f"mask: plane shape {mask_plane.shape} != meta {shape}")

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "meta.json").write_text(json.dumps(meta.to_json_dict(), indent=2) + "\n")
    for name in meta.channel_names:
        for lvl, plane in enumerate(build_pyramid(channel_planes[name], meta.levels, "intensity")):
            _write_plane_tiles(out_dir / "channels" / name / str(lvl), plane, meta.tile_size, INTENSITY_DTYPE)
    if mask_plane is not None:
        for lvl, plane in enumerate(build_pyramid(mask_plane, meta.levels, "mask")):
            _write_plane_tiles(out_dir / "mask" / str(lvl), plane, meta.tile_size, MASK_DTYPE)


# ---------------------------------------------------------------------------
# reading


class _TileCache:
    """Per-source LRU tile cache; updates are lock-protected for concurrent readers."""

    def __init__(self, capacity_per_source: int):
        self.capacity = capacity_per_source
        self._lock = threading.Lock()
        self._per_source: dict[str, OrderedDict] = {}
        self.tiles_loaded = 0

    def get(self, source: str, key, loader):
        with self._lock:
            cache = self._per_source.setdefault(source, OrderedDict())
            if key in cache:
                cache.move_to_end(key)
                return cache[key]
            tile = loader()
            self.tiles_loaded += 1
            cache[key] = tile
            if len(cache) > self.capacity:
                cache.popitem(last=False)
            return tile

    def counts(self) -> dict[str, int]:
        with self._lock:
            return {s: len(c) for s, c in self._per_source.items()}


class DatasetHandle:
    """Read-only view of a dataset directory; region reads are lazy and cached.

    Shareable between threads: reads are pure and cache updates are synchronized.
    """

    def __init__(self, path: Path, meta: DatasetMeta, cache_tiles: int = DEFAULT_CACHE_TILES):
        self.path = path
        self.meta = meta
        self._cache = _TileCache(cache_tiles)

    # -- introspection used by tests and the service

    def cache_info(self) -> dict:
        return {"per_source": self._cache.counts(), "tiles_loaded": self._cache.tiles_loaded}

    def meta_hash(self) -> str:
        return self.meta.content_hash()

    # -- tile access

    def _tile_path(self, source: str, level: int, tx: int, ty: int) -> Path:
        if source == MASK_SOURCE:
            return self.path / "mask" / str(level) / f"{tx}_{ty}.bin"
        return self.path / "channels" / source / str(level) / f"{tx}_{ty}.bin"

    def _tile_shape(self, level: int, tx: int, ty: int) -> tuple[int, int]:
        lw, lh = self.meta.level_size(level)
        t = self.meta.tile_size
        return min((ty + 1) * t, lh) - ty * t, min((tx + 1) * t, lw) - tx * t

    def _load_tile(self, source: str, level: int, tx: int, ty: int, dtype: np.dtype) -> np.ndarray:
        p = self._tile_path(source, level, tx, ty)
        th, tw = self._tile_shape(level, tx, ty)
        expected = th * tw * dtype.itemsize
        try:
            raw = p.read_bytes()
        except FileNotFoundError:
            raise IntegrityError(f"missing tile file {p}") from None
        if len(raw) != expected:
            raise IntegrityError(f"tile {p} has {len(raw)} bytes, expected {expected}")
        return np.frombuffer(raw, dtype=dtype).reshape(th, tw)

    def _read_plane_region(self, source: str, region: RegionRect, dtype: np.dtype) -> np.ndarray:
        lw, lh = self.meta.level_size(region.level)
        if not (0 <= region.x0 and region.x1 <= lw and 0 <= region.y0 and region.y1 <= lh):
            raise BoundsError(
                f"region ({region.x0},{region.y0})..({region.x1},{region.y1}) outside "
                f"level {region.level} plane {lw}x{lh}"
            )
        t = self.meta.tile_size
        out = np.empty((region.height, region.width), dtype=dtype.newbyteorder("="))
        for ty in range(region.y0 // t, (region.y1 - 1) // t + 1):
            for tx in range(region.x0 // t, (region.x1 - 1) // t + 1):
                tile = self._cache.get(
                    source,
                    (region.level, tx, ty),
                    lambda: self._load_tile(source, region.level, tx, ty, dtype),
                )
                ox0, oy0 = tx * t, ty * t
                x0 = max(region.x0, ox0)
                x1 = min(region.x1, ox0 + tile.shape[1])
                y0 = max(region.y0, oy0)
                y1 = min(region.y1, oy0 + tile.shape[0])
                out[y0 - region.y0 : y1 - region.y0, x0 - region.x0 : x1 - region.x0] = tile[
                    y0 - oy0 : y1 - oy0, x0 - ox0 : x1 - ox0
                ]
        return out

    def read_region(self, channel: str, region: RegionRect) -> np.ndarray:
        if channel not in self.meta.channel_names:
            raise ChannelNotFoundError(f"unknown channel {channel!r}")
        return self._read_plane_region(channel, region, INTENSITY_DTYPE)

    def read_mask_region(self, region: RegionRect) -> np.ndarray:
        if not self.meta.has_mask:
            raise CapabilityError("dataset has no segmentation mask")
        return self._read_plane_region(MASK_SOURCE, region, MASK_DTYPE)

    def read_full_level(self, channel: str, level: int) -> np.ndarray:
        lw, lh = self.meta.level_size(level)
        return self.read_region(channel, RegionRect(level, 0, 0, lw, lh))


def open_dataset(path: Path | str, cache_tiles: int = DEFAULT_CACHE_TILES) -> DatasetHandle:
    """Open a dataset directory; validates meta.json, performs no tile IO."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise SchemaError(f"meta.json: not found in {path}")
    try:
        raw = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"meta.json: unreadable or invalid JSON ({e})") from None
    return DatasetHandle(path, parse_meta(raw), cache_tiles=cache_tiles)
