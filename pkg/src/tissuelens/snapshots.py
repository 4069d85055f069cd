"""Rich ROI snapshots: capture, persist, filter, restore, and extend via search.

A snapshot freezes everything needed to reproduce a finding: lens geometry,
viewport pose, both channel sets with colors and ranges, the cell IDs and
statistics inside the region, free-text annotation, and a thumbnail render.
The store is a single JSON file with embedded base64 thumbnails so it stays
diffable and database-free.
"""

from __future__ import annotations

import base64
import io
import json
import secrets
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .cells import RegionStats, SpatialIndex, region_stats, stats_from_dict, stats_to_dict
from .errors import IntegrityError, RestoreError, SchemaError, StoreVersionError
from .geometry import LensGeometry, RegionRect
from .lens import LensState
from .render import ChannelSet, composite
from .search import search_whole_image

SCHEMA_VERSION = 1
THUMBNAIL_MAX_EDGE = 256


@dataclass(frozen=True)
class RichSnapshot:
    id: str
    title: str
    description: str
    created_at: str  # ISO-8601 UTC
    geometry: LensGeometry
    viewport_center: tuple[float, float]
    viewport_zoom: float
    lens_channel_set: ChannelSet
    context_channel_set: ChannelSet
    lens_mode: str
    magnifier: str
    mag_factor: float
    plateau_fraction: float
    blend_alpha: float
    cell_ids: tuple[int, ...]  # sorted ascending
    stats: RegionStats
    thumbnail_png: bytes

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "created_at": self.created_at,
            "geometry": self.geometry.to_json_dict(),
            "viewport": {"center": list(self.viewport_center), "zoom": self.viewport_zoom},
            "lens_channel_set": self.lens_channel_set.to_json_dict(),
            "context_channel_set": self.context_channel_set.to_json_dict(),
            "lens_mode": self.lens_mode,
            "magnifier": self.magnifier,
            "mag_factor": self.mag_factor,
            "plateau_fraction": self.plateau_fraction,
            "blend_alpha": self.blend_alpha,
            "cell_ids": [int(i) for i in self.cell_ids],
            "stats": stats_to_dict(self.stats),
            "thumbnail_png_base64": base64.b64encode(self.thumbnail_png).decode("ascii"),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "RichSnapshot":
        try:
            return RichSnapshot(
                id=d["id"],
                title=d["title"],
                description=d["description"],
                created_at=d["created_at"],
                geometry=LensGeometry.from_json_dict(d["geometry"]),
                viewport_center=tuple(d["viewport"]["center"]),
                viewport_zoom=float(d["viewport"]["zoom"]),
                lens_channel_set=ChannelSet.from_json_dict(d["lens_channel_set"]),
                context_channel_set=ChannelSet.from_json_dict(d["context_channel_set"]),
                lens_mode=d["lens_mode"],
                magnifier=d["magnifier"],
                mag_factor=float(d["mag_factor"]),
                plateau_fraction=float(d["plateau_fraction"]),
                blend_alpha=float(d["blend_alpha"]),
                cell_ids=tuple(int(i) for i in d["cell_ids"]),
                stats=stats_from_dict(d["stats"]),
                thumbnail_png=base64.b64decode(d["thumbnail_png_base64"]),
            )
        except KeyError as e:
            raise SchemaError(f"snapshot: missing field {e.args[0]!r}") from None

    def lens_state(self) -> LensState:
        return LensState(
            geometry=self.geometry,
            lens_channel_set=self.lens_channel_set,
            mode=self.lens_mode,
            magnifier=self.magnifier,
            mag_factor=self.mag_factor,
            plateau_fraction=self.plateau_fraction,
            blend_alpha=self.blend_alpha,
        )


def _new_id() -> str:
    return time.strftime("%Y%m%dT%H%M%SZ", time.gmtime()) + "-" + secrets.token_hex(4)


def _thumbnail_level(handle, geometry: LensGeometry) -> int:
    bx0, by0, bx1, by1 = geometry.bbox()
    level = 0
    while level + 1 < handle.meta.levels:
        edge = max(bx1 - bx0, by1 - by0) / (1 << level)
        if edge <= THUMBNAIL_MAX_EDGE:
            break
        level += 1
    return level


def render_thumbnail(handle, geometry: LensGeometry, cset: ChannelSet) -> bytes:
    """PNG of the lens bounding box at capture settings, max 256 px edge."""
    level = _thumbnail_level(handle, geometry)
    scale = 1 << level
    w, h = handle.meta.level_size(level)
    bx0, by0, bx1, by1 = geometry.bbox()
    x0 = max(0, int(np.floor(bx0 / scale)))
    y0 = max(0, int(np.floor(by0 / scale)))
    x1 = min(w, int(np.ceil(bx1 / scale)) + 1)
    y1 = min(h, int(np.ceil(by1 / scale)) + 1)
    if x0 >= x1 or y0 >= y1:
        raise SchemaError("snapshot geometry lies outside the image")
    region = RegionRect(level, x0, y0, x1, y1)
    planes = [handle.read_region(s.channel, region) for s in cset.settings]
    rgb = composite(planes, cset)
    stride = max(1, -(-max(rgb.shape[:2]) // THUMBNAIL_MAX_EDGE))
    rgb = rgb[::stride, ::stride]
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return buf.getvalue()


def create_snapshot(
    handle,
    table,
    index: SpatialIndex,
    lens: LensState,
    context_set: ChannelSet,
    viewport_center: tuple[float, float],
    viewport_zoom: float,
    title: str = "",
    description: str = "",
) -> RichSnapshot:
    """Capture the current lens with its statistics computed at capture time."""
    stats = region_stats(
        table,
        index,
        lens.geometry,
        [s.channel for s in lens.lens_channel_set.settings],
        handle.meta.pixel_size_um,
    )
    return RichSnapshot(
        id=_new_id(),
        title=title,
        description=description,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        geometry=lens.geometry,
        viewport_center=(float(viewport_center[0]), float(viewport_center[1])),
        viewport_zoom=float(viewport_zoom),
        lens_channel_set=lens.lens_channel_set,
        context_channel_set=context_set,
        lens_mode=lens.mode,
        magnifier=lens.magnifier,
        mag_factor=lens.mag_factor,
        plateau_fraction=lens.plateau_fraction,
        blend_alpha=lens.blend_alpha,
        cell_ids=stats.cell_ids,
        stats=stats,
        thumbnail_png=render_thumbnail(handle, lens.geometry, lens.lens_channel_set),
    )


class SnapshotStore:
    """Ordered snapshot collection bound to a dataset identity.

    Mutations are serialized by an internal lock; readers always see either
    the pre- or post-mutation list, never a partial state.
    """

    def __init__(self, dataset_meta_hash: str, snapshots: list[RichSnapshot] | None = None):
        self.dataset_meta_hash = dataset_meta_hash
        self._snapshots: list[RichSnapshot] = list(snapshots or [])
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._snapshots)

    def list(self) -> list[RichSnapshot]:
        with self._lock:
            return list(self._snapshots)

    def get(self, snapshot_id: str) -> RichSnapshot | None:
        with self._lock:
            for s in self._snapshots:
                if s.id == snapshot_id:
                    return s
        return None

    def add(self, snapshot: RichSnapshot):
        with self._lock:
            if any(s.id == snapshot.id for s in self._snapshots):
                raise IntegrityError(f"duplicate snapshot id {snapshot.id}")
            self._snapshots.append(snapshot)

    def remove(self, snapshot_id: str) -> bool:
        with self._lock:
            before = len(self._snapshots)
            self._snapshots = [s for s in self._snapshots if s.id != snapshot_id]
            return len(self._snapshots) != before

    def update_annotation(self, snapshot_id: str, title: str | None, description: str | None) -> RichSnapshot | None:
        with self._lock:
            for i, s in enumerate(self._snapshots):
                if s.id == snapshot_id:
                    new = replace(
                        s,
                        title=s.title if title is None else title,
                        description=s.description if description is None else description,
                    )
                    self._snapshots[i] = new
                    return new
        return None


def filter_snapshots(store: SnapshotStore, query: str) -> list[RichSnapshot]:
    """Case-insensitive substring match over title and description, capture order kept."""
    q = query.lower()
    return [s for s in store.list() if q in s.title.lower() or q in s.description.lower()]


def save_store(store: SnapshotStore, path: Path | str):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dataset_meta_hash": store.dataset_meta_hash,
        "snapshots": [s.to_json_dict() for s in store.list()],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_store(path: Path | str) -> SnapshotStore:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise IntegrityError(f"snapshot store {path} is corrupt: {e}") from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise IntegrityError(f"snapshot store {path} lacks a schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise StoreVersionError(
            f"snapshot store schema_version {doc['schema_version']} needs migration to {SCHEMA_VERSION}"
        )
    snaps = [RichSnapshot.from_json_dict(d) for d in doc.get("snapshots", [])]
    return SnapshotStore(doc.get("dataset_meta_hash", ""), snaps)


def export_snapshot(snapshot: RichSnapshot, out_dir: Path | str) -> tuple[Path, Path]:
    """Standalone JSON + PNG pair for sharing a single finding."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = snapshot.to_json_dict()
    del doc["thumbnail_png_base64"]
    json_path = out_dir / f"{snapshot.id}.json"
    png_path = out_dir / f"{snapshot.id}.png"
    json_path.write_text(json.dumps(doc, indent=2) + "\n")
    png_path.write_bytes(snapshot.thumbnail_png)
    return json_path, png_path


@dataclass(frozen=True)
class RestoreState:
    """Application state delta produced by restoring a snapshot."""

    viewport_center: tuple[float, float]
    viewport_zoom: float
    context_channel_set: ChannelSet
    lens: LensState

    def to_json_dict(self) -> dict:
        return {
            "viewport": {"center": list(self.viewport_center), "zoom": self.viewport_zoom},
            "context_channel_set": self.context_channel_set.to_json_dict(),
            "lens": self.lens.to_json_dict(),
        }


def restore(snapshot: RichSnapshot, meta) -> RestoreState:
    """State delta to re-enter the snapshot; fails naming any missing channel."""
    available = set(meta.channel_names)
    for cset in (snapshot.lens_channel_set, snapshot.context_channel_set):
        for s in cset.settings:
            if s.channel not in available:
                raise RestoreError(f"dataset lacks channel {s.channel!r} required by snapshot {snapshot.id}")
    return RestoreState(
        viewport_center=snapshot.viewport_center,
        viewport_zoom=snapshot.viewport_zoom,
        context_channel_set=snapshot.context_channel_set,
        lens=snapshot.lens_state(),
    )


def extend_search(
    handle,
    table,
    index: SpatialIndex,
    snapshot: RichSnapshot,
    threshold: float,
    tile_px: int | None = 1024,
):
    """Whole-image search seeded by the snapshot; hits become provisional snapshots.

    Provisional snapshots are returned, never added to any store; the caller
    decides which ones to keep.
    """
    cs = search_whole_image(
        handle,
        list(snapshot.lens_channel_set.settings),
        snapshot.geometry,
        threshold=threshold,
        tile_px=tile_px,
    )
    provisional = []
    for contour, poly in zip(cs.contours, cs.level0_polygons()):
        if contour.area_px2 <= 0:
            continue
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        cx, cy = (min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0
        geom = (
            LensGeometry.circle(cx, cy, snapshot.geometry.radius_px)
            if snapshot.geometry.shape == "circle"
            else LensGeometry.rectangle(cx, cy, snapshot.geometry.half_w, snapshot.geometry.half_h)
        )
        lens = replace_geometry(snapshot.lens_state(), geom)
        provisional.append(
            create_snapshot(
                handle,
                table,
                index,
                lens,
                snapshot.context_channel_set,
                viewport_center=(cx, cy),
                viewport_zoom=snapshot.viewport_zoom,
                title=f"{snapshot.title} (match)",
                description=f"similarity match for snapshot {snapshot.id}",
            )
        )
    return cs, provisional


def replace_geometry(lens: LensState, geometry: LensGeometry) -> LensState:
    return LensState(
        geometry=geometry,
        lens_channel_set=lens.lens_channel_set,
        mode=lens.mode,
        magnifier=lens.magnifier,
        mag_factor=lens.mag_factor,
        plateau_fraction=lens.plateau_fraction,
        blend_alpha=lens.blend_alpha,
    )
