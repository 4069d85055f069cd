"""Ingestion from flat TIFF planes + cells.csv into the chunked format.

The inverse (export_flat) exists so ingestion can be validated by
round-tripping a dataset through plain files.
"""

from __future__ import annotations

import csv
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IntegrityError, SchemaError
from .geometry import RegionRect
from .store import ChannelMeta, DatasetHandle, make_meta, write_dataset


def _read_tiff_u16(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise SchemaError(f"{path.name}: expected a single-plane greyscale image")
    if arr.dtype not in (np.uint16, np.uint8, np.int32):
        raise SchemaError(f"{path.name}: unsupported pixel type {arr.dtype}")
    if arr.dtype == np.int32 and (arr.min() < 0 or arr.max() > 65535):
        raise SchemaError(f"{path.name}: values outside the 16-bit range")
    return arr.astype(np.uint16)


def _read_tiff_mask(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise SchemaError(f"{path.name}: expected a single-plane label image")
    if np.issubdtype(arr.dtype, np.signedinteger) and arr.min() < 0:
        raise SchemaError(f"{path.name}: negative cell IDs")
    return arr.astype(np.uint32)


def ingest(
    plane_paths: list[Path | str],
    csv_path: Path | str,
    out_dir: Path | str,
    *,
    tile_size: int = 1024,
    pixel_size_um: float,
    mask_path: Path | str | None = None,
) -> Path:
    """Build a dataset directory from flat planes; channel names are file stems."""
    plane_paths = [Path(p) for p in plane_paths]
    if not plane_paths:
        raise SchemaError("planes: at least one channel plane required")
    csv_path = Path(csv_path)
    out_dir = Path(out_dir)

    names = [p.stem for p in plane_paths]
    if len(set(names)) != len(names):
        raise SchemaError(f"planes: duplicate channel names in {names}")
    planes = {n: _read_tiff_u16(p) for n, p in zip(names, plane_paths)}
    shape = planes[names[0]].shape
    for n in names:
        if planes[n].shape != shape:
            raise SchemaError(f"planes.{n}: shape {planes[n].shape} != {shape}")

    mask = None
    if mask_path is not None:
        mask = _read_tiff_mask(Path(mask_path))
        if mask.shape != shape:
            raise SchemaError(f"mask: shape {mask.shape} != {shape}")

    with open(csv_path, newline="") as f:
        header = next(csv.reader(f), None)
    if header is None:
        raise SchemaError("cells.csv: empty file")
    for col in ["CellID", "X", "Y"] + names:
        if col not in header:
            raise SchemaError(f"cells.csv: missing column {col!r}")

    if mask is not None:
        csv_ids = set()
        with open(csv_path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                csv_ids.add(int(row["CellID"]))
        mask_ids = set(int(v) for v in np.unique(mask)) - {0}
        missing = sorted(mask_ids - csv_ids)
        if missing:
            shown = ", ".join(str(i) for i in missing[:20])
            more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
            raise IntegrityError(f"mask IDs absent from cells.csv: {shown}{more}")

    height, width = shape
    meta = make_meta(
        width,
        height,
        pixel_size_um,
        [ChannelMeta(n) for n in names],
        has_mask=mask is not None,
        tile_size=tile_size,
    )
    write_dataset(out_dir, meta, planes, mask)
    shutil.copyfile(csv_path, out_dir / "cells.csv")
    return out_dir


def export_flat(handle: DatasetHandle, out_dir: Path | str) -> list[Path]:
    """Write level-0 planes as TIFFs plus cells.csv; returns the plane paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w, h = handle.meta.level_size(0)
    full = RegionRect(0, 0, 0, w, h)
    written = []
    for name in handle.meta.channel_names:
        p = out_dir / f"{name}.tif"
        Image.fromarray(handle.read_region(name, full)).save(p, format="TIFF")
        written.append(p)
    if handle.meta.has_mask:
        mask = handle.read_mask_region(full)
        if mask.max(initial=0) > np.iinfo(np.int32).max:
            raise IntegrityError("mask IDs exceed the signed 32-bit TIFF range")
        Image.fromarray(mask.astype(np.int32)).save(out_dir / "mask.tif", format="TIFF")
    src_csv = handle.path / "cells.csv"
    if src_csv.exists():
        shutil.copyfile(src_csv, out_dir / "cells.csv")
    return written
