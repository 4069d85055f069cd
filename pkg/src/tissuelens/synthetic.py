"""Seeded synthetic datasets with planted cells and repeated texture patterns.

Everything is derived from one numpy Generator so a seed reproduces the
dataset bit for bit. The ground truth (cell geometry, pattern centers,
intensity bands) is written to manifest.json for use as a test oracle.

Intensity layout: background noise stays below ~1500, cell bumps reach
~16500, pattern textures live in 22000..62000 - three disjoint bands so
histogram search can separate them cleanly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DensityError, SchemaError
from .store import ChannelMeta, DEFAULT_TILE_SIZE, make_meta, write_dataset

CELL_TYPES = ("tumor", "immune", "stromal")


def _place_disks(rng, width, height, n, radius_range, max_tries):
    """Non-overlapping disk centers, fully inside the image. Returns (x, y, r) arrays."""
    xs = np.empty(n)
    ys = np.empty(n)
    rs = np.empty(n)
    placed = 0
    tries = 0
    while placed < n:
        if tries >= max_tries:
            raise DensityError(
                f"could not place {n} non-overlapping cells of radius "
                f"{radius_range} in {width}x{height} after {max_tries} tries"
            )
        tries += 1
        r = rng.uniform(*radius_range)
        x = rng.uniform(r + 1, width - 2 - r)
        y = rng.uniform(r + 1, height - 2 - r)
        if placed:
            d2 = (xs[:placed] - x) ** 2 + (ys[:placed] - y) ** 2
            if np.any(d2 <= (rs[:placed] + r) ** 2):
                continue
        xs[placed], ys[placed], rs[placed] = x, y, r
        placed += 1
    return xs, ys, rs


def _place_patterns(rng, width, height, n, size, max_tries):
    """Pattern centers with a border margin of `size` and pairwise distance >= 3*size."""
    if n == 0:
        return []
    if width < 2 * size + 2 or height < 2 * size + 2:
        raise DensityError(f"image {width}x{height} too small for {size}px patterns")
    centers: list[tuple[int, int]] = []
    tries = 0
    while len(centers) < n:
        if tries >= max_tries:
            raise DensityError(
                f"could not place {n} patterns of size {size} in {width}x{height}"
            )
        tries += 1
        cx = int(rng.integers(size, width - size))
        cy = int(rng.integers(size, height - size))
        if all((cx - px) ** 2 + (cy - py) ** 2 >= (3 * size) ** 2 for px, py in centers):
            centers.append((cx, cy))
    return centers


def generate_synthetic(
    out_dir: Path | str,
    *,
    seed: int,
    width: int,
    height: int,
    n_channels: int = 3,
    n_cells: int = 100,
    n_patterns: int = 0,
    tile_size: int = DEFAULT_TILE_SIZE,
    pixel_size_um: float = 0.325,
    cell_radius_range: tuple[float, float] = (4.0, 12.0),
    pattern_size: int = 128,
) -> Path:
    """Write a synthetic dataset directory; returns the manifest path."""
    if min(width, height, n_channels) < 1:
        raise SchemaError("width, height and n_channels must be >= 1")
    if n_cells < 0 or n_patterns < 0:
        raise SchemaError("n_cells and n_patterns must be >= 0")
    r_lo, r_hi = cell_radius_range
    if not 1.0 <= r_lo <= r_hi:
        raise SchemaError(f"bad cell_radius_range {cell_radius_range}")
    if n_cells * math.pi * r_hi**2 > 0.35 * width * height:
        raise DensityError(
            f"{n_cells} cells of radius up to {r_hi} cannot fit in {width}x{height} without overlap"
        )

    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    names = [f"ch{i:02d}" for i in range(n_channels)]
    groups = [None] * n_channels
    if n_channels >= 5:
        groups[-3:] = ["he"] * 3  # emulate an RGB triple from a second modality
    meta = make_meta(
        width,
        height,
        pixel_size_um,
        [ChannelMeta(n, g) for n, g in zip(names, groups)],
        has_mask=True,
        tile_size=tile_size,
    )

    # background: per-channel base level plus uniform noise, all below 1500
    planes = []
    for _ in range(n_channels):
        base = int(rng.integers(200, 600))
        noise = rng.integers(0, 900, size=(height, width), dtype=np.int64)
        planes.append((base + noise).astype(np.uint16))
    mask = np.zeros((height, width), dtype=np.uint32)

    # cells: disk-shaped footprints with per-channel Gaussian intensity bumps
    xs, ys, rs = (np.empty(0),) * 3
    types: list[str] = []
    if n_cells > 0:
        xs, ys, rs = _place_disks(rng, width, height, n_cells, (r_lo, r_hi), 200 * n_cells)
    for k in range(n_cells):
        types.append(str(rng.choice(CELL_TYPES)))
        amps = rng.integers(4000, 15000, size=n_channels)
        x, y, r = xs[k], ys[k], rs[k]
        x0, x1 = int(math.floor(x - r)), int(math.ceil(x + r)) + 1
        y0, y1 = int(math.floor(y - r)), int(math.ceil(y + r)) + 1
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d2 = (xx - x) ** 2 + (yy - y) ** 2
        disk = d2 <= r * r
        sigma2 = (r / 2.0) ** 2
        profile = np.exp(-d2 / (2.0 * sigma2))[disk]
        for c in range(n_channels):
            win = planes[c][y0:y1, x0:x1]
            vals = win[disk].astype(np.int64) + np.rint(profile * amps[c]).astype(np.int64)
            win[disk] = np.minimum(vals, 65535).astype(np.uint16)
        mask[y0:y1, x0:x1][disk] = k + 1

    # patterns: one texture per channel, stamped identically at every site
    centers = _place_patterns(rng, width, height, n_patterns, pattern_size, 500 * max(n_patterns, 1))
    patches = rng.integers(22000, 62000, size=(n_channels, pattern_size, pattern_size))
    half = pattern_size // 2
    for cx, cy in centers:
        for c in range(n_channels):
            planes[c][cy - half : cy - half + pattern_size, cx - half : cx - half + pattern_size] = patches[c]

    # per-cell means recomputed from the final planes so the CSV is exact
    rows = []
    for k in range(n_cells):
        x, y, r = xs[k], ys[k], rs[k]
        x0, x1 = int(math.floor(x - r)), int(math.ceil(x + r)) + 1
        y0, y1 = int(math.floor(y - r)), int(math.ceil(y + r)) + 1
        local = mask[y0:y1, x0:x1] == k + 1
        means = [float(np.mean(planes[c][y0:y1, x0:x1][local])) for c in range(n_channels)]
        rows.append([k + 1, float(xs[k]), float(ys[k])] + means + [types[k]])

    write_dataset(out_dir, meta, dict(zip(names, planes)), mask)
    with open(out_dir / "cells.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["CellID", "X", "Y"] + names + ["CellType"])
        for row in rows:
            w.writerow([row[0]] + [repr(v) for v in row[1 : 3 + n_channels]] + [row[-1]])

    manifest = {
        "seed": seed,
        "width": width,
        "height": height,
        "channels": names,
        "n_cells": n_cells,
        "cells": [
            {"cell_id": k + 1, "x": float(xs[k]), "y": float(ys[k]), "radius": float(rs[k]), "cell_type": types[k]}
            for k in range(n_cells)
        ],
        "pattern_size": pattern_size,
        "pattern_centers": [[cx, cy] for cx, cy in centers],
        "intensity_bands": {"background": [0, 1500], "cells": [200, 16500], "patterns": [22000, 62000]},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
