"""Single-cell table, ball-tree range queries, and in-lens descriptive statistics.

The table is immutable after load; global per-channel means and 1st/99th
nearest-rank percentiles are precomputed once so histogram bin edges stay
fixed while the lens moves, keeping the whole-image reference bins
comparable across regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.neighbors import BallTree

from .errors import ChannelNotFoundError, DegenerateRangeError, IntegrityError, SchemaError
from .geometry import CIRCLE, LensGeometry

HISTOGRAM_BINS = 30
DEFAULT_LEAF_SIZE = 32

ORDER_LOCKED = "locked"
ORDER_BY_COUNT = "by_count"


def nearest_rank_percentile(sorted_values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile on an ascending array."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_values[rank - 1])


class CellTable:
    """Immutable per-cell records: ID, centroid, per-channel means, optional type."""

    def __init__(self, ids, xy, values: dict[str, np.ndarray], types):
        self.ids = ids
        self.xy = xy
        self.values = values
        self.types = types
        self._row_of = {int(i): k for k, i in enumerate(ids)}
        self.global_mean = {c: float(v.mean()) if len(v) else 0.0 for c, v in values.items()}
        self.global_p1 = {}
        self.global_p99 = {}
        for c, v in values.items():
            if len(v):
                s = np.sort(v)
                self.global_p1[c] = nearest_rank_percentile(s, 1.0)
                self.global_p99[c] = nearest_rank_percentile(s, 99.0)
        # locked display order: first appearance in the table
        seen = {}
        for t in self.types if self.types is not None else ():
            if t and t not in seen:
                seen[t] = len(seen)
        self.type_order = tuple(seen)
        for arr in (self.ids, self.xy):
            arr.setflags(write=False)
        for arr in values.values():
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(self.values)

    def rows_for(self, cell_ids) -> np.ndarray:
        rows = []
        for cid in cell_ids:
            row = self._row_of.get(int(cid))
            if row is None:
                raise IntegrityError(f"cell id {cid} not in table")
            rows.append(row)
        return np.asarray(sorted(rows), dtype=np.int64)


def load_table(csv_path, meta) -> CellTable:
    """Parse cells.csv and precompute global statistics.

    Requires CellID, X, Y and one column per channel in `meta`; a CellType
    column, when present, provides type labels.
    """
    df = pd.read_csv(csv_path)
    for col in ["CellID", "X", "Y"] + list(meta.channel_names):
        if col not in df.columns:
            raise SchemaError(f"cells.csv: missing column {col!r}")
    ids = df["CellID"].to_numpy()
    if len(ids) == 0:
        ids = ids.astype(np.uint32)
    if not np.issubdtype(ids.dtype, np.integer):
        raise SchemaError("cells.csv: CellID must be integer")
    if (ids <= 0).any():
        raise SchemaError("cells.csv: CellID must be > 0")
    uniq, counts = np.unique(ids, return_counts=True)
    if (counts > 1).any():
        dup = uniq[counts > 1][0]
        raise IntegrityError(f"cells.csv: duplicate CellID {int(dup)}")
    xy = df[["X", "Y"]].to_numpy(dtype=np.float64)
    if not np.isfinite(xy).all():
        raise SchemaError("cells.csv: non-finite X/Y value")
    if len(xy) and (
        xy[:, 0].min() < 0 or xy[:, 0].max() > meta.width_px
        or xy[:, 1].min() < 0 or xy[:, 1].max() > meta.height_px
    ):
        raise SchemaError("cells.csv: X/Y outside image bounds")
    values = {c: df[c].to_numpy(dtype=np.float64) for c in meta.channel_names}
    for c, v in values.items():
        if len(v) and (not np.isfinite(v).all() or v.min() < 0):
            raise SchemaError(f"cells.csv: column {c!r} must be finite and >= 0")
    types = None
    if "CellType" in df.columns:
        types = df["CellType"].fillna("").astype(str).to_numpy()
    return CellTable(ids.astype(np.uint32), xy, values, types)


class SpatialIndex:
    """Ball-tree over cell centroids for circular and rectangular range queries."""

    def __init__(self, table: CellTable, leaf_size: int = DEFAULT_LEAF_SIZE):
        self.table = table
        self._tree = BallTree(table.xy, leaf_size=leaf_size) if len(table) else None

    def query(self, geometry: LensGeometry) -> set[int]:
        """Cell IDs whose centroid lies inside the closed lens footprint."""
        if self._tree is None:
            return set()
        center = np.array([[geometry.cx, geometry.cy]])
        if geometry.shape == CIRCLE:
            idx = self._tree.query_radius(center, geometry.radius_px)[0]
        else:
            radius = math.hypot(geometry.half_w, geometry.half_h)
            cand = self._tree.query_radius(center, radius)[0]
            xy = self.table.xy[cand]
            keep = (np.abs(xy[:, 0] - geometry.cx) <= geometry.half_w) & (
                np.abs(xy[:, 1] - geometry.cy) <= geometry.half_h
            )
            idx = cand[keep]
        return {int(self.table.ids[i]) for i in idx}


@dataclass(frozen=True)
class ChannelHistogram:
    channel: str
    bin_edges: tuple[float, ...]  # 31 edges in the log2(v+1) domain
    counts: tuple[int, ...]  # in-region cells, global-percentile clipped
    global_counts: tuple[int, ...]  # whole-image reference, same edges
    region_mean: float | None  # raw-value mean over in-region cells
    global_mean: float


@dataclass(frozen=True)
class RegionStats:
    cell_ids: tuple[int, ...]  # sorted ascending
    n_cells: int
    empty: bool
    histograms: tuple[ChannelHistogram, ...]
    radial_means: tuple[tuple[str, float | None, float], ...]  # all channels
    type_counts: tuple[tuple[str, int], ...]
    area_um2: float


def _check_channels(table: CellTable, channels) -> list[str]:
    for c in channels:
        if c not in table.values:
            raise ChannelNotFoundError(f"unknown channel {c!r}")
    return list(channels)


def _log_edges(table: CellTable, channel: str) -> np.ndarray:
    p1, p99 = table.global_p1[channel], table.global_p99[channel]
    if p1 == p99:
        raise DegenerateRangeError(
            f"channel {channel!r} has no usable range (P1 == P99 == {p1})"
        )
    return np.linspace(math.log2(p1 + 1.0), math.log2(p99 + 1.0), HISTOGRAM_BINS + 1)


def _clipped_log_counts(table, channel, rows, edges) -> np.ndarray:
    v = table.values[channel][rows]
    keep = (v >= table.global_p1[channel]) & (v <= table.global_p99[channel])
    counts, _ = np.histogram(np.log2(v[keep] + 1.0), bins=edges)
    return counts.astype(np.int64)


def region_histograms(table: CellTable, cell_ids, channels) -> list[ChannelHistogram]:
    """Log2-domain marker histograms with whole-image reference counts.

    Cells whose raw value falls outside the global [P1, P99] band are
    dropped before binning; 30 uniform bins span the clipped log range.
    """
    channels = _check_channels(table, channels)
    rows = table.rows_for(cell_ids)
    all_rows = np.arange(len(table))
    out = []
    for c in channels:
        edges = _log_edges(table, c)
        counts = _clipped_log_counts(table, c, rows, edges)
        gcounts = _clipped_log_counts(table, c, all_rows, edges)
        rmean = float(table.values[c][rows].mean()) if len(rows) else None
        out.append(
            ChannelHistogram(
                channel=c,
                bin_edges=tuple(float(e) for e in edges),
                counts=tuple(int(x) for x in counts),
                global_counts=tuple(int(x) for x in gcounts),
                region_mean=rmean,
                global_mean=table.global_mean[c],
            )
        )
    return out


def radial_means(table: CellTable, cell_ids) -> list[tuple[str, float | None, float]]:
    """(channel, region mean, global mean) for every channel; empty regions flagged None."""
    rows = table.rows_for(cell_ids)
    out = []
    for c in table.channels:
        rmean = float(table.values[c][rows].mean()) if len(rows) else None
        out.append((c, rmean, table.global_mean[c]))
    return out


def type_counts(table: CellTable, cell_ids, order: str = ORDER_LOCKED) -> list[tuple[str, int]]:
    """Cell-type counts in the region.

    locked: every type in its global first-seen order (zero counts kept) so
    the sequence is stable while the lens moves. by_count: present types
    ranked by descending count, ties alphabetical.
    """
    if order not in (ORDER_LOCKED, ORDER_BY_COUNT):
        raise SchemaError(f"order: expected '{ORDER_LOCKED}' or '{ORDER_BY_COUNT}'")
    if table.types is None:
        return []
    rows = table.rows_for(cell_ids)
    tally: dict[str, int] = {t: 0 for t in table.type_order}
    for t in table.types[rows]:
        if t:
            tally[t] = tally.get(t, 0) + 1
    if order == ORDER_LOCKED:
        return [(t, tally[t]) for t in table.type_order]
    present = [(t, n) for t, n in tally.items() if n > 0]
    return sorted(present, key=lambda tn: (-tn[1], tn[0]))


def brush_filter(table: CellTable, cell_ids, channel: str, lo: float, hi: float) -> set[int]:
    """Subset of cells whose log2(v+1) transformed value lies in [lo, hi]."""
    if lo > hi:
        raise SchemaError(f"brush range lo {lo} > hi {hi}")
    _check_channels(table, [channel])
    rows = table.rows_for(cell_ids)
    t = np.log2(table.values[channel][rows] + 1.0)
    keep = (t >= lo) & (t <= hi)
    return {int(i) for i in table.ids[rows[keep]]}


def region_area_um2(geometry: LensGeometry, pixel_size_um: float) -> float:
    if pixel_size_um <= 0:
        raise SchemaError(f"pixel_size_um must be > 0, got {pixel_size_um}")
    return geometry.area_px2() * pixel_size_um**2


def region_stats(
    table: CellTable,
    index: SpatialIndex,
    geometry: LensGeometry,
    channels,
    pixel_size_um: float,
    order: str = ORDER_LOCKED,
) -> RegionStats:
    """All lens statistics for a region in one call."""
    ids = sorted(index.query(geometry))
    return RegionStats(
        cell_ids=tuple(ids),
        n_cells=len(ids),
        empty=len(ids) == 0,
        histograms=tuple(region_histograms(table, ids, channels)),
        radial_means=tuple(radial_means(table, ids)),
        type_counts=tuple(type_counts(table, ids, order)),
        area_um2=region_area_um2(geometry, pixel_size_um),
    )


def stats_to_dict(stats: RegionStats) -> dict:
    """JSON-ready form: counts as integers, numeric fields as doubles."""
    return {
        "cell_ids": [int(i) for i in stats.cell_ids],
        "n_cells": stats.n_cells,
        "empty": stats.empty,
        "area_um2": stats.area_um2,
        "histograms": [
            {
                "channel": h.channel,
                "bin_edges": list(h.bin_edges),
                "counts": list(h.counts),
                "global_counts": list(h.global_counts),
                "region_mean": h.region_mean,
                "global_mean": h.global_mean,
            }
            for h in stats.histograms
        ],
        "radial_means": [
            {"channel": c, "region_mean": r, "global_mean": g} for c, r, g in stats.radial_means
        ],
        "type_counts": [[t, int(n)] for t, n in stats.type_counts],
    }


def stats_from_dict(d: dict) -> RegionStats:
    return RegionStats(
        cell_ids=tuple(int(i) for i in d["cell_ids"]),
        n_cells=int(d["n_cells"]),
        empty=bool(d["empty"]),
        histograms=tuple(
            ChannelHistogram(
                channel=h["channel"],
                bin_edges=tuple(h["bin_edges"]),
                counts=tuple(int(x) for x in h["counts"]),
                global_counts=tuple(int(x) for x in h["global_counts"]),
                region_mean=h["region_mean"],
                global_mean=h["global_mean"],
            )
            for h in d["histograms"]
        ),
        radial_means=tuple(
            (m["channel"], m["region_mean"], m["global_mean"]) for m in d["radial_means"]
        ),
        type_counts=tuple((t, int(n)) for t, n in d["type_counts"]),
        area_um2=float(d["area_um2"]),
    )
