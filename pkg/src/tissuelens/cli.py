"""Command-line entry points: generate, ingest, serve, headless search, stats export.

Exit codes: 0 success, 2 usage, 3 data integrity, 4 internal. JSON results
are written with sorted keys so CLI, HTTP, and library outputs compare
byte-for-byte after canonicalization.
"""

from __future__ import annotations

import glob as globlib
import json
import sys
from pathlib import Path

import click

from .cells import ORDER_LOCKED, SpatialIndex, load_table, region_stats, stats_to_dict
from .errors import EngineError
from .geometry import LensGeometry
from .ingest import ingest as ingest_op
from .render import ChannelRenderSetting
from .search import DEFAULT_BINS, search_whole_image
from .store import open_dataset
from .synthetic import generate_synthetic

EXIT_INTEGRITY = 3
EXIT_INTERNAL = 4


def _fail(e: Exception) -> "click.exceptions.Exit":
    if isinstance(e, EngineError):
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INTEGRITY)
    click.echo(f"internal error: {e}", err=True)
    sys.exit(EXIT_INTERNAL)


def _parse_geometry(shape, cx, cy, r, half_w, half_h) -> LensGeometry:
    if shape == "circle":
        if r is None:
            raise click.UsageError("--r is required for circle shape")
        return LensGeometry.circle(cx, cy, r)
    if half_w is None or half_h is None:
        raise click.UsageError("--half-w and --half-h are required for rectangle shape")
    return LensGeometry.rectangle(cx, cy, half_w, half_h)


def _parse_channels(handle, channels: str) -> list[str]:
    names = [c for c in channels.split(",") if c]
    if not names:
        raise click.UsageError("--channels must name at least one channel")
    for c in names:
        if c not in handle.meta.channel_names:
            raise click.UsageError(
                f"unknown channel {c!r}; dataset has {', '.join(handle.meta.channel_names)}"
            )
    return names


def _write_json(doc: dict, out: str | None):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)
        click.echo(f"wrote {out}", err=True)


@click.group()
def main():
    """Exploration engine for multi-channel tissue images."""


@main.command("gen-synthetic")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--width", required=True, type=int)
@click.option("--height", required=True, type=int)
@click.option("--channels", "n_channels", default=3, show_default=True, type=int)
@click.option("--cells", "n_cells", default=100, show_default=True, type=int)
@click.option("--patterns", "n_patterns", default=0, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--tile-size", default=1024, show_default=True, type=int)
@click.option("--pixel-size-um", default=0.325, show_default=True, type=float)
@click.option("--pattern-size", default=128, show_default=True, type=int)
@click.option("--cell-radius", nargs=2, default=(4.0, 12.0), show_default=True, type=float)
def gen_synthetic(out_dir, width, height, n_channels, n_cells, n_patterns, seed,
                  tile_size, pixel_size_um, pattern_size, cell_radius):
    """Generate a seeded synthetic dataset with ground-truth manifest."""
    try:
        manifest = generate_synthetic(
            out_dir, seed=seed, width=width, height=height, n_channels=n_channels,
            n_cells=n_cells, n_patterns=n_patterns, tile_size=tile_size,
            pixel_size_um=pixel_size_um, pattern_size=pattern_size,
            cell_radius_range=tuple(cell_radius),
        )
    except Exception as e:
        _fail(e)
    click.echo(str(manifest))


@main.command("ingest")
@click.option("--planes", required=True, help="glob of single-plane TIFF files")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--tile-size", default=1024, show_default=True, type=int)
@click.option("--pixel-size-um", required=True, type=float)
@click.option("--mask", "mask_path", default=None, type=click.Path(exists=True))
def ingest(planes, csv_path, out_dir, tile_size, pixel_size_um, mask_path):
    """Build the chunked format from flat TIFF planes plus cells.csv."""
    paths = sorted(globlib.glob(planes))
    if not paths:
        raise click.UsageError(f"no files match --planes {planes!r}")
    try:
        ingest_op(paths, csv_path, out_dir, tile_size=tile_size,
                  pixel_size_um=pixel_size_um, mask_path=mask_path)
    except Exception as e:
        _fail(e)
    click.echo(str(out_dir))


@main.command("serve")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--snapshots", "snapshots_path", default=None, type=click.Path())
def serve(data_dir, port, host, snapshots_path):
    """Serve the HTTP API for one dataset."""
    import socket

    import uvicorn

    from .service import create_app

    try:
        app = create_app(data_dir, snapshots_path=snapshots_path)
    except Exception as e:
        _fail(e)
    # probe the bind up front: uvicorn's own startup failure would exit with
    # code 3, which this CLI reserves for data integrity
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        probe.close()
    except OSError as e:
        click.echo(f"cannot bind {host}:{port}: {e}", err=True)
        sys.exit(EXIT_INTERNAL)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("search")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--channels", required=True, help="comma-separated channel names")
@click.option("--shape", type=click.Choice(["circle", "rectangle"]), default="circle", show_default=True)
@click.option("--cx", required=True, type=float)
@click.option("--cy", required=True, type=float)
@click.option("--r", default=None, type=float)
@click.option("--half-w", default=None, type=float)
@click.option("--half-h", default=None, type=float)
@click.option("--threshold", default=0.8, show_default=True, type=float)
@click.option("--bins", default=DEFAULT_BINS, show_default=True, type=int)
@click.option("--out", "out_path", default="-", help="GeoJSON output file, - for stdout")
def search(data_dir, channels, shape, cx, cy, r, half_w, half_h, threshold, bins, out_path):
    """Whole-image similarity search; writes a GeoJSON FeatureCollection."""
    if not 0.0 <= threshold <= 1.0:
        raise click.UsageError(f"--threshold must be in [0, 1], got {threshold}")
    geometry = _parse_geometry(shape, cx, cy, r, half_w, half_h)
    try:
        handle = open_dataset(data_dir)
        names = _parse_channels(handle, channels)
        settings = [ChannelRenderSetting(c, (255, 255, 255), 0, 65535) for c in names]
        cs = search_whole_image(handle, settings, geometry, threshold, bins)
    except click.UsageError:
        raise
    except Exception as e:
        _fail(e)
    _write_json(cs.to_geojson(), out_path)


@main.command("stats")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--channels", required=True, help="comma-separated channel names")
@click.option("--shape", type=click.Choice(["circle", "rectangle"]), default="circle", show_default=True)
@click.option("--cx", required=True, type=float)
@click.option("--cy", required=True, type=float)
@click.option("--r", default=None, type=float)
@click.option("--half-w", default=None, type=float)
@click.option("--half-h", default=None, type=float)
@click.option("--order", type=click.Choice(["locked", "by_count"]), default=ORDER_LOCKED, show_default=True)
@click.option("--out", "out_path", default="-", help="JSON output file, - for stdout")
def stats(data_dir, channels, shape, cx, cy, r, half_w, half_h, order, out_path):
    """Region statistics for a lens geometry, as served by /api/lens/stats."""
    geometry = _parse_geometry(shape, cx, cy, r, half_w, half_h)
    try:
        handle = open_dataset(data_dir)
        names = _parse_channels(handle, channels)
        csv_path = Path(data_dir) / "cells.csv"
        if not csv_path.exists():
            raise click.UsageError(f"dataset {data_dir} has no cells.csv")
        table = load_table(csv_path, handle.meta)
        index = SpatialIndex(table)
        result = region_stats(table, index, geometry, names,
                              handle.meta.pixel_size_um, order=order)
    except click.UsageError:
        raise
    except Exception as e:
        _fail(e)
    _write_json(stats_to_dict(result), out_path)


if __name__ == "__main__":
    main()
