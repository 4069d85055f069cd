"""HTTP API over one open dataset: tiles, renders, lens stats, search, snapshots.

The service adds no computation of its own; every response is the JSON/PNG
encoding of the corresponding library call. Whole-image searches run as
background jobs so tile serving never blocks behind them.
"""

from __future__ import annotations

import io
import secrets
import threading
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from . import cells as cells_mod
from .errors import (
    BoundsError,
    CapabilityError,
    ChannelNotFoundError,
    DegenerateRangeError,
    EngineError,
    IntegrityError,
    RestoreError,
    SchemaError,
    StoreVersionError,
)
from .geometry import LensGeometry, RegionRect
from .lens import LensState, render_viewport
from .render import ChannelSet, default_type_colors
from .search import DEFAULT_BINS, search_viewport, search_whole_image
from .snapshots import (
    SnapshotStore,
    create_snapshot,
    extend_search,
    filter_snapshots,
    load_store,
    restore,
    save_store,
)
from .store import open_dataset


class ApiError(Exception):
    """Transport-level error: HTTP status plus a stable machine-readable code."""

    def __init__(self, http_status: int, code: str, message: str, detail: str | None = None):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message
        self.detail = detail


_ERROR_MAP = [
    ((SchemaError, BoundsError, DegenerateRangeError, ChannelNotFoundError, RestoreError), 400, "bad_request"),
    ((CapabilityError,), 400, "capability"),
    ((IntegrityError, StoreVersionError), 409, "integrity"),
]


def _as_api_error(e: EngineError) -> ApiError:
    for types, status, code in _ERROR_MAP:
        if isinstance(e, types):
            return ApiError(status, code, str(e))
    return ApiError(500, "integrity", f"internal engine error: {e}")


def _png(arr: np.ndarray) -> Response:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def _require_fields(body: dict, *names: str):
    if not isinstance(body, dict):
        raise ApiError(400, "bad_request", "body: expected a JSON object")
    for n in names:
        if n not in body:
            raise ApiError(400, "bad_request", f"body.{n}: missing required field")


def _parse_viewport(d: dict, meta) -> RegionRect:
    if not isinstance(d, dict):
        raise SchemaError("viewport: expected object")
    for k in ("level", "x0", "y0", "x1", "y1"):
        if not isinstance(d.get(k), int):
            raise SchemaError(f"viewport.{k}: expected integer")
    rect = RegionRect(d["level"], d["x0"], d["y0"], d["x1"], d["y1"])
    w, h = meta.level_size(rect.level)
    if not (0 <= rect.x0 and rect.x1 <= w and 0 <= rect.y0 and rect.y1 <= h):
        raise BoundsError(f"viewport: rect outside level {rect.level} plane {w}x{h}")
    return rect


def _parse_search_channels(raw, meta) -> list:
    from .render import ChannelRenderSetting

    if not isinstance(raw, list) or not raw:
        raise SchemaError("channels: expected a non-empty array")
    settings = []
    for i, entry in enumerate(raw):
        if isinstance(entry, str):
            settings.append(ChannelRenderSetting(entry, (255, 255, 255), 0, 65535))
        else:
            settings.append(ChannelRenderSetting.from_json_dict(entry, f"channels[{i}]"))
    for s in settings:
        if s.channel not in meta.channel_names:
            raise SchemaError(f"channels: unknown channel {s.channel!r}")
    return settings


class SearchJobs:
    """Background whole-image searches keyed by job id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def submit(self, fn) -> str:
        job_id = secrets.token_hex(8)
        with self._lock:
            self._jobs[job_id] = {"state": "pending"}

        def run():
            try:
                result = fn()
                with self._lock:
                    self._jobs[job_id] = {"state": "done", "result": result}
            except Exception as e:  # surfaced through the poll endpoint
                with self._lock:
                    self._jobs[job_id] = {"state": "failed", "error": str(e)}

        threading.Thread(target=run, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job is not None else None


def create_app(
    data_dir: str | Path | None,
    snapshots_path: str | Path | None = None,
    cors_origins: list[str] | None = None,
) -> FastAPI:
    app = FastAPI(title="tissuelens", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    st = app.state
    st.handle = None
    st.table = None
    st.index = None
    st.cell_types = {}
    st.jobs = SearchJobs()
    st.store = None
    st.store_path = None
    st.store_lock = threading.Lock()

    if data_dir is not None:
        data_dir = Path(data_dir)
        st.handle = open_dataset(data_dir)
        csv_path = data_dir / "cells.csv"
        if csv_path.exists():
            st.table = cells_mod.load_table(csv_path, st.handle.meta)
            st.index = cells_mod.SpatialIndex(st.table)
            if st.table.types is not None:
                st.cell_types = {
                    int(i): t for i, t in zip(st.table.ids, st.table.types) if t
                }
        st.store_path = Path(snapshots_path) if snapshots_path else data_dir / "snapshots.json"
        if st.store_path.exists():
            st.store = load_store(st.store_path)
        else:
            st.store = SnapshotStore(st.handle.meta_hash())

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        return await api_error_handler(request, _as_api_error(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "bad_request", "message": "malformed request body", "detail": str(exc)},
        )

    def need_handle():
        if st.handle is None:
            raise ApiError(404, "not_found", "no dataset loaded")
        return st.handle

    def need_table():
        if st.table is None or st.index is None:
            raise ApiError(400, "capability", "dataset has no cells.csv; single-cell stats unavailable")
        return st.table, st.index

    def persist_store():
        with st.store_lock:
            save_store(st.store, st.store_path)

    # ------------------------------------------------------------ dataset

    @app.get("/api/meta")
    def get_meta():
        return need_handle().meta.to_json_dict()

    @app.get("/api/tile/{channel}/{level}/{tx}/{ty}")
    def get_tile(channel: str, level: int, tx: int, ty: int):
        handle = need_handle()
        meta = handle.meta
        if channel not in meta.channel_names:
            raise ApiError(404, "not_found", f"unknown channel {channel!r}")
        if not 0 <= level < meta.levels:
            raise ApiError(404, "not_found", f"level {level} outside 0..{meta.levels - 1}")
        w, h = meta.level_size(level)
        t = meta.tile_size
        if not (0 <= tx < -(-w // t) and 0 <= ty < -(-h // t)):
            raise ApiError(404, "not_found", f"tile ({tx},{ty}) outside level {level}")
        rect = RegionRect(level, tx * t, ty * t, min((tx + 1) * t, w), min((ty + 1) * t, h))
        return _png(handle.read_region(channel, rect))

    # ------------------------------------------------------------ rendering

    @app.post("/api/render")
    def post_render(body: dict = Body(...)):
        handle = need_handle()
        _require_fields(body, "viewport", "context")
        viewport = _parse_viewport(body["viewport"], handle.meta)
        context = ChannelSet.from_json_dict(body["context"], "context")
        for s in context.settings:
            if s.channel not in handle.meta.channel_names:
                raise SchemaError(f"context: unknown channel {s.channel!r}")
        lens = None
        if body.get("lens") is not None:
            lens = LensState.from_json_dict(body["lens"], "lens")
            for s in lens.lens_channel_set.settings:
                if s.channel not in handle.meta.channel_names:
                    raise SchemaError(f"lens: unknown channel {s.channel!r}")
        type_colors = None
        if isinstance(body.get("type_colors"), dict):
            type_colors = {
                t: tuple(int(c) for c in rgb) for t, rgb in body["type_colors"].items()
            }
        elif st.cell_types:
            type_colors = default_type_colors(st.cell_types.values())
        rgba = render_viewport(
            handle, viewport, context, lens=lens,
            cell_types=st.cell_types, type_colors=type_colors,
        )
        return _png(rgba)

    # ------------------------------------------------------------ lens stats

    def _parse_geometry_params(shape: str, cx: float, cy: float, r: float | None,
                               half_w: float | None, half_h: float | None) -> LensGeometry:
        if shape == "circle":
            if r is None:
                raise SchemaError("r: required for circle geometry")
            return LensGeometry.circle(cx, cy, r)
        if shape == "rectangle":
            if half_w is None or half_h is None:
                raise SchemaError("half_w/half_h: required for rectangle geometry")
            return LensGeometry.rectangle(cx, cy, half_w, half_h)
        raise SchemaError(f"shape: expected 'circle' or 'rectangle', got {shape!r}")

    @app.get("/api/lens/stats")
    def get_lens_stats(
        shape: str = "circle",
        cx: float = 0.0,
        cy: float = 0.0,
        r: float | None = None,
        half_w: float | None = None,
        half_h: float | None = None,
        channels: str = "",
        mode: str = "histogram",
        order: str = cells_mod.ORDER_LOCKED,
    ):
        handle = need_handle()
        table, index = need_table()
        geometry = _parse_geometry_params(shape, cx, cy, r, half_w, half_h)
        wanted = [c for c in channels.split(",") if c] if channels else []
        stats = cells_mod.region_stats(
            table, index, geometry, wanted, handle.meta.pixel_size_um, order=order
        )
        return cells_mod.stats_to_dict(stats)

    @app.get("/api/lens/brush")
    def get_lens_brush(
        shape: str = "circle",
        cx: float = 0.0,
        cy: float = 0.0,
        r: float | None = None,
        half_w: float | None = None,
        half_h: float | None = None,
        channel: str = "",
        lo: float = 0.0,
        hi: float = 0.0,
    ):
        table, index = need_table()
        geometry = _parse_geometry_params(shape, cx, cy, r, half_w, half_h)
        ids = sorted(index.query(geometry))
        kept = cells_mod.brush_filter(table, ids, channel, lo, hi)
        return {"cell_ids": sorted(int(i) for i in kept)}

    # ------------------------------------------------------------ search

    @app.post("/api/search")
    def post_search(body: dict = Body(...)):
        handle = need_handle()
        _require_fields(body, "geometry", "channels", "scope")
        geometry = LensGeometry.from_json_dict(body["geometry"])
        settings = _parse_search_channels(body["channels"], handle.meta)
        threshold = body.get("threshold", 0.8)
        if not isinstance(threshold, (int, float)) or not 0.0 <= threshold <= 1.0:
            raise SchemaError(f"threshold: expected number in [0, 1], got {threshold!r}")
        bins = body.get("bins", DEFAULT_BINS)
        scope = body["scope"]
        if scope == "viewport":
            _require_fields(body, "viewport")
            viewport = _parse_viewport(body["viewport"], handle.meta)
            cs = search_viewport(handle, settings, viewport, geometry, float(threshold), bins)
            return cs.to_geojson()
        if scope == "whole":
            job_id = st.jobs.submit(
                lambda: search_whole_image(handle, settings, geometry, float(threshold), bins).to_geojson()
            )
            return {"job_id": job_id, "state": "pending"}
        raise SchemaError(f"scope: expected 'viewport' or 'whole', got {scope!r}")

    @app.get("/api/search/{job_id}")
    def get_search_job(job_id: str):
        job = st.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "not_found", f"unknown search job {job_id!r}")
        return {"job_id": job_id, **job}

    # ------------------------------------------------------------ snapshots

    @app.get("/api/snapshots")
    def list_snapshots(query: str = ""):
        need_handle()
        snaps = filter_snapshots(st.store, query)
        return {"snapshots": [s.to_json_dict() for s in snaps]}

    @app.post("/api/snapshots")
    def create_snapshot_endpoint(body: dict = Body(...)):
        handle = need_handle()
        table, index = need_table()
        _require_fields(body, "lens", "context", "viewport")
        lens = LensState.from_json_dict(body["lens"], "lens")
        context = ChannelSet.from_json_dict(body["context"], "context")
        vp = body["viewport"]
        if not (isinstance(vp, dict) and isinstance(vp.get("center"), list) and len(vp["center"]) == 2):
            raise SchemaError("viewport.center: expected [x, y]")
        if not isinstance(vp.get("zoom"), (int, float)):
            raise SchemaError("viewport.zoom: expected number")
        snap = create_snapshot(
            handle, table, index, lens, context,
            (float(vp["center"][0]), float(vp["center"][1])), float(vp["zoom"]),
            title=str(body.get("title", "")), description=str(body.get("description", "")),
        )
        st.store.add(snap)
        persist_store()
        return snap.to_json_dict()

    def need_snapshot(snapshot_id: str):
        snap = st.store.get(snapshot_id) if st.store else None
        if snap is None:
            raise ApiError(404, "not_found", f"unknown snapshot {snapshot_id!r}")
        return snap

    @app.get("/api/snapshots/{snapshot_id}")
    def get_snapshot(snapshot_id: str):
        need_handle()
        return need_snapshot(snapshot_id).to_json_dict()

    @app.patch("/api/snapshots/{snapshot_id}")
    def patch_snapshot(snapshot_id: str, body: dict = Body(...)):
        need_handle()
        need_snapshot(snapshot_id)
        updated = st.store.update_annotation(
            snapshot_id,
            title=body.get("title"),
            description=body.get("description"),
        )
        persist_store()
        return updated.to_json_dict()

    @app.delete("/api/snapshots/{snapshot_id}")
    def delete_snapshot(snapshot_id: str):
        need_handle()
        need_snapshot(snapshot_id)
        st.store.remove(snapshot_id)
        persist_store()
        return {"deleted": snapshot_id}

    @app.get("/api/snapshots/{snapshot_id}/restore")
    def restore_snapshot(snapshot_id: str):
        handle = need_handle()
        snap = need_snapshot(snapshot_id)
        if st.store.dataset_meta_hash != handle.meta_hash():
            raise ApiError(
                409, "integrity",
                "snapshot store was captured on a different dataset; stats cannot be trusted",
            )
        return restore(snap, handle.meta).to_json_dict()

    @app.post("/api/snapshots/{snapshot_id}/extend_search")
    def extend_snapshot_search(snapshot_id: str, body: dict = Body(default={})):
        handle = need_handle()
        table, index = need_table()
        snap = need_snapshot(snapshot_id)
        threshold = body.get("threshold", 0.8)
        if not isinstance(threshold, (int, float)) or not 0.0 <= threshold <= 1.0:
            raise SchemaError(f"threshold: expected number in [0, 1], got {threshold!r}")
        cs, provisional = extend_search(handle, table, index, snap, float(threshold))
        return {
            "contours": cs.to_geojson(),
            "provisional": [p.to_json_dict() for p in provisional],
        }

    return app
