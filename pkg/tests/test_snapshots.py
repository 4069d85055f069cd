import json

import numpy as np
import pytest

from tissuelens.cells import SpatialIndex, load_table
from tissuelens.contours import point_in_polygon
from tissuelens.errors import IntegrityError, RestoreError, StoreVersionError
from tissuelens.geometry import LensGeometry, RegionRect
from tissuelens.lens import LensState, render_viewport
from tissuelens.render import ChannelRenderSetting, ChannelSet
from tissuelens.snapshots import (
    SnapshotStore,
    create_snapshot,
    export_snapshot,
    extend_search,
    filter_snapshots,
    load_store,
    restore,
    save_store,
)
from tissuelens.store import open_dataset
from tissuelens.synthetic import generate_synthetic


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    out = tmp_path_factory.mktemp("snapworld") / "ds"
    generate_synthetic(out, seed=21, width=512, height=512, n_channels=2,
                       n_cells=40, n_patterns=2, tile_size=128,
                       cell_radius_range=(3.0, 7.0), pattern_size=64)
    handle = open_dataset(out)
    table = load_table(out / "cells.csv", handle.meta)
    index = SpatialIndex(table)
    manifest = json.loads((out / "manifest.json").read_text())
    return handle, table, index, manifest


def channel_set(label, *names):
    return ChannelSet(label, tuple(ChannelRenderSetting(n, (255, 80, 20), 0, 40000) for n in names))


def sample_lens(manifest, radius=30.0):
    cx, cy = manifest["pattern_centers"][0]
    return LensState(
        geometry=LensGeometry.circle(cx, cy, radius),
        lens_channel_set=channel_set("lens", "ch00", "ch01"),
        mode="multi_channel",
        magnifier="none",
    )


class TestCreate:
    def test_capture_restore_render_identical(self, world):
        handle, table, index, manifest = world
        lens = sample_lens(manifest)
        ctx = channel_set("ctx", "ch00")
        snap = create_snapshot(handle, table, index, lens, ctx, (256, 256), 1.0,
                               "finding", "details")
        viewport = RegionRect(0, 100, 100, 400, 400)
        before = render_viewport(handle, viewport, ctx, lens=lens)
        state = restore(snap, handle.meta)
        after = render_viewport(handle, viewport, state.context_channel_set, lens=state.lens)
        np.testing.assert_array_equal(before, after)

    def test_empty_region_lens_valid(self, world):
        handle, table, index, manifest = world
        # a corner far from everything still produces a valid snapshot
        lens = LensState(
            geometry=LensGeometry.circle(3, 3, 1.0),
            lens_channel_set=channel_set("lens", "ch00"),
        )
        snap = create_snapshot(handle, table, index, lens, channel_set("ctx", "ch00"),
                               (3, 3), 2.0)
        assert snap.stats.n_cells == 0 and snap.stats.empty
        assert snap.cell_ids == ()

    def test_distinct_ids(self, world):
        handle, table, index, manifest = world
        lens = sample_lens(manifest)
        ctx = channel_set("ctx", "ch01")
        a = create_snapshot(handle, table, index, lens, ctx, (0, 0), 1.0)
        b = create_snapshot(handle, table, index, lens, ctx, (0, 0), 1.0)
        assert a.id != b.id

    def test_cell_ids_sorted_and_match_fresh_query(self, world):
        handle, table, index, manifest = world
        lens = sample_lens(manifest, radius=120.0)
        snap = create_snapshot(handle, table, index, lens, channel_set("c", "ch00"), (0, 0), 1.0)
        assert list(snap.cell_ids) == sorted(snap.cell_ids)
        assert set(snap.cell_ids) == index.query(lens.geometry)

    def test_thumbnail_max_edge(self, world):
        from PIL import Image
        import io

        handle, table, index, manifest = world
        lens = sample_lens(manifest, radius=200.0)
        snap = create_snapshot(handle, table, index, lens, channel_set("c", "ch00"), (0, 0), 1.0)
        im = Image.open(io.BytesIO(snap.thumbnail_png))
        assert max(im.size) <= 256


class TestStoreRoundTrip:
    def test_save_load_deep_equality(self, world, tmp_path):
        handle, table, index, manifest = world
        store = SnapshotStore(handle.meta_hash())
        ctx = channel_set("ctx", "ch00")
        for i, r in enumerate((20.0, 45.0, 80.0)):
            lens = sample_lens(manifest, radius=r)
            store.add(create_snapshot(handle, table, index, lens, ctx, (i, i), 1.5 + i,
                                      f"title {i}", f"desc {i}"))
        p = tmp_path / "snapshots.json"
        save_store(store, p)
        loaded = load_store(p)
        assert loaded.dataset_meta_hash == store.dataset_meta_hash
        assert loaded.list() == store.list()

    def test_empty_store_round_trip(self, tmp_path):
        p = tmp_path / "empty.json"
        save_store(SnapshotStore("abc"), p)
        loaded = load_store(p)
        assert len(loaded) == 0 and loaded.dataset_meta_hash == "abc"

    def test_truncated_file_integrity_error(self, world, tmp_path):
        handle, table, index, manifest = world
        store = SnapshotStore(handle.meta_hash())
        store.add(create_snapshot(handle, table, index, sample_lens(manifest),
                                  channel_set("c", "ch00"), (0, 0), 1.0))
        p = tmp_path / "trunc.json"
        save_store(store, p)
        p.write_text(p.read_text()[: p.stat().st_size // 2])
        with pytest.raises(IntegrityError):
            load_store(p)

    def test_version_mismatch_migration_error(self, tmp_path):
        p = tmp_path / "old.json"
        p.write_text(json.dumps({"schema_version": 99, "dataset_meta_hash": "x", "snapshots": []}))
        with pytest.raises(StoreVersionError):
            load_store(p)

    def test_duplicate_id_rejected(self, world):
        handle, table, index, manifest = world
        store = SnapshotStore(handle.meta_hash())
        snap = create_snapshot(handle, table, index, sample_lens(manifest),
                               channel_set("c", "ch00"), (0, 0), 1.0)
        store.add(snap)
        with pytest.raises(IntegrityError):
            store.add(snap)


class TestFilter:
    def _store(self, world):
        handle, table, index, manifest = world
        store = SnapshotStore(handle.meta_hash())
        ctx = channel_set("ctx", "ch00")
        for title in ("PD-L1 rich region", "Tumor budding"):
            store.add(create_snapshot(handle, table, index, sample_lens(manifest),
                                      ctx, (0, 0), 1.0, title, "desc"))
        return store

    def test_empty_query_returns_all(self, world):
        store = self._store(world)
        assert len(filter_snapshots(store, "")) == 2

    def test_case_insensitive_substring(self, world):
        store = self._store(world)
        got = filter_snapshots(store, "pd-l1")
        assert len(got) == 1 and got[0].title == "PD-L1 rich region"

    def test_no_match_empty(self, world):
        store = self._store(world)
        assert filter_snapshots(store, "necrosis") == []

    def test_capture_order_stable(self, world):
        store = self._store(world)
        titles = [s.title for s in filter_snapshots(store, "")]
        assert titles == ["PD-L1 rich region", "Tumor budding"]


class TestRestore:
    def test_restore_create_inverse(self, world):
        handle, table, index, manifest = world
        lens = sample_lens(manifest)
        ctx = channel_set("ctx", "ch01")
        snap = create_snapshot(handle, table, index, lens, ctx, (111.5, 42.25), 3.5)
        state = restore(snap, handle.meta)
        assert state.lens == lens
        assert state.context_channel_set == ctx
        assert state.viewport_center == (111.5, 42.25) and state.viewport_zoom == 3.5

    def test_idempotent(self, world):
        handle, table, index, manifest = world
        snap = create_snapshot(handle, table, index, sample_lens(manifest),
                               channel_set("c", "ch00"), (0, 0), 1.0)
        assert restore(snap, handle.meta) == restore(snap, handle.meta)

    def test_missing_channel_named(self, world, tmp_path):
        handle, table, index, manifest = world
        snap = create_snapshot(handle, table, index, sample_lens(manifest),
                               channel_set("c", "ch00"), (0, 0), 1.0)
        other = tmp_path / "other"
        generate_synthetic(other, seed=3, width=64, height=64, n_channels=1,
                           n_cells=0, n_patterns=0, tile_size=64)
        other_handle = open_dataset(other)
        with pytest.raises(RestoreError, match="ch01"):
            restore(snap, other_handle.meta)


class TestExtendSearch:
    def test_provisional_snapshots_at_planted_copies(self, world):
        handle, table, index, manifest = world
        snap = create_snapshot(handle, table, index, sample_lens(manifest, radius=24.0),
                               channel_set("c", "ch00", "ch01"), (0, 0), 1.0, "seed", "")
        cs, provisional = extend_search(handle, table, index, snap, threshold=0.8, tile_px=256)
        assert provisional
        for px, py in manifest["pattern_centers"]:
            hit = any(
                point_in_polygon(px, py, poly)
                for c, poly in zip(cs.contours, cs.level0_polygons())
                if c.area_px2 > 0
            )
            assert hit, f"pattern at ({px},{py}) not found"
        # every provisional snapshot is a full snapshot with fresh stats
        for p in provisional:
            assert p.stats.n_cells == len(p.cell_ids)

    def test_threshold_one_near_empty_no_error(self, world):
        handle, table, index, manifest = world
        snap = create_snapshot(handle, table, index, sample_lens(manifest, radius=24.0),
                               channel_set("c", "ch00"), (0, 0), 1.0)
        cs, provisional = extend_search(handle, table, index, snap, threshold=1.0, tile_px=256)
        assert isinstance(provisional, list)

    def test_provisional_not_in_store(self, world):
        handle, table, index, manifest = world
        store = SnapshotStore(handle.meta_hash())
        snap = create_snapshot(handle, table, index, sample_lens(manifest, radius=24.0),
                               channel_set("c", "ch00"), (0, 0), 1.0)
        store.add(snap)
        _, provisional = extend_search(handle, table, index, snap, threshold=0.8, tile_px=256)
        ids = {s.id for s in store.list()}
        assert all(p.id not in ids for p in provisional)
        assert len(store) == 1


class TestExport:
    def test_json_png_pair(self, world, tmp_path):
        handle, table, index, manifest = world
        snap = create_snapshot(handle, table, index, sample_lens(manifest),
                               channel_set("c", "ch00"), (0, 0), 1.0, "t", "d")
        jp, pp = export_snapshot(snap, tmp_path / "exp")
        assert jp.exists() and pp.exists()
        doc = json.loads(jp.read_text())
        assert "thumbnail_png_base64" not in doc and doc["id"] == snap.id
        assert pp.read_bytes() == snap.thumbnail_png
