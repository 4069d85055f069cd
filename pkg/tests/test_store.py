import json

import numpy as np
import pytest

from tissuelens.errors import (
    BoundsError,
    CapabilityError,
    ChannelNotFoundError,
    IntegrityError,
    SchemaError,
)
from tissuelens.geometry import RegionRect
from tissuelens.store import (
    ChannelMeta,
    downsample_intensity,
    downsample_mask,
    level_size,
    make_meta,
    open_dataset,
    parse_meta,
    pyramid_levels,
    write_dataset,
)


def oracle_downsample_intensity(plane):
    """Scalar 2x2 mean with round-half-up, odd edges excluded."""
    h, w = plane.shape
    out = np.zeros((-(-h // 2), -(-w // 2)), dtype=plane.dtype)
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            block = plane[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].astype(np.int64).ravel()
            s, k = int(block.sum()), len(block)
            out[y, x] = (2 * s + k) // (2 * k)
    return out


def oracle_downsample_mask(plane):
    h, w = plane.shape
    out = np.zeros((-(-h // 2), -(-w // 2)), dtype=plane.dtype)
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            block = plane[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].ravel()
            nz = block[block != 0]
            if len(nz) == 0:
                out[y, x] = 0
                continue
            vals, counts = np.unique(nz, return_counts=True)
            out[y, x] = vals[counts == counts.max()].min()
    return out


class TestLevels:
    def test_crc1_dimensions_give_six_levels(self):
        # ceil chain 27120 -> 13560 -> 6780 -> 3390 -> 1695 -> 848
        assert pyramid_levels(26139, 27120, 1024) == 6

    def test_level_dims_follow_ceil_chain(self):
        dims = [level_size(26139, 27120, l)[1] for l in range(6)]
        assert dims == [27120, 13560, 6780, 3390, 1695, 848]

    def test_small_image_single_level(self):
        assert pyramid_levels(100, 50, 1024) == 1

    def test_exact_power_of_two(self):
        assert pyramid_levels(2048, 1024, 1024) == 2


class TestDownsampling:
    def test_intensity_block_examples(self):
        plane = np.array([[10, 20], [30, 40]], dtype=np.uint16)
        assert downsample_intensity(plane)[0, 0] == 25
        # half-up rounding
        plane = np.array([[1, 2], [0, 0]], dtype=np.uint16)
        assert downsample_intensity(plane)[0, 0] == 1  # mean 0.75 -> 1
        plane = np.array([[1, 0], [0, 0]], dtype=np.uint16)
        assert downsample_intensity(plane)[0, 0] == 0  # mean 0.25 -> 0
        plane = np.array([[1, 1], [0, 0]], dtype=np.uint16)
        assert downsample_intensity(plane)[0, 0] == 1  # mean 0.5 -> 1

    def test_mask_block_examples(self):
        assert downsample_mask(np.array([[5, 5], [7, 0]], dtype=np.uint32))[0, 0] == 5
        assert downsample_mask(np.array([[3, 9], [0, 0]], dtype=np.uint32))[0, 0] == 3
        assert downsample_mask(np.array([[0, 0], [0, 0]], dtype=np.uint32))[0, 0] == 0

    def test_intensity_matches_oracle_random(self):
        rng = np.random.default_rng(0)
        for h, w in [(8, 8), (7, 9), (1, 5), (13, 1), (16, 10)]:
            plane = rng.integers(0, 65536, (h, w)).astype(np.uint16)
            np.testing.assert_array_equal(downsample_intensity(plane), oracle_downsample_intensity(plane))

    def test_mask_matches_oracle_random(self):
        rng = np.random.default_rng(1)
        for h, w in [(8, 8), (7, 9), (1, 5), (13, 1), (16, 10)]:
            plane = rng.integers(0, 5, (h, w)).astype(np.uint32)
            np.testing.assert_array_equal(downsample_mask(plane), oracle_downsample_mask(plane))

    def test_mask_never_invents_labels_exhaustive_small(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            plane = rng.integers(0, 4, (6, 6)).astype(np.uint32)
            down = downsample_mask(plane)
            for y in range(down.shape[0]):
                for x in range(down.shape[1]):
                    block = plane[2 * y : 2 * y + 2, 2 * x : 2 * x + 2].ravel()
                    assert down[y, x] in set(block.tolist()) | ({0} if (block == 0).all() else set())


class TestMetaSchema:
    def test_missing_field_names_path(self):
        with pytest.raises(SchemaError, match="tile_size"):
            parse_meta({"width_px": 10, "height_px": 10, "pixel_size_um": 1.0,
                        "levels": 1, "channels": [], "has_mask": False})

    def test_duplicate_channel_names(self):
        with pytest.raises(SchemaError, match=r"channels\[1\].name"):
            parse_meta({"width_px": 10, "height_px": 10, "pixel_size_um": 1.0, "tile_size": 16,
                        "levels": 1, "channels": [{"name": "a"}, {"name": "a"}], "has_mask": False})

    def test_levels_must_match_formula(self):
        with pytest.raises(SchemaError, match="levels"):
            parse_meta({"width_px": 100, "height_px": 100, "pixel_size_um": 1.0, "tile_size": 16,
                        "levels": 2, "channels": [{"name": "a"}], "has_mask": False})

    def test_meta_json_round_trip(self, small_handle):
        d = small_handle.meta.to_json_dict()
        assert parse_meta(json.loads(json.dumps(d))) == small_handle.meta


class TestOpenDataset:
    def test_open_exposes_meta(self, small_handle):
        assert len(small_handle.meta.channels) == 3
        assert small_handle.meta.has_mask

    def test_missing_meta_json(self, tmp_path):
        with pytest.raises(SchemaError, match="meta.json"):
            open_dataset(tmp_path)

    def test_open_performs_no_tile_io(self, small_dataset):
        out, _, _ = small_dataset
        h = open_dataset(out)
        assert h.cache_info()["tiles_loaded"] == 0

    def test_corrupt_tile_named_in_error(self, small_dataset, tmp_path):
        import shutil

        out, _, _ = small_dataset
        bad = tmp_path / "bad_ds"
        shutil.copytree(out, bad)
        victim = bad / "channels" / "ch00" / "0" / "0_0.bin"
        victim.write_bytes(victim.read_bytes()[:-2])
        h = open_dataset(bad)
        with pytest.raises(IntegrityError, match="0_0.bin"):
            h.read_region("ch00", RegionRect(0, 0, 0, 10, 10))


class TestReadRegion:
    def test_full_tile_aligned_is_stored_tile(self, small_dataset, small_handle):
        out, planes, _ = small_dataset
        got = small_handle.read_region("ch01", RegionRect(0, 64, 64, 128, 128))
        raw = (out / "channels" / "ch01" / "0" / "1_1.bin").read_bytes()
        assert got.tobytes() == raw

    def test_regions_match_plane_slices(self, small_dataset, small_handle):
        _, planes, _ = small_dataset
        rng = np.random.default_rng(3)
        for _ in range(40):
            x0 = int(rng.integers(0, 299)); x1 = int(rng.integers(x0 + 1, 301))
            y0 = int(rng.integers(0, 199)); y1 = int(rng.integers(y0 + 1, 201))
            got = small_handle.read_region("ch00", RegionRect(0, x0, y0, x1, y1))
            np.testing.assert_array_equal(got, planes["ch00"][y0:y1, x0:x1])

    def test_region_straddling_four_tiles(self, small_dataset, small_handle):
        _, planes, _ = small_dataset
        got = small_handle.read_region("ch02", RegionRect(0, 60, 60, 70, 70))
        np.testing.assert_array_equal(got, planes["ch02"][60:70, 60:70])

    def test_single_pixel(self, small_dataset, small_handle):
        _, planes, _ = small_dataset
        got = small_handle.read_region("ch00", RegionRect(0, 33, 44, 34, 45))
        assert got.shape == (1, 1) and got[0, 0] == planes["ch00"][44, 33]

    def test_out_of_bounds_rejected(self, small_handle):
        with pytest.raises(BoundsError):
            small_handle.read_region("ch00", RegionRect(0, 0, 0, 301, 10))

    def test_unknown_channel(self, small_handle):
        with pytest.raises(ChannelNotFoundError):
            small_handle.read_region("nope", RegionRect(0, 0, 0, 1, 1))

    def test_repeatable(self, small_handle):
        r = RegionRect(0, 10, 10, 90, 90)
        a = small_handle.read_region("ch00", r)
        b = small_handle.read_region("ch00", r)
        np.testing.assert_array_equal(a, b)


class TestMaskRegion:
    def test_background_all_zero(self, small_handle):
        got = small_handle.read_mask_region(RegionRect(0, 250, 150, 280, 190))
        assert (got == 0).all()

    def test_planted_cell_id(self, small_handle):
        got = small_handle.read_mask_region(RegionRect(0, 35, 25, 36, 26))
        assert got[0, 0] == 7

    def test_capability_error_without_mask(self, tmp_path):
        plane = np.zeros((10, 10), dtype=np.uint16)
        meta = make_meta(10, 10, 1.0, [ChannelMeta("a")], has_mask=False, tile_size=16)
        write_dataset(tmp_path / "ds", meta, {"a": plane})
        h = open_dataset(tmp_path / "ds")
        with pytest.raises(CapabilityError):
            h.read_mask_region(RegionRect(0, 0, 0, 1, 1))


class TestPyramidLevels:
    def test_every_level_pair_satisfies_mean_rule(self, small_handle):
        for name in small_handle.meta.channel_names:
            for lvl in range(small_handle.meta.levels - 1):
                fine = small_handle.read_full_level(name, lvl)
                coarse = small_handle.read_full_level(name, lvl + 1)
                np.testing.assert_array_equal(coarse, oracle_downsample_intensity(fine))

    def test_mask_levels_satisfy_majority_rule(self, small_handle):
        w, h = small_handle.meta.level_size(0)
        fine = small_handle.read_mask_region(RegionRect(0, 0, 0, w, h))
        for lvl in range(small_handle.meta.levels - 1):
            w2, h2 = small_handle.meta.level_size(lvl + 1)
            coarse = small_handle.read_mask_region(RegionRect(lvl + 1, 0, 0, w2, h2))
            np.testing.assert_array_equal(coarse, oracle_downsample_mask(fine))
            fine = coarse

    def test_dimension_mismatch_rejected(self, tmp_path):
        meta = make_meta(10, 10, 1.0, [ChannelMeta("a")], has_mask=False, tile_size=16)
        with pytest.raises(SchemaError):
            write_dataset(tmp_path / "ds", meta, {"a": np.zeros((5, 10), dtype=np.uint16)})


class TestCacheBound:
    def test_cache_never_exceeds_configured_tiles(self, small_dataset):
        out, _, _ = small_dataset
        h = open_dataset(out, cache_tiles=4)
        rng = np.random.default_rng(4)
        for _ in range(60):
            x0 = int(rng.integers(0, 290)); y0 = int(rng.integers(0, 190))
            h.read_region("ch00", RegionRect(0, x0, y0, x0 + 10, y0 + 10))
        info = h.cache_info()
        assert all(v <= 4 for v in info["per_source"].values())
        assert info["tiles_loaded"] > 4  # evictions happened, reads stayed correct

    def test_concurrent_reads_match_oracle(self, small_dataset):
        import concurrent.futures

        out, planes, _ = small_dataset
        h = open_dataset(out, cache_tiles=8)
        rng = np.random.default_rng(5)
        rects = []
        for _ in range(80):
            x0 = int(rng.integers(0, 280)); y0 = int(rng.integers(0, 180))
            rects.append(RegionRect(0, x0, y0, x0 + 15, y0 + 15))
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as ex:
            results = list(ex.map(lambda r: h.read_region("ch01", r), rects))
        for r, got in zip(rects, results):
            np.testing.assert_array_equal(got, planes["ch01"][r.y0 : r.y1, r.x0 : r.x1])
