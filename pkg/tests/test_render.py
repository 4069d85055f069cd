import numpy as np
import pytest

from tissuelens.errors import SchemaError
from tissuelens.render import (
    ChannelRenderSetting,
    ChannelSet,
    composite,
    map_intensity,
    render_cell_boundaries,
)


def scalar_composite_oracle(planes, cset):
    h, w = planes[0].shape
    out = np.zeros((h, w, 3), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            acc = [0, 0, 0]
            for plane, setting in zip(planes, cset.settings):
                rgb = map_intensity(int(plane[y, x]), setting)
                acc = [a + c for a, c in zip(acc, rgb)]
            out[y, x] = [min(a, 255) for a in acc]
    return out


def boundary_oracle(mask):
    h, w = mask.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] != mask[y, x]:
                    out[y, x] = True
    return out


class TestMapIntensity:
    def test_clamp_floor(self):
        s = ChannelRenderSetting("a", (255, 10, 3), 100, 200)
        assert map_intensity(100, s) == (0, 0, 0)
        assert map_intensity(5, s) == (0, 0, 0)

    def test_clamp_ceiling(self):
        s = ChannelRenderSetting("a", (255, 0, 0), 100, 200)
        assert map_intensity(200, s) == (255, 0, 0)
        assert map_intensity(65535, s) == (255, 0, 0)

    def test_midpoint_formula(self):
        s = ChannelRenderSetting("a", (200, 100, 0), 0, 200)
        assert map_intensity(100, s) == (100, 50, 0)

    def test_invalid_range_rejected(self):
        with pytest.raises(SchemaError):
            ChannelRenderSetting("a", (1, 2, 3), 10, 10)


class TestComposite:
    def test_additive_clamp(self):
        red = ChannelRenderSetting("r", (255, 0, 0), 0, 100)
        blue = ChannelRenderSetting("b", (0, 0, 255), 0, 100)
        cset = ChannelSet("rb", (red, blue))
        planes = [np.full((2, 2), 100, np.uint16), np.full((2, 2), 100, np.uint16)]
        out = composite(planes, cset)
        assert (out == (255, 0, 255)).all()

    def test_single_channel_equals_map(self):
        s = ChannelRenderSetting("a", (10, 250, 99), 50, 5000)
        plane = np.array([[0, 60], [700, 65535]], np.uint16)
        out = composite([plane], ChannelSet("one", (s,)))
        for y in range(2):
            for x in range(2):
                assert tuple(out[y, x]) == map_intensity(int(plane[y, x]), s)

    def test_random_equals_scalar_oracle(self):
        rng = np.random.default_rng(0)
        settings = tuple(
            ChannelRenderSetting(f"c{i}", tuple(int(v) for v in rng.integers(0, 256, 3)),
                                 int(rng.integers(0, 100)), int(rng.integers(200, 60000)))
            for i in range(3)
        )
        cset = ChannelSet("rand", settings)
        planes = [rng.integers(0, 65536, (16, 16)).astype(np.uint16) for _ in range(3)]
        np.testing.assert_array_equal(composite(planes, cset), scalar_composite_oracle(planes, cset))

    def test_order_independent(self):
        rng = np.random.default_rng(1)
        settings = [
            ChannelRenderSetting(f"c{i}", tuple(int(v) for v in rng.integers(0, 256, 3)), 0, 30000)
            for i in range(3)
        ]
        planes = [rng.integers(0, 65536, (8, 8)).astype(np.uint16) for _ in range(3)]
        a = composite(planes, ChannelSet("s", tuple(settings)))
        perm = [2, 0, 1]
        b = composite([planes[i] for i in perm], ChannelSet("s", tuple(settings[i] for i in perm)))
        np.testing.assert_array_equal(a, b)

    def test_dim_mismatch(self):
        s = ChannelRenderSetting("a", (1, 1, 1), 0, 10)
        t = ChannelRenderSetting("b", (1, 1, 1), 0, 10)
        with pytest.raises(SchemaError):
            composite([np.zeros((2, 2), np.uint16), np.zeros((3, 2), np.uint16)],
                      ChannelSet("ab", (s, t)))

    def test_duplicate_channels_rejected(self):
        s = ChannelRenderSetting("a", (1, 1, 1), 0, 10)
        with pytest.raises(SchemaError):
            ChannelSet("dup", (s, s))


class TestCellBoundaries:
    def test_background_transparent(self):
        mask = np.zeros((10, 10), np.uint32)
        out = render_cell_boundaries(mask, {}, {})
        assert (out == 0).all()

    def test_disk_ring_matches_oracle(self):
        yy, xx = np.mgrid[0:20, 0:20]
        mask = (((xx - 10) ** 2 + (yy - 10) ** 2) <= 36).astype(np.uint32) * 5
        out = render_cell_boundaries(mask, {5: "tumor"}, {"tumor": (9, 8, 7)})
        expect = boundary_oracle(mask)
        np.testing.assert_array_equal(out[..., 3] == 255, expect)
        assert (out[expect][:, :3] == (9, 8, 7)).all()

    def test_two_adjacent_cells_both_outlined(self):
        mask = np.zeros((6, 8), np.uint32)
        mask[1:5, 1:4] = 1
        mask[1:5, 4:7] = 2
        out = render_cell_boundaries(mask, {1: "a", 2: "b"}, {"a": (1, 0, 0), "b": (0, 1, 0)})
        expect = boundary_oracle(mask)
        np.testing.assert_array_equal(out[..., 3] == 255, expect)
        # pixels on the shared edge are boundaries of both cells
        assert out[2, 3, 3] == 255 and out[2, 4, 3] == 255

    def test_unknown_type_gets_fallback_grey(self):
        mask = np.zeros((4, 4), np.uint32)
        mask[1:3, 1:3] = 9
        out = render_cell_boundaries(mask, {9: "mystery"}, {"known": (1, 2, 3)})
        sel = out[..., 3] == 255
        assert sel.any() and (out[sel][:, :3] == (128, 128, 128)).all()
