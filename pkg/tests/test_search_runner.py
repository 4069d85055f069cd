import json

import numpy as np
import pytest

from tissuelens.contours import point_in_polygon
from tissuelens.errors import SchemaError
from tissuelens.geometry import LensGeometry, RegionRect
from tissuelens.render import ChannelRenderSetting
from tissuelens.search import (
    search_viewport,
    search_whole_image,
    whole_image_similarity,
)
from tissuelens.store import open_dataset
from tissuelens.synthetic import generate_synthetic


def settings_for(handle, channels):
    return [ChannelRenderSetting(c, (255, 255, 255), 0, 65535) for c in channels]


def covering_contours(contour_set, x, y):
    return [
        poly for c, poly in zip(contour_set.contours, contour_set.level0_polygons())
        if c.area_px2 > 0 and point_in_polygon(x, y, poly)
    ]


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    out = tmp_path_factory.mktemp("planted") / "ds"
    generate_synthetic(out, seed=99, width=1024, height=1024, n_channels=2,
                       n_cells=60, n_patterns=3, tile_size=256,
                       cell_radius_range=(4.0, 9.0), pattern_size=96)
    handle = open_dataset(out)
    manifest = json.loads((out / "manifest.json").read_text())
    return handle, manifest


class TestViewportSearch:
    def test_contour_covers_planted_center(self, planted):
        handle, manifest = planted
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 32)
        viewport = RegionRect(0, max(0, cx - 300), max(0, cy - 300),
                              min(1024, cx + 300), min(1024, cy + 300))
        cs = search_viewport(handle, settings_for(handle, manifest["channels"]),
                             viewport, lens, threshold=0.8)
        assert covering_contours(cs, cx, cy)

    def test_scale_robustness_across_levels(self, planted):
        handle, manifest = planted
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 32)
        hits = []
        for level in (0, 1):
            w, h = handle.meta.level_size(level)
            cs = search_viewport(handle, settings_for(handle, manifest["channels"]),
                                 RegionRect(level, 0, 0, w, h), lens, threshold=0.8)
            hits.append(bool(covering_contours(cs, cx, cy)))
        assert all(hits)

    def test_viewport_without_patterns_empty(self, planted):
        handle, manifest = planted
        centers = np.array(manifest["pattern_centers"], dtype=float)
        # find a far-away quadrant corner
        corners = [(128, 128), (896, 128), (128, 896), (896, 896)]
        far = max(corners, key=lambda c: np.min(np.hypot(centers[:, 0] - c[0], centers[:, 1] - c[1])))
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 32)
        viewport = RegionRect(0, far[0] - 128, far[1] - 128, far[0] + 128, far[1] + 128)
        cs = search_viewport(handle, settings_for(handle, manifest["channels"]),
                             viewport, lens, threshold=0.9)
        assert not [c for c in cs.contours if c.area_px2 > 4]

    def test_threshold_zero_covers_valid_region(self, planted):
        handle, manifest = planted
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 16)
        viewport = RegionRect(0, cx - 100, cy - 100, cx + 100, cy + 100)
        cs = search_viewport(handle, settings_for(handle, manifest["channels"][:1]),
                             viewport, lens, threshold=0.0)
        assert len([c for c in cs.contours if c.area_px2 > 0]) == 1
        # covers the viewport center in level-0 coordinates
        assert covering_contours(cs, cx, cy)


class TestWholeImageSearch:
    def test_recall_on_planted_patterns(self, planted):
        handle, manifest = planted
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 36)
        cs = search_whole_image(handle, settings_for(handle, manifest["channels"]),
                                lens, threshold=0.8, tile_px=512)
        for px, py in manifest["pattern_centers"]:
            assert covering_contours(cs, px, py), f"pattern at ({px},{py}) missed"
        # false positives: positive contours covering no pattern center
        fp = 0
        for c, poly in zip(cs.contours, cs.level0_polygons()):
            if c.area_px2 <= 0:
                continue
            if not any(point_in_polygon(px, py, poly) for px, py in manifest["pattern_centers"]):
                fp += 1
        assert fp <= 2

    def test_tiled_equals_untiled_bit_for_bit(self, tmp_path):
        out = tmp_path / "ds512"
        generate_synthetic(out, seed=5, width=512, height=512, n_channels=2,
                           n_cells=30, n_patterns=2, tile_size=128,
                           cell_radius_range=(3.0, 7.0), pattern_size=64)
        handle = open_dataset(out)
        manifest = json.loads((out / "manifest.json").read_text())
        cx, cy = manifest["pattern_centers"][0]
        lens = LensGeometry.circle(cx, cy, 24)
        settings = settings_for(handle, manifest["channels"])
        tiled = whole_image_similarity(handle, settings, lens, tile_px=128)
        untiled = whole_image_similarity(handle, settings, lens, tile_px=None)
        np.testing.assert_array_equal(tiled.valid, untiled.valid)
        np.testing.assert_array_equal(tiled.values[tiled.valid], untiled.values[untiled.valid])
        a = search_whole_image(handle, settings, lens, threshold=0.8, tile_px=128)
        b = search_whole_image(handle, settings, lens, threshold=0.8, tile_px=None)
        assert json.dumps(a.to_geojson(), sort_keys=True) == json.dumps(b.to_geojson(), sort_keys=True)

    def test_empty_channel_selection_rejected(self, planted):
        handle, _ = planted
        with pytest.raises(SchemaError):
            search_whole_image(handle, [], LensGeometry.circle(100, 100, 10))
