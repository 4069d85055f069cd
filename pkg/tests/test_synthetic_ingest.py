import csv
import filecmp
from pathlib import Path

import numpy as np
import pytest

from tissuelens.errors import DensityError, IntegrityError, SchemaError
from tissuelens.geometry import RegionRect
from tissuelens.ingest import export_flat, ingest
from tissuelens.store import open_dataset
from tissuelens.synthetic import generate_synthetic


def _dir_identical(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    (_, mismatch, errors) = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(_dir_identical(a / d, b / d) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "ds"
    generate_synthetic(out, seed=42, width=256, height=192, n_channels=3,
                       n_cells=25, n_patterns=0, tile_size=64)
    return out


class TestGenerate:
    def test_same_seed_bit_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            generate_synthetic(d, seed=7, width=128, height=96, n_channels=2,
                               n_cells=10, n_patterns=1, tile_size=64, pattern_size=24,
                               cell_radius_range=(3.0, 6.0))
        assert _dir_identical(a, b)

    def test_csv_means_match_mask_recount(self, synth):
        h = open_dataset(synth)
        w, hh = h.meta.level_size(0)
        mask = h.read_mask_region(RegionRect(0, 0, 0, w, hh))
        planes = {n: h.read_region(n, RegionRect(0, 0, 0, w, hh)) for n in h.meta.channel_names}
        with open(synth / "cells.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 25
        for row in rows:
            sel = mask == int(row["CellID"])
            assert sel.any()
            for name in h.meta.channel_names:
                assert float(row[name]) == float(np.mean(planes[name][sel]))

    def test_zero_cells_header_only(self, tmp_path):
        out = tmp_path / "empty"
        generate_synthetic(out, seed=1, width=64, height=64, n_channels=2,
                           n_cells=0, n_patterns=0, tile_size=64)
        lines = (out / "cells.csv").read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("CellID,X,Y,ch00,ch01")

    def test_infeasible_density_rejected(self, tmp_path):
        with pytest.raises(DensityError):
            generate_synthetic(tmp_path / "dense", seed=1, width=64, height=64,
                               n_channels=1, n_cells=500, n_patterns=0, tile_size=64)

    def test_cells_csv_xy_match_manifest(self, synth):
        import json

        manifest = json.loads((synth / "manifest.json").read_text())
        with open(synth / "cells.csv", newline="") as f:
            rows = {int(r["CellID"]): r for r in csv.DictReader(f)}
        for cell in manifest["cells"]:
            row = rows[cell["cell_id"]]
            assert float(row["X"]) == cell["x"] and float(row["Y"]) == cell["y"]
            assert row["CellType"] == cell["cell_type"]


class TestIngest:
    def test_round_trip_identical_pyramids(self, synth, tmp_path):
        h = open_dataset(synth)
        flat = tmp_path / "flat"
        plane_paths = export_flat(h, flat)
        out = tmp_path / "reingested"
        ingest(plane_paths, flat / "cells.csv", out, tile_size=64,
               pixel_size_um=h.meta.pixel_size_um, mask_path=flat / "mask.tif")
        assert _dir_identical(synth / "channels", out / "channels")
        assert _dir_identical(synth / "mask", out / "mask")
        assert (synth / "cells.csv").read_bytes() == (out / "cells.csv").read_bytes()

    def test_missing_csv_column_named(self, synth, tmp_path):
        h = open_dataset(synth)
        flat = tmp_path / "flat2"
        plane_paths = export_flat(h, flat)
        bad_csv = tmp_path / "bad.csv"
        text = (flat / "cells.csv").read_text().replace("ch01", "chXX")
        bad_csv.write_text(text)
        with pytest.raises(SchemaError, match="ch01"):
            ingest(plane_paths, bad_csv, tmp_path / "out", tile_size=64, pixel_size_um=0.5)

    def test_mask_id_missing_from_csv(self, synth, tmp_path):
        h = open_dataset(synth)
        flat = tmp_path / "flat3"
        plane_paths = export_flat(h, flat)
        with open(flat / "cells.csv", newline="") as f:
            rows = list(csv.reader(f))
        # drop the row for cell 3
        kept = [rows[0]] + [r for r in rows[1:] if r[0] != "3"]
        pruned = tmp_path / "pruned.csv"
        with open(pruned, "w", newline="") as f:
            csv.writer(f).writerows(kept)
        with pytest.raises(IntegrityError, match=r"\b3\b"):
            ingest(plane_paths, pruned, tmp_path / "out2", tile_size=64,
                   pixel_size_um=0.5, mask_path=flat / "mask.tif")

    def test_dimension_mismatch(self, synth, tmp_path):
        from PIL import Image

        h = open_dataset(synth)
        flat = tmp_path / "flat4"
        plane_paths = export_flat(h, flat)
        small = np.zeros((10, 10), dtype=np.uint16)
        Image.fromarray(small).save(flat / "tiny.tif", format="TIFF")
        with pytest.raises(SchemaError, match="shape"):
            ingest(plane_paths + [flat / "tiny.tif"], flat / "cells.csv",
                   tmp_path / "out3", tile_size=64, pixel_size_um=0.5)

    def test_cell_type_column_preserved(self, synth, tmp_path):
        h = open_dataset(synth)
        flat = tmp_path / "flat5"
        plane_paths = export_flat(h, flat)
        out = tmp_path / "out5"
        ingest(plane_paths, flat / "cells.csv", out, tile_size=64, pixel_size_um=0.5)
        with open(out / "cells.csv", newline="") as f:
            header = next(csv.reader(f))
        assert "CellType" in header
