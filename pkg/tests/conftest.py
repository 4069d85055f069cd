import numpy as np
import pytest

from tissuelens.store import ChannelMeta, make_meta, write_dataset, open_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Deterministic 3-channel 300x200 dataset with a mask, 64px tiles."""
    rng = np.random.default_rng(11)
    h, w = 200, 300
    planes = {f"ch{i:02d}": rng.integers(0, 65536, (h, w)).astype(np.uint16) for i in range(3)}
    mask = np.zeros((h, w), dtype=np.uint32)
    mask[20:40, 30:60] = 7
    mask[100:130, 200:240] = 12
    meta = make_meta(w, h, 0.5, [ChannelMeta(n) for n in planes], has_mask=True, tile_size=64)
    out = tmp_path_factory.mktemp("small_ds")
    write_dataset(out, meta, planes, mask)
    return out, planes, mask


@pytest.fixture(scope="session")
def small_handle(small_dataset):
    out, _, _ = small_dataset
    return open_dataset(out)
