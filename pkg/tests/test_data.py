import numpy as np
import pytest

from tensorslice.data import grid_blobs, load_image_dir, make_dataset, spirals
from tensorslice.model import Dataset


def test_spirals_shape_balance_and_determinism():
    a = spirals(101, seed=4)
    assert a.inputs.shape == (101, 2) and a.num_classes == 2
    assert np.bincount(a.labels).tolist() == [50, 51]
    assert spirals(101, seed=4).inputs.tobytes() == a.inputs.tobytes()
    assert spirals(101, seed=5).inputs.tobytes() != a.inputs.tobytes()


def test_grid_blobs_templates_fixed_across_seeds():
    a = grid_blobs(50, noise=0.0, jitter=0, seed=0)
    b = grid_blobs(50, noise=0.0, jitter=0, seed=1)
    assert a.inputs.shape == (50, 1, 8, 8)
    # without noise or shifts an image is its class template times a scale
    for ds in (a, b):
        for c in range(6):
            imgs = ds.inputs[ds.labels == c, 0]
            if len(imgs) < 2:
                continue
            flat = imgs.reshape(len(imgs), -1)
            unit = flat / np.linalg.norm(flat, axis=1, keepdims=True)
            np.testing.assert_allclose(unit, np.broadcast_to(unit[0], unit.shape), atol=1e-12)


def test_make_dataset_splits_use_different_streams():
    spec = {"name": "spirals", "n_train": 40, "n_test": 30, "noise": 0.1}
    tr, te = make_dataset(spec, "train", 0), make_dataset(spec, "test", 0)
    assert (len(tr), len(te)) == (40, 30)
    assert tr.split == "train" and te.split == "test"
    assert not np.array_equal(tr.inputs[:30], te.inputs)
    with pytest.raises(ValueError):
        make_dataset({"name": "mnist"}, "train", 0)


def test_image_dir_loader(tmp_path):
    rng = np.random.default_rng(0)
    np.savez(tmp_path / "test.npz", images=rng.random((5, 1, 4, 4)).astype(np.float32), labels=[0, 1, 2, 1, 0])
    ds = make_dataset({"name": "image_dir", "path": str(tmp_path)}, "test", 0)
    assert ds.inputs.dtype == np.float64 and ds.num_classes == 3
    assert load_image_dir(tmp_path, "test").labels.tolist() == [0, 1, 2, 1, 0]


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 3], num_classes=2)
    with pytest.raises(Exception):
        Dataset(np.zeros((2, 2)), [0])
