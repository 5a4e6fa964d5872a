import struct

import numpy as np
import pytest

from smoothadv.data import (Dataset, IDXFormatError, batches, load_idx, load_mnist_pool,
                            mnist_preset, save_idx, synth_gaussians, train_test_split,
                            write_idx_images, write_idx_labels)


def _write(path, data):
    path.write_bytes(data)
    return path


def _crafted_pair(tmp_path):
    pixels = bytes([0, 255, 128, 64, 1, 2, 3, 254])
    img = _write(tmp_path / "img.idx", struct.pack(">IIII", 0x803, 2, 2, 2) + pixels)
    lab = _write(tmp_path / "lab.idx", struct.pack(">II", 0x801, 2) + bytes([3, 7]))
    return img, lab, pixels


def test_load_crafted_idx(tmp_path):
    img, lab, pixels = _crafted_pair(tmp_path)
    ds = load_idx(img, lab)
    assert len(ds) == 2 and ds.dim == 4 and ds.n_classes == 10
    assert np.array_equal(ds.inputs, np.frombuffer(pixels, np.uint8).reshape(2, 4) / 255.0)
    assert ds.inputs[0, 1] == 1.0
    assert ds.labels.tolist() == [3, 7]


def test_bad_magic_rejected(tmp_path):
    _, lab, _ = _crafted_pair(tmp_path)
    bad = _write(tmp_path / "bad.idx", struct.pack(">IIII", 0x801, 2, 2, 2) + bytes(8))
    with pytest.raises(IDXFormatError, match="bad magic"):
        load_idx(bad, lab)


def test_truncated_and_mismatched_files(tmp_path):
    img, lab, _ = _crafted_pair(tmp_path)
    short = _write(tmp_path / "short.idx", struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(5))
    with pytest.raises(IDXFormatError, match="truncated"):
        load_idx(short, lab)
    one = _write(tmp_path / "one.idx", struct.pack(">II", 0x801, 1) + bytes([0]))
    with pytest.raises(IDXFormatError, match="count mismatch"):
        load_idx(img, one)
    with pytest.raises(IDXFormatError, match="truncated"):
        load_idx(img, _write(tmp_path / "h.idx", b"\x00\x00"))


def test_idx_write_read_identity(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (5, 3, 4)).astype(np.uint8)
    labels = rng.integers(0, 10, 5)
    write_idx_images(tmp_path / "i", pixels)
    write_idx_labels(tmp_path / "l", labels)
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert np.array_equal(np.rint(ds.inputs * 255).astype(np.uint8), pixels.reshape(5, 12))
    save_idx(ds, tmp_path / "i2", tmp_path / "l2", shape=(3, 4))
    assert (tmp_path / "i2").read_bytes() == (tmp_path / "i").read_bytes()
    assert (tmp_path / "l2").read_bytes() == (tmp_path / "l").read_bytes()


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[1.5]]), [0], 2)
    with pytest.raises(ValueError):
        Dataset(np.array([[0.5]]), [2], 2)
    with pytest.raises(ValueError):
        Dataset(np.array([[0.5], [0.2]]), [0], 2)


def test_synth_is_deterministic():
    a = synth_gaussians(20, 5, 0.3, 2, seed=3)
    b = synth_gaussians(20, 5, 0.3, 2, seed=3)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.inputs, synth_gaussians(20, 5, 0.3, 2, seed=4).inputs)


def test_synth_layout():
    ds = synth_gaussians(2000, 3, 0.4, 2, seed=0, sigma=0.01)
    m0 = ds.inputs[ds.labels == 0].mean(0)
    m1 = ds.inputs[ds.labels == 1].mean(0)
    assert np.allclose(m1 - m0, [0.4, 0, 0], atol=0.005)
    assert np.bincount(ds.labels).tolist() == [2000, 2000]
    multi = synth_gaussians(500, 4, 0.3, 4, seed=0, sigma=0.01)
    means = np.array([multi.inputs[multi.labels == k].mean(0) for k in range(4)])
    dists = [np.linalg.norm(means[i] - means[j]) for i in range(4) for j in range(i)]
    assert np.allclose(dists, 0.3, atol=0.005)


def test_synth_well_separated_is_linearly_separable():
    from sklearn.linear_model import LogisticRegression
    ds = synth_gaussians(200, 4, 0.8, 2, seed=1, sigma=0.05)
    assert LogisticRegression().fit(ds.inputs, ds.labels).score(ds.inputs, ds.labels) > 0.99


def test_synth_argument_errors():
    with pytest.raises(ValueError):
        synth_gaussians(0, 2, 0.3)
    with pytest.raises(ValueError):
        synth_gaussians(5, 2, 0.0)
    with pytest.raises(ValueError):
        synth_gaussians(5, 2, 0.3, c=3)


def test_batches_sizes_and_order():
    ds = synth_gaussians(5, 2, 0.3, 2, seed=0)
    assert [len(b.labels) for b in batches(ds, 3)] == [3, 3, 3, 1]
    plain = batches(ds, 3, shuffle=False)
    assert np.concatenate([b.indices for b in plain]).tolist() == list(range(10))
    assert np.array_equal(plain[0].inputs, ds.inputs[:3])
    a = np.concatenate([b.indices for b in batches(ds, 3, seed=7)])
    b = np.concatenate([b.indices for b in batches(ds, 3, seed=7)])
    assert np.array_equal(a, b) and sorted(a.tolist()) == list(range(10))
    with pytest.raises(ValueError):
        batches(ds, 0)


def test_train_test_split_partitions():
    ds = synth_gaussians(10, 2, 0.3, 2, seed=0)
    tr, te = train_test_split(ds, 5, seed=1)
    assert len(tr) == 15 and len(te) == 5
    rows = {tuple(r) for r in np.vstack([tr.inputs, te.inputs])}
    assert rows == {tuple(r) for r in ds.inputs}


def test_mnist_from_idx_directory(tmp_path, monkeypatch):
    pixels = np.random.default_rng(0).integers(0, 256, (30, 28, 28)).astype(np.uint8)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", pixels)
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", np.arange(30) % 10)
    monkeypatch.setenv("SMOOTHADV_MNIST_DIR", str(tmp_path))
    pool = load_mnist_pool()
    assert len(pool) == 30 and pool.dim == 784
    tr, te = mnist_preset(20, 10, seed=0)
    assert len(tr) == 20 and len(te) == 10
    with pytest.raises(ValueError):
        mnist_preset(25, 10)


def test_mnist_bundled_subset(monkeypatch):
    pytest.importorskip("mlxtend")
    monkeypatch.delenv("SMOOTHADV_MNIST_DIR", raising=False)
    tr, te = mnist_preset()
    assert (len(tr), len(te), tr.dim, tr.n_classes) == (2000, 1000, 784, 10)
    assert tr.inputs.max() == 1.0 and tr.inputs.min() == 0.0
    tr2, _ = mnist_preset()
    assert np.array_equal(tr.inputs, tr2.inputs)
