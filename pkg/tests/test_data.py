import struct

import numpy as np
import pytest

from bregat.data import (BadMagicError, CountMismatchError, Dataset, IdxError, TruncatedError, dataset_to_idx,
                         encode_idx_images, encode_idx_labels, gen_gaussian_blobs, gen_two_moons, load_idx,
                         parse_idx_header)


def write_pair(tmp_path, n=12, rows=4, cols=3, seed=0):
    rng = np.random.default_rng(seed)
    img = encode_idx_images(rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8))
    lab = encode_idx_labels(rng.integers(0, 10, size=n, dtype=np.uint8))
    (tmp_path / "img").write_bytes(img)
    (tmp_path / "lab").write_bytes(lab)
    return tmp_path / "img", tmp_path / "lab", img, lab


def test_two_moons_balanced():
    ds = gen_two_moons(1000, 0.15, seed=0)
    assert np.bincount(ds.labels).tolist() == [500, 500]


def test_two_moons_first_point():
    ds = gen_two_moons(10, noise=0.0, seed=0)
    assert ds.features[0].tolist() == [1.0, 0.0]


def test_two_moons_deterministic():
    a, b = gen_two_moons(300, 0.15, seed=9), gen_two_moons(300, 0.15, seed=9)
    assert a.features.tobytes() == b.features.tobytes() and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, gen_two_moons(300, 0.15, seed=10).features)


def test_two_moons_rejects_odd():
    with pytest.raises(ValueError):
        gen_two_moons(7)


def test_blobs_separable_when_tight():
    ds = gen_gaussian_blobs(200, [[1, 0], [-1, 0]], sigma=1e-3, seed=1)
    pred = (ds.features[:, 0] < 0).astype(int)
    assert np.array_equal(pred, ds.labels)


def test_blobs_deterministic():
    a = gen_gaussian_blobs(4, [[1, 0], [-1, 0]], 0.5, seed=3)
    b = gen_gaussian_blobs(4, [[1, 0], [-1, 0]], 0.5, seed=3)
    assert a.features.tobytes() == b.features.tobytes()


@pytest.mark.parametrize("n", [20, 200, 2000])
def test_blobs_means_within_clt_bound(n):
    centers, sigma = np.array([[1.0, 0.0], [-1.0, 0.0]]), 0.5
    ds = gen_gaussian_blobs(n, centers, sigma, seed=0)
    for k in range(2):
        mean = ds.features[ds.labels == k].mean(axis=0)
        assert np.abs(mean - centers[k]).max() <= 3 * sigma / np.sqrt(n / 2)


def test_blobs_clt_violation_rate():
    # per coordinate a 3-sigma excursion has probability 0.0027
    centers, sigma, n = np.array([[1.0, 0.0], [-1.0, 0.0]]), 0.5, 200
    bad = 0
    for seed in range(250):
        ds = gen_gaussian_blobs(n, centers, sigma, seed=seed)
        for k in range(2):
            mean = ds.features[ds.labels == k].mean(axis=0)
            bad += int((np.abs(mean - centers[k]) > 3 * sigma / np.sqrt(n / 2)).sum())
    assert bad <= 10  # expected 2.7 of 1000


def test_dataset_validation():
    with pytest.raises(ValueError, match="box"):
        Dataset(np.array([[5.0, 0.0]]), [0], 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), [0, 1], 2)


def test_idx_roundtrip(tmp_path):
    pi, pl, img, lab = write_pair(tmp_path)
    ds = load_idx(pi, pl)
    assert len(ds) == 12 and ds.dim == 12 and ds.box == (0.0, 1.0)
    assert 0.0 <= ds.features.min() and ds.features.max() <= 1.0
    assert dataset_to_idx(ds) == (img, lab)


def test_idx_limit(tmp_path):
    pi, pl, _, _ = write_pair(tmp_path)
    assert len(load_idx(pi, pl, limit=5)) == 5


def test_idx_header():
    raw = struct.pack(">IIII", 2051, 10000, 28, 28)
    hdr = parse_idx_header(raw, 2051)
    assert hdr.dims == (10000, 28, 28) and hdr.payload_len == 7_840_000 and hdr.size == 16
    assert parse_idx_header(struct.pack(">II", 2049, 10000), 2049).dims == (10000,)


def test_idx_bad_magic(tmp_path):
    pi, pl, img, _ = write_pair(tmp_path)
    pi.write_bytes(struct.pack(">I", 9999) + img[4:])
    with pytest.raises(BadMagicError, match="bad magic"):
        load_idx(pi, pl)


def test_idx_truncated(tmp_path):
    pi, pl, img, lab = write_pair(tmp_path)
    pi.write_bytes(img[:-1])
    with pytest.raises(TruncatedError, match="payload"):
        load_idx(pi, pl)
    pi.write_bytes(img[:10])
    with pytest.raises(TruncatedError):
        load_idx(pi, pl)


def test_idx_count_mismatch(tmp_path):
    pi, pl, _, _ = write_pair(tmp_path)
    pl.write_bytes(encode_idx_labels(np.zeros(11, dtype=np.uint8)))
    with pytest.raises(CountMismatchError):
        load_idx(pi, pl)


def test_error_variants_distinct():
    kinds = (BadMagicError, TruncatedError, CountMismatchError)
    assert all(issubclass(k, IdxError) for k in kinds)
    assert len({k for k in kinds}) == 3 and not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)
