import numpy as np
import pytest

from centralvr import data
from centralvr.data import Dataset, LibsvmParseError, PartitionStrategy


def test_classification_balance_tiny():
    ds = data.generate_classification(2, 1, 123)
    assert sorted(ds.labels.tolist()) == [-1.0, 1.0]


def test_classification_separation():
    n, d = 20000, 5
    ds = data.generate_classification(n, d, 4)
    A, b = ds.features, ds.labels
    sep = A[b == 1].mean(axis=0) - A[b == -1].mean(axis=0)
    assert np.linalg.norm(sep - np.ones(d) / np.sqrt(d)) <= 5 * np.sqrt(d / n)
    assert (b == 1).sum() == n // 2


def test_classification_odd_n_rejected():
    with pytest.raises(ValueError):
        data.generate_classification(3, 2, 0)


def test_generators_deterministic():
    assert data.generate_classification(100, 3, 8).equals(data.generate_classification(100, 3, 8))
    a, xa = data.generate_regression(100, 3, 8)
    b, xb = data.generate_regression(100, 3, 8)
    assert a.equals(b) and np.array_equal(xa, xb)
    assert not a.equals(data.generate_regression(100, 3, 9)[0])


def test_regression_noiseless_recovery():
    ds, x = data.generate_regression(50, 6, 1, noise_sigma=0.0)
    sol = np.linalg.lstsq(ds.features, ds.labels, rcond=None)[0]
    assert np.max(np.abs(sol - x)) < 1e-8


def test_regression_residual_variance():
    ds, _ = data.generate_regression(5000, 20, 2)
    sol = np.linalg.lstsq(ds.features, ds.labels, rcond=None)[0]
    r = ds.labels - ds.features @ sol
    assert 0.9 <= r.var() <= 1.1


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 1)), np.array([1.0, 0.5]), "classification")
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 1)), np.ones(3))
    ds = Dataset(np.ones((2, 1)), np.ones(2))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 3.0


def test_libsvm_line(tmp_path):
    f = tmp_path / "a.svm"
    f.write_text("1 1:0.5 3:2.0\n")
    ds = data.read_libsvm(f)
    assert ds.labels.tolist() == [1.0]
    assert ds.features.tolist() == [[0.5, 0.0, 2.0]]


def test_libsvm_crlf_comments_and_expected_dim(tmp_path):
    f = tmp_path / "a.svm"
    f.write_bytes(b"# header\r\n-1 2:1.5\r\n\r\n1 1:1 # trailing\r\n")
    ds = data.read_libsvm(f, expected_dim=4)
    assert ds.features.shape == (2, 4)
    assert ds.labels.tolist() == [-1.0, 1.0]


def test_libsvm_errors(tmp_path):
    empty = tmp_path / "e.svm"
    empty.write_text("")
    with pytest.raises(LibsvmParseError, match="no samples"):
        data.read_libsvm(empty)
    bad = tmp_path / "b.svm"
    bad.write_text("1 1:0.5\n1 2-0.5\n")
    with pytest.raises(LibsvmParseError, match="line 2"):
        data.read_libsvm(bad)
    wide = tmp_path / "w.svm"
    wide.write_text("1 5:1\n")
    with pytest.raises(LibsvmParseError, match="exceeds"):
        data.read_libsvm(wide, expected_dim=3)
    zero = tmp_path / "z.svm"
    zero.write_text("1 0:1\n")
    with pytest.raises(LibsvmParseError):
        data.read_libsvm(zero)


def test_libsvm_signed_labels(tmp_path):
    f = tmp_path / "s.svm"
    f.write_text("0 1:1\n1 1:2\n")
    assert data.read_libsvm(f, signed_labels=True).labels.tolist() == [-1.0, 1.0]


def test_libsvm_round_trip(tmp_path):
    gen = np.random.default_rng(0)
    A = gen.standard_normal((10, 4))
    A[2, 1] = 0.0
    ds = Dataset(A, gen.standard_normal(10))
    path = tmp_path / "rt.svm"
    data.write_libsvm(ds, path)
    back = data.read_libsvm(path, expected_dim=4)
    assert np.max(np.abs(back.features - A)) <= 1e-15
    assert np.max(np.abs(back.labels - ds.labels)) <= 1e-15


@pytest.mark.parametrize("strategy", list(PartitionStrategy))
def test_partition_cover(strategy):
    shards = data.partition(103, 7, strategy, seed=5)
    allidx = np.sort(np.concatenate([s.indices for s in shards]))
    assert np.array_equal(allidx, np.arange(103))
    assert sum(s.local_count for s in shards) == 103
    sizes = [s.local_count for s in shards]
    assert max(sizes) - min(sizes) <= 1
    assert [s.owner for s in shards] == list(range(7))


def test_partition_examples():
    ds = data.generate_classification(10, 2, 0)
    one = data.partition(ds, 1)
    assert one[0].indices.tolist() == list(range(10))
    sizes = sorted((s.local_count for s in data.partition(ds, 3, "shuffled", 1)), reverse=True)
    assert sizes == [4, 3, 3]
    a = data.partition(ds, 3, "shuffled", 1)
    b = data.partition(ds, 3, "shuffled", 1)
    assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))
    with pytest.raises(ValueError):
        data.partition(ds, 11)
