import itertools
from collections import Counter

import numpy as np
import pytest

from centralvr import rng


def test_stream_is_a_pure_function_of_key():
    a = rng.stream(7, 1, 2).random(5)
    b = rng.stream(7, 1, 2).random(5)
    c = rng.stream(7, 2, 1).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        rng.stream(-1)


def test_box_muller_moments():
    z = rng.normals(rng.stream(0, 5), 200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_box_muller_odd_size_and_shape():
    assert rng.normals(rng.stream(0), 7).shape == (7,)
    assert rng.normals(rng.stream(0), (3, 5)).shape == (3, 5)


def test_permutation_basics():
    assert rng.permutation(1, 0, 0).tolist() == [0]
    perm = rng.permutation(50, 3, 4)
    assert sorted(perm.tolist()) == list(range(50))
    assert np.array_equal(perm, rng.permutation(50, 3, 4))


def test_permutation_frequencies_uniform():
    counts = Counter(tuple(rng.permutation(4, 9, e)) for e in range(10_000))
    assert set(counts) == set(itertools.permutations(range(4)))
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 24) <= 0.01


def test_uniform_indices_range():
    idx = rng.uniform_indices(10, 1000, 0, 1)
    assert idx.min() >= 0 and idx.max() < 10
    assert len(set(idx.tolist())) == 10
