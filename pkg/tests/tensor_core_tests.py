import numpy as np
from numpy.testing import assert_array_equal, assert_allclose
import pytest

from neurotrain import tensor_core
from neurotrain.errors import ArgumentError, DimensionError, NumericError
from neurotrain.tensor_core import (Rng, as_tensor, check_finite, derive_seed,
        matmul, one_hot, permutation, rand_bernoulli, rand_normal, rand_uniform,
        reduce, result_dtype)


def matmul_shapes_test():
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    b = np.ones((3, 4), dtype=np.float32)
    out = matmul(a, b)
    assert out.shape == (2, 4)
    assert out.dtype == np.float32
    assert_array_equal(out[:, 0], [3, 12])
    with pytest.raises(DimensionError):
        matmul(a, np.ones((2, 4)))
    with pytest.raises(DimensionError):
        matmul(np.ones(3), b)


def matmul_keeps_float64_test():
    a = np.ones((2, 2))
    assert matmul(a, np.ones((2, 2), dtype=np.float32)).dtype == np.float64
    assert result_dtype(np.ones(1, dtype=np.float32)) == np.float32


def ascending_k_product(a, b):
    out = [[0.0] * len(b[0]) for _ in a]
    for i, row in enumerate(a):
        for j in range(len(b[0])):
            total = 0.0
            for k, value in enumerate(row):
                total += value * b[k][j]
            out[i][j] = total
    return out


def matmul_accumulates_in_ascending_k_test(monkeypatch):
    a = np.array([[1e16, 1.0, -1e16], [-1e16, 1e16, 1.0]])
    b = np.ones((3, 1))
    assert_array_equal(matmul(a, b), [[0.0], [1.0]])
    assert_array_equal(matmul(a, b), ascending_k_product(a.tolist(), b.tolist()))

    # many chunks of k, with magnitudes that make the order matter
    monkeypatch.setattr(tensor_core, "MATMUL_BLOCK_ELEMENTS", 64)
    gen = np.random.default_rng(3)
    a = gen.standard_normal((4, 75)) * 10.0 ** gen.integers(-8, 9, (4, 75))
    b = gen.standard_normal((75, 5)) * 10.0 ** gen.integers(-8, 9, (75, 5))
    assert_array_equal(matmul(a, b), ascending_k_product(a.tolist(), b.tolist()))


def matmul_non_finite_test():
    with pytest.raises(NumericError):
        matmul(np.array([[np.inf]]), np.array([[1.0]]))


def reduce_test():
    x = np.array([[1, 5, 5], [2, 0, 1]], dtype=np.float32)
    assert_array_equal(reduce(x, 0, "sum"), [3, 5, 6])
    assert_allclose(reduce(x, 1, "mean"), [11 / 3, 1], rtol=1e-6)
    # lowest index among ties
    assert_array_equal(reduce(x, 1, "argmax"), [1, 0])
    with pytest.raises(DimensionError):
        reduce(x, 2, "sum")
    with pytest.raises(ArgumentError):
        reduce(x, 0, "max")


def reduce_empty_axis_test():
    x = np.zeros((0, 3), dtype=np.float32)
    assert_array_equal(reduce(x, 0, "sum"), [0, 0, 0])
    with pytest.raises(DimensionError):
        reduce(x, 0, "argmax")


def check_finite_test():
    x = np.ones(3)
    assert check_finite(x) is x
    with pytest.raises(NumericError):
        check_finite(np.array([1.0, np.nan]), "weights")


def as_tensor_test():
    assert as_tensor([1, 2]).dtype == np.float32
    assert as_tensor(np.ones(2)).dtype == np.float64
    assert as_tensor(np.ones((3, 3)).T).flags["C_CONTIGUOUS"]


def rng_reproducible_test():
    a = rand_uniform(Rng(7), (4, 5), -1, 1)
    b = rand_uniform(Rng(7), (4, 5), -1, 1)
    assert_array_equal(a, b)
    assert not np.array_equal(a, rand_uniform(Rng(8), (4, 5), -1, 1))


def rng_spawn_independent_test():
    rng = Rng(3)
    child_a = rand_uniform(rng.spawn("a"), (100,), 0, 1)
    child_b = rand_uniform(rng.spawn("b"), (100,), 0, 1)
    assert not np.array_equal(child_a, child_b)
    # spawning does not consume the parent stream
    assert_array_equal(rand_uniform(rng, (3,), 0, 1), rand_uniform(Rng(3), (3,), 0, 1))
    assert_array_equal(rand_uniform(rng.spawn("a"), (100,), 0, 1), child_a)
    assert rng.spawn(1, "x").path == Rng(3, (1, "x")).path


def rng_rejects_bad_seed_test():
    with pytest.raises(ArgumentError):
        Rng(-1)
    with pytest.raises(ArgumentError):
        Rng(2**64)
    with pytest.raises(ArgumentError):
        Rng(0).spawn(-3)


def rand_uniform_bounds_test():
    values = rand_uniform(Rng(0), (10000,), 0.25, 0.5)
    assert values.min() >= 0.25
    assert values.max() < 0.5
    with pytest.raises(ArgumentError):
        rand_uniform(Rng(0), (2,), 1.0, 1.0)


def rand_normal_test():
    values = rand_normal(Rng(1), (20000,), 2.0, dtype=np.float64)
    assert abs(values.mean()) < 0.05
    assert abs(values.std() - 2.0) < 0.05
    assert not rand_normal(Rng(1), (5,), 0.0).any()
    with pytest.raises(ArgumentError):
        rand_normal(Rng(1), (5,), -1.0)


def rand_bernoulli_test():
    p = np.array([0.0, 1.0, 0.0, 1.0])
    assert_array_equal(rand_bernoulli(Rng(2), p), p)
    draws = rand_bernoulli(Rng(2), np.full(20000, 0.3))
    assert abs(draws.mean() - 0.3) < 0.02


def permutation_test():
    perm = permutation(Rng(4), 50)
    assert sorted(perm.tolist()) == list(range(50))
    assert_array_equal(perm, permutation(Rng(4), 50))


def one_hot_test():
    assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])


def derive_seed_test():
    assert derive_seed(0, "bptt", "fc", "mnist", 1) == derive_seed(0, "bptt", "fc", "mnist", 1)
    assert derive_seed(0, "bptt", "fc", "mnist", 1) != derive_seed(0, "bptt", "fc", "mnist", 2)
    assert 0 <= derive_seed("x") < 2**64
