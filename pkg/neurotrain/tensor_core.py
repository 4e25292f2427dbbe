# encoding: utf-8
"""
Dense tensor arithmetic for NeuroTrain.

Tensors are plain numpy arrays, row-major, float32 unless a float64 array is
passed in (the finite-difference oracles run in float64). Reductions and
matrix products accumulate in float64 in ascending index order, independent of
the BLAS build and thread scheduling, so reruns are bitwise identical.

Random numbers come from :class:`Rng`, a PCG64 generator seeded through
numpy's SeedSequence. Child streams are split off with :meth:`Rng.spawn`.
"""

import hashlib
import logging

import numpy as np

from neurotrain.errors import ArgumentError, DimensionError, NumericError

logger = logging.getLogger(__name__)

DTYPE = np.float32
REDUCTIONS = ("sum", "mean", "argmax")
MATMUL_BLOCK_ELEMENTS = 2**20


def as_tensor(x, dtype=None):
    """Return x as a C-contiguous float array (float32 unless x is already float64)."""
    x = np.asarray(x)
    if dtype is None:
        dtype = np.float64 if x.dtype == np.float64 else DTYPE
    return np.ascontiguousarray(x, dtype=dtype)


def result_dtype(*arrays):
    """float64 if any operand is float64, else float32."""
    if any(np.asarray(a).dtype == np.float64 for a in arrays):
        return np.float64
    return DTYPE


def check_finite(x, what="tensor"):
    """
    Raise NumericError if x holds a NaN or Inf.

    :param x:  array to check.
    :param what:  name used in the error message.
    :return:  x, unchanged.
    """
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NumericError("{} contains {} non-finite value(s)".format(what, bad))
    return x


def matmul(a, b):
    """
    Matrix product of a [m x k] and b [k x n].

    Each output element is the float64 sum a[i,0]*b[0,j] + a[i,1]*b[1,j] + ...
    taken left to right over ascending k. BLAS is not used; its blocking and
    SIMD accumulators reorder the sum. k is walked in chunks holding at most
    MATMUL_BLOCK_ELEMENTS products, and np.cumsum adds each chunk in order.

    :raises DimensionError:  on rank or inner-dimension mismatch.
    :raises NumericError:  if the product is not finite.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects rank-2 operands, got ranks {} and {}".format(a.ndim, b.ndim))
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul inner dimensions differ: {} x {}".format(a.shape, b.shape))
    dtype = result_dtype(a, b)
    a64 = a.astype(np.float64, copy=False)
    b64 = b.astype(np.float64, copy=False)
    m, k = a.shape
    n = b.shape[1]
    chunk = max(1, MATMUL_BLOCK_ELEMENTS // max(m * n, 1))
    out = np.zeros((m, n), dtype=np.float64)
    for start in range(0, k, chunk):
        terms = a64[:, start:start + chunk, None] * b64[None, start:start + chunk, :]
        # running total first, then this chunk's products in k order
        out = np.cumsum(np.concatenate([out[:, None, :], terms], axis=1), axis=1)[:, -1, :]
    return check_finite(out.astype(dtype), "matmul result")


def reduce(x, axis, kind):
    """
    Reduce x along one axis.

    sum and mean accumulate sequentially over ascending index in float64;
    argmax returns the lowest index among ties.

    :param x:  input tensor.
    :param axis:  axis to reduce, 0 <= axis < rank (negative values count from the end).
    :param kind:  "sum", "mean" or "argmax".
    :raises DimensionError:  if axis is out of range.
    """
    x = np.asarray(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError("axis {} out of range for rank {}".format(axis, x.ndim))
    if kind not in REDUCTIONS:
        raise ArgumentError("unknown reduction '{}', expected one of {}".format(kind, REDUCTIONS))
    if kind == "argmax":
        if x.shape[axis] == 0:
            raise DimensionError("argmax over an empty axis")
        return np.argmax(x, axis=axis)
    dtype = result_dtype(x)
    extent = x.shape[axis]
    if extent == 0:
        total = np.zeros(np.delete(x.shape, axis), dtype=np.float64)
    else:
        total = np.cumsum(x, axis=axis, dtype=np.float64).take(-1, axis=axis)
    if kind == "mean":
        total = total / max(extent, 1)
    return check_finite(np.asarray(total, dtype=dtype), "{} reduction".format(kind))


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ArgumentError("stream keys must be non-negative, got {}".format(key))
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed(*parts):
    """
    Derive a 64-bit seed from arbitrary parts (ints, strings).

    The same parts always give the same seed, on every platform.
    """
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class Rng():
    """
    Seeded pseudo-random stream.

    Uses the PCG64 bit generator fed by a SeedSequence built from the seed and
    a spawn path. Two Rng objects with equal seed and path produce the same
    sequence. spawn() derives independent child streams, so the order in which
    experiments draw numbers never affects each other.
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed, path=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ArgumentError("seed must be a 64-bit unsigned integer, got {}".format(seed))
        self.seed = seed
        self.path = tuple(_key_to_int(k) for k in path)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, *keys):
        """Return a child stream identified by keys (ints or strings)."""
        return Rng(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def __repr__(self):
        return "Rng(seed={}, path={}, algorithm={})".format(self.seed, self.path, self.ALGORITHM)


def rand_uniform(rng, shape, lo, hi, dtype=DTYPE):
    """
    i.i.d. uniform values in [lo, hi).

    Consumes exactly one 64-bit draw per element, in row-major order.

    :raises ArgumentError:  if lo >= hi, or the interval is empty at dtype precision.
    """
    if not lo < hi:
        raise ArgumentError("rand_uniform needs lo < hi, got [{}, {})".format(lo, hi))
    lo_d, hi_d = np.dtype(dtype).type(lo), np.dtype(dtype).type(hi)
    if not lo_d < hi_d:
        raise ArgumentError("interval [{}, {}) is empty at {} precision".format(lo, hi, np.dtype(dtype).name))
    u = rng.generator.random(tuple(shape))
    values = (lo + (hi - lo) * u).astype(dtype)
    top = np.nextafter(hi_d, lo_d)
    return np.clip(values, lo_d, top)


def rand_normal(rng, shape, std, dtype=DTYPE):
    """Zero-mean Gaussian values with standard deviation std."""
    if std < 0:
        raise ArgumentError("std must be >= 0, got {}".format(std))
    return (rng.generator.standard_normal(tuple(shape)) * std).astype(dtype)


def rand_bernoulli(rng, p, dtype=DTYPE):
    """
    Binary tensor with P(1) = p elementwise.

    One 64-bit draw per element of p.
    """
    p = np.asarray(p)
    return (rng.generator.random(p.shape) < p).astype(dtype)


def permutation(rng, n):
    """Random permutation of range(n) as an int64 array."""
    return rng.generator.permutation(n)


def one_hot(labels, n_classes, dtype=DTYPE):
    """One-hot rows for integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out
