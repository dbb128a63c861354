"""Hot-path evaluation: uniforms in, approximate random variables out.

The batch array-in/array-out calls are the primary interface; scalars
are accepted for convenience and tests.  Evaluation routes through the
active kernel backend (compiled or numpy), both of which keep the inner
loop free of data-dependent branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox

from ._backend import kernels
from .errors import ConfigError, DomainError
from .exact_dist import gaussian_inv_cdf
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table

_U64 = np.uint64
_TWO_M53 = 2.0**-53


@dataclass
class UniformStream:
    """Counter-based uniform stream on the open interval (0, 1).

    Backed by Philox-4x64 keyed with (seed, stream_id); the counter
    indexes 64-bit output words, so (seed, stream_id, counter) fully
    determines every draw and arbitrary offsets can be replayed.
    Distinct stream_ids give statistically independent sequences.  A
    stream must not be shared between concurrent workers; spawn one per
    worker via :meth:`child`.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0
    _key: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64 or not 0 <= int(self.stream_id) < 2**64:
            raise ConfigError("seed and stream_id must fit in 64 bits")
        self._key = np.array([self.seed, self.stream_id], dtype=_U64)

    def raw_words(self, n: int) -> np.ndarray:
        """The next ``n`` raw 64-bit words, advancing the counter."""
        if n < 0:
            raise ConfigError("cannot draw a negative number of words")
        start = self.counter
        block, offset = divmod(start, 4)
        bg = Philox(key=self._key, counter=block)
        words = bg.random_raw(offset + n)
        self.counter = start + n
        return words[offset:]

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in the open interval (0, 1); never 0, never 1."""
        w = self.raw_words(n)
        return ((w >> _U64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def child(self, stream_id: int) -> "UniformStream":
        """Fresh stream with the same seed and a new stream_id."""
        return UniformStream(self.seed, stream_id)


@dataclass(frozen=True)
class GaussianSamplePair:
    """Exact and approximate Gaussian samples from one shared uniform."""

    z_exact: float
    z_approx: float


@dataclass(frozen=True)
class CoupledGaussianBatch:
    """Arrays of coupled samples; pair i derives from the same uniform."""

    z_exact: np.ndarray
    z_approx: np.ndarray

    def __len__(self) -> int:
        return self.z_exact.shape[0]

    def __getitem__(self, i) -> GaussianSamplePair:
        return GaussianSamplePair(float(self.z_exact[i]), float(self.z_approx[i]))


def _as_batch(u) -> tuple[np.ndarray, bool]:
    arr = np.asarray(u, dtype=np.float64)
    scalar = arr.ndim == 0
    return np.ascontiguousarray(np.atleast_1d(arr)), scalar


def eval_constant(table: ConstantTable, u, out=None):
    """values[floor(2^q u)] per element.

    u in (0, 1) is the caller's contract; the hot path does not validate
    (the lookup index is clamped, so stray endpoint values stay in
    bounds rather than faulting).
    """
    arr, scalar = _as_batch(u)
    if out is None:
        out = np.empty_like(arr)
    kernels.constant_eval(table.values, arr, out)
    return float(out[0]) if scalar else out


def dyadic_index(u, n_intervals: int = 1 << 62, dtype=np.float64):
    """Index of the dyadic interval containing u in (0, 1/2], capped.

    Reads the biased exponent straight from the float's bits: u in
    [2^-(k+1), 2^-k) maps to k, and an exact power of two 2^-n lands in
    the wider interval, index n-1 (so u = 1/2 gives 0).  Uncapped by
    default; pass the table's interval count to mirror evaluation.
    """
    arr, scalar = _as_batch(u)
    if dtype == np.float32:
        idx = kernels.dyadic_index32(np.ascontiguousarray(arr, dtype=np.float32), n_intervals)
    else:
        idx = kernels.dyadic_index(arr, n_intervals)
    return int(idx[0]) if scalar else idx


def _eval_general_decay(table: DyadicPolyTable, u: np.ndarray) -> np.ndarray:
    """Analysis-path evaluation for decay rates other than 1/2.

    Interval lookup goes through a logarithm instead of exponent bits;
    only the bit-punned r = 1/2 layout has a fast path.
    """
    pred = u < 0.5
    v = np.where(pred, u, 1.0 - u)
    t = np.log(2.0 * v) / math.log(table.decay)
    idx = np.clip(np.ceil(t).astype(np.int64), 0, table.n_intervals)
    coeffs = table.coeffs
    acc = coeffs[-1].take(idx)
    for row in coeffs[-2::-1]:
        acc = acc * v + row.take(idx)
    return np.where(pred, acc, -acc)


def eval_dyadic(table: DyadicPolyTable, u, dtype=np.float64, out=None):
    """Reflect-about-1/2, exponent-indexed Horner evaluation.

    ``dtype=np.float32`` runs the whole path (input, coefficients,
    arithmetic) in single precision, mirroring a 32-bit implementation;
    the default is full double precision.  Tables with a non-dyadic
    decay rate take a slower logarithm-based lookup.  u in (0, 1) is the
    caller's contract (subnormal inputs land in the last interval via
    the index cap); the hot path does not validate.
    """
    arr, scalar = _as_batch(u)
    if table.decay != 0.5:
        if dtype == np.float32:
            raise ConfigError("the float32 fast path requires decay rate 1/2")
        res = _eval_general_decay(table, arr)
        if out is None:
            out = res
        else:
            np.copyto(out, res)
    elif dtype == np.float32:
        arr32 = np.ascontiguousarray(arr, dtype=np.float32)
        if out is None:
            out = np.empty_like(arr32)
        kernels.dyadic_eval32(table.coeffs32, arr32, out)
    else:
        if out is None:
            out = np.empty_like(arr)
        kernels.dyadic_eval(table.coeffs, arr, out)
    return float(out[0]) if scalar else out


def eval_ncchi2(table: NcChi2Table, u, lam, out=None):
    """Approximate non-central chi-squared quantiles of a uniform batch.

    ``lam`` may be a scalar (knot lookup is hoisted out of the loop) or a
    per-element array, as in CIR stepping where the non-centrality
    depends on the path state.
    """
    arr, scalar = _as_batch(u)
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(lam_arr < 0.0):
        raise DomainError("lambda must be >= 0")
    if lam_arr.ndim == 0:
        lam_arr = lam_arr.reshape(1)
    elif lam_arr.shape != arr.shape:
        raise ConfigError("per-element lambda must match the shape of u")
    if out is None:
        out = np.empty_like(arr)
    kernels.ncchi2_eval(table.eval_stacks, table.nu, arr, np.ascontiguousarray(lam_arr), out)
    return float(out[0]) if scalar else out


def evaluate(table, u, lam=None, dtype=np.float64, out=None):
    """Evaluate any table type on a batch of uniforms."""
    if isinstance(table, ConstantTable):
        return eval_constant(table, u, out=out)
    if isinstance(table, DyadicPolyTable):
        return eval_dyadic(table, u, dtype=dtype, out=out)
    if isinstance(table, NcChi2Table):
        if lam is None:
            raise ConfigError("non-central chi-squared tables need lam")
        return eval_ncchi2(table, u, lam, out=out)
    raise ConfigError(f"cannot evaluate object of type {type(table).__name__}")


def sample_coupled(stream: UniformStream, table, n: int) -> CoupledGaussianBatch:
    """Draw n uniforms once; return exact and approximate Gaussians.

    Sharing the uniform between the exact quantile and the table is the
    coupling that makes exact-minus-approximate corrections small.
    """
    u = stream.uniforms(n)
    z_exact = gaussian_inv_cdf(u)
    z_approx = evaluate(table, u)
    return CoupledGaussianBatch(z_exact=z_exact, z_approx=np.asarray(z_approx, dtype=np.float64))


def gaussian_exact_batch(u) -> np.ndarray:
    """Exact quantile of a uniform batch (vectorized reference path)."""
    return np.asarray(gaussian_inv_cdf(u), dtype=np.float64)
