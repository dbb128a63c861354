"""Pure-numpy fallback kernels for the hot evaluation paths.

These mirror the compiled Cython kernels in ``_kernels.pyx`` exactly
(same arguments, same results bit for bit in float64) and are selected
at import time when the extension is unavailable.  Every operation is
branch-free per element: predicates become masks and selects.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def constant_eval(values: np.ndarray, u: np.ndarray, out: np.ndarray) -> None:
    n = values.shape[0]
    idx = (n * u).astype(np.int64)
    # Guard the u -> 1 edge where n*u rounds up to n.
    np.minimum(idx, n - 1, out=idx)
    np.take(values, idx, out=out)


def dyadic_index(u: np.ndarray, cap: int) -> np.ndarray:
    bits = u.view(np.uint64) >> np.uint64(52)
    idx = (np.uint64(1022) - bits).astype(np.int64)
    np.minimum(idx, cap, out=idx)
    return idx


def dyadic_index32(u: np.ndarray, cap: int) -> np.ndarray:
    bits = u.view(np.uint32) >> np.uint32(23)
    idx = (np.uint32(126) - bits).astype(np.int64)
    np.minimum(idx, cap, out=idx)
    return idx


def _horner(coeffs: np.ndarray, idx: np.ndarray, v: np.ndarray) -> np.ndarray:
    acc = coeffs[-1].take(idx)
    for row in coeffs[-2::-1]:
        acc = acc * v + row.take(idx)
    return acc


def dyadic_eval(coeffs: np.ndarray, u: np.ndarray, out: np.ndarray) -> None:
    pred = u < 0.5
    v = np.where(pred, u, 1.0 - u)
    idx = dyadic_index(v, coeffs.shape[1] - 1)
    z = _horner(coeffs, idx, v)
    np.copyto(out, np.where(pred, z, -z))


def dyadic_eval32(coeffs32: np.ndarray, u: np.ndarray, out: np.ndarray) -> None:
    pred = u < np.float32(0.5)
    v = np.where(pred, u, np.float32(1.0) - u)
    idx = dyadic_index32(v, coeffs32.shape[1] - 1)
    z = _horner(coeffs32, idx, v)
    np.copyto(out, np.where(pred, z, -z))


def _ncchi2_knot_weights(lam, nu: float, n_knots: int):
    s = np.sqrt(nu / (lam + nu))
    g = s * (n_knots - 1)
    j = np.minimum(g.astype(np.int64), n_knots - 2)
    return j, g - j


def ncchi2_eval(
    stacks: np.ndarray,
    nu: float,
    u: np.ndarray,
    lam: np.ndarray,
    out: np.ndarray,
) -> None:
    """Evaluate the interpolated non-central chi-squared approximation.

    ``stacks`` has shape (2, n_knots, degree+1, K+1) with the upper-half
    tables at index 0 and the lower-half at index 1, so the half-domain
    predicate is a gather index.  ``lam`` is either a 1-element array
    (batch shares one value; knot bracketing is hoisted) or per-element.
    """
    n_knots = stacks.shape[1]
    cap = stacks.shape[3] - 1
    sel = (u < 0.5).astype(np.int64)
    v = np.where(sel, u, 1.0 - u)
    idx = dyadic_index(v, cap)

    lam_b = lam if lam.shape == u.shape else np.broadcast_to(lam, u.shape)
    j, t = _ncchi2_knot_weights(lam_b, nu, n_knots)

    degree = stacks.shape[2] - 1
    z0 = stacks[sel, j, degree, idx]
    z1 = stacks[sel, j + 1, degree, idx]
    for d in range(degree - 1, -1, -1):
        z0 = z0 * v + stacks[sel, j, d, idx]
        z1 = z1 * v + stacks[sel, j + 1, d, idx]
    p = z0 + t * (z1 - z0)
    shift = lam_b + nu
    np.copyto(out, shift + 2.0 * np.sqrt(shift) * p)
