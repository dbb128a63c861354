"""High-accuracy reference distributions.

Everything else in the package is fitted against, measured against, or
coupled to the routines in this module: the standard Gaussian (pdf, cdf,
quantile) and the non-central chi-squared family (cdf, survival, pdf,
quantile), plus the exact one-step transition law of the CIR process.

Accuracy contracts:
  * ``gaussian_inv_cdf`` round-trips through ``gaussian_cdf`` to 1e-9.
  * ``ncchi2_inv_cdf`` round-trips through ``ncchi2_cdf`` to 1e-8.

The Gaussian quantile is the AS 241 double-precision rational
approximation (relative error below ~1e-15); antisymmetry is enforced
structurally by reflecting u > 1/2 onto the lower half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import DomainError, NumericalError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LN2 = math.log(2.0)

# AS 241 (PPND16) coefficient sets: central rational in q = u - 1/2 for
# |q| <= 0.425, then two rational branches in r = sqrt(-log(min(u, 1-u)))
# split at r = 5.
_AS241_A = np.array([
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
])
_AS241_B = np.array([
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
])
_AS241_C = np.array([
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
])
_AS241_D = np.array([
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9,
])
_AS241_E = np.array([
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
])
_AS241_F = np.array([
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15,
])


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Horner with coeffs[0] the constant term.
    acc = np.full_like(x, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def gaussian_pdf(z):
    """Standard normal density phi(z)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.exp(-0.5 * z * z) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


def gaussian_cdf(z):
    """Standard normal distribution function Phi(z), via erfc."""
    z = np.asarray(z, dtype=np.float64)
    out = 0.5 * _sp.erfc(-z / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def gaussian_inv_cdf(u):
    """Quantile of the standard normal, Phi^{-1}(u), for u in (0, 1).

    Antisymmetry holds by construction: inputs above 1/2 are reflected to
    the lower half and the result negated, so inv(1-u) == -inv(u)
    whenever 1-u is exactly representable.
    """
    arr = np.asarray(u, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and (np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0)):
        raise DomainError("gaussian_inv_cdf requires 0 < u < 1")

    q = arr - 0.5
    out = np.empty_like(arr)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _polyval(_AS241_A, r) / _polyval(_AS241_B, r)

    tail = ~central
    if np.any(tail):
        # Reflect u > 1/2 so both tails evaluate at w = min(u, 1-u).
        ut = arr[tail]
        upper = ut > 0.5
        w = np.where(upper, 1.0 - ut, ut)
        r = np.sqrt(-np.log(w))
        near = r <= 5.0
        val = np.empty_like(r)
        if np.any(near):
            rn = r[near] - 1.6
            val[near] = _polyval(_AS241_C, rn) / _polyval(_AS241_D, rn)
        if np.any(~near):
            rf = r[~near] - 5.0
            val[~near] = _polyval(_AS241_E, rf) / _polyval(_AS241_F, rf)
        out[tail] = np.where(upper, val, -val)

    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GaussianRef:
    """Reference standard normal, exposing pdf/cdf/quantile as methods.

    ``eps_ref`` documents the absolute accuracy target of the reference
    routines; it is a contract constant, not a tuning knob.
    """

    eps_ref: float = 1e-9

    def pdf(self, z):
        return gaussian_pdf(z)

    def cdf(self, z):
        return gaussian_cdf(z)

    def inv_cdf(self, u):
        return gaussian_inv_cdf(u)


# ---------------------------------------------------------------------------
# Non-central chi-squared
# ---------------------------------------------------------------------------

_POISSON_TAIL_TOL = 1e-14


def _poisson_window(half_lam: float, tol: float = _POISSON_TAIL_TOL):
    """Poisson(half_lam) weights covering all but ``tol`` of the mass.

    Expands bidirectionally from the modal index, always taking the
    heavier neighbour first, until the remaining tail mass drops below
    ``tol``.  Returns (indices, weights) as arrays.
    """
    if half_lam <= 0.0:
        return np.array([0]), np.array([1.0])
    mode = int(half_lam)
    log_wm = -half_lam + mode * math.log(half_lam) - math.lgamma(mode + 1)
    w_mode = math.exp(log_wm)

    lo = hi = mode
    w_lo = w_hi = w_mode
    total = w_mode
    weights_down = []
    weights_up = []
    # Next candidate weight on each side.
    cand_up = w_hi * half_lam / (hi + 1)
    cand_down = w_lo * lo / half_lam if lo > 0 else 0.0
    # Stop once the included mass reaches 1 - tol, or both candidate
    # weights have decayed to negligibility (rounding can leave the
    # accumulated float total just shy of the target).
    while total < 1.0 - tol and max(cand_up, cand_down) > 1e-3 * tol:
        if cand_up >= cand_down:
            hi += 1
            w_hi = cand_up
            weights_up.append(w_hi)
            total += w_hi
            cand_up = w_hi * half_lam / (hi + 1)
        else:
            w_lo = cand_down
            lo -= 1
            weights_down.append(w_lo)
            total += w_lo
            cand_down = w_lo * lo / half_lam if lo > 0 else 0.0
        if hi - lo > 200000:  # pragma: no cover - safety net
            raise NumericalError(f"Poisson window failed to close for lambda/2={half_lam}")
    idx = np.arange(lo, hi + 1)
    w = np.empty(idx.size)
    w[mode - lo] = w_mode
    if weights_down:
        w[mode - lo - len(weights_down):mode - lo] = weights_down[::-1]
    if weights_up:
        w[mode - lo + 1:] = weights_up
    return idx, w


def _validate_ncchi2_params(nu: float, lam: float) -> tuple[float, float]:
    nu = float(nu)
    lam = float(lam)
    if not (math.isfinite(nu) and nu > 0.0):
        raise DomainError(f"degrees of freedom must be finite and > 0, got {nu}")
    if not (math.isfinite(lam) and lam >= 0.0):
        raise DomainError(f"non-centrality must be finite and >= 0, got {lam}")
    return nu, lam


def ncchi2_cdf(x, nu, lam):
    """CDF of the non-central chi-squared distribution.

    Poisson-weighted mixture of central chi-squared CDFs; the weight
    series starts at the modal Poisson index and expands both ways until
    the remaining tail mass is below 1e-14, so the truncation error is
    bounded by that mass.
    """
    nu, lam = _validate_ncchi2_params(nu, lam)
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and (np.any(~np.isfinite(arr)) or np.any(arr < 0.0)):
        raise DomainError("ncchi2_cdf requires finite x >= 0")
    xh = 0.5 * arr
    idx, w = _poisson_window(0.5 * lam)
    out = np.zeros_like(arr)
    for j, wj in zip(idx, w):
        out += wj * _sp.gammainc(0.5 * nu + j, xh)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def ncchi2_sf(x, nu, lam):
    """Survival function 1 - CDF, computed without cancellation."""
    nu, lam = _validate_ncchi2_params(nu, lam)
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    scalar = np.asarray(x).ndim == 0
    if arr.size and (np.any(~np.isfinite(arr)) or np.any(arr < 0.0)):
        raise DomainError("ncchi2_sf requires finite x >= 0")
    xh = 0.5 * arr
    idx, w = _poisson_window(0.5 * lam)
    out = np.zeros_like(arr)
    for j, wj in zip(idx, w):
        out += wj * _sp.gammaincc(0.5 * nu + j, xh)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def ncchi2_pdf(x, nu, lam):
    """Density of the non-central chi-squared distribution.

    Uses the scaled-Bessel closed form for lam > 0; degenerates to the
    central (gamma) density as lam -> 0.
    """
    nu, lam = _validate_ncchi2_params(nu, lam)
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    scalar = np.asarray(x).ndim == 0
    out = np.zeros_like(arr)
    pos = arr > 0.0
    xp = arr[pos]
    if lam < 1e-10:
        a = 0.5 * nu
        log_pdf = (a - 1.0) * np.log(xp) - 0.5 * xp - a * _LN2 - math.lgamma(a)
        out[pos] = np.exp(log_pdf)
    else:
        order = 0.5 * nu - 1.0
        root = np.sqrt(lam * xp)
        out[pos] = (
            0.5
            * np.exp(-0.5 * (np.sqrt(xp) - math.sqrt(lam)) ** 2)
            * (xp / lam) ** (0.5 * order)
            * _sp.ive(order, root)
        )
    return float(out[0]) if scalar else out


def _ncchi2_bracket(nu: float, lam: float) -> float:
    # Mean plus twenty standard deviations, padded; generous for u <= 1 - 1e-10.
    return lam + nu + 20.0 * math.sqrt(2.0 * (lam + nu)) + 100.0


def _sankaran_guess(u, nu, lam):
    """Approximate quantile via Sankaran's normalizing transform."""
    z = _sp.ndtri(u)
    s = nu + lam
    h = 1.0 - 2.0 * s * (nu + 3.0 * lam) / (3.0 * (nu + 2.0 * lam) ** 2)
    p = (nu + 2.0 * lam) / (s * s)
    m = (h - 1.0) * (1.0 - 3.0 * h)
    t = (
        1.0
        + h * p * (h - 1.0 - 0.5 * (2.0 - h) * m * p)
        + z * h * np.sqrt(2.0 * p) * (1.0 + 0.5 * m * p)
    )
    t = np.maximum(t, 1e-12)
    return s * t ** (1.0 / h)


def ncchi2_inv_cdf(u, nu, lam):
    """Quantile of the non-central chi-squared distribution (scalar).

    Bisection-safeguarded Newton iteration on ``ncchi2_cdf`` inside the
    bracket [0, mean + 20 sd + 100]; raises NumericalError with
    diagnostics if the bracket cannot contain the root.
    """
    nu, lam = _validate_ncchi2_params(nu, lam)
    u = float(u)
    if not (0.0 < u < 1.0) or not math.isfinite(u):
        raise DomainError(f"ncchi2_inv_cdf requires 0 < u < 1, got {u}")

    hi = _ncchi2_bracket(nu, lam)
    if ncchi2_cdf(hi, nu, lam) < u:
        raise NumericalError(
            f"quantile bracket [0, {hi:g}] does not cover u={u:g} for nu={nu:g}, lambda={lam:g}"
        )
    lo = 0.0
    tol_f = min(1e-9, max(1e-13, 1e-4 * min(u, 1.0 - u)))
    x = float(np.clip(_sankaran_guess(u, nu, lam), 1e-8, hi))
    f = ncchi2_cdf(x, nu, lam) - u
    for _ in range(200):
        if abs(f) <= tol_f:
            break
        if f > 0.0:
            hi = x
        else:
            lo = x
        d = ncchi2_pdf(x, nu, lam)
        x_new = x - f / d if d > 0.0 else math.nan
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi)
        x = x_new
        f = ncchi2_cdf(x, nu, lam) - u
        # Relative bracket collapse: the root is resolved to float width.
        if hi - lo < 1e-15 * hi:
            break
    if abs(f) > 1e-8:
        raise NumericalError(
            f"quantile iteration stalled at x={x:g} (residual {f:g}) for "
            f"u={u:g}, nu={nu:g}, lambda={lam:g}"
        )
    return x


def _vector_newton(u, cdf, pdf, x0, hi, tol_f, max_iter=80):
    """Vectorized bisection-safeguarded Newton on cdf(x) = u.

    ``cdf``/``pdf`` must accept and return arrays.  Returns the solution
    array; elements that fail to meet ``tol_f`` raise NumericalError.
    """
    u = np.asarray(u, dtype=np.float64)
    x = np.clip(np.asarray(x0, dtype=np.float64).copy(), 1e-300, hi)
    lo_b = np.zeros_like(x)
    hi_b = np.broadcast_to(np.asarray(hi, dtype=np.float64), x.shape).copy()
    active = np.arange(x.size)
    for _ in range(max_iter):
        xa = x[active]
        f = cdf(active, xa) - u[active]
        ok = np.abs(f) <= tol_f[active]
        if np.all(ok):
            break
        rem = active[~ok]
        f = f[~ok]
        xa = x[rem]
        above = f > 0.0
        hi_b[rem[above]] = xa[above]
        lo_b[rem[~above]] = xa[~above]
        d = pdf(rem, xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - f / d
        bad = ~np.isfinite(xn) | (xn <= lo_b[rem]) | (xn >= hi_b[rem])
        xn[bad] = 0.5 * (lo_b[rem][bad] + hi_b[rem][bad])
        x[rem] = xn
        active = rem
    return x


def ncchi2_inv_cdf_batch(u, nu, lam, x0=None, tol=1e-9):
    """Vectorized non-central chi-squared quantile.

    For scalar ``lam`` the Newton iteration is warm-started from the
    CDFLIB cdf and then polished against this module's series CDF, so the
    result round-trips through :func:`ncchi2_cdf` to ``tol``.  For
    per-element ``lam`` arrays (the CIR hot path) the iteration runs on
    the compiled CDFLIB cdf throughout; series agreement is covered by
    the test suite.  ``x0`` optionally supplies starting points (e.g. the
    table approximation of the same uniforms).
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    scalar_out = np.asarray(u).ndim == 0
    if u_arr.size and (np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0) or np.any(~np.isfinite(u_arr))):
        raise DomainError("ncchi2_inv_cdf_batch requires 0 < u < 1")
    lam_arr = np.asarray(lam, dtype=np.float64)
    per_element = lam_arr.ndim > 0
    nu = float(nu)
    if not per_element:
        nu, lam_s = _validate_ncchi2_params(nu, lam_arr)
        lam_full = np.full_like(u_arr, lam_s)
    else:
        if nu <= 0.0 or np.any(lam_arr < 0.0) or np.any(~np.isfinite(lam_arr)):
            raise DomainError("invalid (nu, lambda) in batch quantile")
        lam_full = np.broadcast_to(lam_arr, u_arr.shape).astype(np.float64).copy()
        lam_s = None

    hi = lam_full + nu + 20.0 * np.sqrt(2.0 * (lam_full + nu)) + 100.0
    tol_f = np.minimum(tol, np.maximum(1e-13, 1e-4 * np.minimum(u_arr, 1.0 - u_arr)))
    guess = np.asarray(x0, dtype=np.float64) if x0 is not None else _sankaran_guess(u_arr, nu, lam_full)
    guess = np.clip(guess, 1e-8, hi)

    def cdf_lib(idx, x):
        return _sp.chndtr(x, nu, lam_full[idx])

    def pdf_fn(idx, x):
        lam_i = lam_full[idx]
        order = 0.5 * nu - 1.0
        small = lam_i < 1e-10
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dens = (
                0.5
                * np.exp(-0.5 * (np.sqrt(x) - np.sqrt(lam_i)) ** 2)
                * (x / lam_i) ** (0.5 * order)
                * _sp.ive(order, np.sqrt(lam_i * x))
            )
        if np.any(small):
            a = 0.5 * nu
            xs = x[small]
            with np.errstate(divide="ignore"):
                dens[small] = np.exp((a - 1.0) * np.log(xs) - 0.5 * xs - a * _LN2 - math.lgamma(a))
        return dens

    x = _vector_newton(u_arr, cdf_lib, pdf_fn, guess, hi, tol_f)

    if not per_element:
        # Polish against the series CDF so the documented round trip holds
        # against this module's own cdf, not only CDFLIB's.
        idx_w, w_w = _poisson_window(0.5 * lam_s)
        a_w = 0.5 * nu + idx_w

        def cdf_series(idx, xv):
            acc = np.zeros_like(xv)
            xh = 0.5 * xv
            for a_j, w_j in zip(a_w, w_w):
                acc += w_j * _sp.gammainc(a_j, xh)
            return np.clip(acc, 0.0, 1.0)

        x = _vector_newton(u_arr, cdf_series, pdf_fn, x, hi, tol_f, max_iter=8)
        resid = np.abs(cdf_series(None, x) - u_arr)
    else:
        resid = np.abs(_sp.chndtr(x, nu, lam_full) - u_arr)

    bad = resid > 1e-8
    if np.any(bad):
        k = int(np.argmax(resid))
        raise NumericalError(
            f"batch quantile failed for {int(bad.sum())} points; worst residual "
            f"{resid[k]:.3g} at u={u_arr[k]:.6g}, nu={nu:g}, lambda={lam_full[k]:.6g}"
        )
    return float(x[0]) if scalar_out else x


def ncchi2_inv_sf_batch(v, nu, lam, tol=1e-9):
    """Vectorized upper-tail quantile: x with SF(x) = v, for scalar lam.

    Solves on the survival series directly, so deep upper-tail values do
    not lose precision to the 1 - u cancellation.
    """
    v_arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    scalar_out = np.asarray(v).ndim == 0
    if v_arr.size and (np.any(v_arr <= 0.0) or np.any(v_arr >= 1.0)):
        raise DomainError("ncchi2_inv_sf_batch requires 0 < v < 1")
    nu, lam = _validate_ncchi2_params(nu, lam)
    hi = lam + nu + 20.0 * math.sqrt(2.0 * (lam + nu)) + 100.0
    idx_w, w_w = _poisson_window(0.5 * lam)
    a_w = 0.5 * nu + idx_w
    lam_full = np.full_like(v_arr, lam)

    def sf_neg(idx, xv):
        # Newton helper expects an increasing function; use -SF shifted.
        acc = np.zeros_like(xv)
        xh = 0.5 * xv
        for a_j, w_j in zip(a_w, w_w):
            acc += w_j * _sp.gammaincc(a_j, xh)
        return 1.0 - np.clip(acc, 0.0, 1.0)

    def pdf_fn(idx, xv):
        order = 0.5 * nu - 1.0
        if lam < 1e-10:
            a = 0.5 * nu
            with np.errstate(divide="ignore"):
                return np.exp((a - 1.0) * np.log(xv) - 0.5 * xv - a * _LN2 - math.lgamma(a))
        return (
            0.5
            * np.exp(-0.5 * (np.sqrt(xv) - math.sqrt(lam)) ** 2)
            * (xv / lam) ** (0.5 * order)
            * _sp.ive(order, np.sqrt(lam * xv))
        )

    u_equiv = 1.0 - v_arr
    tol_f = np.minimum(tol, np.maximum(1e-13, 1e-4 * np.minimum(v_arr, u_equiv)))
    guess = np.clip(_sankaran_guess(np.clip(u_equiv, 1e-300, 1.0 - 1e-16), nu, lam_full), 1e-8, hi)
    x = _vector_newton(u_equiv, sf_neg, pdf_fn, guess, hi, tol_f)
    resid = np.abs((1.0 - sf_neg(None, x)) - v_arr)
    bad = resid > 1e-8
    if np.any(bad):
        k = int(np.argmax(resid))
        raise NumericalError(
            f"survival quantile failed for {int(bad.sum())} points; worst residual "
            f"{resid[k]:.3g} at v={v_arr[k]:.6g}, nu={nu:g}, lambda={lam:g}"
        )
    return float(x[0]) if scalar_out else x


@dataclass(frozen=True)
class NcChi2Ref:
    """Reference non-central chi-squared distribution with fixed (nu, lambda)."""

    nu: float
    lam: float = 0.0

    def __post_init__(self):
        _validate_ncchi2_params(self.nu, self.lam)

    def cdf(self, x):
        return ncchi2_cdf(x, self.nu, self.lam)

    def sf(self, x):
        return ncchi2_sf(x, self.nu, self.lam)

    def pdf(self, x):
        return ncchi2_pdf(x, self.nu, self.lam)

    def inv_cdf(self, u):
        return ncchi2_inv_cdf(u, self.nu, self.lam)

    def inv_cdf_batch(self, u, x0=None):
        return ncchi2_inv_cdf_batch(u, self.nu, self.lam, x0=x0)


def cir_transition_params(x_prev, kappa, theta, sigma, dt):
    """Parameters of the exact CIR one-step transition.

    Over a step of length ``dt`` the next state is ``scale * W`` with
    ``W ~ chi2_nu(lam)``:

        scale = sigma^2 (1 - e^{-kappa dt}) / (4 kappa)
        lam   = x_prev e^{-kappa dt} / scale
        nu    = 4 kappa theta / sigma^2

    ``nu`` depends only on the process parameters, never on ``dt`` or the
    state.  ``x_prev`` may be an array (per-path states).
    """
    for name, val in (("kappa", kappa), ("theta", theta), ("sigma", sigma), ("dt", dt)):
        if not (math.isfinite(val) and val > 0.0):
            raise DomainError(f"{name} must be finite and > 0, got {val}")
    x_arr = np.asarray(x_prev, dtype=np.float64)
    if np.any(x_arr < 0.0):
        raise DomainError("x_prev must be >= 0")
    decay = math.exp(-kappa * dt)
    scale = sigma * sigma * (1.0 - decay) / (4.0 * kappa)
    lam = x_arr * (decay / scale)
    nu = 4.0 * kappa * theta / (sigma * sigma)
    if x_arr.ndim == 0:
        lam = float(lam)
    return nu, lam, scale
