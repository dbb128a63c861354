"""Offline construction of approximation tables.

Three fitters: piecewise constants on equal intervals (with the L1,
midpoint, inner-endpoint, and Rademacher constructions), L2-optimal
piecewise polynomials on geometrically decaying intervals, and the
sqrt(y)-interpolated family for the non-central chi-squared quantile.

Least-squares fits are solved on the interval rescaled to [0, 1], where
the normal matrix is the (m+1) x (m+1) Hilbert matrix -- benign for
degrees up to 5.  Moment integrals come from oracle-specific
substitutions that keep the integrand smooth through the endpoint
singularities of the quantile functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate as _integrate
from scipy import special as _sp

from . import exact_dist
from .errors import ConfigError, NumericalError
from .tables import CONSTRUCTIONS, ConstantTable, DyadicPolyTable, NcChi2Table

_SQRT_PI = math.sqrt(math.pi)


class FitConditionWarning(UserWarning):
    """The monomial normal equations looked ill-conditioned."""


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class GaussianQuantileOracle:
    """Standard normal quantile with exact/semi-exact moment hooks."""

    def __call__(self, u):
        return exact_dist.gaussian_inv_cdf(u)

    def scaled_moment(self, a: float, b: float, i: int) -> float:
        """integral_0^1 t^i f(a + (b-a) t) dt with f the normal quantile.

        Substituting u = Phi(z) maps the (possibly singular) u-interval
        onto a z-interval where the integrand is smooth; a = 0 becomes
        z = -inf, which the adaptive quadrature handles directly.
        """
        h = b - a
        z_lo = -np.inf if a == 0.0 else exact_dist.gaussian_inv_cdf(a)
        z_hi = exact_dist.gaussian_inv_cdf(b)

        def integrand(z):
            t = (exact_dist.gaussian_cdf(z) - a) / h
            return (t**i) * z * exact_dist.gaussian_pdf(z) / h

        val, err = _integrate.quad(integrand, z_lo, z_hi, epsabs=1e-14, epsrel=1e-10, limit=200)
        return val

    def singular_linear_fit(self, b: float) -> tuple[float, float]:
        """Closed-form L2 linear fit (intercept, gradient) on (0, b)."""
        z_b = exact_dist.gaussian_inv_cdf(b)
        phi_b = exact_dist.gaussian_pdf(z_b)
        cdf_term = exact_dist.gaussian_cdf(math.sqrt(2.0) * z_b) / _SQRT_PI
        alpha = 2.0 * phi_b / b - 3.0 * cdf_term / (b * b)
        beta = (6.0 / b**3) * (cdf_term - b * phi_b)
        return alpha, beta


class NcChi2POracle:
    """Rescaled non-central chi-squared quantile P on one half-domain.

    For ``half="lower"`` the target is g(v) = P(v), v in (0, 1/2]; for
    ``half="upper"`` it is the reflected g(v) = P(1 - v), so both halves
    are fitted over the same dyadic v-intervals.
    """

    def __init__(self, nu: float, lam: float, half: str):
        if half not in ("lower", "upper"):
            raise ConfigError(f"half must be 'lower' or 'upper', got {half!r}")
        self.nu = float(nu)
        self.lam = float(lam)
        self.half = half
        self.shift = self.lam + self.nu
        self.scale = 2.0 * math.sqrt(self.shift)
        idx, w = exact_dist._poisson_window(0.5 * self.lam)
        self._a = 0.5 * self.nu + idx
        self._w = w

    # Scalar cdf/sf/pdf against the cached Poisson window (fast inside
    # quadrature: one vectorized pass over the term window per call).
    def _cdf(self, x: float) -> float:
        return float(np.clip(np.dot(self._w, _sp.gammainc(self._a, 0.5 * x)), 0.0, 1.0))

    def _sf(self, x: float) -> float:
        return float(np.clip(np.dot(self._w, _sp.gammaincc(self._a, 0.5 * x)), 0.0, 1.0))

    def _pdf(self, x: float) -> float:
        return float(exact_dist.ncchi2_pdf(x, self.nu, self.lam))

    def _p_of_x(self, x):
        return (x - self.shift) / self.scale

    def __call__(self, v):
        v_arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
        if self.half == "lower":
            x = exact_dist.ncchi2_inv_cdf_batch(v_arr, self.nu, self.lam)
        else:
            x = exact_dist.ncchi2_inv_sf_batch(v_arr, self.nu, self.lam)
        out = self._p_of_x(x)
        return out if np.asarray(v).ndim else float(out[0])

    def scaled_moment(self, a: float, b: float, i: int) -> float:
        return self.scaled_moments(a, b, i)[i]

    def scaled_moments(self, a: float, b: float, m: int) -> np.ndarray:
        """All moments integral_0^1 t^i g(a + h t) dt for i = 0..m at once.

        Substitutes v = C(x) (lower half) or v = S(x) (upper half), so the
        quadrature runs in x-space where g is smooth; the shared cdf/pdf
        evaluations amortize across the m+1 integrands.
        """
        h = b - a
        if self.half == "lower":
            x_lo = 0.0 if a == 0.0 else exact_dist.ncchi2_inv_cdf(a, self.nu, self.lam)
            x_hi = exact_dist.ncchi2_inv_cdf(b, self.nu, self.lam)

            def integrand(x):
                t = (self._cdf(x) - a) / h
                base = self._p_of_x(x) * self._pdf(x) / h
                return np.array([t**j for j in range(m + 1)]) * base

        else:
            x_lo = exact_dist.ncchi2_inv_sf_batch(b, self.nu, self.lam)
            x_hi = np.inf if a == 0.0 else exact_dist.ncchi2_inv_sf_batch(a, self.nu, self.lam)

            def integrand(x):
                t = (self._sf(x) - a) / h
                base = self._p_of_x(x) * self._pdf(x) / h
                return np.array([t**j for j in range(m + 1)]) * base

        res = _integrate.quad_vec(integrand, x_lo, x_hi, epsabs=1e-13, epsrel=1e-10)
        return res[0]


# ---------------------------------------------------------------------------
# Piecewise constants
# ---------------------------------------------------------------------------


def fit_constant(q: int, construction: str, quantile_oracle=None) -> ConstantTable:
    """Build a 2^q-interval piecewise-constant table.

    ``l1`` uses the in-interval conditional expectation (closed form via
    the Gaussian partial-expectation identity), ``central`` the quantile
    of each interval's midpoint, ``interior`` the quantile of the
    endpoint nearer 1/2.  ``rademacher`` ignores q and returns the
    two-interval +-1 table.  The lower half is the mirrored negation of
    the upper half, so rotational antisymmetry is exact.
    """
    construction = construction.lower()
    if construction not in CONSTRUCTIONS:
        raise ConfigError(f"unknown construction {construction!r}; pick one of {CONSTRUCTIONS}")
    if construction == "rademacher":
        return ConstantTable(q=1, values=np.array([-1.0, 1.0]), construction="rademacher")
    if not 1 <= q <= 24:
        raise ConfigError(f"interval exponent q must be in [1, 24], got {q}")
    inv = quantile_oracle if quantile_oracle is not None else exact_dist.gaussian_inv_cdf

    n = 1 << q
    half = n >> 1
    k = np.arange(half, n)
    u_lo = k / n
    if construction == "l1":
        pdf_lo = exact_dist.gaussian_pdf(inv(u_lo))
        pdf_hi = np.empty_like(pdf_lo)
        pdf_hi[:-1] = pdf_lo[1:]
        pdf_hi[-1] = 0.0  # phi at the quantile of 1
        upper = n * (pdf_lo - pdf_hi)
    elif construction == "central":
        upper = inv((k + 0.5) / n)
    else:  # interior: endpoint nearer 1/2, which is the lower one here
        upper = np.asarray(inv(u_lo), dtype=np.float64).copy()

    values = np.empty(n)
    values[half:] = upper
    values[:half] = -upper[::-1]
    return ConstantTable(q=q, values=values, construction=construction)


# ---------------------------------------------------------------------------
# L2-optimal polynomials
# ---------------------------------------------------------------------------


def _shifted_legendre_matrix(m: int) -> np.ndarray:
    """Rows: monomial coefficients of the shifted Legendre P_i(2t - 1)."""
    s = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        for j in range(i + 1):
            s[i, j] = (-1) ** (i + j) * math.comb(i, j) * math.comb(i + j, j)
    return s


def _scaled_moments(f_oracle, a: float, b: float, m: int) -> np.ndarray:
    if hasattr(f_oracle, "scaled_moments"):
        return np.asarray(f_oracle.scaled_moments(a, b, m), dtype=np.float64)
    if hasattr(f_oracle, "scaled_moment"):
        return np.array([f_oracle.scaled_moment(a, b, i) for i in range(m + 1)])
    h = b - a
    out = np.empty(m + 1)
    for i in range(m + 1):
        val, err = _integrate.quad(
            lambda t, i=i: (t**i) * f_oracle(a + h * t), 0.0, 1.0,
            epsabs=1e-15, epsrel=1e-12, limit=200,
        )
        out[i] = val
    return out


def fit_poly_interval(a: float, b: float, m: int, f_oracle, basis: str = "monomial") -> np.ndarray:
    """L2-optimal degree-m polynomial coefficients for f on [a, b].

    Returns monomial coefficients in u (constant first).  The normal
    equations A x = b with A_{ij} = (b^{i+j+1} - a^{i+j+1}) / (i+j+1) are
    solved after rescaling [a, b] -> [0, 1]; if that solve degrades, the
    projection is redone in the shifted-Legendre basis (diagonal normal
    matrix) with a warning.
    """
    if not 0.0 <= a < b <= 1.0:
        raise ConfigError(f"need 0 <= a < b <= 1, got ({a}, {b})")
    if not 1 <= m <= 5:
        raise ConfigError(f"degree must be in [1, 5], got {m}")
    h = b - a
    moments = _scaled_moments(f_oracle, a, b, m)

    idx = np.arange(m + 1)
    hilbert = 1.0 / (idx[:, None] + idx[None, :] + 1.0)
    c_t = None
    if basis == "monomial":
        c_t = np.linalg.solve(hilbert, moments)
        resid = np.max(np.abs(hilbert @ c_t - moments))
        if not np.all(np.isfinite(c_t)) or resid > 1e-8 * max(np.max(np.abs(moments)), 1e-300):
            warnings.warn(
                f"monomial normal equations ill-conditioned on [{a}, {b}] at degree {m}; "
                "falling back to shifted-Legendre basis",
                FitConditionWarning,
            )
            c_t = None
    elif basis != "legendre":
        raise ConfigError(f"unknown basis {basis!r}")
    if c_t is None:
        s = _shifted_legendre_matrix(m)
        # Diagonal projection: <P_i, P_i> = 1 / (2i + 1) on [0, 1].
        proj = (2.0 * idx + 1.0) * (s @ moments)
        c_t = s.T @ proj

    # Map coefficients from t = (u - a)/h back to powers of u.
    lin = npoly.Polynomial([-a / h, 1.0 / h])
    poly_u = npoly.Polynomial(c_t)(lin)
    coeffs = np.zeros(m + 1)
    coeffs[: len(poly_u.coef)] = poly_u.coef
    return coeffs


def fit_dyadic_table(m: int, n_intervals: int, decay: float, f_oracle) -> DyadicPolyTable:
    """Fit per-interval polynomials over the geometric partition of (0, 1/2).

    Entry 0 stays zero (the u = 1/2 slot); entries 1..K-1 cover
    [decay^k/2, decay^{k-1}/2); entry K absorbs (0, decay^{K-1}/2)
    including the quantile singularity.  For m = 1 with an oracle that
    provides it, the singular interval uses the closed-form fit.
    """
    if not 1 <= m <= 5:
        raise ConfigError(f"degree must be in [1, 5], got {m}")
    if not 2 <= n_intervals <= 40:
        raise ConfigError(f"interval count must be in [2, 40], got {n_intervals}")
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"decay rate must be in (0, 1), got {decay}")

    coeffs = np.zeros((m + 1, n_intervals + 1))
    for k in range(1, n_intervals):
        a = 0.5 * decay**k
        b = 0.5 * decay ** (k - 1)
        coeffs[:, k] = fit_poly_interval(a, b, m, f_oracle)
    b_last = 0.5 * decay ** (n_intervals - 1)
    if m == 1 and hasattr(f_oracle, "singular_linear_fit"):
        alpha, beta = f_oracle.singular_linear_fit(b_last)
        coeffs[0, n_intervals] = alpha
        coeffs[1, n_intervals] = beta
    else:
        coeffs[:, n_intervals] = fit_poly_interval(0.0, b_last, m, f_oracle)
    return DyadicPolyTable(degree=m, n_intervals=n_intervals, coeffs=coeffs, decay=decay)


def fit_gaussian_dyadic(m: int, n_intervals: int = 15, decay: float = 0.5) -> DyadicPolyTable:
    """Dyadic table for the standard normal quantile."""
    return fit_dyadic_table(m, n_intervals, decay, GaussianQuantileOracle())


# ---------------------------------------------------------------------------
# Non-central chi-squared family
# ---------------------------------------------------------------------------


def _with_midpoint_constant(table: DyadicPolyTable, p_half: float) -> DyadicPolyTable:
    coeffs = table.coeffs.copy()
    coeffs[:, 0] = 0.0
    coeffs[0, 0] = p_half
    return DyadicPolyTable(
        degree=table.degree, n_intervals=table.n_intervals, coeffs=coeffs, decay=table.decay
    )


def fit_ncchi2(nu: float, n_knots: int = 16, m: int = 1, n_intervals: int = 15) -> NcChi2Table:
    """Fit the interpolated table family for fixed degrees of freedom.

    One lower-half and one upper-half table per sqrt(y) knot.  The knot
    at y = 0 is the Gaussian limit (fitted via the closed machinery for
    Phi^{-1}); y = 1 is the central limit, where the non-centrality
    vanishes.  Index 0 of every half-table stores the interval-free
    constant P(1/2; y): the distribution is asymmetric, so the midpoint
    value is not zero.
    """
    if nu <= 0:
        raise ConfigError(f"nu must be > 0, got {nu}")
    if n_knots < 2:
        raise ConfigError(f"need at least 2 knots, got {n_knots}")

    lower: list[DyadicPolyTable] = []
    upper: list[DyadicPolyTable] = []
    for j, s in enumerate(np.linspace(0.0, 1.0, n_knots)):
        if j == 0:
            gauss = fit_gaussian_dyadic(m, n_intervals)
            neg = DyadicPolyTable(
                degree=m, n_intervals=n_intervals, coeffs=-gauss.coeffs, decay=gauss.decay
            )
            lower.append(gauss)
            upper.append(neg)
            continue
        y = float(s * s)
        lam = nu * (1.0 - y) / y
        try:
            oracle_lo = NcChi2POracle(nu, lam, "lower")
            oracle_up = NcChi2POracle(nu, lam, "upper")
            tab_lo = fit_dyadic_table(m, n_intervals, 0.5, oracle_lo)
            tab_up = fit_dyadic_table(m, n_intervals, 0.5, oracle_up)
            p_half = oracle_lo._p_of_x(exact_dist.ncchi2_inv_cdf(0.5, nu, lam))
        except NumericalError as exc:
            raise NumericalError(f"knot fit failed at nu={nu}, y={y:.6g}: {exc}") from exc
        lower.append(_with_midpoint_constant(tab_lo, p_half))
        upper.append(_with_midpoint_constant(tab_up, p_half))

    return NcChi2Table(
        nu=float(nu),
        n_knots=n_knots,
        degree=m,
        n_intervals=n_intervals,
        lower=tuple(lower),
        upper=tuple(upper),
    )
