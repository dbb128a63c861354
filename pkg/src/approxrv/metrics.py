"""Lp approximation-error measurement and scaling studies.

Quadrature is aligned to the approximation's breakpoints (the integrand
is smooth inside each interval) and runs in the z-space of the exact
distribution wherever a measure object is supplied, which turns the
endpoint singularities of quantile functions into well-behaved infinite
tails.  A Monte Carlo estimator backs everything as an independent
cross-check and as the fallback when no breakpoints are available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _integrate

from . import exact_dist
from .errors import ConfigError, NumericalError
from .sampler import evaluate
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table
from .fit import fit_constant

_GL_NODES = {}


def _gl(order: int):
    if order not in _GL_NODES:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_NODES[order] = (0.5 * (x + 1.0), 0.5 * w)  # mapped to [0, 1]
    return _GL_NODES[order]


@dataclass
class LpErrorReport:
    """One measured Lp error.

    ``error_estimate`` is the internal quadrature discrepancy (or the
    Monte Carlo standard error on the value); ``flagged`` marks reports
    whose estimate exceeds 1e-6 of the value.
    """

    p: float
    value: float
    method: str
    n_points: int
    error_estimate: float
    flagged: bool = False


def _as_eval(obj):
    if isinstance(obj, (ConstantTable, DyadicPolyTable)):
        return lambda u: evaluate(obj, u)
    if callable(obj):
        return obj
    raise ConfigError(f"cannot interpret {type(obj).__name__} as an evaluator")


def _breakpoints_of(obj, breakpoints):
    if breakpoints is not None:
        return np.asarray(breakpoints, dtype=np.float64)
    if isinstance(obj, (ConstantTable, DyadicPolyTable)):
        return obj.breakpoints()
    return None


def lp_error(
    approx_eval,
    exact_eval=None,
    p: float = 2.0,
    *,
    breakpoints=None,
    measure=None,
    method: str = "auto",
    n_samples: int = 10**6,
    seed: int = 0,
) -> LpErrorReport:
    """integral_0^1 |approx(u) - exact(u)|^p du, reported as its p-th root.

    ``measure`` (an object with cdf/pdf/inv_cdf, e.g. GaussianRef) routes
    the tail intervals through the z-space substitution u = F(z).  When
    no breakpoints can be inferred the method falls back to Monte Carlo
    with a reported standard error.
    """
    if p < 1.0:
        raise ConfigError(f"norm order must be >= 1, got {p}")
    approx_fn = _as_eval(approx_eval)
    exact_is_measure = exact_eval is None
    if exact_is_measure:
        if measure is None:
            raise ConfigError("need an exact evaluator or a measure")
        exact_fn = measure.inv_cdf
    else:
        exact_fn = _as_eval(exact_eval)
    pts = _breakpoints_of(approx_eval, breakpoints)

    if method == "auto":
        method = "quadrature" if pts is not None else "monte_carlo"
    if method == "monte_carlo" or pts is None:
        return _lp_monte_carlo(approx_fn, exact_fn, p, n_samples, seed)

    pts = np.unique(np.clip(pts, 0.0, 1.0))
    if pts[0] != 0.0 or pts[-1] != 1.0:
        raise ConfigError("breakpoints must span [0, 1]")
    try:
        if measure is not None and len(pts) <= 512:
            value_p, est = _lp_quad_zspace(approx_fn, exact_fn, p, pts, measure, exact_is_measure)
            n_points = 0
        else:
            value_p, est = _lp_quad_uspace(approx_fn, exact_fn, p, pts, measure, exact_is_measure)
            n_points = (len(pts) - 1) * 24
    except NumericalError:
        return _lp_monte_carlo(approx_fn, exact_fn, p, n_samples, seed)
    value = value_p ** (1.0 / p)
    est_value = est * value / (p * value_p) if value_p > 0 else est
    return LpErrorReport(
        p=p,
        value=value,
        method="quadrature",
        n_points=n_points,
        error_estimate=est_value,
        flagged=bool(est_value > 1e-6 * value if value > 0 else est_value > 0),
    )


_U_MIN = 5e-324
_U_MAX = 1.0 - 2.0**-53


def _zspace_integrand(approx_fn, exact_fn, p, measure, exact_is_measure):
    # In z-space the exact quantile composed with the measure's cdf is z
    # itself; the approximation still needs u, clamped into the open
    # interval where the cdf under/overflows (the density there makes
    # the clamp's effect negligible).
    def integrand(z):
        w = measure.pdf(z)
        if w == 0.0:
            return 0.0
        u = min(max(measure.cdf(z), _U_MIN), _U_MAX)
        target = z if exact_is_measure else exact_fn(u)
        return abs(approx_fn(u) - target) ** p * w

    return integrand


def _lp_quad_zspace(approx_fn, exact_fn, p, pts, measure, exact_is_measure):
    """Per-interval adaptive quadrature after substituting u = F(z)."""
    total = 0.0
    total_err = 0.0
    integrand = _zspace_integrand(approx_fn, exact_fn, p, measure, exact_is_measure)

    import warnings as _warnings

    with _warnings.catch_warnings():
        # Near-zero intervals can be roundoff-limited below epsrel; the
        # per-interval error estimates aggregated below carry that.
        _warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        for a, b in zip(pts[:-1], pts[1:]):
            z_lo = -np.inf if a <= 0.0 else measure.inv_cdf(a)
            z_hi = np.inf if b >= 1.0 else measure.inv_cdf(b)
            val, err = _integrate.quad(integrand, z_lo, z_hi, epsabs=1e-300, epsrel=1e-9, limit=300)
            total += val
            total_err += err
    return total, total_err


def _lp_quad_uspace(approx_fn, exact_fn, p, pts, measure, exact_is_measure=False):
    """Vectorized fixed-order Gauss-Legendre across many intervals.

    Interior intervals integrate in u-space at two orders (the
    difference is the error estimate); the two extreme intervals use the
    z-space substitution when a measure is available, since that is
    where the quantile diverges.
    """
    a = pts[:-1].copy()
    b = pts[1:].copy()
    lo_tail = hi_tail = 0.0
    if measure is not None:
        # Peel the outermost intervals into adaptive z-space quadrature.
        integrand = _zspace_integrand(approx_fn, exact_fn, p, measure, exact_is_measure)
        lo_tail = _integrate.quad(
            integrand, -np.inf, measure.inv_cdf(b[0]), epsabs=1e-300, epsrel=1e-9, limit=300
        )[0]
        hi_tail = _integrate.quad(
            integrand, measure.inv_cdf(a[-1]), np.inf, epsabs=1e-300, epsrel=1e-9, limit=300
        )[0]
        a, b = a[1:-1], b[1:-1]

    def gl_total(order):
        x, w = _gl(order)
        u = a[:, None] + (b - a)[:, None] * x[None, :]
        flat = u.reshape(-1)
        d = np.abs(approx_fn(flat) - exact_fn(flat)) ** p
        return float(np.sum(d.reshape(u.shape) @ w * (b - a)))

    coarse = gl_total(12)
    fine = gl_total(24)
    return fine + lo_tail + hi_tail, abs(fine - coarse)


def _lp_monte_carlo(approx_fn, exact_fn, p, n_samples, seed):
    rng = np.random.default_rng(seed)
    u = rng.random(n_samples)
    u = u[(u > 0.0) & (u < 1.0)]
    d = np.abs(np.asarray(approx_fn(u)) - np.asarray(exact_fn(u))) ** p
    mean = float(np.mean(d))
    se_mean = float(np.std(d, ddof=1) / math.sqrt(d.size))
    value = mean ** (1.0 / p)
    se_value = se_mean * value / (p * mean) if mean > 0 else se_mean
    return LpErrorReport(
        p=p, value=value, method="monte_carlo", n_points=d.size,
        error_estimate=se_value, flagged=False,
    )


# ---------------------------------------------------------------------------
# Scaling studies
# ---------------------------------------------------------------------------


@dataclass
class StudyRow:
    config: dict
    p: float
    error: float
    error_estimate: float


@dataclass
class ScalingStudy:
    rows: list[StudyRow] = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def errors(self, p: float, **match) -> list[tuple[dict, float]]:
        return [
            (r.config, r.error)
            for r in self.rows
            if r.p == p and all(r.config.get(k) == v for k, v in match.items())
        ]


def fit_log2_slope(xs, errors) -> float:
    """Least-squares slope of log2(error) against xs."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.log2(np.asarray(errors, dtype=np.float64))
    return float(np.polyfit(xs, ys, 1)[0])


def scaling_study_constant(q_range, p_list=(2.0,), construction: str = "l1") -> ScalingStudy:
    """Lp errors of constant tables against the normal quantile.

    The returned ``slopes[p]`` regresses log2(error^p) on q over the top
    half of ``q_range``; the piecewise-constant error theorem puts it
    near -1 with a q^{-p/2} subdominant correction.
    """
    gauss = exact_dist.GaussianRef()
    study = ScalingStudy()
    qs = list(q_range)
    for q in qs:
        table = fit_constant(q, construction)
        for p in p_list:
            rep = lp_error(table, p=p, measure=gauss)
            study.rows.append(
                StudyRow(config={"q": q, "construction": construction}, p=p,
                         error=rep.value, error_estimate=rep.error_estimate)
            )
    top = [q for q in qs if q >= qs[len(qs) // 2]]
    for p in p_list:
        errs = [e for cfg, e in study.errors(p) if cfg["q"] in top]
        study.slopes[p] = fit_log2_slope(top, np.asarray(errs) ** p)
    return study


def scaling_study_dyadic(m: int, K_range, r_list=(0.5,), p_list=(2.0,)) -> ScalingStudy:
    """Lp errors of degree-m dyadic tables over interval counts and decay rates."""
    gauss = exact_dist.GaussianRef()
    study = ScalingStudy()
    from .fit import GaussianQuantileOracle, fit_dyadic_table

    oracle = GaussianQuantileOracle()
    for r in r_list:
        for K in K_range:
            table = fit_dyadic_table(m, K, r, oracle)
            for p in p_list:
                rep = lp_error(table, p=p, measure=gauss)
                study.rows.append(
                    StudyRow(config={"m": m, "K": K, "r": r}, p=p,
                             error=rep.value, error_estimate=rep.error_estimate)
                )
    return study


# ---------------------------------------------------------------------------
# Non-central chi-squared RMSE grid
# ---------------------------------------------------------------------------


@dataclass
class RmseGrid:
    nus: list
    lambdas: list
    values: np.ndarray  # shape (len(lambdas), len(nus)); NaN marks failed cells
    n_samples: int
    failures: list = field(default_factory=list)


_exact_grid_cache: dict = {}


def exact_ncchi2_grid(nu: float, lam: float, n_samples: int) -> np.ndarray:
    """Exact quantiles on the deterministic midpoint u-grid, memoized."""
    key = (float(nu), float(lam), int(n_samples))
    if key not in _exact_grid_cache:
        u = (np.arange(n_samples) + 0.5) / n_samples
        _exact_grid_cache[key] = exact_dist.ncchi2_inv_cdf_batch(u, nu, lam)
    return _exact_grid_cache[key]


def clear_exact_grid_cache() -> None:
    _exact_grid_cache.clear()


def rmse_ncchi2(tables, lambda_grid, n_samples: int = 10**5) -> RmseGrid:
    """RMSE of the table evaluation against the exact quantile.

    ``tables`` is one NcChi2Table or a sequence (one per nu column).  The
    u-grid is the n-point midpoint lattice -- the lowest-discrepancy
    deterministic point set in one dimension -- so runs are bitwise
    reproducible.  Oracle failures mark their cell NaN and are recorded.
    """
    if isinstance(tables, NcChi2Table):
        tables = [tables]
    lambdas = list(lambda_grid)
    values = np.full((len(lambdas), len(tables)), np.nan)
    failures = []
    u = (np.arange(n_samples) + 0.5) / n_samples
    for cj, table in enumerate(tables):
        for ri, lam in enumerate(lambdas):
            try:
                x_exact = exact_ncchi2_grid(table.nu, lam, n_samples)
            except NumericalError as exc:
                failures.append({"nu": table.nu, "lambda": lam, "error": str(exc)})
                continue
            x_approx = evaluate(table, u, lam=lam)
            values[ri, cj] = math.sqrt(float(np.mean((x_approx - x_exact) ** 2)))
    return RmseGrid(
        nus=[t.nu for t in tables], lambdas=lambdas, values=values,
        n_samples=n_samples, failures=failures,
    )


def theorem_bound_constant(q, p, c: float) -> float:
    """The piecewise-constant error bound shape C * 2^{-q} q^{-p/2}."""
    return c * 2.0 ** (-q) * q ** (-p / 2.0)


def calibrate_bound_constant(study: ScalingStudy, p: float, q_ref: int) -> float:
    """Pin the bound constant at a reference q from measured errors."""
    for cfg, err in study.errors(p):
        if cfg["q"] == q_ref:
            return err**p / (2.0 ** (-q_ref) * q_ref ** (-p / 2.0))
    raise ConfigError(f"study has no row at q={q_ref}, p={p}")
