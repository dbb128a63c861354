"""Nested multilevel Monte Carlo engine.

Coupled path simulation for geometric Brownian motion (Euler-Maruyama
and Milstein) and the CIR process (exact chi-squared transitions and the
truncated Euler scheme), per-level pilot statistics, the closed-form
optimal path allocation, and the speedup accounting that turns pilot
variances plus measured quantile costs into predicted savings.

Coupling conventions:
  * fine/coarse: the coarse path consumes the pairwise sums of the fine
    path's Wiener increments, so both run on the same uniforms;
  * exact/approximate: both quantile evaluations share one uniform per
    step (the same-input coupling that makes four-way corrections small).

Everything is deterministic given (seed, stream_id, path count): streams
are counter-based, and workers must use disjoint stream ids.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import exact_dist
from .errors import ConfigError, NumericalError
from .sampler import UniformStream, evaluate, gaussian_exact_batch
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table

SCHEMES = ("euler_maruyama", "milstein", "cir_exact", "cir_euler_truncated")
KINDS = ("plain", "two_way", "four_way")
PAYOFFS = ("identity", "call")


@dataclass(frozen=True)
class GbmParams:
    """Geometric Brownian motion dX = mu X dt + sigma X dW."""

    mu: float
    sigma: float
    x0: float
    t_end: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.x0 > 0 and self.t_end > 0):
            raise ConfigError("GBM requires sigma > 0, x0 > 0, t_end > 0")


@dataclass(frozen=True)
class CirParams:
    """CIR process dX = kappa (theta - X) dt + sigma sqrt(X) dW."""

    kappa: float
    theta: float
    sigma: float
    x0: float
    t_end: float

    def __post_init__(self):
        for name in ("kappa", "theta", "sigma", "x0", "t_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"CIR requires {name} > 0")

    @property
    def feller_satisfied(self) -> bool:
        return 2.0 * self.kappa * self.theta >= self.sigma**2


@dataclass(frozen=True)
class LevelSpec:
    """One MLMC level: process, scheme, discretization, coupling, payoff.

    ``rv_source`` is ``"exact"`` or a fitted table; ``kind`` picks which
    difference the level estimates (plain value, fine-minus-coarse
    two-way, or the exact-minus-approximate four-way correction).
    """

    level: int
    scheme: str
    process: Union[GbmParams, CirParams]
    rv_source: Union[str, ConstantTable, DyadicPolyTable, NcChi2Table] = "exact"
    kind: str = "two_way"
    payoff: str = "identity"
    strike: float = 1.0
    n0: int = 2

    def __post_init__(self):
        if self.level < 0:
            raise ConfigError("level must be >= 0")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.payoff not in PAYOFFS:
            raise ConfigError(f"unknown payoff {self.payoff!r}")
        if self.n0 < 1:
            raise ConfigError("n0 must be >= 1")
        if self.kind == "four_way" and self.rv_source == "exact":
            raise ConfigError("four-way differences need a table source")
        gaussian = self.scheme in ("euler_maruyama", "milstein", "cir_euler_truncated")
        if isinstance(self.process, GbmParams) and self.scheme.startswith("cir"):
            raise ConfigError("CIR schemes need CirParams")
        if isinstance(self.process, CirParams) and not self.scheme.startswith("cir"):
            raise ConfigError(f"scheme {self.scheme!r} needs GbmParams")
        if self.rv_source != "exact":
            if gaussian and isinstance(self.rv_source, NcChi2Table):
                raise ConfigError("Gaussian schemes need a Gaussian table source")
            if self.scheme == "cir_exact" and not isinstance(self.rv_source, NcChi2Table):
                raise ConfigError("cir_exact needs an NcChi2Table source")

    @property
    def n_steps_fine(self) -> int:
        return self.n0 << self.level

    @property
    def dt_fine(self) -> float:
        return self.process.t_end / self.n_steps_fine


@dataclass(frozen=True)
class PathBatch:
    """Per-path terminal payoffs from one coupled simulation.

    Exact-side and approximate-side arrays are None when the requested
    sides did not include them.  ``draws_per_path`` counts uniforms.
    """

    p_fine_exact: Optional[np.ndarray]
    p_coarse_exact: Optional[np.ndarray]
    p_fine_approx: Optional[np.ndarray]
    p_coarse_approx: Optional[np.ndarray]
    draws_per_path: int


@dataclass
class LevelStats:
    """Sample statistics of one level's difference estimator."""

    level: int
    kind: str
    mean: float
    variance: float
    n_paths: int
    cost_per_path_seconds: float
    cost_per_path_draws: float
    degenerate: bool = False


def _payoff(spec: LevelSpec, x: np.ndarray) -> np.ndarray:
    if spec.payoff == "identity":
        return x
    return np.maximum(x - spec.strike, 0.0)


def _sides_for(spec: LevelSpec) -> str:
    if spec.kind == "four_way":
        return "both"
    return "exact" if spec.rv_source == "exact" else "approx"


def simulate_gbm_coupled(spec: LevelSpec, stream: UniformStream, n_paths: int,
                         sides: Optional[str] = None) -> PathBatch:
    """Coupled fine/coarse GBM paths under Euler-Maruyama or Milstein.

    Draws one uniform per fine step per path; the exact side maps it
    through the reference quantile and the approximate side through the
    table, so all four payoffs ride on identical randomness.  Coarse
    increments are the pairwise sums of fine increments.  At level 0 the
    coarse payoffs are zero (the telescoping convention P_{-1} = 0).
    """
    if spec.scheme not in ("euler_maruyama", "milstein"):
        raise ConfigError(f"simulate_gbm_coupled cannot run scheme {spec.scheme!r}")
    sides = sides or _sides_for(spec)
    params: GbmParams = spec.process
    n_f = spec.n_steps_fine
    dt_f = spec.dt_fine
    dt_c = 2.0 * dt_f
    sq_f = math.sqrt(dt_f)
    milstein = spec.scheme == "milstein"
    mu, sg = params.mu, params.sigma
    want_exact = sides in ("exact", "both")
    want_approx = sides in ("approx", "both")
    if want_approx and spec.rv_source == "exact":
        raise ConfigError("approximate side requested but rv_source is 'exact'")

    xf_e = np.full(n_paths, params.x0) if want_exact else None
    xc_e = np.full(n_paths, params.x0) if want_exact else None
    xf_a = np.full(n_paths, params.x0) if want_approx else None
    xc_a = np.full(n_paths, params.x0) if want_approx else None

    def em_step(x, dw, dt):
        incr = mu * dt + sg * dw
        if milstein:
            incr += 0.5 * sg * sg * (dw * dw - dt)
        return x * (1.0 + incr)

    for pair in range(n_f // 2):
        u1 = stream.uniforms(n_paths)
        u2 = stream.uniforms(n_paths)
        if want_exact:
            z1 = gaussian_exact_batch(u1)
            z2 = gaussian_exact_batch(u2)
            xf_e = em_step(em_step(xf_e, sq_f * z1, dt_f), sq_f * z2, dt_f)
            xc_e = em_step(xc_e, sq_f * (z1 + z2), dt_c)
        if want_approx:
            w1 = np.asarray(evaluate(spec.rv_source, u1), dtype=np.float64)
            w2 = np.asarray(evaluate(spec.rv_source, u2), dtype=np.float64)
            xf_a = em_step(em_step(xf_a, sq_f * w1, dt_f), sq_f * w2, dt_f)
            xc_a = em_step(xc_a, sq_f * (w1 + w2), dt_c)
    if n_f % 2:  # odd fine-step count only when n0 is odd at level 0
        u1 = stream.uniforms(n_paths)
        if want_exact:
            xf_e = em_step(xf_e, sq_f * gaussian_exact_batch(u1), dt_f)
        if want_approx:
            w1 = np.asarray(evaluate(spec.rv_source, u1), dtype=np.float64)
            xf_a = em_step(xf_a, sq_f * w1, dt_f)

    zero = np.zeros(n_paths)
    coarse_live = spec.level > 0
    return PathBatch(
        p_fine_exact=_payoff(spec, xf_e) if want_exact else None,
        p_coarse_exact=(_payoff(spec, xc_e) if coarse_live else zero.copy()) if want_exact else None,
        p_fine_approx=_payoff(spec, xf_a) if want_approx else None,
        p_coarse_approx=(_payoff(spec, xc_a) if coarse_live else zero.copy()) if want_approx else None,
        draws_per_path=n_f,
    )


def simulate_cir_coupled(spec: LevelSpec, stream: UniformStream, n_paths: int,
                         sides: Optional[str] = None) -> PathBatch:
    """Coupled CIR paths.

    ``cir_exact`` steps through the exact scaled chi-squared transition:
    the exact side inverts the reference quantile, the approximate side
    evaluates the table, both on the same uniform, each propagating its
    own non-centrality (fine == coarse here: the coupling of interest is
    exact-vs-approximate at one discretization, so coarse slots repeat
    the fine payoffs).  ``cir_euler_truncated`` is the fine/coarse
    Gaussian scheme with sqrt(|x|).
    """
    sides = sides or _sides_for(spec)
    params: CirParams = spec.process
    n_f = spec.n_steps_fine
    dt_f = spec.dt_fine
    want_exact = sides in ("exact", "both")
    want_approx = sides in ("approx", "both")
    if want_approx and spec.rv_source == "exact":
        raise ConfigError("approximate side requested but rv_source is 'exact'")

    if spec.scheme == "cir_exact":
        nu, _, scale = exact_dist.cir_transition_params(
            params.x0, params.kappa, params.theta, params.sigma, dt_f
        )
        decay_over_scale = math.exp(-params.kappa * dt_f) / scale
        table = spec.rv_source if want_approx else None
        x_e = np.full(n_paths, params.x0) if want_exact else None
        x_a = np.full(n_paths, params.x0) if want_approx else None
        for _ in range(n_f):
            u = stream.uniforms(n_paths)
            warm = None
            if want_approx:
                # The table can undershoot zero near u -> 0; clamp the
                # state (not the payoff) so the next non-centrality is valid.
                lam_a = np.maximum(x_a, 0.0) * decay_over_scale
                x_a = scale * np.asarray(evaluate(table, u, lam=lam_a), dtype=np.float64)
            if want_exact:
                lam_e = x_e * decay_over_scale
                if table is not None:
                    warm = np.asarray(evaluate(table, u, lam=lam_e), dtype=np.float64)
                try:
                    x_e = scale * exact_dist.ncchi2_inv_cdf_batch(u, nu, lam_e, x0=warm)
                except NumericalError as exc:
                    raise NumericalError(
                        f"exact CIR transition failed at level {spec.level}: {exc}"
                    ) from exc
        pf_e = _payoff(spec, x_e) if want_exact else None
        pf_a = _payoff(spec, x_a) if want_approx else None
        return PathBatch(
            p_fine_exact=pf_e,
            p_coarse_exact=pf_e.copy() if want_exact else None,
            p_fine_approx=pf_a,
            p_coarse_approx=pf_a.copy() if want_approx else None,
            draws_per_path=n_f,
        )

    if spec.scheme != "cir_euler_truncated":
        raise ConfigError(f"simulate_cir_coupled cannot run scheme {spec.scheme!r}")
    kp, th, sg = params.kappa, params.theta, params.sigma
    dt_c = 2.0 * dt_f
    sq_f = math.sqrt(dt_f)

    def em_step(x, dw, dt):
        return x + kp * (th - x) * dt + sg * np.sqrt(np.abs(x)) * dw

    xf_e = np.full(n_paths, params.x0) if want_exact else None
    xc_e = np.full(n_paths, params.x0) if want_exact else None
    xf_a = np.full(n_paths, params.x0) if want_approx else None
    xc_a = np.full(n_paths, params.x0) if want_approx else None
    for _ in range(n_f // 2):
        u1 = stream.uniforms(n_paths)
        u2 = stream.uniforms(n_paths)
        if want_exact:
            z1 = gaussian_exact_batch(u1)
            z2 = gaussian_exact_batch(u2)
            xf_e = em_step(em_step(xf_e, sq_f * z1, dt_f), sq_f * z2, dt_f)
            xc_e = em_step(xc_e, sq_f * (z1 + z2), dt_c)
        if want_approx:
            w1 = np.asarray(evaluate(spec.rv_source, u1), dtype=np.float64)
            w2 = np.asarray(evaluate(spec.rv_source, u2), dtype=np.float64)
            xf_a = em_step(em_step(xf_a, sq_f * w1, dt_f), sq_f * w2, dt_f)
            xc_a = em_step(xc_a, sq_f * (w1 + w2), dt_c)
    if n_f % 2:
        u1 = stream.uniforms(n_paths)
        if want_exact:
            xf_e = em_step(xf_e, sq_f * gaussian_exact_batch(u1), dt_f)
        if want_approx:
            w1 = np.asarray(evaluate(spec.rv_source, u1), dtype=np.float64)
            xf_a = em_step(xf_a, sq_f * w1, dt_f)

    zero = np.zeros(n_paths)
    coarse_live = spec.level > 0
    return PathBatch(
        p_fine_exact=_payoff(spec, xf_e) if want_exact else None,
        p_coarse_exact=(_payoff(spec, xc_e) if coarse_live else zero.copy()) if want_exact else None,
        p_fine_approx=_payoff(spec, xf_a) if want_approx else None,
        p_coarse_approx=(_payoff(spec, xc_a) if coarse_live else zero.copy()) if want_approx else None,
        draws_per_path=n_f,
    )


def simulate(spec: LevelSpec, stream: UniformStream, n_paths: int,
             sides: Optional[str] = None) -> PathBatch:
    if spec.scheme in ("euler_maruyama", "milstein"):
        return simulate_gbm_coupled(spec, stream, n_paths, sides)
    return simulate_cir_coupled(spec, stream, n_paths, sides)


def difference(spec_kind: str, rv_source, batch: PathBatch) -> np.ndarray:
    """The per-path difference the level estimates."""
    if spec_kind == "plain":
        arr = batch.p_fine_exact if rv_source == "exact" else batch.p_fine_approx
        return arr
    if spec_kind == "two_way":
        if rv_source == "exact":
            return batch.p_fine_exact - batch.p_coarse_exact
        return batch.p_fine_approx - batch.p_coarse_approx
    return (
        batch.p_fine_exact - batch.p_coarse_exact
        - batch.p_fine_approx + batch.p_coarse_approx
    )


def estimate_level(spec: LevelSpec, stream: UniformStream, n_pilot: int) -> LevelStats:
    """Pilot-run one level: unbiased mean/variance plus measured costs.

    Cost is recorded both as wall seconds per path and as uniform draws
    per path; the latter is the machine-independent unit the acceptance
    accounting uses.  A zero sample variance is flagged degenerate, not
    fatal.
    """
    if n_pilot < 100:
        raise ConfigError(f"pilot size must be >= 100, got {n_pilot}")
    t0 = time.perf_counter()
    batch = simulate(spec, stream, n_pilot)
    elapsed = time.perf_counter() - t0
    d = difference(spec.kind, spec.rv_source, batch)
    var = float(np.var(d, ddof=1))
    return LevelStats(
        level=spec.level,
        kind=spec.kind,
        mean=float(np.mean(d)),
        variance=var,
        n_paths=n_pilot,
        cost_per_path_seconds=elapsed / n_pilot,
        cost_per_path_draws=float(batch.draws_per_path),
        degenerate=var == 0.0,
    )


def estimate_level_suite(spec: LevelSpec, stream: UniformStream, n_pilot: int) -> dict:
    """Exact two-way, approximate two-way, and four-way stats in one pass.

    All three ride the same coupled path batch, so the nested identity
    (two_way_approx + four_way == two_way_exact, path by path) holds by
    construction.
    """
    if n_pilot < 100:
        raise ConfigError(f"pilot size must be >= 100, got {n_pilot}")
    if spec.rv_source == "exact":
        raise ConfigError("suite estimation needs a table source")
    t0 = time.perf_counter()
    batch = simulate(spec, stream, n_pilot, sides="both")
    elapsed = time.perf_counter() - t0
    out = {}
    for kind, source in (
        ("two_way_exact", "exact"),
        ("two_way_approx", spec.rv_source),
        ("four_way", spec.rv_source),
    ):
        base_kind = "two_way" if kind.startswith("two_way") else "four_way"
        d = difference(base_kind, source, batch)
        var = float(np.var(d, ddof=1))
        out[kind] = LevelStats(
            level=spec.level, kind=base_kind, mean=float(np.mean(d)), variance=var,
            n_paths=n_pilot, cost_per_path_seconds=elapsed / n_pilot,
            cost_per_path_draws=float(batch.draws_per_path), degenerate=var == 0.0,
        )
    return out


def level_stream(seed: int, level: int, batch_index: int = 0) -> UniformStream:
    """Deterministic disjoint stream for (level, batch) workers."""
    return UniformStream(seed, stream_id=(level << 32) | batch_index)


# ---------------------------------------------------------------------------
# Allocation and speedup accounting
# ---------------------------------------------------------------------------


@dataclass
class Allocation:
    n_paths: list
    predicted_cost: float
    epsilon: float
    variance_budget_used: float


def _stat_cost(stats: LevelStats, cost_model: str) -> float:
    return stats.cost_per_path_draws if cost_model == "draws" else stats.cost_per_path_seconds


def optimal_allocation(level_stats, epsilon: float, cost_model: str = "draws") -> Allocation:
    """Cost-minimal real-valued path counts, rounded up.

    m_l = eps^{-1} sqrt(2 T v_l / c_l) with T = 2 eps^{-2} (sum sqrt(v c))^2;
    the constraint sum v_l / m_l <= eps^2 / 2 still holds after rounding.
    """
    stats = list(level_stats)
    if not stats:
        raise ConfigError("allocation needs at least one level")
    if epsilon <= 0:
        raise ConfigError("epsilon must be > 0")
    v = np.array([s.variance for s in stats])
    c = np.array([_stat_cost(s, cost_model) for s in stats])
    if np.any(v < 0) or np.any(c <= 0):
        raise ConfigError("variances must be >= 0 and costs > 0")
    root = np.sqrt(v * c)
    total_cost = 2.0 * epsilon**-2 * root.sum() ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        m_real = epsilon**-1 * np.sqrt(2.0 * total_cost * v / c)
    m = np.maximum(np.ceil(np.nan_to_num(m_real)), 1.0)
    used = float(np.sum(v / m))
    return Allocation(
        n_paths=[int(x) for x in m], predicted_cost=float(total_cost),
        epsilon=epsilon, variance_budget_used=used,
    )


def optimal_allocation_nested(two_way_stats, four_way_stats, epsilon: float,
                              cost_model: str = "draws") -> tuple[Allocation, Allocation, float]:
    """Path counts for the nested estimator's cheap and correction terms.

    Returns (cheap allocation, correction allocation, predicted total
    cost T~ = 2 eps^{-2} (sum sqrt(v~ c~) + sqrt(V~ C~))^2).
    """
    tw = list(two_way_stats)
    fw = list(four_way_stats)
    if len(tw) != len(fw) or not tw:
        raise ConfigError("need matching per-level two-way and four-way stats")
    if epsilon <= 0:
        raise ConfigError("epsilon must be > 0")
    v_t = np.array([s.variance for s in tw])
    c_t = np.array([_stat_cost(s, cost_model) for s in tw])
    v_f = np.array([s.variance for s in fw])
    c_f = np.array([_stat_cost(s, cost_model) for s in fw])
    paired = np.sqrt(v_t * c_t) + np.sqrt(v_f * c_f)
    total = 2.0 * epsilon**-2 * paired.sum() ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.maximum(np.ceil(epsilon**-1 * np.sqrt(2.0 * total * v_t / c_t)), 1.0)
        mm = np.maximum(np.ceil(np.nan_to_num(epsilon**-1 * np.sqrt(2.0 * total * v_f / c_f))), 1.0)
    cheap = Allocation([int(x) for x in m], float(np.sum(m * c_t)), epsilon, float(np.sum(v_t / m)))
    corr = Allocation([int(x) for x in mm], float(np.sum(mm * c_f)), epsilon, float(np.sum(v_f / mm)))
    return cheap, corr, float(total)


@dataclass
class SpeedupRow:
    """One approximation's row of the savings table."""

    name: str
    log2_variance_gap: float
    cost_ratio: float
    speedup: float
    efficiency: float
    paths_ratio_cheap: float  # m~ / m^
    paths_ratio_correction: float  # m~ / M~


def speedup_row(name: str, suites: list[dict], cost_ratio: float,
                level_window: Optional[tuple[int, int]] = None) -> SpeedupRow:
    """Collapse per-level pilot suites into one savings-table row.

    Uses the standard simplifications: the correction cost is the sum of
    both sides' per-path costs (C~ = c^ + c~) and the cheap two-way
    variance matches the exact one (v~ = v^).  The variance gap is the
    mean of per-level log2(V~_l / v^_l) over the window.
    """
    if cost_ratio <= 0:
        raise ConfigError("cost ratio must be > 0")
    gaps = []
    for suite in suites:
        lvl = suite["four_way"].level
        if level_window and not (level_window[0] <= lvl <= level_window[1]):
            continue
        v_hat = suite["two_way_exact"].variance
        v_four = suite["four_way"].variance
        if v_hat > 0 and v_four > 0:
            gaps.append(math.log2(v_four / v_hat))
    if not gaps:
        raise ConfigError("no usable levels in window")
    gap = float(np.mean(gaps))
    ratio_vc = 2.0**gap * (1.0 + cost_ratio)  # (V~ C~) / (v~ c~)
    efficiency = (1.0 + math.sqrt(ratio_vc)) ** -2
    return SpeedupRow(
        name=name,
        log2_variance_gap=gap,
        cost_ratio=cost_ratio,
        speedup=cost_ratio * efficiency,
        efficiency=efficiency,
        paths_ratio_cheap=math.sqrt(cost_ratio / (cost_ratio * efficiency)),
        paths_ratio_correction=math.sqrt(2.0**-gap * (1.0 + cost_ratio)),
    )


def speedup_report(pilot_suites: dict, cost_ratios: dict,
                   level_window: Optional[tuple[int, int]] = None) -> list[SpeedupRow]:
    """Savings rows for several approximation sources.

    ``pilot_suites`` maps source name -> list of per-level suite dicts
    from :func:`estimate_level_suite`; ``cost_ratios`` maps source name
    -> measured exact/approximate per-draw cost ratio.
    """
    rows = []
    for name, suites in pilot_suites.items():
        rows.append(speedup_row(name, suites, cost_ratios[name], level_window))
    return rows


def telescoped_mean(specs: list[LevelSpec], seed: int, n_pilot: int) -> tuple[float, float]:
    """Sum of per-level two-way means with its combined standard error."""
    total = 0.0
    var_sum = 0.0
    for spec in specs:
        stats = estimate_level(spec, level_stream(seed, spec.level), n_pilot)
        total += stats.mean
        var_sum += stats.variance / stats.n_paths
    return total, math.sqrt(var_sum)
