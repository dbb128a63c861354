"""Property-check implementations shared by the unit and acceptance suites."""

import numpy as np

from approxrv import exact_dist, mlmc
from approxrv.sampler import dyadic_index, eval_dyadic


def max_antisymmetry_defect(n: int = 10**4, seed: int = 5) -> float:
    """max |inv(u) + inv(1-u)| over random uniforms."""
    u = np.random.default_rng(seed).random(n)
    u = u[(u > 0.0) & (u < 1.0)]
    return float(np.max(np.abs(exact_dist.gaussian_inv_cdf(u) + exact_dist.gaussian_inv_cdf(1.0 - u))))


def eval_is_monotone(table, n: int = 10**4) -> bool:
    u = (np.arange(n) + 0.5) / n
    from approxrv.sampler import evaluate

    vals = evaluate(table, u)
    return bool(np.all(np.diff(vals) >= 0.0))


def dyadic_monotone_defects(table, n: int = 10**4):
    """(positions, sizes) of decreasing steps of eval_dyadic on the grid.

    The discontinuous per-interval least-squares construction is allowed
    a single notch across u = 1/2: the fit value just below 1/2 is
    slightly positive and antisymmetry mirrors it negative just above.
    """
    from approxrv.sampler import evaluate

    u = (np.arange(n) + 0.5) / n
    vals = evaluate(table, u)
    d = np.diff(vals)
    bad = np.flatnonzero(d < 0.0)
    return u[bad], d[bad]


def batch_is_pure(table, n: int = 10**5, seed: int = 9) -> bool:
    from approxrv.sampler import evaluate

    u = np.random.default_rng(seed).random(n)
    a = evaluate(table, u)
    b = evaluate(table, u)
    return bool(np.array_equal(a, b))


def dyadic_index_matches_log(n: int = 10**6, cap: int = 15, seed: int = 11) -> bool:
    """Bit-punned index equals min(ceil(-log2 u) - 1, cap).

    The reference uses exact exponent extraction (frexp), which agrees
    with the ceiling formula everywhere, including exact powers of two
    where u = 2^-n belongs to the wider interval with index n - 1.
    """
    u = np.random.default_rng(seed).random(n) * 0.5
    u = u[u > 0.0]
    ours = dyadic_index(u, cap)
    _, exponents = np.frexp(u)
    ref = np.minimum(-(exponents.astype(np.int64)), cap)
    return bool(np.array_equal(ours, ref))


def gaussian_table_antisymmetry_exact(table, n: int = 10**5, seed: int = 13) -> float:
    """max |eval(u) + eval(1-u)| on the 53-bit lattice (1-u exact there)."""
    u = np.random.default_rng(seed).random(n)
    u = u[(u > 0.0) & (u < 1.0)]
    return float(np.max(np.abs(eval_dyadic(table, u) + eval_dyadic(table, 1.0 - u))))


def coupling_identity_defect(spec: mlmc.LevelSpec, n_paths: int = 5000, seed: int = 3) -> float:
    """|mean(two_way_approx) + mean(four_way) - mean(two_way_exact)| (relative)."""
    suite = mlmc.estimate_level_suite(spec, mlmc.level_stream(seed, spec.level), n_paths)
    lhs = suite["two_way_approx"].mean + suite["four_way"].mean
    rhs = suite["two_way_exact"].mean
    scale = max(abs(rhs), 1e-12)
    return abs(lhs - rhs) / scale


def allocation_perturbation_holds(variances, costs, epsilon: float = 0.1,
                                  bump: float = 0.1) -> bool:
    """Moving any level's path count off the optimum (rebalancing another
    level to keep the variance budget) never lowers the predicted cost."""
    v = np.asarray(variances, dtype=np.float64)
    c = np.asarray(costs, dtype=np.float64)
    budget = epsilon**2 / 2.0
    total = 2.0 * epsilon**-2 * np.sum(np.sqrt(v * c)) ** 2
    m_opt = epsilon**-1 * np.sqrt(2.0 * total * v / c)
    base_cost = float(np.sum(m_opt * c))
    n = len(v)
    for l in range(n):
        for sign in (+1.0, -1.0):
            for j in range(n):
                if j == l:
                    continue
                m = m_opt.copy()
                m[l] *= 1.0 + sign * bump
                others = np.sum(v / m) - v[j] / m[j]
                slack = budget - others
                if slack <= 0:
                    continue  # cannot rebalance on this level
                m[j] = v[j] / slack
                if m[j] <= 0:
                    continue
                if np.sum(v / m) > budget * (1.0 + 1e-12):
                    continue
                if float(np.sum(m * c)) < base_cost * (1.0 - 1e-9):
                    return False
    return True
