import math

import numpy as np
import pytest

from approxrv import exact_dist as ed
from approxrv import fit, metrics
from approxrv.errors import ConfigError


@pytest.fixture(scope="module")
def gauss():
    return ed.GaussianRef()


class TestLpError:
    def test_identity_is_zero(self, gauss):
        rep = metrics.lp_error(gauss.inv_cdf, gauss.inv_cdf, 2.0,
                               breakpoints=[0.0, 0.25, 0.5, 0.75, 1.0], measure=gauss)
        assert rep.value < 1e-12

    def test_q1_l1_closed_form(self, gauss):
        # RMSE of the two-interval conditional-expectation table is
        # sqrt(1 - 2/pi): unit second moment minus the half-normal mean
        # squared, counted twice.
        table = fit.fit_constant(1, "l1")
        rep = metrics.lp_error(table, p=2.0, measure=gauss)
        assert rep.method == "quadrature"
        assert abs(rep.value - math.sqrt(1.0 - 2.0 / math.pi)) < 1e-9

    def test_linear_table_plateau_value(self, linear_table, gauss):
        rep = metrics.lp_error(linear_table, p=2.0, measure=gauss)
        assert 5e-3 <= rep.value <= 2e-2

    def test_quadrature_matches_monte_carlo(self, linear_table, gauss):
        # The MC standard error understates itself slightly: the squared
        # integrand is heavy-tailed near the singular intervals, whose
        # rare contributions (relative ~1e-3 at n = 1e6) a pseudo-random
        # sample barely visits.  Allow that bias on top of 3 SE.
        quad = metrics.lp_error(linear_table, p=2.0, measure=gauss)
        mc = metrics.lp_error(linear_table, p=2.0, measure=gauss,
                              method="monte_carlo", n_samples=10**6, seed=7)
        assert abs(quad.value - mc.value) <= 3.0 * mc.error_estimate + 1e-2 * quad.value

    def test_quadrature_matches_monte_carlo_constant(self, gauss):
        table = fit.fit_constant(6, "l1")
        quad = metrics.lp_error(table, p=2.0, measure=gauss)
        mc = metrics.lp_error(table, p=2.0, measure=gauss,
                              method="monte_carlo", n_samples=10**6, seed=11)
        assert abs(quad.value - mc.value) <= 3.0 * mc.error_estimate + 1e-2 * quad.value

    def test_higher_norms_dominate(self, gauss):
        for q in (2, 5, 8):
            table = fit.fit_constant(q, "l1")
            e2 = metrics.lp_error(table, p=2.0, measure=gauss).value
            e4 = metrics.lp_error(table, p=4.0, measure=gauss).value
            assert e4 > e2

    def test_callable_without_breakpoints_uses_monte_carlo(self, gauss):
        rep = metrics.lp_error(lambda u: np.zeros_like(np.asarray(u)), gauss.inv_cdf, 2.0,
                               n_samples=10**5)
        assert rep.method == "monte_carlo"
        assert abs(rep.value - 1.0) < 0.02  # ||Phi^{-1}||_2 = 1
        assert rep.error_estimate > 0

    def test_norm_order_validated(self, gauss):
        with pytest.raises(ConfigError):
            metrics.lp_error(gauss.inv_cdf, gauss.inv_cdf, 0.5)


class TestScalingStudies:
    def test_constant_error_drop_and_slope(self):
        # The exact drop for the conditional-expectation construction is
        # 49.27 between 2 and 1024 intervals (closed form at q = 1 is
        # sqrt(1 - 2/pi)); the log-slope carries the q^{-1} correction.
        study = metrics.scaling_study_constant(range(1, 11), p_list=(2.0,))
        err = {cfg["q"]: e for cfg, e in study.errors(2.0)}
        assert abs(err[1] - math.sqrt(1.0 - 2.0 / math.pi)) < 1e-8
        assert 45.0 <= err[1] / err[10] <= 55.0
        assert study.slopes[2.0] < -0.9

    def test_bound_shape_holds_with_one_constant(self):
        # err^p * 2^q * q^{p/2} increases monotonically toward a finite
        # limit, so a single constant taken at the top of the window
        # dominates the whole window -- the bound shape is right.
        study = metrics.scaling_study_constant(range(8, 13), p_list=(2.0,))
        scaled = {cfg["q"]: e**2 * 2.0 ** cfg["q"] * cfg["q"] for cfg, e in study.errors(2.0)}
        qs = sorted(scaled)
        assert all(scaled[a] < scaled[b] for a, b in zip(qs, qs[1:]))
        c = metrics.calibrate_bound_constant(study, 2.0, q_ref=qs[-1])
        for q in qs:
            assert scaled[q] <= c * (1.0 + 1e-12)

    def test_dyadic_low_interval_counts_are_order_insensitive(self):
        # With K = 4 the singular interval dominates: the cubic fit buys
        # less than a factor 3 over the linear one.
        s1 = metrics.scaling_study_dyadic(1, [4])
        s3 = metrics.scaling_study_dyadic(3, [4])
        e1 = s1.rows[0].error
        e3 = s3.rows[0].error
        assert e1 / e3 < 3.0

    def test_dyadic_plateau_in_k(self):
        study = metrics.scaling_study_dyadic(1, [16, 20])
        errs = {cfg["K"]: e for cfg, e in study.errors(2.0)}
        assert errs[16] / errs[20] < 1.15

    def test_l1_construction_beats_central(self, gauss):
        # Conditional expectation is the L2 projection onto interval-wise
        # constants, so it dominates the midpoint construction at every q.
        for q in (1, 3, 5, 8):
            e_l1 = metrics.lp_error(fit.fit_constant(q, "l1"), p=2.0, measure=gauss).value
            e_central = metrics.lp_error(fit.fit_constant(q, "central"), p=2.0, measure=gauss).value
            assert e_l1 <= e_central

    def test_dyadic_decay_rate_scaling(self):
        # At large K the central term ~ (1-r)^2 per unit norm dominates.
        study = metrics.scaling_study_dyadic(1, [30], r_list=(0.5, 0.75))
        errs = {cfg["r"]: e for cfg, e in study.errors(2.0)}
        measured = errs[0.75] / errs[0.5]
        predicted = ((1 - 0.75) / (1 - 0.5)) ** 2
        assert 0.5 * predicted <= measured <= 2.0 * predicted


class TestRmseGrid:
    def test_reference_cell(self, ncchi2_nu1_linear):
        grid = metrics.rmse_ncchi2(ncchi2_nu1_linear, [1.0], n_samples=2 * 10**4)
        assert abs(grid.values[0, 0] - 0.036) <= 0.5 * 0.036

    def test_grid_shape_and_caching(self, ncchi2_nu1_linear):
        grid = metrics.rmse_ncchi2([ncchi2_nu1_linear], [1.0, 5.0], n_samples=10**4)
        assert grid.values.shape == (2, 1)
        assert not grid.failures
        again = metrics.rmse_ncchi2([ncchi2_nu1_linear], [1.0, 5.0], n_samples=10**4)
        assert np.array_equal(grid.values, again.values)  # deterministic
