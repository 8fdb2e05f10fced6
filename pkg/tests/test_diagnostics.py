import math

import numpy as np
import pytest

from gmmdenoise import (
    CheckReport,
    GdConfig,
    MixtureParams,
    RngSeed,
    angle_metrics,
    check_angle_step,
    check_contraction,
    check_cross_weights,
    check_g_contraction,
    check_grad_em_equiv,
    check_init_correlation,
    check_power_deviation,
    check_stein_k,
    check_stein_two,
    g_function,
    make_noise_scale,
    run_default_checks,
)
from gmmdenoise.diagnostics import (
    angle_step_bounds,
    control_must_be_na,
    control_must_fail,
    default_g_grid,
    default_power_grid,
    format_check_table,
    _warm_instance,
)
from gmmdenoise.optim import RunRecord
from gmmdenoise.oracles import (
    g_function_plane,
    init_correlation_probability,
    init_correlation_probability_quad,
)


class TestAngleMetrics:
    def test_aligned(self):
        assert angle_metrics(np.array([2.0, 0.0]), np.array([5.0, 0.0])) == (1.0, 0.0)

    def test_orthogonal_sentinel(self):
        cos, tan = angle_metrics(np.array([1.0, 0.0]), np.array([0.0, 3.0]))
        assert cos == 0.0 and tan == math.inf

    def test_arccos_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a, b = rng.normal(size=4), rng.normal(size=4)
            cos, tan = angle_metrics(a, b)
            theta = math.acos(abs(cos))
            assert tan == pytest.approx(math.tan(theta), abs=1e-10)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            angle_metrics(np.zeros(2), np.ones(2))


class TestInitCorrelation:
    def test_d25(self):
        rep = check_init_correlation(25, 2000, RngSeed(1))
        assert rep.passed

    def test_d1_always(self):
        assert init_correlation_probability(1) == 1.0

    def test_oracle_vs_quadrature_and_simulation(self):
        for d in (2, 4, 16):
            p_beta = init_correlation_probability(d)
            p_quad = init_correlation_probability_quad(d)
            assert p_beta == pytest.approx(p_quad, abs=1e-9)
        gen = np.random.default_rng(2)
        v = gen.standard_normal((300_000, 4))
        sim = np.mean(np.abs(v[:, 0]) / np.linalg.norm(v, axis=1) >= 1.0 / 8.0)
        p = init_correlation_probability(4)
        assert abs(sim - p) <= 4.0 * math.sqrt(p * (1 - p) / 300_000)

    def test_requires_enough_trials(self):
        with pytest.raises(ValueError):
            check_init_correlation(4, 50, RngSeed(0))


class TestPowerDeviation:
    def test_window_grid_passes(self):
        rep = check_power_deviation(default_power_grid(8), 200_000, RngSeed(3))
        assert rep.passed
        assert rep.passed == (rep.observed <= rep.threshold)


class TestAngleStep:
    def test_in_regime_instance(self):
        d = 8
        B = float(d)
        u = np.zeros(d)
        u[0] = 1.0
        v = np.zeros(d)
        v[1] = 1.0
        mu_star = (0.9 / B**2) * u
        mu = (0.7 / B**2) * (0.6 * u + 0.8 * v)
        cfg = GdConfig(scale=make_noise_scale(math.log(d)), eta=1 / 20.0, steps=1,
                       batch_size=100_000, rng=RngSeed(4))
        rep = check_angle_step(mu, mu_star, cfg, 100_000, RngSeed(4))
        assert rep.applicable and rep.passed

    def test_aligned_stays_below_floor(self):
        d = 8
        B = float(d)
        u = np.zeros(d)
        u[0] = 1.0
        mu_star = (0.9 / B**2) * u
        mu = (0.8 / B**2) * u
        cfg = GdConfig(scale=make_noise_scale(math.log(d)), eta=1 / 20.0, steps=1,
                       batch_size=200_000, rng=RngSeed(5))
        rep = check_angle_step(mu, mu_star, cfg, 200_000, RngSeed(5))
        assert rep.applicable and rep.passed
        assert rep.observed <= rep.threshold  # tan' stays within floor + slack

    def test_out_of_regime_not_applicable(self):
        d = 8
        mu = np.zeros(d)
        mu[0] = 1.0  # way above the window
        cfg = GdConfig(scale=make_noise_scale(math.log(d)), eta=1 / 20.0, steps=1,
                       batch_size=1000, rng=RngSeed(6))
        rep = check_angle_step(mu, mu, cfg, 1000, RngSeed(6))
        assert not rep.applicable and not rep.passed

    def test_bound_formulas_match_eigenvalues(self):
        # shrink factor and floor recomputed from the surrogate matrix
        # eigenvalues sigma1, sigma2
        d = 8
        eta = 0.05
        mu = np.zeros(d)
        mu[0] = 0.01
        mu_star = np.zeros(d)
        mu_star[0] = 0.012
        eps = 1e-9
        k1, k2 = angle_step_bounds(mu, mu_star, eta, eps)
        nm2 = float(mu @ mu)
        ns2 = float(mu_star @ mu_star)
        sigma1 = 1 + eta * (2 * ns2 - 3 * nm2)
        sigma2 = 1 - 3 * eta * nm2
        dev = (500 * eta * d**1.5 * nm2**2 + 20 * eta * d * nm2 * ns2
               + eta * d * eps / math.sqrt(nm2))
        assert k1 == pytest.approx(sigma2 / (sigma1 - dev - eta * ns2), rel=1e-12)
        assert k2 == pytest.approx(dev / ns2, rel=1e-12)


class TestGContraction:
    def test_documented_grid(self):
        rep = check_g_contraction(default_g_grid(), 100_000, RngSeed(7))
        assert rep.passed

    def test_plane_decomposition_oracle(self):
        # multi-d Monte Carlo matches the two-plane quadrature decomposition
        mu = np.array([1.1, 0.6, 0.0, 0.2])
        mu_star = np.array([1.4, -0.1, 0.3, 0.0])
        est = g_function(mu, mu_star, 1_500_000, RngSeed(8))
        plane = g_function_plane(mu, mu_star)
        assert np.linalg.norm(est.value - plane) <= 5.0 * est.se_norm

    def test_truth_point_zero(self):
        mu = np.array([1.2, 0.5])
        est = g_function(mu, mu, 300_000, RngSeed(9))
        assert est.norm <= 4.0 * est.se_norm


class TestStein:
    def test_two_component(self):
        mu_star = np.array([1.0, -0.5, 0.25, 0.0])
        scale = make_noise_scale(0.3)
        mu_t = (mu_star + 0.2) * scale.alpha
        rep = check_stein_two(mu_t, mu_star, scale, 300_000, RngSeed(10))
        assert rep.passed

    def test_zero_parameter(self):
        mu_star = np.array([1.0, 0.0])
        rep = check_stein_two(np.zeros(2), mu_star, make_noise_scale(0.5), 100_000, RngSeed(11))
        assert rep.passed

    def test_k_three(self):
        gen = np.random.default_rng(12)
        centers = gen.normal(size=(3, 4)) * 2
        theta_star = MixtureParams.general(centers)
        theta = MixtureParams.general(centers + 0.3 * gen.normal(size=(3, 4)))
        rep = check_stein_k(theta, theta_star, make_noise_scale(0.3), 200_000, 200_000, RngSeed(13))
        assert rep.passed


class TestCrossWeights:
    def test_separated_passes(self):
        theta, theta_star = _warm_instance(RngSeed(14))
        rep = check_cross_weights(theta, theta_star, 100_000, RngSeed(15))
        assert rep.passed

    def test_single_component_vacuous(self):
        p = MixtureParams.general(np.zeros((1, 3)))
        rep = check_cross_weights(p, p, 1000, RngSeed(16))
        assert rep.passed

    def test_zero_separation_fails(self):
        flat = MixtureParams.general(np.zeros((4, 8)))
        rep = check_cross_weights(flat, flat, 50_000, RngSeed(17))
        assert rep.applicable and not rep.passed
        # the control wrapper turns that into a pass
        assert control_must_fail(rep, "ctl").passed


class TestGradEmEquiv:
    def test_separation_eight_passes(self):
        theta, theta_star = _warm_instance(RngSeed(18), separation=8.0)
        rep = check_grad_em_equiv(theta, theta_star, make_noise_scale(0.2), 300_000, RngSeed(19))
        assert rep.applicable and rep.passed

    def test_truth_initialization_near_zero(self):
        _, theta_star = _warm_instance(RngSeed(20), separation=8.0, offset=1e-9)
        rep = check_grad_em_equiv(theta_star, theta_star, make_noise_scale(0.2), 200_000, RngSeed(21))
        assert rep.applicable
        # both terms vanish at the truth: the residual is pure MC noise
        assert rep.observed <= 0.0 + 1e-12

    def test_low_separation_not_applicable(self):
        theta, theta_star = _warm_instance(RngSeed(22), separation=1.0)
        rep = check_grad_em_equiv(theta, theta_star, make_noise_scale(0.2), 1000, RngSeed(23))
        assert not rep.applicable and not rep.passed
        assert control_must_be_na(rep, "ctl").passed


class TestContraction:
    @staticmethod
    def _traj(dists, d0):
        records = []
        prev = d0
        for i, d in enumerate(dists, start=1):
            records.append(RunRecord(step=i, iterate=np.zeros((1, 1)), loss=None,
                                     dist=d, contraction_ratio=d / prev))
            prev = d
        return records

    def test_geometric_decay_passes(self):
        dists = [0.5 * 0.9**i for i in range(1, 40)] + [1e-4] * 10
        rep = check_contraction(self._traj(dists, 0.5), 0.9, 0.02)
        assert rep.passed

    def test_flat_trajectory_not_applicable(self):
        dists = [0.01] * 20
        rep = check_contraction(self._traj(dists, 0.01), 0.9, 0.02)
        assert not rep.applicable

    def test_rejects_missing_distances(self):
        records = [RunRecord(step=1, iterate=np.zeros((1, 1)), loss=None)]
        with pytest.raises(ValueError):
            check_contraction(records, 0.9, 0.02)

    def test_slow_trajectory_fails(self):
        dists = [0.5 * 0.995**i for i in range(1, 60)] + [1e-4] * 10
        rep = check_contraction(self._traj(dists, 0.5), 0.9, 0.02)
        assert rep.applicable and not rep.passed


class TestReportInvariants:
    def test_passed_recomputable(self):
        reps = run_default_checks(RngSeed(24), names=["init_correlation_d4", "radius_estimator"])
        for r in reps:
            if r.applicable:
                assert r.passed == (r.observed <= r.threshold)
            else:
                assert not r.passed

    def test_unknown_name_rejected(self):
        with pytest.raises(KeyError):
            run_default_checks(RngSeed(0), names=["nope"])

    def test_table_format(self):
        reps = [CheckReport("x", True, 0.1, 0.2, 0.0, "d"),
                CheckReport("y", False, math.nan, math.nan, math.nan, "d", applicable=False)]
        table = format_check_table(reps)
        assert "pass" in table and "n/a" in table
