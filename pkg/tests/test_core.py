import math

import numpy as np
import pytest

from gmmdenoise import (
    MixtureParams,
    RngSeed,
    SampleBatch,
    estimate_center_norm,
    forward_noise,
    make_noise_scale,
    posterior_weights,
    rescale_centers,
    reverse_sample,
    sample_mixture,
    student_score,
    tanh_derivatives,
)

# mpmath at 50 digits: exp(-0.1), sqrt(1 - exp(-0.2))
ALPHA_01 = 0.9048374180359595731642491
BETA_01 = 0.4257572629116479808851299


class TestNoiseScale:
    def test_closed_form_ln2(self):
        s = make_noise_scale(math.log(2.0))
        assert s.alpha == pytest.approx(0.5, abs=1e-15)
        assert s.beta == pytest.approx(math.sqrt(0.75), abs=1e-15)

    def test_large_t_asymptote(self):
        s = make_noise_scale(50.0)
        assert s.alpha < 1e-21
        assert s.beta == pytest.approx(1.0, abs=1e-15)

    def test_extended_precision_oracle(self):
        s = make_noise_scale(0.1)
        assert abs(s.alpha - ALPHA_01) < 1e-14
        assert abs(s.beta - BETA_01) < 1e-14

    def test_t_zero(self):
        s = make_noise_scale(0.0)
        assert s.alpha == 1.0 and s.beta == 0.0

    def test_invariants_random_t(self):
        rng = np.random.default_rng(0)
        for t in rng.uniform(0.0, 20.0, size=50):
            s = make_noise_scale(float(t))
            assert abs(s.alpha**2 + s.beta**2 - 1.0) < 1e-12
            assert abs(s.alpha - math.exp(-t)) < 1e-12
            assert (s.beta == 0.0) == (t == 0.0)

    @pytest.mark.parametrize("bad", [-0.1, math.nan, math.inf])
    def test_rejects_bad_t(self, bad):
        with pytest.raises(ValueError):
            make_noise_scale(bad)


class TestMixtureParams:
    def test_symmetric_pair_shape(self):
        p = MixtureParams.symmetric(np.array([1.0, 2.0]))
        assert p.k == 2 and p.d == 2
        assert p.centers.shape == (1, 2)
        assert np.array_equal(p.component_means(), [[1.0, 2.0], [-1.0, -2.0]])

    def test_rejects_bad_symmetric(self):
        with pytest.raises(ValueError):
            MixtureParams(k=3, d=2, centers=np.ones((1, 2)), symmetric_pair=True)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            MixtureParams.general(np.array([[np.inf, 0.0]]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            MixtureParams(k=2, d=3, centers=np.ones((2, 2)))


class TestSampleMixture:
    def test_single_gaussian_mean(self):
        p = MixtureParams.general(np.zeros((1, 4)))
        x = sample_mixture(p, 100_000, RngSeed(1))
        assert np.linalg.norm(x.mean(axis=0)) <= 4.0 * math.sqrt(4) / math.sqrt(100_000)

    def test_symmetric_second_moment(self):
        mu = np.array([1.5, -0.5, 0.25])
        p = MixtureParams.symmetric(mu)
        x = sample_mixture(p, 100_000, RngSeed(2))
        emp = x.T @ x / x.shape[0]
        expected = np.eye(3) + np.outer(mu, mu)
        # entrywise within 5 MC standard errors of each second-moment entry
        se = np.sqrt((np.einsum("ni,nj->ij", x**2, x**2) / x.shape[0] - emp**2) / x.shape[0])
        assert np.all(np.abs(emp - expected) <= 5.0 * se + 1e-12)

    def test_determinism(self):
        p = MixtureParams.general(np.arange(6.0).reshape(3, 2))
        a = sample_mixture(p, 1000, RngSeed(7, 3))
        b = sample_mixture(p, 1000, RngSeed(7, 3))
        assert np.array_equal(a, b)
        c = sample_mixture(p, 1000, RngSeed(7, 4))
        assert not np.array_equal(a, c)

    def test_rejects_n_zero(self):
        with pytest.raises(ValueError):
            sample_mixture(MixtureParams.symmetric(np.ones(2)), 0, RngSeed(0))


class TestForwardNoise:
    def test_large_t_is_pure_noise(self):
        x0 = np.random.default_rng(3).normal(size=(100, 5))
        batch = forward_noise(x0, make_noise_scale(50.0), RngSeed(3))
        # alpha < 1e-21 so xt deviates from z only at the 1e-19 level
        assert np.all(np.linalg.norm(batch.xt - batch.z, axis=1) <= 1e-18 * np.linalg.norm(x0, axis=1))

    def test_forced_zero_noise(self):
        x0 = np.ones((4, 2))
        scale = make_noise_scale(0.3)
        batch = forward_noise(x0, scale, RngSeed(0), z=np.zeros((4, 2)))
        assert np.array_equal(batch.xt, scale.alpha * x0)

    def test_construction_invariant(self):
        scale = make_noise_scale(0.7)
        gen = np.random.default_rng(5)
        batch = forward_noise(gen.normal(size=(50, 3)), scale, RngSeed(5))
        assert np.array_equal(batch.xt, scale.alpha * batch.x0 + scale.beta * batch.z)

    def test_noised_moments_match_rescaled_mixture(self):
        mu = np.array([2.0, 1.0, 0.0, -1.0])
        p = MixtureParams.symmetric(mu)
        t = 0.4
        x0 = sample_mixture(p, 150_000, RngSeed(8))
        batch = forward_noise(x0, make_noise_scale(t), RngSeed(9))
        mu_t = mu * math.exp(-t)
        emp = batch.xt.T @ batch.xt / batch.n
        expected = np.eye(4) + np.outer(mu_t, mu_t)
        se = np.sqrt(
            (np.einsum("ni,nj->ij", batch.xt**2, batch.xt**2) / batch.n - emp**2) / batch.n
        )
        assert np.all(np.abs(emp - expected) <= 5.0 * se + 1e-12)


class TestRescaleCenters:
    def test_simple(self):
        p = MixtureParams.symmetric(np.array([3.0, 0.0]))
        q = rescale_centers(p, math.log(3.0))
        assert np.allclose(q.centers, [[1.0, 0.0]], atol=1e-14)
        assert q.symmetric_pair and q.k == 2

    def test_identity_at_zero(self):
        p = MixtureParams.general(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(rescale_centers(p, 0.0).centers, p.centers)

    def test_semigroup(self):
        p = MixtureParams.general(np.random.default_rng(1).normal(size=(3, 5)))
        a = rescale_centers(rescale_centers(p, 0.35), 0.8)
        b = rescale_centers(p, 1.15)
        assert np.allclose(a.centers, b.centers, atol=1e-12)

    def test_contraction(self):
        p = MixtureParams.general(np.random.default_rng(2).normal(size=(4, 3)))
        q = rescale_centers(p, 0.5)
        assert np.all(np.linalg.norm(q.centers, axis=1) < np.linalg.norm(p.centers, axis=1))


class TestPosteriorWeights:
    def test_equidistant_uniform(self):
        p = MixtureParams.general(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]))
        w = posterior_weights(p, np.zeros(2))
        assert np.allclose(w, 0.25, atol=1e-12)

    def test_symmetric_pair_sigmoid(self):
        mu = np.array([0.8, -1.2, 0.4])
        p = MixtureParams.symmetric(mu)
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.normal(size=3) * 3
            w = posterior_weights(p, x)
            expected = 1.0 / (1.0 + math.exp(-2.0 * float(mu @ x)))
            assert w[0] == pytest.approx(expected, abs=1e-12)

    def test_sum_to_one_and_range(self):
        rng = np.random.default_rng(5)
        p = MixtureParams.general(rng.normal(size=(5, 4)) * 10)
        x = rng.normal(size=(200, 4)) * 5
        w = posterior_weights(p, x)
        assert np.all(w >= 0) and np.all(w <= 1)
        assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_far_separated_no_underflow(self):
        p = MixtureParams.general(np.array([[500.0, 0.0], [-500.0, 0.0]]))
        w = posterior_weights(p, np.array([499.0, 1.0]))
        assert w[0] == pytest.approx(1.0, abs=1e-12)
        assert np.isfinite(w).all()

    def test_coincident_centers_uniform(self):
        p = MixtureParams.general(np.zeros((3, 2)))
        w = posterior_weights(p, np.array([5.0, -2.0]))
        assert np.allclose(w, 1.0 / 3.0, atol=1e-12)


class TestStudentScore:
    def test_single_component(self):
        p = MixtureParams.general(np.array([[1.0, 2.0]]))
        x = np.array([0.5, 0.5])
        assert np.array_equal(student_score(p, x), p.centers[0] - x)

    def test_symmetric_tanh_form(self):
        mu = np.array([1.0, -2.0, 0.5, 0.1])
        p = MixtureParams.symmetric(mu)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(100, 4)) * 2
        got = student_score(p, x)
        expected = np.tanh(x @ mu)[:, None] * mu - x
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_saturated_weight_at_center(self):
        mu = np.zeros(4)
        mu[0] = 12.0  # pairwise separation 24 >= 20
        p = MixtureParams.symmetric(mu)
        score = student_score(p, mu)
        assert np.linalg.norm(score - (mu - mu)) < 1e-8


class TestTanhDerivatives:
    def test_against_finite_differences(self):
        u = np.linspace(-3, 3, 31)
        th, d1, d2, d3 = tanh_derivatives(u)
        h = 1e-5
        fd1 = (np.tanh(u + h) - np.tanh(u - h)) / (2 * h)
        fd2 = (np.tanh(u + h) - 2 * np.tanh(u) + np.tanh(u - h)) / h**2
        assert np.allclose(th, np.tanh(u))
        assert np.allclose(d1, fd1, atol=1e-9)
        assert np.allclose(d2, fd2, atol=1e-5)
        d2p = tanh_derivatives(u + h)[2]
        d2m = tanh_derivatives(u - h)[2]
        assert np.allclose(d3, (d2p - d2m) / (2 * h), atol=1e-9)


class TestCenterNormEstimator:
    def test_exact_arithmetic(self):
        d = 3
        v = np.zeros(d)
        v[0] = 2.0  # ||v||^2 = d + 1
        x = np.tile(v, (10, 1))
        assert estimate_center_norm(x) == pytest.approx(1.0, abs=1e-12)

    def test_zero_center_clamps(self):
        x = sample_mixture(MixtureParams.symmetric(np.zeros(6)), 200_000, RngSeed(11))
        assert estimate_center_norm(x) <= 0.05

    def test_lemma_sample_count(self):
        # |R - 2| <= 0.05 on >= 95/100 seeds at n = (B^4 + d^2) / (eps L)^2
        norm, d, eps = 2.0, 8, 0.05
        n = int(math.ceil((norm**4 + d * d) / (eps * norm) ** 2))
        mu = np.zeros(d)
        mu[0] = norm
        p = MixtureParams.symmetric(mu)
        fails = sum(
            abs(estimate_center_norm(sample_mixture(p, n, RngSeed(500 + s))) - norm) > eps
            for s in range(100)
        )
        assert fails <= 5


class TestReverseSample:
    def test_ou_fixed_point_with_linear_score(self):
        out = reverse_sample(
            MixtureParams.symmetric(np.zeros(3)), 4.0, 50_000, 200, RngSeed(12),
            score_fn=lambda x, t: -x,
        )
        assert np.linalg.norm(out.mean(axis=0)) < 0.05
        cov = out.T @ out / out.shape[0]
        assert np.max(np.abs(cov - np.eye(3))) < 0.05

    def test_symmetric_pair_bimodal(self):
        d = 4
        mu = np.zeros(d)
        mu[0] = 3.0
        p = MixtureParams.symmetric(mu)
        out = reverse_sample(p, 5.0, 20_000, 500, RngSeed(13))
        proj = out @ (mu / np.linalg.norm(mu))
        direct = sample_mixture(p, 20_000, RngSeed(14)) @ (mu / np.linalg.norm(mu))
        for sample in (proj, direct):
            assert abs(sample[sample > 0].mean() - 3.0) < 0.3
            assert abs(sample[sample < 0].mean() + 3.0) < 0.3

    def test_rejects_bad_counts(self):
        p = MixtureParams.symmetric(np.ones(2))
        with pytest.raises(ValueError):
            reverse_sample(p, 1.0, 0, 10, RngSeed(0))
        with pytest.raises(ValueError):
            reverse_sample(p, 1.0, 5, 0, RngSeed(0))


class TestRngSeed:
    def test_bit_reproducible(self):
        a = RngSeed(123, 45).generator().standard_normal(1000)
        b = RngSeed(123, 45).generator().standard_normal(1000)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RngSeed(123, 0).generator().standard_normal(1000)
        b = RngSeed(123, 1).generator().standard_normal(1000)
        assert not np.array_equal(a, b)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RngSeed(-1)
