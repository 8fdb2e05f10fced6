import math

import numpy as np
import pytest
from sklearn.base import clone

from gmmdenoise import DenoisingGMM, EMGMM, MixtureParams, PrincipalPairDirection, RngSeed, sample_mixture


def pair_data(norm=1.5, d=4, n=30_000, seed=0, shift=None):
    mu = np.zeros(d)
    mu[0] = norm
    truth = MixtureParams.symmetric(mu)
    x = sample_mixture(truth, n, RngSeed(seed))
    if shift is not None:
        x = x + shift
    return x, mu


class TestDenoisingGMM:
    def test_two_stage_recovers_pair(self):
        x, mu = pair_data(seed=1)
        est = DenoisingGMM(algorithm="two_stage", seed=1).fit(x)
        err = min(np.linalg.norm(est.means_[0] - mu), np.linalg.norm(est.means_[0] + mu))
        assert err <= 0.1
        assert est.means_.shape == (2, 4)
        assert np.allclose(est.means_[0], -est.means_[1])

    def test_centering_recovers_shifted_pair(self):
        shift = np.array([3.0, -1.0, 0.5, 2.0])
        x, mu = pair_data(seed=2, shift=shift)
        est = DenoisingGMM(algorithm="two_stage", center=True, seed=2).fit(x)
        # reported means are shift +/- mu
        got = est.means_ - est.mean_shift_
        err = min(np.linalg.norm(got[0] - mu), np.linalg.norm(got[0] + mu))
        assert err <= 0.1
        assert np.linalg.norm(est.mean_shift_ - shift) < 0.05

    def test_predict_proba_sums_to_one(self):
        x, _ = pair_data(seed=3, n=10_000)
        est = DenoisingGMM(algorithm="two_stage", seed=3).fit(x)
        proba = est.predict_proba(x[:100])
        assert proba.shape == (100, 2)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        labels = est.predict(x[:100])
        assert set(np.unique(labels)) <= {0, 1}

    def test_sample_and_score(self):
        x, _ = pair_data(seed=4, n=20_000)
        est = DenoisingGMM(algorithm="two_stage", seed=4).fit(x)
        draws = est.sample(5000, random_state=7)
        assert draws.shape == (5000, 4)
        assert est.score(x) > est.score(x + 10.0)

    def test_warm_start_requires_init(self):
        x, _ = pair_data(seed=5, n=1000)
        with pytest.raises(ValueError):
            DenoisingGMM(algorithm="warm_start", seed=5).fit(x)

    def test_warm_start_refines(self):
        k, d = 3, 6
        centers = np.zeros((k, d))
        for i in range(k):
            centers[i, i] = 6.0 / math.sqrt(2.0)
        truth = MixtureParams.general(centers)
        x = sample_mixture(truth, 80_000, RngSeed(6))
        init = centers + 0.5
        est = DenoisingGMM(algorithm="warm_start", means_init=init, steps=15, seed=6).fit(x)
        assert np.max(np.linalg.norm(est.means_ - centers, axis=1)) <= 0.12

    def test_get_params_clone(self):
        est = DenoisingGMM(algorithm="projected", eps_target=5.0, seed=9)
        params = est.get_params()
        assert params["algorithm"] == "projected" and params["eps_target"] == 5.0
        clone(est)  # sklearn protocol: estimator is cloneable pre-fit

    def test_rejects_bad_input(self):
        est = DenoisingGMM(seed=0)
        with pytest.raises(ValueError):
            est.fit(np.array([[1.0, np.nan]]))

    def test_reverse_sampler_smoke(self):
        x, mu = pair_data(norm=3.0, d=3, n=40_000, seed=10)
        est = DenoisingGMM(algorithm="two_stage", seed=10).fit(x)
        draws = est.sample_reverse(4000, terminal_time=5.0, steps=200, random_state=3)
        proj = draws @ (mu / np.linalg.norm(mu))
        assert abs(proj[proj > 0].mean() - 3.0) < 0.4
        assert abs(proj[proj < 0].mean() + 3.0) < 0.4


class TestEMGMM:
    def test_symmetric_random_init(self):
        x, mu = pair_data(norm=2.0, seed=11, n=50_000)
        est = EMGMM(symmetric_pair=True, steps=30, seed=11).fit(x)
        err = min(np.linalg.norm(est.means_[0] - mu), np.linalg.norm(est.means_[0] + mu))
        assert err <= 0.05

    def test_k_components_warm(self):
        k, d = 3, 5
        centers = np.zeros((k, d))
        for i in range(k):
            centers[i, i] = 6.0 / math.sqrt(2.0)
        x = sample_mixture(MixtureParams.general(centers), 60_000, RngSeed(12))
        est = EMGMM(means_init=centers + 0.4, steps=20).fit(x)
        assert np.max(np.linalg.norm(est.means_ - centers, axis=1)) <= 0.05

    def test_requires_init_for_general(self):
        with pytest.raises(ValueError):
            EMGMM().fit(np.zeros((10, 2)))


class TestPrincipalPairDirection:
    def test_recovers_direction(self):
        x, mu = pair_data(norm=1.0, d=6, n=80_000, seed=13)
        est = PrincipalPairDirection(steps=60, seed=13).fit(x)
        cos = abs(float(est.direction_ @ (mu / np.linalg.norm(mu))))
        assert cos >= 0.99
        proj = est.transform(x[:50])
        assert proj.shape == (50, 1)
