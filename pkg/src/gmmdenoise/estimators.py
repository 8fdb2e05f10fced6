"""Scikit-learn style estimators wrapping the solvers and baselines.

``DenoisingGMM`` fits mixture centers by gradient descent on the denoising
objective (two-stage, projected, or warm-start flavor), ``EMGMM`` runs plain
or gradient EM, and ``PrincipalPairDirection`` recovers the symmetric-pair
direction by power iteration.  All follow the fit/predict/get_params
protocol, so they compose with pipelines, `clone`, and grid search.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import (
    MixtureParams,
    make_noise_scale,
    posterior_weights,
    reverse_sample,
    sample_mixture,
)
from .baselines import em_fit, power_iteration_fit
from .optim import (
    GdConfig,
    default_projected_config,
    default_two_stage_configs,
    projected_gd_fit,
    symmetrize_two_component,
    two_stage_fit,
    warm_start_k_fit,
)
from .rng import RngSeed, as_rng_seed


def _validate_data_matrix(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)


class _MixtureEstimatorMixin:
    """Shared post-fit surface: component means, posteriors, sampling."""

    def _params(self) -> MixtureParams:
        check_is_fitted(self, "means_")
        if getattr(self, "_symmetric", False):
            return MixtureParams.symmetric(self.means_[0])
        return MixtureParams.general(self.means_)

    def predict_proba(self, X):
        """Posterior component weights of each sample under the fitted centers."""
        X = _validate_data_matrix(X)
        return np.atleast_2d(posterior_weights(self._params(), X + self.mean_shift_))

    def predict(self, X):
        """Most likely component index per sample."""
        return np.argmax(self.predict_proba(X), axis=1)

    def sample(self, n_samples: int = 1, random_state: int = 0):
        """Draw from the fitted mixture."""
        return sample_mixture(self._params(), n_samples, RngSeed(random_state)) - self.mean_shift_


class DenoisingGMM(_MixtureEstimatorMixin, DensityMixin, BaseEstimator):
    """Mixture-center recovery by gradient descent on the denoising objective.

    Parameters
    ----------
    algorithm : {"two_stage", "projected", "warm_start"}
        two_stage and projected recover a symmetric pair (+/- mu); warm_start
        refines K explicit centers from ``means_init``.
    center : bool
        Subtract the empirical mean first (general two-component data) and
        add it back into reported means.
    means_init : array-like of shape (k, d), required for warm_start.
    eta, steps, batch_size, noise_scale, eps_target
        Stage knobs; None picks the documented data-driven defaults.
    seed : int
        Base seed; all randomness flows from it.
    """

    def __init__(
        self,
        algorithm: str = "two_stage",
        center: bool = False,
        means_init=None,
        eta: Optional[float] = None,
        steps: Optional[int] = None,
        batch_size: Optional[int] = None,
        noise_scale: Optional[float] = None,
        eps_target: Optional[float] = None,
        seed: int = 0,
    ):
        self.algorithm = algorithm
        self.center = center
        self.means_init = means_init
        self.eta = eta
        self.steps = steps
        self.batch_size = batch_size
        self.noise_scale = noise_scale
        self.eps_target = eps_target
        self.seed = seed

    def fit(self, X, y=None):
        X = _validate_data_matrix(X)
        rng = as_rng_seed(self.seed)
        shift = np.zeros(X.shape[1])
        if self.center:
            X, shift = symmetrize_two_component(X)

        if self.algorithm == "two_stage":
            cfg_high, cfg_low = default_two_stage_configs(X, rng)
            if self.noise_scale is not None:
                cfg_low = GdConfig(
                    scale=make_noise_scale(self.noise_scale), eta=cfg_low.eta, steps=cfg_low.steps,
                    batch_size=cfg_low.batch_size, rng=cfg_low.rng,
                )
            report = two_stage_fit(X, cfg_high, cfg_low, rng=rng)
            self._symmetric = True
        elif self.algorithm == "projected":
            kwargs = {}
            if self.eps_target is not None:
                kwargs["eps_target"] = self.eps_target
            if self.eta is not None:
                kwargs["eta"] = self.eta
            if self.batch_size is not None:
                kwargs["batch_size"] = self.batch_size
            if self.steps is not None:
                kwargs["steps"] = self.steps
            cfg = default_projected_config(X, rng, **kwargs)
            report = projected_gd_fit(X, cfg, rng=rng)
            self._symmetric = True
        elif self.algorithm == "warm_start":
            if self.means_init is None:
                raise ValueError("warm_start needs means_init")
            init = MixtureParams.general(np.asarray(self.means_init, dtype=float) - shift)
            cfg = None
            if any(v is not None for v in (self.eta, self.steps, self.batch_size, self.noise_scale)):
                cfg = GdConfig(
                    scale=make_noise_scale(self.noise_scale if self.noise_scale is not None else 0.2),
                    eta=self.eta if self.eta is not None else 2.0 * init.k / 3.0,
                    steps=self.steps if self.steps is not None else 25,
                    batch_size=self.batch_size if self.batch_size is not None else 8192,
                    rng=rng.substream(1),
                )
            report = warm_start_k_fit(X, init, cfg, rng=rng)
            self._symmetric = False
        else:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

        self.fit_report_ = report
        self.mean_shift_ = shift
        self.means_ = report.final_estimate.component_means() + shift
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """Log-density of each sample under the fitted equal-weight mixture."""
        X = _validate_data_matrix(X)
        params = self._params()
        mus = params.component_means() - self.mean_shift_
        d = mus.shape[1]
        sq = ((X[:, None, :] - mus[None, :, :]) ** 2).sum(axis=2)
        m = sq.min(axis=1, keepdims=True)
        logk = np.log(mus.shape[0])
        return (-0.5 * m[:, 0] + np.log(np.exp(-0.5 * (sq - m)).sum(axis=1))
                - logk - 0.5 * d * np.log(2.0 * np.pi))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def sample_reverse(self, n_samples: int, terminal_time: float = 5.0, steps: int = 200,
                       random_state: int = 0):
        """Generative check: integrate the reverse process under the fitted score."""
        x = reverse_sample(self._params(), terminal_time, n_samples, steps, RngSeed(random_state))
        return x - self.mean_shift_


class EMGMM(_MixtureEstimatorMixin, DensityMixin, BaseEstimator):
    """EM (or gradient EM, when ``eta`` is set) for equal-weight spherical mixtures."""

    def __init__(self, means_init=None, symmetric_pair: bool = False, steps: int = 50,
                 eta: Optional[float] = None, seed: int = 0):
        self.means_init = means_init
        self.symmetric_pair = symmetric_pair
        self.steps = steps
        self.eta = eta
        self.seed = seed

    def fit(self, X, y=None):
        X = _validate_data_matrix(X)
        if self.means_init is not None:
            init = np.asarray(self.means_init, dtype=float)
            theta = MixtureParams.symmetric(init.reshape(-1)) if self.symmetric_pair \
                else MixtureParams.general(init)
        elif self.symmetric_pair:
            theta = MixtureParams.symmetric(as_rng_seed(self.seed).generator().standard_normal(X.shape[1]))
        else:
            raise ValueError("EMGMM needs means_init unless symmetric_pair=True")
        theta, records = em_fit(theta, X, self.steps, eta=self.eta)
        self._symmetric = theta.symmetric_pair
        self.mean_shift_ = np.zeros(X.shape[1])
        self.means_ = theta.component_means()
        self.trajectory_ = records
        self.n_features_in_ = X.shape[1]
        return self


class PrincipalPairDirection(BaseEstimator):
    """Symmetric-pair direction via power iteration on (1/n) sum x x^T - Id."""

    def __init__(self, steps: int = 50, seed: int = 0):
        self.steps = steps
        self.seed = seed

    def fit(self, X, y=None):
        X = _validate_data_matrix(X)
        direction, records = power_iteration_fit(X, self.steps, as_rng_seed(self.seed))
        self.direction_ = direction
        self.trajectory_ = records
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Project samples onto the recovered direction."""
        check_is_fitted(self, "direction_")
        X = _validate_data_matrix(X)
        return X @ self.direction_[:, None]
