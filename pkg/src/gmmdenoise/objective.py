"""Denoising (DDPM) loss and its gradients in every form the solvers need.

The loss on a noised row is ||s(x_t) + z / beta||^2: the network is asked to
predict the injected noise.  Gradients follow the convention that drops the
chain-rule factor 2 of ||.||^2, so finite differences of loss/2 match the
analytic gradients and the step sizes 1/20, 0.05, 2K/3 used by the solvers
apply unchanged.

Population (Monte Carlo) forms return mean and per-component standard error
so callers can apply k-sigma tolerances; the high-noise power-iteration
surrogate 2 mu* <mu*, mu> - 3 ||mu||^2 mu and the low-noise residual G that
separates a gradient step from an EM step live here too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    MixtureParams,
    NoiseScale,
    SampleBatch,
    posterior_weights,
    sample_mixture,
    tanh_derivatives,
)
from .rng import RngSeed

_CHUNK = 1 << 16


@dataclass(frozen=True)
class GradSample:
    """One row's gradient (d-vector for a pair, (k, d) for K components) and loss."""

    grad: np.ndarray
    loss: float


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with per-component standard error."""

    value: np.ndarray
    std_err: np.ndarray
    n: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.value))

    @property
    def se_norm(self) -> float:
        """Combined standard error sqrt(sum_j se_j^2) for vector comparisons."""
        return float(np.linalg.norm(self.std_err))


@dataclass(frozen=True)
class GradStats:
    """Batch-averaged gradient with standard error and mean loss."""

    grad: np.ndarray
    std_err: np.ndarray
    loss: float
    n: int

    @property
    def se_norm(self) -> float:
        return float(np.linalg.norm(self.std_err))


@dataclass(frozen=True)
class SurrogateReport:
    """Deviation of the Monte Carlo negative gradient from the power surrogate."""

    grad_estimate: np.ndarray
    surrogate: np.ndarray
    deviation: float
    bound: float
    mc_std_err: float
    passed: bool


def _check_positive_beta(scale: NoiseScale):
    if not (scale.beta > 0):
        raise ValueError("loss and gradients need t > 0 (beta > 0); t = 0 divides by zero")


def _mean_se(values: np.ndarray):
    """Mean and standard error of the mean along axis 0."""
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n > 1:
        var = values.var(axis=0, ddof=1)
        se = np.sqrt(var / n)
    else:
        se = np.full_like(mean, np.inf)
    return mean, se


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def residuals(params_t: MixtureParams, batch: SampleBatch) -> np.ndarray:
    """s(x_t) + z/beta for every row; the loss is its squared norm."""
    _check_positive_beta(batch.scale)
    from .core import student_score

    return student_score(params_t, batch.xt) + batch.z / batch.scale.beta


def loss_values(params_t: MixtureParams, batch: SampleBatch) -> np.ndarray:
    r = residuals(params_t, batch)
    return np.sum(r * r, axis=1)


def pointwise_loss(params_t: MixtureParams, x0, z, scale: NoiseScale) -> float:
    row = SampleBatch(scale=scale, x0=np.atleast_2d(x0), z=np.atleast_2d(z))
    return float(loss_values(params_t, row)[0])


def batch_loss(params_t: MixtureParams, batch: SampleBatch) -> float:
    if batch.n < 1:
        raise ValueError("batch must be nonempty")
    return float(loss_values(params_t, batch).mean())


# ---------------------------------------------------------------------------
# pointwise gradients (empirical, from noised rows)
# ---------------------------------------------------------------------------

def _grad_two_rows(mu_t: np.ndarray, batch: SampleBatch):
    """Per-row gradient (tanh(u) Id + tanh'(u) x mu^T)(s + z/beta) and loss."""
    _check_positive_beta(batch.scale)
    mu_t = np.asarray(mu_t, dtype=float)
    xt, z, beta = batch.xt, batch.z, batch.scale.beta
    u = xt @ mu_t
    th, d1, _, _ = tanh_derivatives(u)
    r = th[:, None] * mu_t - xt + z / beta
    grads = th[:, None] * r + (d1 * (r @ mu_t))[:, None] * xt
    losses = np.sum(r * r, axis=1)
    return grads, losses


def pointwise_grad_two(mu_t: np.ndarray, x0, z, scale: NoiseScale) -> GradSample:
    row = SampleBatch(scale=scale, x0=np.atleast_2d(x0), z=np.atleast_2d(z))
    grads, losses = _grad_two_rows(mu_t, row)
    return GradSample(grad=grads[0], loss=float(losses[0]))


def batch_grad_two(mu_t: np.ndarray, batch: SampleBatch) -> GradStats:
    grads, losses = _grad_two_rows(mu_t, batch)
    mean, se = _mean_se(grads)
    return GradStats(grad=mean, std_err=se, loss=float(losses.mean()), n=batch.n)


def _grad_k_rows(theta_t: MixtureParams, batch: SampleBatch):
    """Per-row per-center gradients J_i^T (s + z/beta), shape (n, k, d).

    With w the posterior weights, a_j = <mu_j, r> and m = sum_j w_j a_j, the
    Jacobian-transpose product collapses to w_i [r + (a_i - m)(x - mu_i)].
    """
    _check_positive_beta(batch.scale)
    mus = theta_t.component_means()
    xt, z, beta = batch.xt, batch.z, batch.scale.beta
    w = np.atleast_2d(posterior_weights(theta_t, xt))
    s = w @ mus - xt
    r = s + z / beta
    a = r @ mus.T
    m = np.sum(w * a, axis=1, keepdims=True)
    # (n, k, d): w_i * (r + (a_i - m) * (x - mu_i))
    diff = xt[:, None, :] - mus[None, :, :]
    grads = w[:, :, None] * (r[:, None, :] + (a - m)[:, :, None] * diff)
    losses = np.sum(r * r, axis=1)
    return grads, losses


def pointwise_grad_k(theta_t: MixtureParams, x0, z, scale: NoiseScale) -> GradSample:
    row = SampleBatch(scale=scale, x0=np.atleast_2d(x0), z=np.atleast_2d(z))
    grads, losses = _grad_k_rows(theta_t, row)
    return GradSample(grad=grads[0], loss=float(losses[0]))


def batch_grad_k(theta_t: MixtureParams, batch: SampleBatch) -> GradStats:
    total = np.zeros((theta_t.component_means().shape[0], theta_t.d))
    total_sq = np.zeros_like(total)
    loss_sum = 0.0
    n = batch.n
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        chunk = SampleBatch(scale=batch.scale, x0=batch.x0[lo:hi], z=batch.z[lo:hi])
        grads, losses = _grad_k_rows(theta_t, chunk)
        total += grads.sum(axis=0)
        total_sq += (grads * grads).sum(axis=0)
        loss_sum += losses.sum()
    mean = total / n
    if n > 1:
        var = (total_sq - n * mean * mean) / (n - 1)
        se = np.sqrt(np.maximum(var, 0.0) / n)
    else:
        se = np.full_like(mean, np.inf)
    return GradStats(grad=mean, std_err=se, loss=loss_sum / n, n=n)


# ---------------------------------------------------------------------------
# population (Monte Carlo) gradients over the noised data distribution
# ---------------------------------------------------------------------------

def population_grad_two_terms(mu_t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-draw integrand of the Stein-simplified negative gradient.

    For x ~ N(mu*_t, Id) the mean of these rows minus mu_t is the negative
    gradient of the population objective at the pair parameter mu_t.
    """
    mu_t = np.asarray(mu_t, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = x @ mu_t
    th, d1, d2, _ = tanh_derivatives(u)
    coef = th - 0.5 * d2 * float(mu_t @ mu_t) + d1 * u
    return coef[:, None] * x - d1[:, None] * mu_t


def population_grad_two_mc(
    mu_t: np.ndarray, mu_star_t: np.ndarray, n_mc: int, rng: RngSeed | np.random.Generator
) -> McEstimate:
    """Monte Carlo negative population gradient, drawn from N(mu*_t, Id)."""
    if n_mc < 1:
        raise ValueError("need n_mc >= 1")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    d = mu_t.shape[0]
    total = np.zeros(d)
    total_sq = np.zeros(d)
    for lo in range(0, n_mc, _CHUNK):
        m = min(_CHUNK, n_mc - lo)
        x = gen.standard_normal((m, d)) + mu_star_t
        f = population_grad_two_terms(mu_t, x)
        total += f.sum(axis=0)
        total_sq += (f * f).sum(axis=0)
    mean = total / n_mc
    var = (total_sq - n_mc * mean * mean) / max(n_mc - 1, 1)
    se = np.sqrt(np.maximum(var, 0.0) / n_mc)
    return McEstimate(value=mean - mu_t, std_err=se, n=n_mc)


def power_surrogate(mu_t: np.ndarray, mu_star_t: np.ndarray) -> np.ndarray:
    """High-noise surrogate for the negative gradient: 2 mu* <mu*, mu> - 3||mu||^2 mu."""
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    return 2.0 * float(mu_star_t @ mu_t) * mu_star_t - 3.0 * float(mu_t @ mu_t) * mu_t


def surrogate_bound(mu_t: np.ndarray, mu_star_t: np.ndarray, eps_grad: float = 0.0) -> float:
    """Deviation bound 250 sqrt(d) ||mu||^5 + 10 ||mu||^3 ||mu*||^2 + eps."""
    mu_t = np.asarray(mu_t, dtype=float)
    d = mu_t.shape[0]
    nm = float(np.linalg.norm(mu_t))
    ns = float(np.linalg.norm(np.asarray(mu_star_t, dtype=float)))
    return 250.0 * math.sqrt(d) * nm**5 + 10.0 * nm**3 * ns**2 + float(eps_grad)


def surrogate_deviation(
    mu_t: np.ndarray,
    mu_star_t: np.ndarray,
    n_mc: int,
    eps_grad: float,
    rng: RngSeed | np.random.Generator,
) -> SurrogateReport:
    """Measure how far the MC negative gradient sits from the power surrogate.

    Passes when the deviation is within the analytic bound plus five combined
    Monte Carlo standard errors.
    """
    est = population_grad_two_mc(mu_t, mu_star_t, n_mc, rng)
    sur = power_surrogate(mu_t, mu_star_t)
    deviation = float(np.linalg.norm(est.value - sur))
    bound = surrogate_bound(mu_t, mu_star_t, eps_grad)
    return SurrogateReport(
        grad_estimate=est.value,
        surrogate=sur,
        deviation=deviation,
        bound=bound,
        mc_std_err=est.se_norm,
        passed=deviation <= bound + 5.0 * est.se_norm,
    )


def g_function_terms(mu_t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-draw integrand of the EM-residual G at parameter mu_t."""
    mu_t = np.asarray(mu_t, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = x @ mu_t
    _, d1, d2, _ = tanh_derivatives(u)
    coef = -0.5 * d2 * float(mu_t @ mu_t) + d1 * u
    return coef[:, None] * x - d1[:, None] * mu_t


def g_function(
    mu_t: np.ndarray, mu_star_t: np.ndarray, n_mc: int, rng: RngSeed | np.random.Generator
) -> McEstimate:
    """Residual separating a gradient step from an EM step, by Monte Carlo.

    G(mu, mu*) = E_{x ~ N(mu*, Id)}[-tanh''(u) ||mu||^2 x / 2
                 + tanh'(u) u x - tanh'(u) mu],  u = <mu, x>.
    """
    if n_mc < 1:
        raise ValueError("need n_mc >= 1")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    d = mu_t.shape[0]
    total = np.zeros(d)
    total_sq = np.zeros(d)
    for lo in range(0, n_mc, _CHUNK):
        m = min(_CHUNK, n_mc - lo)
        x = gen.standard_normal((m, d)) + mu_star_t
        f = g_function_terms(mu_t, x)
        total += f.sum(axis=0)
        total_sq += (f * f).sum(axis=0)
    mean = total / n_mc
    var = (total_sq - n_mc * mean * mean) / max(n_mc - 1, 1)
    se = np.sqrt(np.maximum(var, 0.0) / n_mc)
    return McEstimate(value=mean, std_err=se, n=n_mc)


def population_grad_k_terms(theta_t: MixtureParams, x: np.ndarray, component: int) -> np.ndarray:
    """Per-draw integrand of the K-center population gradient for one center.

    Six terms: the (negated) gradient-EM direction -w_c (x - mu_c) plus the
    coupling terms produced by differentiating the softmax weights; the mean
    over x ~ noised mixture is the gradient of the population objective with
    respect to mu_c (dropped-factor-2 convention).
    """
    mus = theta_t.component_means()
    k = mus.shape[0]
    if not (0 <= component < k):
        raise ValueError(f"component must be in [0, {k}), got {component}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = np.atleast_2d(posterior_weights(theta_t, x))
    mu_c = mus[component]
    v = x - mu_c
    p = w @ mus                      # sum_i w_i mu_i
    s = p - x
    # q = sum_i w_i (<mu_i, x> - ||mu_i||^2)
    q = np.sum(w * (x @ mus.T - np.sum(mus * mus, axis=1)), axis=1)
    wc = w[:, component]
    coef = (np.sum(p * v, axis=1)            # <p, v>
            - v @ mu_c                        # <mu_c, v>
            + q + np.sum(s * (s + x), axis=1) # q + <s, s + x>
            - 1.0)
    return wc[:, None] * (coef[:, None] * v + mu_c - p)


def population_grad_k_mc(
    theta_t: MixtureParams,
    theta_star_t: MixtureParams,
    component: int,
    n_mc: int,
    rng: RngSeed | np.random.Generator,
) -> McEstimate:
    """Monte Carlo population gradient for one center, over the noised mixture."""
    if n_mc < 1:
        raise ValueError("need n_mc >= 1")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    d = theta_t.d
    total = np.zeros(d)
    total_sq = np.zeros(d)
    for lo in range(0, n_mc, _CHUNK):
        m = min(_CHUNK, n_mc - lo)
        x = sample_mixture(theta_star_t, m, gen)
        f = population_grad_k_terms(theta_t, x, component)
        total += f.sum(axis=0)
        total_sq += (f * f).sum(axis=0)
    mean = total / n_mc
    var = (total_sq - n_mc * mean * mean) / max(n_mc - 1, 1)
    se = np.sqrt(np.maximum(var, 0.0) / n_mc)
    return McEstimate(value=mean, std_err=se, n=n_mc)
