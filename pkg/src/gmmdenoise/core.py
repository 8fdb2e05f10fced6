"""Mixture model, forward (noising) process, score functions, and samplers.

The data model is a K-component, equal-weight, identity-covariance Gaussian
mixture in d dimensions.  Noising follows the Ornstein-Uhlenbeck forward
process x_t = exp(-t) x_0 + sqrt(1 - exp(-2t)) z, under which the mixture
stays a mixture with centers shrunk by exp(-t).  The score of the noised
mixture is softmax-weighted centers minus x; for a symmetric two-component
pair it collapses to tanh(<mu_t, x>) mu_t - x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import RngSeed


@dataclass(frozen=True)
class NoiseScale:
    """Diffusion time t with cached alpha = exp(-t), beta = sqrt(1 - exp(-2t))."""

    t: float
    alpha: float
    beta: float


def make_noise_scale(t: float) -> NoiseScale:
    """Build a NoiseScale from a nonnegative diffusion time."""
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"noise scale time must be finite and >= 0, got {t}")
    alpha = math.exp(-t)
    # 1 - exp(-2t) via expm1 keeps beta accurate for small t.
    beta = math.sqrt(-math.expm1(-2.0 * t))
    return NoiseScale(t=t, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class MixtureParams:
    """Centers of an equal-weight spherical Gaussian mixture.

    ``centers`` has one row per component, except in the symmetric-pair
    representation (``symmetric_pair=True``) where the mixture is
    (1/2) N(mu, Id) + (1/2) N(-mu, Id) and only mu is stored; ``k`` is then
    reported as 2.  Storing one vector avoids the +/- copies drifting apart.
    """

    k: int
    d: int
    centers: np.ndarray
    symmetric_pair: bool = False

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", centers)
        if self.k < 1 or self.d < 1:
            raise ValueError(f"need k >= 1 and d >= 1, got k={self.k}, d={self.d}")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        if self.symmetric_pair:
            if self.k != 2 or centers.shape != (1, self.d):
                raise ValueError(
                    "symmetric pair stores one d-vector and reports k=2, "
                    f"got k={self.k}, centers shape {centers.shape}"
                )
        elif centers.shape != (self.k, self.d):
            raise ValueError(
                f"centers shape {centers.shape} does not match (k, d)=({self.k}, {self.d})"
            )

    @classmethod
    def symmetric(cls, mu: np.ndarray) -> "MixtureParams":
        """The pair (1/2) N(mu, Id) + (1/2) N(-mu, Id), stored as one row."""
        mu = np.asarray(mu, dtype=float).reshape(1, -1)
        return cls(k=2, d=mu.shape[1], centers=mu, symmetric_pair=True)

    @classmethod
    def general(cls, centers: np.ndarray) -> "MixtureParams":
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        return cls(k=centers.shape[0], d=centers.shape[1], centers=centers)

    @property
    def mu(self) -> np.ndarray:
        """The stored vector of a symmetric pair."""
        if not self.symmetric_pair:
            raise ValueError("mu is only defined for the symmetric-pair representation")
        return self.centers[0]

    def component_means(self) -> np.ndarray:
        """All k component means as a (k, d) matrix (expands the +/- pair)."""
        if self.symmetric_pair:
            return np.vstack([self.centers, -self.centers])
        return self.centers


def rescale_centers(params: MixtureParams, t: float) -> MixtureParams:
    """Shrink every center by exp(-t): the mixture noised to time t."""
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"rescale time must be finite and >= 0, got {t}")
    return replace(params, centers=params.centers * math.exp(-t))


@dataclass(frozen=True)
class SampleBatch:
    """Aligned clean samples, noise draws, and noised samples at one scale.

    ``xt`` is always constructed as alpha*x0 + beta*z, never stored
    independently of the other two.
    """

    scale: NoiseScale
    x0: np.ndarray
    z: np.ndarray
    xt: np.ndarray = field(init=False)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x0.shape != z.shape or x0.ndim != 2:
            raise ValueError(f"x0 and z must share an (n, d) shape, got {x0.shape}, {z.shape}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "xt", self.scale.alpha * x0 + self.scale.beta * z)

    @property
    def n(self) -> int:
        return self.x0.shape[0]


def sample_mixture(params: MixtureParams, n: int, rng: RngSeed | np.random.Generator) -> np.ndarray:
    """Draw n rows: uniform component choice plus standard normal noise."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    noise = gen.standard_normal((n, params.d))
    if params.symmetric_pair:
        signs = gen.integers(0, 2, size=n) * 2 - 1
        return signs[:, None] * params.centers[0] + noise
    idx = gen.integers(0, params.k, size=n)
    return params.centers[idx] + noise


def forward_noise(
    x0: np.ndarray, scale: NoiseScale, rng: RngSeed | np.random.Generator, z: np.ndarray | None = None
) -> SampleBatch:
    """Noise clean samples to time t with fresh z (or a forced z, for tests)."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if z is None:
        gen = rng.generator() if isinstance(rng, RngSeed) else rng
        z = gen.standard_normal(x0.shape)
    return SampleBatch(scale=scale, x0=x0, z=np.asarray(z, dtype=float))


def posterior_weights(params_t: MixtureParams, x: np.ndarray) -> np.ndarray:
    """Posterior component weights w_i(x) at the params' own scale.

    Accepts a single d-vector or an (n, d) batch; returns (k,) or (n, k).
    Computed as a max-stabilized softmax of -||x - mu_i||^2 / 2, so widely
    separated centers do not underflow to 0/0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    mus = params_t.component_means()
    # -||x - mu||^2 / 2, as logits over components
    logits = xb @ mus.T - 0.5 * np.sum(mus * mus, axis=1) - 0.5 * np.sum(xb * xb, axis=1, keepdims=True)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if single else w


def student_score(params_t: MixtureParams, x: np.ndarray) -> np.ndarray:
    """Score-shaped network: sum_i w_i(x) mu_i - x, at the params' scale.

    Evaluated at the true (rescaled) centers this is the exact score of the
    noised mixture.  Accepts a single vector or an (n, d) batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    w = np.atleast_2d(posterior_weights(params_t, xb))
    s = w @ params_t.component_means() - xb
    return s[0] if single else s


def tanh_derivatives(u: np.ndarray):
    """(tanh u, tanh' u, tanh'' u, tanh''' u), all from one tanh evaluation."""
    th = np.tanh(u)
    th2 = th * th
    d1 = 1.0 - th2
    d2 = -2.0 * th * d1
    d3 = -2.0 + 8.0 * th2 - 6.0 * th2 * th2
    return th, d1, d2, d3


def estimate_center_norm(x0: np.ndarray) -> float:
    """Estimate ||mu*|| of a symmetric pair via R^2 = mean ||x||^2 - d.

    The radicand is clamped at zero: with few samples the unbiased estimate
    of ||mu*||^2 can come out negative.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[0] < 1:
        raise ValueError("need at least one sample")
    d = x0.shape[1]
    r2 = float(np.mean(np.sum(x0 * x0, axis=1)) - d)
    return math.sqrt(max(0.0, r2))


def reverse_sample(
    params: MixtureParams,
    terminal_time: float,
    n: int,
    steps: int,
    rng: RngSeed | np.random.Generator,
    score_fn=None,
) -> np.ndarray:
    """Euler-Maruyama sampler for the time-reversed noising process.

    Integrates dX = {X + 2 * score_{T - s}(X)} ds + sqrt(2) dW from standard
    normal draws on a uniform grid, freezing the analytically rescaled score
    parameters at each grid time.  Demonstration-quality generative check
    only; no accuracy claim beyond the smoke tests.

    ``score_fn(x, t) -> (n, d)`` overrides the mixture score (test hook).
    """
    if steps < 1:
        raise ValueError(f"need steps >= 1, got {steps}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    T = float(terminal_time)
    if not (T > 0):
        raise ValueError(f"terminal time must be > 0, got {T}")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    if score_fn is None:
        def score_fn(x, t):
            return student_score(rescale_centers(params, t), x)
    dt = T / steps
    x = gen.standard_normal((n, params.d))
    for k in range(steps):
        t_rem = T - k * dt
        drift = x + 2.0 * score_fn(x, t_rem)
        x = x + dt * drift + math.sqrt(2.0 * dt) * gen.standard_normal(x.shape)
    return x
