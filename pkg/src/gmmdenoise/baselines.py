"""Reference algorithms the gradient-descent solvers are compared against.

EM for the symmetric pair is mu' = E[tanh(<mu, X>) X]; for K components it
is the posterior-weighted ratio of means.  Gradient EM takes one step of
size eta toward the M-step target.  The power-iteration baseline runs on the
moment matrix (1/n) sum x x^T - Id, whose top eigenvector is the pair
direction.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import MixtureParams, posterior_weights
from .objective import McEstimate, _mean_se
from .optim import RunRecord, _acute_tan, _distance
from .rng import RngSeed


class DegenerateComponentError(ValueError):
    """A component received (numerically) zero posterior mass over the batch."""

    def __init__(self, component: int, mass: float):
        self.component = component
        self.mass = mass
        super().__init__(f"component {component} has vanishing weight mass {mass:.3e}")


@dataclass(frozen=True)
class EmConfig:
    steps: int
    mode: str = "finite_sample"  # or "population_mc"
    n_mc: int = 100_000
    rng: Optional[RngSeed] = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.mode not in ("finite_sample", "population_mc"):
            raise ValueError(f"unknown EM mode {self.mode!r}")


def em_step_two(
    mu: np.ndarray,
    data: Optional[np.ndarray] = None,
    *,
    mu_star: Optional[np.ndarray] = None,
    n_mc: int = 100_000,
    rng: Optional[RngSeed | np.random.Generator] = None,
):
    """One EM update E[tanh(<mu, X>) X] for the symmetric pair.

    With ``data`` the expectation is the sample mean; with ``mu_star`` it is
    Monte Carlo over N(mu*, Id) and an McEstimate (mean plus standard error)
    is returned.
    """
    mu = np.asarray(mu, dtype=float)
    if data is not None:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        return np.mean(np.tanh(data @ mu)[:, None] * data, axis=0)
    if mu_star is None or rng is None:
        raise ValueError("population mode needs mu_star and rng")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    x = gen.standard_normal((n_mc, mu.shape[0])) + np.asarray(mu_star, dtype=float)
    vals = np.tanh(x @ mu)[:, None] * x
    mean, se = _mean_se(vals)
    return McEstimate(value=mean, std_err=se, n=n_mc)


def em_step_k(theta: MixtureParams, data: np.ndarray) -> MixtureParams:
    """One EM update: posterior-weighted mean per component."""
    if theta.symmetric_pair:
        raise ValueError("use em_step_two for the symmetric-pair representation")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    w = np.atleast_2d(posterior_weights(theta, data))
    mass = w.sum(axis=0)
    for i, m in enumerate(mass):
        if m <= 0.0:
            raise DegenerateComponentError(i, float(m))
    new_centers = (w.T @ data) / mass[:, None]
    return MixtureParams(k=theta.k, d=theta.d, centers=new_centers)


def gradient_em_step_k(theta: MixtureParams, data: np.ndarray, eta: float) -> MixtureParams:
    """One gradient-EM update mu_i + eta * mean[w_i(x) (x - mu_i)]."""
    if not (eta > 0):
        raise ValueError(f"eta must be > 0, got {eta}")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if theta.symmetric_pair:
        raise ValueError("gradient_em_step_k expects explicit K centers")
    w = np.atleast_2d(posterior_weights(theta, data))
    n = data.shape[0]
    move = (w.T @ data) / n - (w.mean(axis=0)[:, None] * theta.centers)
    return MixtureParams(k=theta.k, d=theta.d, centers=theta.centers + eta * move)


def run_em(
    theta0: MixtureParams,
    cfg: EmConfig,
    data: Optional[np.ndarray] = None,
    mu_star: Optional[np.ndarray] = None,
    truth: Optional[MixtureParams] = None,
):
    """Drive EM per an EmConfig: finite-sample over data, or population MC.

    Population mode is the symmetric-pair update over N(mu*, Id) draws; each
    step consumes a fresh substream of cfg.rng.
    """
    if cfg.mode == "finite_sample":
        if data is None:
            raise ValueError("finite_sample mode needs data")
        return em_fit(theta0, data, cfg.steps, truth=truth)
    if mu_star is None or cfg.rng is None:
        raise ValueError("population_mc mode needs mu_star and cfg.rng")
    if not theta0.symmetric_pair:
        raise ValueError("population_mc mode is defined for the symmetric pair")
    theta = theta0
    records = []
    truth_centers = truth.centers if truth is not None else None
    prev = None
    if truth_centers is not None:
        prev = _distance(theta.centers, truth_centers, True)
    start = time.perf_counter_ns()
    for h in range(1, cfg.steps + 1):
        est = em_step_two(theta.centers[0], mu_star=mu_star, n_mc=cfg.n_mc,
                          rng=cfg.rng.substream(h))
        theta = MixtureParams.symmetric(est.value)
        tan = dist = ratio = None
        if truth_centers is not None:
            dist = _distance(theta.centers, truth_centers, True)
            tan = _acute_tan(theta.centers[0], truth_centers[0])
            if prev is not None and prev > 0:
                ratio = dist / prev
            prev = dist
        records.append(
            RunRecord(step=h, iterate=theta.centers.copy(), loss=None, tan_angle=tan,
                      dist=dist, contraction_ratio=ratio,
                      elapsed_ns=time.perf_counter_ns() - start)
        )
    return theta, records


def em_fit(
    theta0: MixtureParams,
    data: np.ndarray,
    steps: int,
    truth: Optional[MixtureParams] = None,
    eta: Optional[float] = None,
):
    """Iterate EM (or gradient EM when ``eta`` is given), recording a trajectory.

    Returns (final MixtureParams, list of RunRecord) in the shared trajectory
    schema so baselines tabulate head-to-head with the GD solvers; the loss
    column stays empty (EM has no noise scale).
    """
    theta = theta0
    records = []
    truth_centers = truth.centers if truth is not None else None
    prev = None
    if truth_centers is not None:
        prev = _distance(theta0.centers, truth_centers, theta0.symmetric_pair)
    start = time.perf_counter_ns()
    for h in range(1, steps + 1):
        if theta.symmetric_pair:
            theta = MixtureParams.symmetric(em_step_two(theta.centers[0], data))
        elif eta is None:
            theta = em_step_k(theta, data)
        else:
            theta = gradient_em_step_k(theta, data, eta)
        tan = dist = ratio = None
        if truth_centers is not None:
            dist = _distance(theta.centers, truth_centers, theta.symmetric_pair)
            if theta.symmetric_pair:
                tan = _acute_tan(theta.centers[0], truth_centers[0])
            if prev is not None and prev > 0:
                ratio = dist / prev
            prev = dist
        records.append(
            RunRecord(
                step=h,
                iterate=theta.centers.copy(),
                loss=None,
                tan_angle=tan,
                dist=dist,
                contraction_ratio=ratio,
                elapsed_ns=time.perf_counter_ns() - start,
            )
        )
    return theta, records


def empirical_moment_matrix(data: np.ndarray) -> np.ndarray:
    """(1/n) sum x x^T - Id; its top eigenvector estimates the pair direction."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    return (data.T @ data) / n - np.eye(d)


def power_iteration_fit(
    data: Optional[np.ndarray],
    steps: int,
    rng: RngSeed | np.random.Generator,
    truth_direction: Optional[np.ndarray] = None,
    matrix: Optional[np.ndarray] = None,
):
    """Normalized power iteration on the empirical moment matrix.

    Returns (unit direction, list of RunRecord with tan_angle per step).
    ``matrix`` overrides the data-derived moment matrix (test hook).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if matrix is None:
        if data is None:
            raise ValueError("need data or an explicit matrix")
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[0] < data.shape[1]:
            raise ValueError("power iteration needs n >= d samples")
        matrix = empirical_moment_matrix(data)
    d = matrix.shape[0]
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    v = gen.standard_normal(d)
    v /= np.linalg.norm(v)
    records = []
    start = time.perf_counter_ns()
    for h in range(1, steps + 1):
        v = matrix @ v
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ValueError("power iteration hit the zero vector")
        v /= nv
        tan = _acute_tan(v, truth_direction) if truth_direction is not None else None
        records.append(
            RunRecord(
                step=h,
                iterate=v.copy(),
                loss=None,
                tan_angle=tan,
                dist=None,
                contraction_ratio=None,
                elapsed_ns=time.perf_counter_ns() - start,
            )
        )
    return v, records
