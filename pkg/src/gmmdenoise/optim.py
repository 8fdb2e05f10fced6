"""Gradient-descent solvers on the denoising objective.

One building block (``gmm_denoiser``) runs plain or projected gradient
descent at a single noise scale; on top of it sit the three orchestrations:

* ``two_stage_fit``      -- high-noise stage from random init (power-iteration
                            regime), then a low-noise stage (EM regime),
* ``projected_gd_fit``   -- high-noise projected GD for small separation, with
                            the projection radius estimated from the data,
* ``warm_start_k_fit``   -- all K centers at once from a warm start.

The iterate is kept in the t=0 parameterization; each step evaluates the
gradient at the rescaled centers exp(-t) * theta and applies the equivalent
update theta <- theta - (eta / alpha) * grad.  This keeps the returned
estimate exactly equal to the last iterate (no exp(+t) round-trip), while
the recorded distances use the working scale, where the contraction
constants live.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    MixtureParams,
    NoiseScale,
    SampleBatch,
    estimate_center_norm,
    make_noise_scale,
)
from .objective import batch_grad_two, batch_grad_k
from .rng import RngSeed

RESAMPLE_MODES = ("fresh_minibatch", "full_batch")


@dataclass(frozen=True)
class GdConfig:
    """One gradient-descent stage.

    ``eta = 0`` is allowed so a no-op stage can be exercised; real runs use
    positive step sizes.  ``projection_radius`` is the t=0 radius R; iterates
    at scale t are clipped to R * exp(-t).
    """

    scale: NoiseScale
    eta: float
    steps: int
    batch_size: int
    rng: RngSeed
    projection_radius: Optional[float] = None
    resample: str = "fresh_minibatch"

    def __post_init__(self):
        if not (self.eta >= 0) or not math.isfinite(self.eta):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.projection_radius is not None and not (self.projection_radius > 0):
            raise ValueError("projection_radius, if present, must be > 0")
        if self.resample not in RESAMPLE_MODES:
            raise ValueError(f"resample must be one of {RESAMPLE_MODES}, got {self.resample!r}")


@dataclass(frozen=True)
class RunRecord:
    """One trajectory row.

    ``iterate`` holds the centers at the t=0 parameterization; ``dist`` and
    ``contraction_ratio`` are measured at the working noise scale (where the
    per-step contraction constants apply).  ``tan_angle`` is the acute-angle
    tangent to the supplied truth (symmetric pairs and single directions).
    """

    step: int
    iterate: np.ndarray
    loss: Optional[float]
    tan_angle: Optional[float] = None
    dist: Optional[float] = None
    contraction_ratio: Optional[float] = None
    elapsed_ns: int = 0

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "loss": self.loss,
            "tan_angle": self.tan_angle,
            "dist": self.dist,
            "contraction_ratio": self.contraction_ratio,
            "elapsed_ns": self.elapsed_ns,
        }


@dataclass
class FitReport:
    """Final estimate (t=0 scale), per-step trajectory, and stage metadata."""

    final_estimate: MixtureParams
    trajectory: list
    stage_metadata: dict = field(default_factory=dict)

    def final_distance(self, truth: MixtureParams) -> float:
        return _distance(self.final_estimate.centers, truth.centers, self.final_estimate.symmetric_pair)


def _distance(centers: np.ndarray, truth_centers: np.ndarray, symmetric: bool) -> float:
    """Sign-invariant distance for pairs, max per-component distance otherwise."""
    if symmetric:
        mu, ms = centers[0], truth_centers[0]
        return float(min(np.linalg.norm(mu - ms), np.linalg.norm(mu + ms)))
    return float(np.max(np.linalg.norm(centers - truth_centers, axis=1)))


def _acute_tan(mu: np.ndarray, mu_star: np.ndarray) -> Optional[float]:
    nm, ns = np.linalg.norm(mu), np.linalg.norm(mu_star)
    if nm == 0 or ns == 0:
        return None
    c = abs(float(mu @ mu_star) / (nm * ns))
    if c == 0:
        return math.inf
    return math.sqrt(max(0.0, 1.0 / (c * c) - 1.0))


def _project_rows(centers: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    factor = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return centers * factor


def gmm_denoiser(
    data: np.ndarray,
    init: MixtureParams,
    cfg: GdConfig,
    truth: Optional[MixtureParams] = None,
) -> FitReport:
    """Gradient descent on the denoising objective at one noise scale.

    ``init`` and the returned estimate live at the t=0 scale.  Each step
    draws a fresh minibatch (rows cycled, new noise) or reuses one fixed
    noised batch, evaluates the batch gradient at the rescaled centers, and
    applies the update; with ``projection_radius`` set, every post-step
    iterate is clipped back into the centered ball.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if init.d != d:
        raise ValueError(f"init dimension {init.d} does not match data dimension {d}")
    if not (cfg.scale.t > 0):
        raise ValueError("gradient descent needs a positive noise scale t")
    gen = cfg.rng.generator()
    alpha = cfg.scale.alpha
    symmetric = init.symmetric_pair

    theta = init.centers.copy()
    if cfg.projection_radius is not None:
        theta = _project_rows(theta, cfg.projection_radius)

    if cfg.resample == "full_batch":
        if cfg.batch_size > n:
            raise ValueError(f"batch_size {cfg.batch_size} exceeds data size {n} for full_batch")
        fixed_rows = data[: cfg.batch_size]
        fixed_z = gen.standard_normal(fixed_rows.shape)

    truth_centers = truth.centers if truth is not None else None
    records = []
    prev_dist = None
    if truth_centers is not None:
        prev_dist = alpha * _distance(theta, truth_centers, symmetric)
    start_ns = time.perf_counter_ns()
    for h in range(1, cfg.steps + 1):
        if cfg.resample == "fresh_minibatch":
            idx = (np.arange(cfg.batch_size) + (h - 1) * cfg.batch_size) % n
            rows = data[idx]
            z = gen.standard_normal(rows.shape)
        else:
            rows, z = fixed_rows, fixed_z
        batch = SampleBatch(scale=cfg.scale, x0=rows, z=z)

        theta_t = theta * alpha
        if symmetric:
            stats = batch_grad_two(theta_t[0], batch)
            grad = stats.grad[None, :]
        else:
            params_t = MixtureParams(k=init.k, d=d, centers=theta_t, symmetric_pair=False)
            stats = batch_grad_k(params_t, batch)
            grad = stats.grad
        if cfg.eta != 0.0:
            theta = theta - (cfg.eta / alpha) * grad
            if cfg.projection_radius is not None:
                theta = _project_rows(theta, cfg.projection_radius)

        tan_angle = dist = ratio = None
        if truth_centers is not None:
            dist = alpha * _distance(theta, truth_centers, symmetric)
            if symmetric:
                tan_angle = _acute_tan(theta[0], truth_centers[0])
            if prev_dist is not None and prev_dist > 0:
                ratio = dist / prev_dist
            prev_dist = dist
        records.append(
            RunRecord(
                step=h,
                iterate=theta.copy(),
                loss=stats.loss,
                tan_angle=tan_angle,
                dist=dist,
                contraction_ratio=ratio,
                elapsed_ns=time.perf_counter_ns() - start_ns,
            )
        )

    final = MixtureParams(k=init.k, d=d, centers=theta, symmetric_pair=symmetric)
    meta = {
        "t": cfg.scale.t,
        "eta": cfg.eta,
        "steps": cfg.steps,
        "batch_size": cfg.batch_size,
        "resample": cfg.resample,
        "projection_radius": cfg.projection_radius,
        "n_data": n,
        "seed": [cfg.rng.seed, cfg.rng.stream],
    }
    return FitReport(final_estimate=final, trajectory=records, stage_metadata={"stages": [meta]})


def symmetrize_two_component(data: np.ndarray):
    """Center a general two-component dataset; returns (centered, mean_shift)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < 1:
        raise ValueError("need at least one sample")
    shift = data.mean(axis=0)
    return data - shift, shift


def default_two_stage_configs(
    data: np.ndarray,
    rng: RngSeed,
    *,
    eta_high: float = 1.0 / 20.0,
    eta_low: float = 0.05,
    t_low: float = 0.1,
    steps_high: Optional[int] = None,
    steps_low: int = 200,
    batch_high: int = 64,
    batch_low: int = 16384,
):
    """Data-driven defaults for the two-stage solver.

    The high-noise scale t1 = ln(R * B^2.5) with B = max(2, 1.1 R) places the
    rescaled center norm at B^-2.5, the geometric center of the working
    window [B^-3, B^-2].  Stage one only has to deliver a direction with
    Omega(1) correlation, so its step budget B^5 ln(4d) / (2 eta) covers the
    per-step angle gain of order 2 eta B^-5 from the worst random start, and
    its batch is kept small; the low-noise stage does the precise work with a
    large batch.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    d = data.shape[1]
    R = estimate_center_norm(data)
    B = max(2.0, 1.1 * R)
    t_high = max(math.log(max(R, 1e-6) * B**2.5), t_low)
    if steps_high is None:
        steps_high = int(math.ceil(B**5 * math.log(4.0 * d) / (2.0 * eta_high)))
    cfg_high = GdConfig(
        scale=make_noise_scale(t_high),
        eta=eta_high,
        steps=steps_high,
        batch_size=batch_high,
        rng=rng.substream(1),
    )
    cfg_low = GdConfig(
        scale=make_noise_scale(t_low),
        eta=eta_low,
        steps=steps_low,
        batch_size=batch_low,
        rng=rng.substream(2),
    )
    return cfg_high, cfg_low


def two_stage_fit(
    data: np.ndarray,
    cfg_high: Optional[GdConfig] = None,
    cfg_low: Optional[GdConfig] = None,
    rng: Optional[RngSeed] = None,
    truth: Optional[MixtureParams] = None,
) -> FitReport:
    """High-noise stage from a random N(0, Id) init, then a low-noise stage.

    Expects data in symmetric-pair form (mean zero); run
    ``symmetrize_two_component`` first otherwise.  Missing configs are filled
    with the data-driven defaults (eta 1/20 then 0.05, t_low 0.1).
    """
    if rng is None:
        raise ValueError("two_stage_fit needs an RngSeed")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    d = data.shape[1]
    if cfg_high is None or cfg_low is None:
        dflt_high, dflt_low = default_two_stage_configs(data, rng)
        cfg_high = cfg_high or dflt_high
        cfg_low = cfg_low or dflt_low

    init = MixtureParams.symmetric(rng.substream(0).generator().standard_normal(d))
    stage1 = gmm_denoiser(data, init, cfg_high, truth=truth)
    stage2 = gmm_denoiser(data, stage1.final_estimate, cfg_low, truth=truth)

    offset = len(stage1.trajectory)
    trajectory = list(stage1.trajectory) + [
        RunRecord(
            step=r.step + offset,
            iterate=r.iterate,
            loss=r.loss,
            tan_angle=r.tan_angle,
            dist=r.dist,
            contraction_ratio=r.contraction_ratio,
            elapsed_ns=r.elapsed_ns,
        )
        for r in stage2.trajectory
    ]
    meta = {
        "stages": stage1.stage_metadata["stages"] + stage2.stage_metadata["stages"],
        "stage_boundaries": [offset, offset + len(stage2.trajectory)],
    }
    return FitReport(final_estimate=stage2.final_estimate, trajectory=trajectory, stage_metadata=meta)


def default_projected_config(
    data: np.ndarray,
    rng: RngSeed,
    *,
    eps_target: Optional[float] = None,
    eta: float = 1.0 / 20.0,
    batch_size: int = 2048,
    steps: Optional[int] = None,
    max_steps: int = 40_000,
) -> GdConfig:
    """Defaults for projected GD: t = ln(d / eps_target), radius from the data.

    ``eps_target`` defaults to 0.7 d, i.e. a mild noise scale t = ln(1/0.7):
    shrinking further slows the per-step angle gain 2 eta ||mu*_t||^2
    quadratically while the direction information in the data stays fixed.
    The step budget covers that gain from the worst random start, with margin
    for the radius estimate R undershooting the true norm.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    d = data.shape[1]
    if eps_target is None:
        eps_target = 0.7 * d
    if not (0 < eps_target < d):
        raise ValueError(f"eps_target must lie in (0, d); got {eps_target} with d={d}")
    t = math.log(d / eps_target)
    R = estimate_center_norm(data)
    radius = max(R, 1e-12)
    if steps is None:
        rate = 2.0 * eta * (0.75 * radius * math.exp(-t)) ** 2
        steps = int(min(max_steps, max(100, math.ceil(math.log(40.0 * d) / max(rate, 1e-12)))))
    return GdConfig(
        scale=make_noise_scale(t),
        eta=eta,
        steps=steps,
        batch_size=batch_size,
        rng=rng.substream(1),
        projection_radius=radius,
    )


def projected_gd_fit(
    data: np.ndarray,
    cfg: Optional[GdConfig] = None,
    rng: Optional[RngSeed] = None,
    truth: Optional[MixtureParams] = None,
) -> FitReport:
    """Projected gradient descent at high noise for small-separation pairs.

    Every iterate is clipped to the ball of radius R exp(-t) (R at t=0),
    where R comes from ``estimate_center_norm`` unless the config pins it.
    """
    if rng is None:
        raise ValueError("projected_gd_fit needs an RngSeed")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if cfg is None:
        cfg = default_projected_config(data, rng)
    if cfg.projection_radius is None:
        raise ValueError("projected_gd_fit requires cfg.projection_radius")
    init = MixtureParams.symmetric(rng.substream(0).generator().standard_normal(data.shape[1]))
    return gmm_denoiser(data, init, cfg, truth=truth)


def warm_start_k_fit(
    data: np.ndarray,
    init: MixtureParams,
    cfg: Optional[GdConfig] = None,
    truth: Optional[MixtureParams] = None,
    rng: Optional[RngSeed] = None,
) -> FitReport:
    """All-K gradient descent at low noise from a warm initialization.

    Defaults: eta = 2K/3, t = 0.2.  The trajectory distance is the max over
    components, matched by index to the warm start.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if init.symmetric_pair:
        raise ValueError("warm_start_k_fit expects explicit K centers, not a symmetric pair")
    if init.d != data.shape[1]:
        raise ValueError(f"init dimension {init.d} does not match data dimension {data.shape[1]}")
    if cfg is None:
        if rng is None:
            raise ValueError("warm_start_k_fit needs cfg or rng")
        cfg = GdConfig(
            scale=make_noise_scale(0.2),
            eta=2.0 * init.k / 3.0,
            steps=25,
            batch_size=65536,
            rng=rng.substream(1),
        )
    return gmm_denoiser(data, init, cfg, truth=truth)
