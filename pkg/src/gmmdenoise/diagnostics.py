"""Quantitative checks of the approximation and contraction claims.

Every check reduces its claim to ``observed <= threshold`` plus Monte Carlo
error accounting, and reports exactly those numbers: pass/fail is always
recomputable from the report.  Checks whose regime preconditions fail are
marked not-applicable, a distinct outcome from failure.  Convention: five
combined standard errors of slack for vector comparisons, three for scalar
tail probabilities.  Asymptotic poly(d) rates are replaced by fixed
desk-scale thresholds, documented per check; those checks are stand-ins for
the rates, not verifications of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    MixtureParams,
    NoiseScale,
    SampleBatch,
    estimate_center_norm,
    make_noise_scale,
    posterior_weights,
    rescale_centers,
    sample_mixture,
    tanh_derivatives,
)
from .objective import (
    batch_grad_two,
    batch_grad_k,
    g_function,
    population_grad_k_mc,
    population_grad_k_terms,
    surrogate_deviation,
    _mean_se,
)
from .optim import GdConfig, two_stage_fit, warm_start_k_fit
from .oracles import g_residual_1d, init_correlation_probability
from .rng import RngSeed


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one diagnostic check.

    ``passed`` is exactly ``observed <= threshold`` whenever the check is
    applicable; not-applicable reports carry ``applicable=False`` and never
    count as passed.
    """

    name: str
    passed: bool
    observed: float
    threshold: float
    mc_std_err: float
    details: str
    applicable: bool = True

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "applicable": self.applicable,
            "observed": self.observed,
            "threshold": self.threshold,
            "mc_std_err": self.mc_std_err,
            "details": self.details,
        }


def _report(name, observed, threshold, mc_std_err, details, applicable=True) -> CheckReport:
    observed = float(observed)
    threshold = float(threshold)
    return CheckReport(
        name=name,
        passed=bool(applicable and observed <= threshold),
        observed=observed,
        threshold=threshold,
        mc_std_err=float(mc_std_err),
        details=details,
        applicable=applicable,
    )


def _not_applicable(name, details) -> CheckReport:
    return CheckReport(
        name=name, passed=False, observed=math.nan, threshold=math.nan,
        mc_std_err=math.nan, details=details, applicable=False,
    )


def angle_metrics(mu: np.ndarray, mu_star: np.ndarray):
    """(cos, tan) of the angle between two nonzero vectors.

    cos keeps its sign; tan is reported for the acute representative (it
    only depends on cos^2) and is +inf for orthogonal vectors.
    """
    mu = np.asarray(mu, dtype=float)
    mu_star = np.asarray(mu_star, dtype=float)
    nm, ns = np.linalg.norm(mu), np.linalg.norm(mu_star)
    if nm == 0 or ns == 0:
        raise ValueError("angle undefined for the zero vector")
    c = float(mu @ mu_star) / (nm * ns)
    c = max(-1.0, min(1.0, c))
    if c == 0.0:
        return 0.0, math.inf
    return c, math.sqrt(max(0.0, 1.0 / (c * c) - 1.0))


# ---------------------------------------------------------------------------
# random initialization correlation
# ---------------------------------------------------------------------------

def check_init_correlation(d: int, trials: int, rng: RngSeed) -> CheckReport:
    """Fraction of N(0, Id) draws with |<mu0_hat, e1>| >= 1/(2d) vs. the exact tail.

    By rotation invariance the truth direction is taken as e1.  Passes when
    the observed fraction is no more than three binomial standard errors
    below the exact probability (regularized incomplete beta).
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    gen = rng.generator()
    draws = gen.standard_normal((trials, d))
    frac = float(np.mean(np.abs(draws[:, 0]) / np.linalg.norm(draws, axis=1) >= 1.0 / (2.0 * d)))
    p = init_correlation_probability(d)
    se = math.sqrt(max(p * (1.0 - p), 1e-12) / trials)
    details = (
        f"d={d} trials={trials}: observed fraction {frac:.4f}, exact tail {p:.4f}; "
        f"pass iff exact - observed <= 3 binomial std errors"
    )
    return _report(f"init_correlation_d{d}", p - frac, 3.0 * se, se, details)


# ---------------------------------------------------------------------------
# high-noise power surrogate
# ---------------------------------------------------------------------------

def default_power_grid(d: int = 8, n_points: int = 10):
    """Grid of (mu_t, mu*_t) pairs inside the high-noise window with B = d.

    Norms stay in [B^-3, B^-2]; angles sweep the whole range of allowed
    correlations.
    """
    B = float(d)
    hi, lo = B**-2, B**-3
    e1 = np.zeros(d)
    e1[0] = 1.0
    e2 = np.zeros(d)
    e2[min(1, d - 1)] = 1.0
    grid = []
    for i in range(n_points):
        a = lo + (hi - lo) * (0.3 + 0.7 * (i % 4) / 3.0)
        s = lo + (hi - lo) * (0.4 + 0.6 * (i % 3) / 2.0)
        phi = 0.15 + 2.7 * i / max(n_points - 1, 1)
        mu = a * (math.cos(phi) * e1 + math.sin(phi) * e2)
        grid.append((mu, s * e1))
    return grid


def check_power_deviation(grid, n_mc: int, rng: RngSeed, eps_grad: float = 0.0) -> CheckReport:
    """Surrogate deviation <= analytic bound + 5 MC std errors on every grid point."""
    lines = []
    worst = -math.inf
    worst_se = 0.0
    for i, (mu_t, mu_star_t) in enumerate(grid):
        rep = surrogate_deviation(mu_t, mu_star_t, n_mc, eps_grad, rng.substream(i))
        margin = rep.deviation - rep.bound - 5.0 * rep.mc_std_err
        if margin > worst:
            worst, worst_se = margin, rep.mc_std_err
        lines.append(
            f"point {i}: deviation {rep.deviation:.3e} bound {rep.bound:.3e} "
            f"mc_se {rep.mc_std_err:.3e} {'ok' if rep.passed else 'FAIL'}"
        )
    details = "max over grid of (deviation - bound - 5 se) <= 0\n" + "\n".join(lines)
    return _report("power_deviation", worst, 0.0, worst_se, details)


# ---------------------------------------------------------------------------
# one-step angle dynamics at high noise
# ---------------------------------------------------------------------------

def angle_step_bounds(mu_t, mu_star_t, eta: float, eps: float):
    """Tangent shrink factor and additive floor for one high-noise GD step.

    Derived from the eigenvalues sigma1 = 1 + eta (2||mu*||^2 - 3||mu||^2),
    sigma2 = 1 - 3 eta ||mu||^2 of the surrogate update matrix, inflated by
    the surrogate deviation terms and the empirical-gradient error ceiling
    eps (entering as eps_tilde = d * eps / ||mu||).  A non-positive shrink
    denominator yields an infinite (vacuous) shrink factor.
    """
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    d = mu_t.shape[0]
    nm = float(np.linalg.norm(mu_t))
    ns2 = float(mu_star_t @ mu_star_t)
    if nm == 0 or ns2 == 0:
        raise ValueError("angle step bounds need nonzero vectors")
    eps_tilde = d * eps / nm
    dev = 500.0 * eta * d**1.5 * nm**4 + 20.0 * eta * d * nm * nm * ns2 + eta * eps_tilde
    sigma1 = 1.0 + eta * (2.0 * ns2 - 3.0 * nm * nm)
    sigma2 = 1.0 - 3.0 * eta * nm * nm
    denom = sigma1 - dev - eta * ns2
    kappa1 = sigma2 / denom if denom > 0 else math.inf
    kappa2 = dev / ns2
    return kappa1, kappa2


def in_angle_regime(mu_t, mu_star_t, d: Optional[int] = None) -> bool:
    """High-noise working window with B = d: norms in it, correlation >= 1/(2d)."""
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    if d is None:
        d = mu_t.shape[0]
    B = float(d)
    nm = float(np.linalg.norm(mu_t))
    ns = float(np.linalg.norm(mu_star_t))
    if nm == 0 or ns == 0:
        return False
    cos = abs(float(mu_t @ mu_star_t)) / (nm * ns)
    return nm <= B**-2 + 1e-15 and B**-3 - 1e-15 <= ns <= B**-2 + 1e-15 and cos >= 1.0 / (2.0 * d)


def check_angle_step(
    mu_t: np.ndarray,
    mu_star_t: np.ndarray,
    cfg: GdConfig,
    n_mc: int,
    rng: RngSeed,
    name: str = "angle_step",
) -> CheckReport:
    """One-step tangent bound: tan' <= max(shrink * tan, floor) + MC slack.

    Gated on the high-noise window; out-of-regime inputs come back
    not-applicable.  The gradient-error ceiling fed into the bounds is three
    combined standard errors of the measured batch gradient.
    """
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    if not in_angle_regime(mu_t, mu_star_t):
        return _not_applicable(name, "outside the high-noise window (norms or correlation)")
    gen = rng.generator()
    scale = cfg.scale
    mu_star0 = mu_star_t / scale.alpha
    x0 = sample_mixture(MixtureParams.symmetric(mu_star0), n_mc, gen)
    z = gen.standard_normal(x0.shape)
    batch = SampleBatch(scale=scale, x0=x0, z=z)
    stats = batch_grad_two(mu_t, batch)
    eps = 3.0 * stats.se_norm
    kappa1, kappa2 = angle_step_bounds(mu_t, mu_star_t, cfg.eta, eps)
    _, tan0 = angle_metrics(mu_t, mu_star_t)
    mu_next = mu_t - cfg.eta * stats.grad
    _, tan1 = angle_metrics(mu_next, mu_star_t)
    par = abs(float(mu_next @ mu_star_t)) / float(np.linalg.norm(mu_star_t))
    slack = 5.0 * cfg.eta * stats.se_norm * (1.0 + tan1 * tan1) / max(par, 1e-300)
    bound = max(kappa1 * tan0, kappa2) + slack
    details = (
        f"tan before {tan0:.4f} -> after {tan1:.4f}; shrink {kappa1:.4f}, floor {kappa2:.4f}, "
        f"mc slack {slack:.2e}, grad eps {eps:.2e} (3 combined se)"
    )
    return _report(name, tan1, bound, stats.se_norm, details)


# ---------------------------------------------------------------------------
# EM-residual contraction region
# ---------------------------------------------------------------------------

def default_g_grid():
    """Documented grid for the residual contraction region.

    One-dimensional points (a, b) = (||mu||, mu*) with b = 40 and a from 30
    to 50; in d = 2 and d = 8, iterate norms {30, 40, 50} and truth vectors
    at angles {0, 0.2, 0.4} rad with <mu_hat, mu*> = 40 held fixed.  All
    points satisfy a in [30, 4<mu_hat, mu*>/3].
    """
    grid = [(np.array([a]), np.array([40.0])) for a in (30.0, 35.0, 40.0, 45.0, 50.0)]
    for d in (2, 8):
        e1 = np.zeros(d)
        e1[0] = 1.0
        e2 = np.zeros(d)
        e2[1] = 1.0
        for a in (30.0, 40.0, 50.0):
            for phi in (0.0, 0.2, 0.4):
                norm_star = 40.0 / math.cos(phi)
                mu_star = norm_star * (math.cos(phi) * e1 + math.sin(phi) * e2)
                grid.append((a * e1, mu_star))
    return grid


def check_g_contraction(grid, n_mc: int, rng: RngSeed) -> CheckReport:
    """||G(mu, mu*)|| <= 0.01 ||mu - mu*|| (+ 5 MC std errors) over the grid.

    d = 1 points are evaluated by quadrature (no MC term); others by Monte
    Carlo with the five-sigma allowance.
    """
    lines = []
    worst = -math.inf
    worst_se = 0.0
    for i, (mu_t, mu_star_t) in enumerate(grid):
        mu_t = np.asarray(mu_t, dtype=float)
        mu_star_t = np.asarray(mu_star_t, dtype=float)
        dist = float(np.linalg.norm(mu_t - mu_star_t))
        if mu_t.shape[0] == 1:
            gval = abs(g_residual_1d(float(mu_t[0]), float(mu_star_t[0])))
            margin = gval - 0.01 * dist - 1e-9
            se = 0.0
            how = "quadrature"
        else:
            est = g_function(mu_t, mu_star_t, n_mc, rng.substream(i))
            gval = est.norm
            se = est.se_norm
            margin = gval - 0.01 * dist - 5.0 * se
            how = "mc"
        worst = max(worst, margin)
        if margin == worst:
            worst_se = se
        lines.append(f"point {i} ({how}, d={mu_t.shape[0]}): ||G||={gval:.3e} 0.01*dist={0.01 * dist:.3e}")
    details = "max over grid of (||G|| - 0.01 dist - slack) <= 0\n" + "\n".join(lines)
    return _report("g_contraction", worst, 0.0, worst_se, details)


# ---------------------------------------------------------------------------
# Stein identities
# ---------------------------------------------------------------------------

def check_stein_two(
    mu_t: np.ndarray,
    mu_star: np.ndarray,
    scale: NoiseScale,
    n_batch: int,
    rng: RngSeed,
    name: str = "stein_two",
) -> CheckReport:
    """Both noise-integration identities on symmetric-pair batches.

    (1) E[tanh(u) z/beta + tanh(u)^2 mu_t] = mu_t and
    (2) E[tanh'(u) <mu_t, z/beta> x_t] = E[tanh''(u) ||mu_t||^2 x_t + tanh'(u) mu_t],
    with u = <mu_t, x_t>; both sides share draws, so the comparison uses the
    standard error of the per-row difference, five sigma.
    """
    gen = rng.generator()
    mu_t = np.asarray(mu_t, dtype=float)
    x0 = sample_mixture(MixtureParams.symmetric(np.asarray(mu_star, dtype=float)), n_batch, gen)
    z = gen.standard_normal(x0.shape)
    batch = SampleBatch(scale=scale, x0=x0, z=z)
    xt, beta = batch.xt, scale.beta
    u = xt @ mu_t
    th, d1, d2, _ = tanh_derivatives(u)
    nm2 = float(mu_t @ mu_t)

    lhs1 = th[:, None] * (z / beta) + (th * th)[:, None] * mu_t
    m1, se1 = _mean_se(lhs1)
    diff1 = float(np.linalg.norm(m1 - mu_t))
    s1 = float(np.linalg.norm(se1))

    lhs2 = (d1 * ((z / beta) @ mu_t))[:, None] * xt
    rhs2 = (d2 * nm2)[:, None] * xt + d1[:, None] * mu_t
    m2, se2 = _mean_se(lhs2 - rhs2)
    diff2 = float(np.linalg.norm(m2))
    s2 = float(np.linalg.norm(se2))

    margin = max(diff1 - 5.0 * s1, diff2 - 5.0 * s2)
    details = (
        f"identity 1: |mean - mu_t| = {diff1:.3e} (se {s1:.3e}); "
        f"identity 2: |mean diff| = {diff2:.3e} (se {s2:.3e}); n={n_batch}, t={scale.t:g}"
    )
    return _report(name, margin, 0.0, max(s1, s2), details)


def check_stein_k(
    theta: MixtureParams,
    theta_star: MixtureParams,
    scale: NoiseScale,
    n_batch: int,
    n_mc: int,
    rng: RngSeed,
    name: str = "stein_k",
) -> CheckReport:
    """Batch-averaged per-row K gradients vs. the Stein-simplified MC form.

    Independent draws on the two sides; agreement within five combined
    standard errors per component.
    """
    gen = rng.generator()
    x0 = sample_mixture(theta_star, n_batch, gen)
    z = gen.standard_normal(x0.shape)
    batch = SampleBatch(scale=scale, x0=x0, z=z)
    theta_t = rescale_centers(theta, scale.t)
    theta_star_t = rescale_centers(theta_star, scale.t)
    emp = batch_grad_k(theta_t, batch)
    margin = -math.inf
    worst_se = 0.0
    lines = []
    for c in range(theta_t.component_means().shape[0]):
        pop = population_grad_k_mc(theta_t, theta_star_t, c, n_mc, rng.substream(c + 1))
        diff = float(np.linalg.norm(emp.grad[c] - pop.value))
        comb = math.sqrt(float(np.sum(emp.std_err[c] ** 2)) + pop.se_norm**2)
        lines.append(f"component {c}: diff {diff:.3e} combined se {comb:.3e}")
        if diff - 5.0 * comb > margin:
            margin = diff - 5.0 * comb
            worst_se = comb
    details = f"k={theta.k} d={theta.d} t={scale.t:g} n={n_batch}\n" + "\n".join(lines)
    return _report(name, margin, 0.0, worst_se, details)


def check_stein_suite(rng: RngSeed, n_batch: int = 200_000) -> CheckReport:
    """Twenty random configurations over k in {2,3,5}, d in {2,4,8}, t in {0.1,0.5,1}."""
    gen = rng.generator()
    combos = []
    i = 0
    while len(combos) < 20:
        k = (2, 3, 5)[i % 3]
        d = (2, 4, 8)[(i // 3) % 3]
        t = (0.1, 0.5, 1.0)[(i // 9) % 3]
        combos.append((k, d, t))
        i += 1
    worst = -math.inf
    worst_se = 0.0
    lines = []
    for j, (k, d, t) in enumerate(combos):
        scale = make_noise_scale(t)
        if k == 2:
            mu_star = gen.standard_normal(d)
            mu_star *= (1.0 + 1.5 * gen.random()) / np.linalg.norm(mu_star)
            mu_t = (mu_star + 0.4 * gen.standard_normal(d)) * scale.alpha
            rep = check_stein_two(mu_t, mu_star, scale, n_batch, rng.substream(10 + j))
        else:
            centers = gen.standard_normal((k, d)) * 2.0
            theta_star = MixtureParams.general(centers)
            theta = MixtureParams.general(centers + 0.3 * gen.standard_normal((k, d)))
            rep = check_stein_k(theta, theta_star, scale, n_batch, n_batch, rng.substream(10 + j))
        lines.append(f"config {j} (k={k}, d={d}, t={t}): margin {rep.observed:.3e} {'ok' if rep.passed else 'FAIL'}")
        if rep.observed > worst:
            worst, worst_se = rep.observed, rep.mc_std_err
    details = "max margin over 20 configurations <= 0\n" + "\n".join(lines)
    return _report("stein", worst, 0.0, worst_se, details)


# ---------------------------------------------------------------------------
# cross-weight smallness and gradient-EM equivalence (warm K regime)
# ---------------------------------------------------------------------------

def _separation(theta: MixtureParams) -> float:
    mus = theta.component_means()
    k = mus.shape[0]
    if k < 2:
        return math.inf
    dists = [np.linalg.norm(mus[i] - mus[j]) for i in range(k) for j in range(i + 1, k)]
    return float(min(dists))


def check_cross_weights(
    theta: MixtureParams, theta_star: MixtureParams, n_mc: int, rng: RngSeed
) -> CheckReport:
    """Cross-component posterior mass stays tiny in the separated regime.

    Estimates E_{X~N(mu*_i, Id)}[w_j(X)] for all j != i and the mixture
    moments E[w_j w_k] for j != k; each must be at most 0.01 plus three
    standard errors.  The desk threshold 0.01 stands in for the poly(1/d)
    rates; at zero separation the weights are ~1/K and the check fails, by
    design.
    """
    k = theta.component_means().shape[0]
    if k < 2:
        return _report("cross_weights", 0.0, 0.01, 0.0, "single component: vacuous pass")
    gen = rng.generator()
    mus_star = theta_star.component_means()
    worst = -math.inf
    worst_se = 0.0
    lines = []
    pair_sums = np.zeros((k, k))
    pair_sqs = np.zeros((k, k))
    for i in range(k):
        x = gen.standard_normal((n_mc, theta.d)) + mus_star[i]
        w = np.atleast_2d(posterior_weights(theta, x))
        for j in range(k):
            if j != i:
                est, se = float(np.mean(w[:, j])), float(np.std(w[:, j], ddof=1) / math.sqrt(n_mc))
                lines.append(f"E[w_{j} | component {i}] = {est:.4f} (se {se:.1e})")
                if est - 3.0 * se > worst:
                    worst, worst_se = est - 3.0 * se, se
        prod = w[:, :, None] * w[:, None, :]
        pair_sums += prod.sum(axis=0)
        pair_sqs += (prod * prod).sum(axis=0)
    n_total = k * n_mc
    for j in range(k):
        for l in range(j + 1, k):
            mean = pair_sums[j, l] / n_total
            var = max(pair_sqs[j, l] / n_total - mean * mean, 0.0)
            se = math.sqrt(var / n_total)
            lines.append(f"E[w_{j} w_{l}] = {mean:.4f} (se {se:.1e})")
            if mean - 3.0 * se > worst:
                worst, worst_se = mean - 3.0 * se, se
    details = "max cross-weight estimate (minus 3 se) <= 0.01\n" + "\n".join(lines)
    return _report("cross_weights", worst, 0.01, worst_se, details)


def _warm_regime_ok(theta: MixtureParams, theta_star: MixtureParams):
    """Desk-scale separation/warm-start gate: sep >= 4 sqrt(log min(K, d)),
    offsets <= sep / 4."""
    k = theta_star.component_means().shape[0]
    sep = _separation(theta_star)
    need = 4.0 * math.sqrt(math.log(max(min(k, theta_star.d), 2)))
    offsets = np.linalg.norm(theta.component_means() - theta_star.component_means(), axis=1)
    return sep >= need and float(np.max(offsets)) <= sep / 4.0, sep, need, float(np.max(offsets))


def check_grad_em_equiv(
    theta: MixtureParams,
    theta_star: MixtureParams,
    scale: NoiseScale,
    n_mc: int,
    rng: RngSeed,
) -> CheckReport:
    """Population gradient vs. gradient-EM direction in the warm regime.

    Verifies || grad_c + E[w_c(X_t)(X_t - mu_{c,t})] || <= 0.02 max_i
    ||mu_{i,t} - mu*_{i,t}|| + 5 se for every component, the desk-scale
    stand-in for the poly(1/d) equivalence rate.  Out of regime (separation
    or warm-start offsets too large) the check is not applicable.
    """
    ok, sep, need, max_off = _warm_regime_ok(theta, theta_star)
    if not ok:
        return _not_applicable(
            "grad_em_equiv",
            f"regime gate failed: separation {sep:.2f} (need >= {need:.2f}) "
            f"or warm offsets {max_off:.2f} (need <= sep/4)",
        )
    gen = rng.generator()
    theta_t = rescale_centers(theta, scale.t)
    theta_star_t = rescale_centers(theta_star, scale.t)
    mus_t = theta_t.component_means()
    maxdist = float(np.max(np.linalg.norm(mus_t - theta_star_t.component_means(), axis=1)))
    x = sample_mixture(theta_star_t, n_mc, gen)
    w = np.atleast_2d(posterior_weights(theta_t, x))
    worst = -math.inf
    worst_se = 0.0
    lines = []
    for c in range(mus_t.shape[0]):
        resid = population_grad_k_terms(theta_t, x, c) + w[:, c:c + 1] * (x - mus_t[c])
        mean, se = _mean_se(resid)
        diff = float(np.linalg.norm(mean))
        se_comb = float(np.linalg.norm(se))
        lines.append(f"component {c}: residual {diff:.4e} (se {se_comb:.1e})")
        if diff - 5.0 * se_comb > worst:
            worst, worst_se = diff - 5.0 * se_comb, se_comb
    details = (
        f"max_c ||grad_c + EM direction_c|| - 5 se <= 0.02 * max dist ({0.02 * maxdist:.4e})\n"
        + "\n".join(lines)
    )
    return _report("grad_em_equiv", worst, 0.02 * maxdist, worst_se, details)


# ---------------------------------------------------------------------------
# trajectory contraction
# ---------------------------------------------------------------------------

def check_contraction(
    trajectory: Sequence,
    expected_ratio: float,
    slack: float,
    noise_floor: Optional[float] = None,
    name: str = "contraction",
) -> CheckReport:
    """Median per-step contraction ratio above the Monte Carlo noise floor.

    Only steps whose preceding distance is at least ten times the floor
    count; the floor defaults to the median distance over the trailing
    quarter of the trajectory (the converged level).  With no qualifying
    steps the check is not applicable.
    """
    dists = [r.dist for r in trajectory]
    if any(v is None for v in dists) or not dists:
        raise ValueError("trajectory has no truth-relative distances")
    if noise_floor is None:
        tail = max(3, len(dists) // 4)
        noise_floor = float(np.median(dists[-tail:]))
    # a step qualifies when the distance it started from (dist / ratio) was
    # above ten times the floor
    ratios = [
        r.contraction_ratio
        for r in trajectory
        if r.contraction_ratio is not None
        and r.contraction_ratio > 0
        and r.dist / r.contraction_ratio >= 10.0 * noise_floor
    ]
    if not ratios:
        return _not_applicable(name, f"no steps above 10x noise floor ({noise_floor:.3e})")
    med = float(np.median(ratios))
    details = (
        f"median of {len(ratios)} qualifying ratios (floor {noise_floor:.3e}); "
        f"pass iff median <= {expected_ratio} + {slack}"
    )
    return _report(name, med, expected_ratio + slack, 0.0, details)


# ---------------------------------------------------------------------------
# radius estimator
# ---------------------------------------------------------------------------

def check_radius_estimator(
    rng: RngSeed,
    norm: float = 2.0,
    d: int = 8,
    eps: float = 0.05,
    n_seeds: int = 100,
    max_failures: int = 5,
) -> CheckReport:
    """|R - ||mu*||| <= eps on all but at most ``max_failures`` of the seeds.

    The per-seed sample count (B^4 + d^2) / (eps L)^2 with B = L = ||mu*||
    is the estimator's stated requirement for accuracy eps.
    """
    n = int(math.ceil((norm**4 + d * d) / (eps * norm) ** 2))
    fails = 0
    for s in range(n_seeds):
        gen = rng.substream(s).generator()
        mu = np.zeros(d)
        mu[0] = norm
        x = sample_mixture(MixtureParams.symmetric(mu), n, gen)
        if abs(estimate_center_norm(x) - norm) > eps:
            fails += 1
    details = f"n={n} per seed, {fails}/{n_seeds} misses of |R - {norm}| <= {eps}"
    return _report("radius_estimator", float(fails), float(max_failures), 0.0, details)


# ---------------------------------------------------------------------------
# control wrappers and the default suite
# ---------------------------------------------------------------------------

def control_must_fail(inner: CheckReport, name: str) -> CheckReport:
    """Passes exactly when the wrapped check ran and failed (tolerance guard)."""
    observed = inner.threshold - inner.observed if inner.applicable else 1.0
    details = f"control: inner check must fail; inner observed {inner.observed:.4g} vs threshold {inner.threshold:.4g}"
    return _report(name, observed, 0.0, inner.mc_std_err, details)


def control_must_be_na(inner: CheckReport, name: str) -> CheckReport:
    """Passes exactly when the wrapped check refused to run (regime gate)."""
    observed = 0.0 if not inner.applicable else 1.0
    return _report(name, observed, 0.5, 0.0, f"control: inner check must be not-applicable; inner: {inner.details}")


def _simplex_centers(k: int, d: int, separation: float) -> np.ndarray:
    """k centers with pairwise distance exactly ``separation``."""
    if k > d:
        raise ValueError("need k <= d for the orthogonal construction")
    centers = np.zeros((k, d))
    for i in range(k):
        centers[i, i] = separation / math.sqrt(2.0)
    return centers


def _warm_instance(rng: RngSeed, k=4, d=8, separation=6.0, offset=0.5):
    gen = rng.generator()
    theta_star = MixtureParams.general(_simplex_centers(k, d, separation))
    dirs = gen.standard_normal((k, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    theta = MixtureParams.general(theta_star.centers + offset * dirs)
    return theta, theta_star


def _angle_step_instances(rng: RngSeed, d=8, count=20):
    """In-regime (mu_t, mu*_t) pairs spanning the allowed norms and angles."""
    gen = rng.generator()
    B = float(d)
    out = []
    for _ in range(count):
        ns = B**-3 + (B**-2 - B**-3) * (0.5 + 0.5 * gen.random())
        na = B**-2 * (0.3 + 0.7 * gen.random())
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        v = gen.standard_normal(d)
        v -= (v @ u) * u
        v /= np.linalg.norm(v)
        cos = 0.3 + 0.65 * gen.random()
        mu = na * (cos * u + math.sqrt(1 - cos * cos) * v)
        out.append((mu, ns * u))
    return out


def check_angle_step_suite(rng: RngSeed, d: int = 8, n_mc: int = 200_000) -> CheckReport:
    """Twenty in-regime one-step angle checks, aggregated."""
    t = math.log(d)
    cfg_scale = make_noise_scale(t)
    worst = -math.inf
    worst_se = 0.0
    lines = []
    for i, (mu, mu_star) in enumerate(_angle_step_instances(rng.substream(500), d=d)):
        cfg = GdConfig(scale=cfg_scale, eta=1.0 / 20.0, steps=1, batch_size=n_mc, rng=rng.substream(i))
        rep = check_angle_step(mu, mu_star, cfg, n_mc, rng.substream(i))
        if not rep.applicable:
            return _report("angle_step", 1.0, 0.0, 0.0, f"instance {i} unexpectedly out of regime")
        margin = rep.observed - rep.threshold
        lines.append(f"instance {i}: tan' {rep.observed:.4f} bound {rep.threshold:.4f}")
        if margin > worst:
            worst, worst_se = margin, rep.mc_std_err
    details = "max over 20 instances of (tan' - bound) <= 0\n" + "\n".join(lines)
    return _report("angle_step", worst, 0.0, worst_se, details)


def check_angle_step_regime_control(rng: RngSeed, d: int = 8) -> CheckReport:
    """Out-of-window instance must come back not-applicable."""
    mu = np.zeros(d)
    mu[0] = 2.0  # far above the working window
    mu_star = np.zeros(d)
    mu_star[0] = 1.0
    cfg = GdConfig(scale=make_noise_scale(math.log(d)), eta=0.05, steps=1, batch_size=1000, rng=rng)
    inner = check_angle_step(mu, mu_star, cfg, 1000, rng)
    return control_must_be_na(inner, "angle_step_regime_control")


def check_low_noise_contraction(rng: RngSeed, n_seeds: int = 3) -> CheckReport:
    """Short two-stage runs; low-stage median ratio <= 0.97 + 0.02 pooled."""
    d = 8
    records = []
    floors = []
    for s in range(n_seeds):
        seed = rng.substream(40 + s)
        gen = seed.substream(99).generator()
        v = gen.standard_normal(d)
        mu_star = 1.5 * v / np.linalg.norm(v)
        truth = MixtureParams.symmetric(mu_star)
        data = sample_mixture(truth, 50_000, seed.substream(98))
        rep = two_stage_fit(data, rng=seed, truth=truth)
        b1, b2 = rep.stage_metadata["stage_boundaries"]
        stage2 = rep.trajectory[b1:b2]
        records.extend(stage2)
        tail = max(3, len(stage2) // 4)
        floors.append(float(np.median([r.dist for r in stage2[-tail:]])))
    pooled_floor = float(np.median(floors))
    ratios = [
        r.contraction_ratio
        for r in records
        if r.contraction_ratio is not None
        and r.contraction_ratio > 0
        and r.dist / r.contraction_ratio >= 10.0 * pooled_floor
    ]
    if not ratios:
        return _not_applicable("low_noise_contraction", "no steps above the noise floor")
    med = float(np.median(ratios))
    details = f"pooled median of {len(ratios)} qualifying low-stage ratios over {n_seeds} seeds"
    return _report("low_noise_contraction", med, 0.99, 0.0, details)


def check_warm_k_contraction(rng: RngSeed) -> CheckReport:
    """Warm-start K=4 run; median max-component ratio <= 3/4 + 0.1."""
    theta0, theta_star = _warm_instance(rng.substream(60))
    data = sample_mixture(theta_star, 100_000, rng.substream(61))
    rep = warm_start_k_fit(data, theta0, truth=theta_star, rng=rng.substream(62))
    inner = check_contraction(rep.trajectory, 0.75, 0.1, name="warm_k_contraction")
    return inner


# registry: name -> builder(seed) -> CheckReport(s)

def _build_init4(seed):
    return [check_init_correlation(4, 2000, seed)]


def _build_init25(seed):
    return [check_init_correlation(25, 2000, seed)]


def _build_power(seed):
    return [check_power_deviation(default_power_grid(8), 400_000, seed)]


def _build_angle(seed):
    return [check_angle_step_suite(seed), check_angle_step_regime_control(seed.substream(7))]


def _build_g(seed):
    return [check_g_contraction(default_g_grid(), 200_000, seed)]


def _build_stein(seed):
    return [check_stein_suite(seed)]


def _build_cross(seed):
    theta, theta_star = _warm_instance(seed.substream(1))
    main = check_cross_weights(theta, theta_star, 200_000, seed.substream(2))
    flat = MixtureParams.general(np.zeros((4, 8)))
    inner = check_cross_weights(flat, flat, 50_000, seed.substream(3))
    return [main, control_must_fail(inner, "cross_weights_zero_sep_control")]


def _build_grad_em(seed):
    # The separation-6 instance routinely exceeds the 0.02 stand-in (the
    # paper's poly(1/d) rate is not yet small there at d=8); it is reported
    # as measured.  The separation-8 instance shows the regime where the
    # desk-scale numbers do support the equivalence.
    scale = make_noise_scale(0.2)
    theta, theta_star = _warm_instance(seed.substream(1))
    main = check_grad_em_equiv(theta, theta_star, scale, 400_000, seed.substream(2))
    theta8, theta_star8 = _warm_instance(seed.substream(6), separation=8.0)
    wide = check_grad_em_equiv(theta8, theta_star8, scale, 400_000, seed.substream(7))
    wide = CheckReport(
        name="grad_em_equiv_sep8", passed=wide.passed, observed=wide.observed,
        threshold=wide.threshold, mc_std_err=wide.mc_std_err, details=wide.details,
        applicable=wide.applicable,
    )
    theta_c, theta_star_c = _warm_instance(seed.substream(4), separation=1.0, offset=0.5)
    inner = check_grad_em_equiv(theta_c, theta_star_c, scale, 1000, seed.substream(5))
    return [main, wide, control_must_be_na(inner, "grad_em_equiv_sep1_control")]


def _build_radius(seed):
    return [check_radius_estimator(seed)]


def _build_low_noise(seed):
    return [check_low_noise_contraction(seed)]


def _build_warm_k(seed):
    return [check_warm_k_contraction(seed)]


CHECK_BUILDERS = {
    "init_correlation_d4": _build_init4,
    "init_correlation_d25": _build_init25,
    "power_deviation": _build_power,
    "angle_step": _build_angle,
    "g_contraction": _build_g,
    "stein": _build_stein,
    "cross_weights": _build_cross,
    "grad_em_equiv": _build_grad_em,
    "radius_estimator": _build_radius,
    "low_noise_contraction": _build_low_noise,
    "warm_k_contraction": _build_warm_k,
}


def run_default_checks(seed: RngSeed, names: Optional[Sequence[str]] = None):
    """Run the documented diagnostic suite; each check owns a seed substream."""
    selected = list(CHECK_BUILDERS) if not names else list(names)
    unknown = [n for n in selected if n not in CHECK_BUILDERS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}; available: {sorted(CHECK_BUILDERS)}")
    reports = []
    for i, name in enumerate(selected):
        reports.extend(CHECK_BUILDERS[name](seed.substream(1000 * (i + 1))))
    return reports


def format_check_table(reports) -> str:
    header = f"{'check':34s} {'status':8s} {'observed':>12s} {'threshold':>12s} {'mc se':>10s}"
    rows = [header, "-" * len(header)]
    for r in reports:
        status = "pass" if r.passed else ("n/a" if not r.applicable else "FAIL")
        obs = "-" if math.isnan(r.observed) else f"{r.observed:.4g}"
        thr = "-" if math.isnan(r.threshold) else f"{r.threshold:.4g}"
        se = "-" if math.isnan(r.mc_std_err) else f"{r.mc_std_err:.2g}"
        rows.append(f"{r.name:34s} {status:8s} {obs:>12s} {thr:>12s} {se:>10s}")
    return "\n".join(rows)
