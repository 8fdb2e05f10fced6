"""One-dimensional quadrature ground truths for the Monte Carlo estimators.

All expectations here are over N(b, 1) and are evaluated with adaptive
Gauss-Kronrod quadrature on [b - 10, b + 10]: the integrands are bounded by
small polynomials times the Gaussian density, so the truncated tails
contribute less than ~1e-20 relative mass.  Tolerance 1e-10.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .core import tanh_derivatives

_QUAD_OPTS = dict(epsabs=1e-12, epsrel=1e-10, limit=200)


def _gauss_expect(fn, b: float) -> float:
    """E_{x ~ N(b, 1)}[fn(x)] over the 20-sigma-wide window around b."""
    def integrand(x):
        return fn(x) * math.exp(-0.5 * (x - b) ** 2) / math.sqrt(2.0 * math.pi)

    val, _ = integrate.quad(integrand, b - 10.0, b + 10.0, **_QUAD_OPTS)
    return val


def em_update_1d(a: float, b: float) -> float:
    """E[tanh(a x) x]: the one-dimensional EM update from parameter a."""
    return _gauss_expect(lambda x: math.tanh(a * x) * x, b)


def g_residual_1d(a: float, b: float) -> float:
    """One-dimensional EM-residual G(a, b).

    E[-tanh''(ax) a^2 x / 2 + tanh'(ax) a x^2 - tanh'(ax) a].
    """
    def fn(x):
        _, d1, d2, _ = tanh_derivatives(np.array(a * x))
        return -0.5 * float(d2) * a * a * x + float(d1) * a * x * x - float(d1) * a

    return _gauss_expect(fn, b)


def g_perp_coefficient_1d(a: float, b: float) -> float:
    """E[-tanh''(ax) a^2 / 2 + tanh'(ax) a x]: G's factor along the orthogonal leg."""
    def fn(x):
        _, d1, d2, _ = tanh_derivatives(np.array(a * x))
        return -0.5 * float(d2) * a * a + float(d1) * a * x

    return _gauss_expect(fn, b)


def g_function_plane(mu_t: np.ndarray, mu_star_t: np.ndarray) -> np.ndarray:
    """G via its decomposition in the plane of mu and mu*, by 1-D quadrature.

    G lives in span{mu, mu*}: the component along the unit iterate direction
    is the 1-D residual at (a, b) = (||mu||, <mu_hat, mu*>), and the
    orthogonal component is <mu*_perp> times the perpendicular coefficient.
    """
    mu_t = np.asarray(mu_t, dtype=float)
    mu_star_t = np.asarray(mu_star_t, dtype=float)
    a = float(np.linalg.norm(mu_t))
    if a == 0:
        return np.zeros_like(mu_t)
    mu_hat = mu_t / a
    b = float(mu_hat @ mu_star_t)
    perp = mu_star_t - b * mu_hat
    out = g_residual_1d(a, b) * mu_hat
    pnorm = float(np.linalg.norm(perp))
    if pnorm > 0:
        out = out + g_perp_coefficient_1d(a, b) * pnorm * (perp / pnorm)
    return out


def neg_grad_two_1d(a: float, b: float) -> float:
    """One-dimensional negative population gradient of the denoising loss.

    E[(tanh(ax) - tanh''(ax) a^2 / 2 + tanh'(ax) a x) x - tanh'(ax) a] - a.
    """
    def fn(x):
        th, d1, d2, _ = tanh_derivatives(np.array(a * x))
        return (float(th) - 0.5 * float(d2) * a * a + float(d1) * a * x) * x - float(d1) * a

    return _gauss_expect(fn, b) - a


def init_correlation_probability(d: int, c: float | None = None) -> float:
    """P(|<u, e1>| >= c) for u uniform on the unit sphere in d dimensions.

    Defaults to the threshold c = 1/(2d).  The squared coordinate follows a
    Beta(1/2, (d-1)/2) law, so the tail is one minus a regularized
    incomplete beta value; d = 1 is the degenerate |u| = 1 case.
    """
    if d < 1:
        raise ValueError("need d >= 1")
    if c is None:
        c = 1.0 / (2.0 * d)
    if not (0.0 <= c <= 1.0):
        raise ValueError(f"threshold must be in [0, 1], got {c}")
    if d == 1:
        return 1.0 if c <= 1.0 else 0.0
    return float(1.0 - special.betainc(0.5, (d - 1) / 2.0, c * c))


def init_correlation_probability_quad(d: int, c: float | None = None) -> float:
    """Same tail probability by direct quadrature of (1 - u^2)^((d-3)/2)."""
    if c is None:
        c = 1.0 / (2.0 * d)
    if d == 1:
        return 1.0 if c <= 1.0 else 0.0
    expo = (d - 3) / 2.0

    def dens(u):
        return (1.0 - u * u) ** expo

    upper = 1.0 - 1e-14 if expo < 0 else 1.0
    num, _ = integrate.quad(dens, c, upper, **_QUAD_OPTS)
    den, _ = integrate.quad(dens, 0.0, upper, **_QUAD_OPTS)
    return num / den
