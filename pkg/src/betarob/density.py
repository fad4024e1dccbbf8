"""Beta and logit-scale densities, moments, and sampling.

The response y follows a beta distribution parameterized by mean and
precision, with density

    f(y; mu, phi) = y^(mu phi - 1) (1-y)^((1-mu) phi - 1) / B(mu phi, (1-mu) phi).

Its logit y_star = log(y/(1-y)) follows an exponential generalized beta
distribution of the second kind with log density

    ln h(y_star; mu, phi) = -ln B(mu phi, (1-mu) phi)
                            - y_star (1-mu) phi - phi ln(1 + exp(-y_star)),

which is bounded for every (mu, phi), even when the beta density itself is
unbounded (shape parameters below one). All work is done in log space;
powers of h are exp(alpha * ln h). The family is closed under powers:
h^xi is proportional to the same density at precision xi*phi, with the
normalizing constant given by :func:`k_integral`.

The moment helpers return every per-observation scalar the estimating
equations and covariance matrices need, evaluated at precision phi*scale:

    mu_star   = E y_star            = psi(mu phi) - psi((1-mu) phi)
    mu_dagger = E y_dagger          = psi((1-mu) phi) - psi(phi)
    v         = Var y_star          = psi'(mu phi) + psi'((1-mu) phi)
    c         = phi Cov(y_star, mu y_star + y_dagger)
              = phi [mu psi'(mu phi) - (1-mu) psi'((1-mu) phi)]
    d         = Var(mu y_star + y_dagger)
              = mu^2 psi'(mu phi) + (1-mu)^2 psi'((1-mu) phi) - psi'(phi)

with y_dagger = log(1 - y).
"""

from dataclasses import dataclass

import numpy as np

from .specfun import digamma, log_beta, trigamma

__all__ = [
    "PerObsMoments",
    "beta_logpdf",
    "egb_logpdf",
    "moments",
    "k_integral",
    "log_k_integral",
    "sample_beta",
]


@dataclass(frozen=True)
class PerObsMoments:
    """Moment scalars of the logit-scale density at precision phi*scale."""

    mu_star: np.ndarray
    mu_dagger: np.ndarray
    v: np.ndarray
    c: np.ndarray
    d: np.ndarray
    scale: float
    phi_scaled: np.ndarray


def _check_mu_phi(mu, phi):
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(~np.isfinite(mu)) or np.any((mu <= 0.0) | (mu >= 1.0)):
        raise ValueError("mu must lie strictly inside (0, 1)")
    if np.any(~np.isfinite(phi)) or np.any(phi <= 0.0):
        raise ValueError("phi must be positive and finite")
    return mu, phi


def beta_logpdf(y, mu, phi):
    """Log density of the beta distribution in mean-precision form.

    Tends to +inf near a boundary the distribution piles up on when the
    corresponding shape parameter is below one; that is a property of the
    density, not an error.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any((y <= 0.0) | (y >= 1.0)):
        raise ValueError("y must lie strictly inside (0, 1)")
    mu, phi = _check_mu_phi(mu, phi)
    a = mu * phi
    b = (1.0 - mu) * phi
    return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - log_beta(a, b)


def egb_logpdf(y_star, mu, phi):
    """Log density of the logit of a beta variable.

    Overflow-safe for arbitrarily large |y_star|; the two tails decay
    linearly in y_star with slopes (1-mu)*phi and mu*phi.
    """
    y_star = np.asarray(y_star, dtype=float)
    mu, phi = _check_mu_phi(mu, phi)
    b = (1.0 - mu) * phi
    softplus = np.logaddexp(0.0, -y_star)
    return -log_beta(mu * phi, b) - y_star * b - phi * softplus


def moments(mu, phi, scale=1.0):
    """Per-observation moment scalars at precision phi*scale.

    With scale=1 these are the scalars of the score function; other
    scales (1/(1-alpha), 1+alpha, 1+2*alpha, ...) appear in the
    estimating functions and the covariance blocks.
    """
    mu, phi = _check_mu_phi(mu, phi)
    scale = float(scale)
    if not scale > 0.0:
        raise ValueError("scale must be positive")
    ps = phi * scale
    a = mu * ps
    b = (1.0 - mu) * ps
    psi_a = digamma(a)
    psi_b = digamma(b)
    psi_s = digamma(ps)
    tri_a = trigamma(a)
    tri_b = trigamma(b)
    tri_s = trigamma(ps)
    return PerObsMoments(
        mu_star=psi_a - psi_b,
        mu_dagger=psi_b - psi_s,
        v=tri_a + tri_b,
        c=ps * (mu * tri_a - (1.0 - mu) * tri_b),
        d=mu * mu * tri_a + (1.0 - mu) ** 2 * tri_b - tri_s,
        scale=scale,
        phi_scaled=ps,
    )


def log_k_integral(mu, phi, exponent):
    """Log of the integral of h(.; mu, phi)^exponent over the real line.

    Closed form from the power-closure of the family:

        K = B(mu phi xi, (1-mu) phi xi) / B(mu phi, (1-mu) phi)^xi.
    """
    mu, phi = _check_mu_phi(mu, phi)
    xi = np.asarray(exponent, dtype=float)
    if np.any(~np.isfinite(xi)) or np.any(xi <= 0.0):
        raise ValueError("exponent must be positive")
    return (log_beta(mu * phi * xi, (1.0 - mu) * phi * xi)
            - xi * log_beta(mu * phi, (1.0 - mu) * phi))


def k_integral(mu, phi, exponent):
    """Integral of h^exponent over the real line (see log_k_integral)."""
    log_k = log_k_integral(mu, phi, exponent)
    if np.any(np.asarray(log_k) > np.log(np.finfo(float).max)):
        raise OverflowError("power integral exceeds the floating point range")
    return np.exp(log_k)


def sample_beta(mu, phi, rng):
    """Draw beta variates with mean mu and precision phi.

    Uses the gamma ratio a/(a+b), which stays valid for shape parameters
    below one where inversion-style samplers lose accuracy. Draws that
    round to exactly 0 or 1 (possible in floating point for tiny shapes)
    are redrawn, so the result always lies strictly inside (0, 1).

    Parameters
    ----------
    mu, phi : array_like
        Broadcastable parameter arrays.
    rng : numpy.random.Generator
        Deterministic source of randomness, owned by the caller.
    """
    mu, phi = _check_mu_phi(mu, phi)
    scalar_in = np.ndim(mu) == 0 and np.ndim(phi) == 0
    shape = np.broadcast_shapes(mu.shape, phi.shape) or (1,)
    a = np.broadcast_to(np.atleast_1d(mu * phi), shape)
    b = np.broadcast_to(np.atleast_1d((1.0 - mu) * phi), shape)
    ga = rng.gamma(a)
    gb = rng.gamma(b)
    with np.errstate(invalid="ignore"):
        y = ga / (ga + gb)
    bad = ~np.isfinite(y) | (y <= 0.0) | (y >= 1.0)
    while bad.any():
        ga_new = rng.gamma(a[bad])
        gb_new = rng.gamma(b[bad])
        with np.errstate(invalid="ignore"):
            y[bad] = ga_new / (ga_new + gb_new)
        bad = ~np.isfinite(y) | (y <= 0.0) | (y >= 1.0)
    return float(y[0]) if scalar_in else y
