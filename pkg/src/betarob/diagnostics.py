"""Residuals and simulated envelopes.

The residual used throughout is the standardized weighted residual on
the logit scale,

    r_i = (y_star_i - mu_star_i) / sqrt(v_i (1 - h_ii)),

with v_i the logit-scale response variance and h_ii the leverage from
the weighted mean-submodel hat matrix

    H = W^{1/2} X (X' W X)^{-1} X' W^{1/2},
    W = diag( phi_i^2 v_i / g_mu'(mu_i)^2 ).

Envelopes simulate replications from the fitted model, refit each with
the same estimator and alpha (tuning is not re-run inside the envelope),
and take pointwise quantiles of the sorted residuals.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .density import moments, sample_beta
from .estimators import FitOptions, fit
from .model import transform_response

__all__ = ["EnvelopeBands", "residuals_swr2", "leverage",
           "simulated_envelope"]


@dataclass(frozen=True)
class EnvelopeBands:
    """Sorted residuals with pointwise simulation bands.

    ``coarse`` flags envelopes built from fewer than 99 replications;
    ``unreliable`` flags more than 10 percent refit failures (failed
    replications are dropped from the bands and counted).
    """

    residuals: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    theoretical_quantiles: np.ndarray
    coverage: float
    replications: int
    failed_count: int
    coarse: bool
    unreliable: bool


def _fit_quantities(fit_result):
    model = fit_result.model
    mu, phi = model.predictors(fit_result.theta)
    m = moments(mu, phi, 1.0)
    w = (phi * phi) * m.v / model.mean_link.d1(mu) ** 2
    return mu, phi, m, w


def leverage(fit_result):
    """Diagonal of the weighted hat matrix for the mean submodel."""
    model = fit_result.model
    _, _, _, w = _fit_quantities(fit_result)
    q, _ = np.linalg.qr(np.sqrt(w)[:, None] * model.x)
    return np.sum(q * q, axis=1)


def residuals_swr2(fit_result):
    """Standardized weighted residuals on the logit scale.

    Observations with degenerate leverage (h_ii at or above 1) get NaN
    and a warning naming them; everything else is unaffected.
    """
    y_star, _ = transform_response(fit_result.y)
    _, _, m, _ = _fit_quantities(fit_result)
    h = leverage(fit_result)
    degenerate = h >= 1.0
    if degenerate.any():
        warnings.warn(
            "degenerate leverage at observations "
            f"{np.flatnonzero(degenerate).tolist()}", RuntimeWarning)
    denom = np.where(degenerate, np.nan, m.v * (1.0 - h))
    with np.errstate(invalid="ignore"):
        return (y_star - m.mu_star) / np.sqrt(denom)


def simulated_envelope(fit_result, replications=100, coverage=0.95,
                       seed=None):
    """Pointwise envelope for the sorted residuals under the fitted model.

    Parameters
    ----------
    fit_result : FitResult
        A converged fit; its estimator and alpha are reused for every
        refit (the replications probe the fitted model, not the tuning
        procedure).
    replications : int
        At least 19. Fewer than 99 flags the result as coarse.
    coverage : float
        Central coverage of the bands, in (0, 1).
    seed : int or numpy.random.SeedSequence
        Master seed; each replication gets an independent child stream,
        so results are reproducible.
    """
    if not fit_result.converged:
        raise ValueError("cannot build an envelope around a failed fit")
    if replications < 19:
        raise ValueError("need at least 19 replications")
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must be in (0, 1)")
    model = fit_result.model
    n = model.n
    mu, phi = model.predictors(fit_result.theta)
    base_seq = (seed if isinstance(seed, np.random.SeedSequence)
                else np.random.SeedSequence(seed))
    children = base_seq.spawn(replications)
    opts = FitOptions(starting_point=fit_result.theta)

    rows = []
    failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        y_sim = sample_beta(mu, phi, rng)
        try:
            refit = fit(model, y_sim, fit_result.estimator, opts)
        except (ValueError, FloatingPointError):
            failed += 1
            continue
        if refit.failed:
            failed += 1
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r = residuals_swr2(refit)
        if not np.all(np.isfinite(r)):
            failed += 1
            continue
        rows.append(np.sort(r))

    if not rows:
        raise RuntimeError("every envelope replication failed")
    sims = np.vstack(rows)
    lo_q = (1.0 - coverage) / 2.0
    lower = np.quantile(sims, lo_q, axis=0)
    median = np.quantile(sims, 0.5, axis=0)
    upper = np.quantile(sims, 1.0 - lo_q, axis=0)
    idx = np.arange(1, n + 1)
    theo = ndtri((idx - 0.375) / (n + 0.25))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        observed = np.sort(residuals_swr2(fit_result))
    return EnvelopeBands(
        residuals=observed,
        lower=lower,
        median=median,
        upper=upper,
        theoretical_quantiles=theo,
        coverage=coverage,
        replications=replications,
        failed_count=failed,
        coarse=replications < 99,
        unreliable=failed > 0.1 * replications,
    )
