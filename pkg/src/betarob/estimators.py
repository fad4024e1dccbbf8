"""Objectives, estimating functions, and the fitting driver.

Three estimators share one interface. All of them work on the logit
scale, where the transformed response y_star = logit(y) has the bounded
log density ``egb_logpdf`` regardless of how extreme the beta shape
parameters are.

MLE
    Maximizes the log likelihood. Its per-observation score is

        U = ( phi (y_star - mu_star) / g_mu'(mu) * x_i,
              [mu (y_star - mu_star) + (y_dagger - mu_dagger)]
                  / g_phi'(phi) * z_i ).

LSMLE
    Maximizes sum_i L_q(h_star(y_star_i)) with q = 1 - alpha, where
    h_star is the logit-scale density at the inflated precision
    phi/(1-alpha) and L_q(u) = (u^(1-q) - 1)/(1-q), the logarithm at
    q = 1. Its estimating function is U_star weighted by h_star^alpha,
    where U_star is the gradient of ln h_star (so the moment scalars are
    evaluated at the inflated precision).

LMDPDE
    Minimizes the empirical density power divergence on the logit scale,

        H_n = (1/n) sum_i [ K_{1+alpha}(mu_i, phi_i)
                            - (1+alpha)/alpha * h(y_star_i)^alpha ],

    whose estimating equation is sum_i [U h^alpha - E_{1-alpha}] = 0 with
    the closed-form centering vector from ``centering_e``. At alpha = 0
    the objective is routed to the mean negative logit-scale log density
    (the divergence itself has a 1/alpha factor); the minimizer is the
    MLE either way.

The gradient identities the tests rely on:

    grad lsmle_objective = estimating_function(LSMLE)
    grad lmdpde_objective = -((1+alpha)/n) * estimating_function(LMDPDE)
    grad loglik = estimating_function(MLE).
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _minimize
from scipy.optimize import root as _root

from .density import (beta_logpdf, egb_logpdf, log_k_integral, moments)
from .model import EPSILON, ModelSpec, ParamVector, transform_response

__all__ = [
    "EstimatorKind",
    "Estimator",
    "FitOptions",
    "FitResult",
    "loglik",
    "lsmle_objective",
    "lmdpde_objective",
    "score_u",
    "modified_score_u_star",
    "centering_e",
    "estimating_function",
    "starting_values",
    "fit",
]


class EstimatorKind(enum.Enum):
    MLE = "mle"
    LSMLE = "lsmle"
    LMDPDE = "lmdpde"


@dataclass(frozen=True)
class Estimator:
    """An estimator kind with its tuning constant alpha in [0, 1)."""

    kind: EstimatorKind
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.kind == EstimatorKind.MLE and self.alpha != 0.0:
            raise ValueError("the MLE has alpha = 0")


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    parameter_tolerance: float = 1e-10
    starting_point: ParamVector = None

    def __post_init__(self):
        if self.gradient_tolerance <= 0 or self.parameter_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(eq=False)
class FitResult:
    """A fitted model with inference byproducts.

    ``gradient_norm`` is the convergence criterion actually checked: the
    infinity norm of the estimating function divided by
    max(1, |objective|). ``converged`` is True exactly when that value is
    at or below the gradient tolerance. ``covariance`` is the sandwich
    (or inverse information) matrix; ``cov_ok`` records whether it was
    computable and positive semidefinite, which is part of the failure
    definition used by the simulation experiments.
    """

    model: ModelSpec
    y: np.ndarray
    estimator: Estimator
    theta: ParamVector
    converged: bool
    iterations: int
    objective: float
    gradient_norm: float
    covariance: np.ndarray
    standard_errors: np.ndarray
    weights: np.ndarray
    cov_ok: bool
    message: str = ""

    @property
    def failed(self):
        """Failure in the Monte Carlo sense: no convergence, non-finite
        results, or an unusable covariance."""
        return (not self.converged
                or not np.all(np.isfinite(self.theta.theta))
                or not self.cov_ok)


def _prepare(model, theta):
    """Predictors and link derivative values at theta."""
    mu, phi = model.predictors(theta)
    g1 = model.mean_link.d1(mu)
    g2 = model.precision_link.d1(phi)
    return mu, phi, g1, g2


def loglik(model, y, theta):
    """Log likelihood on the original (0,1) scale."""
    mu, phi = model.predictors(theta)
    return float(np.sum(beta_logpdf(y, mu, phi)))


def lsmle_objective(model, y, theta, alpha):
    """Surrogate likelihood objective (to be maximized)."""
    _check_alpha(alpha)
    y_star, _ = transform_response(y)
    mu, phi = model.predictors(theta)
    if alpha == 0.0:
        return float(np.sum(egb_logpdf(y_star, mu, phi)))
    log_h_star = egb_logpdf(y_star, mu, phi / (1.0 - alpha))
    return float(np.sum(np.expm1(alpha * log_h_star)) / alpha)


def lmdpde_objective(model, y, theta, alpha):
    """Empirical density power divergence (to be minimized).

    Finite for every finite theta: the logit-scale density is bounded,
    so h^alpha and the power integral both exist for any mu, phi.
    """
    _check_alpha(alpha)
    y_star, _ = transform_response(y)
    mu, phi = model.predictors(theta)
    if alpha == 0.0:
        return float(-np.mean(egb_logpdf(y_star, mu, phi)))
    k = np.exp(log_k_integral(mu, phi, 1.0 + alpha))
    h_pow = np.exp(alpha * egb_logpdf(y_star, mu, phi))
    return float(np.mean(k - (1.0 + alpha) / alpha * h_pow))


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")


def _u_rows(model, y_star, y_dagger, mu, phi, g1, g2, scale=1.0):
    """Per-observation score rows at moment scale ``scale``.

    With scale=1 these are the rows of the plain score. With
    scale = 1/(1-alpha) and the phi factor replaced accordingly they
    become the gradient of the inflated-precision log density; the
    caller handles that variant in ``modified_score_u_star``.
    """
    m = moments(mu, phi, scale)
    r_star = y_star - m.mu_star
    u_mean = phi * r_star / g1
    u_prec = (mu * r_star + (y_dagger - m.mu_dagger)) / g2
    return np.hstack([model.x * u_mean[:, None], model.z * u_prec[:, None]])


def score_u(model, y, theta):
    """Score contributions, one row per observation (n x p)."""
    y_star, y_dagger = transform_response(y)
    mu, phi, g1, g2 = _prepare(model, theta)
    return _u_rows(model, y_star, y_dagger, mu, phi, g1, g2)


def modified_score_u_star(model, y, theta, alpha):
    """Gradient rows of ln h_star, one per observation (n x p).

    The moment scalars are evaluated at the inflated precision
    phi/(1-alpha); the chain rule for the precision coordinate
    contributes the extra 1/(1-alpha) on the z block while the link
    derivative stays at the model precision phi.
    """
    _check_alpha(alpha)
    y_star, y_dagger = transform_response(y)
    mu, phi, g1, g2 = _prepare(model, theta)
    one_m = 1.0 - alpha
    m = moments(mu, phi, 1.0 / one_m)
    phi_star = m.phi_scaled
    r_star = y_star - m.mu_star
    u_mean = phi_star * r_star / g1
    u_prec = (mu * r_star + (y_dagger - m.mu_dagger)) / (one_m * g2)
    return np.hstack([model.x * u_mean[:, None], model.z * u_prec[:, None]])


def centering_e(model, theta, alpha):
    """Closed-form expectation rows E[U h^alpha], one per observation.

    Zero at alpha = 0, where the power integral is 1 and the shifted
    moments coincide with the plain ones.
    """
    _check_alpha(alpha)
    mu, phi, g1, g2 = _prepare(model, theta)
    a = 1.0 + alpha
    m1 = moments(mu, phi, 1.0)
    ma = moments(mu, phi, a)
    k = np.exp(log_k_integral(mu, phi, a))
    d_star = ma.mu_star - m1.mu_star
    d_dag = ma.mu_dagger - m1.mu_dagger
    e_mean = phi * k * d_star / g1
    e_prec = k * (mu * d_star + d_dag) / g2
    return np.hstack([model.x * e_mean[:, None], model.z * e_prec[:, None]])


def estimating_function(model, y, theta, estimator):
    """Summed estimating function (length p vector).

    MLE: sum U. LSMLE: sum U_star h_star^alpha. LMDPDE:
    sum [U h^alpha - E]. All three coincide at alpha = 0.
    """
    y_star, y_dagger = transform_response(y)
    mu, phi, g1, g2 = _prepare(model, theta)
    alpha = estimator.alpha
    if estimator.kind == EstimatorKind.MLE or alpha == 0.0:
        rows = _u_rows(model, y_star, y_dagger, mu, phi, g1, g2)
        return rows.sum(axis=0)
    if estimator.kind == EstimatorKind.LSMLE:
        rows = modified_score_u_star(model, y, theta, alpha)
        w = np.exp(alpha * egb_logpdf(y_star, mu, phi / (1.0 - alpha)))
        return (rows * w[:, None]).sum(axis=0)
    rows = _u_rows(model, y_star, y_dagger, mu, phi, g1, g2)
    w = np.exp(alpha * egb_logpdf(y_star, mu, phi))
    cent = centering_e(model, theta, alpha)
    return (rows * w[:, None] - cent).sum(axis=0)


def starting_values(model, y):
    """Cheap, deterministic starting point.

    The mean coefficients come from least squares of the linked response
    on x. The precision starts from the method-of-moments estimate
    phi = mean[mu(1-mu)]/var(residual) - 1, pushed through the precision
    link and spread over z by least squares against a constant column
    (which reduces to the intercept when z contains one).
    """
    y = np.asarray(y, dtype=float)
    y_clamped = np.clip(y, EPSILON, 1.0 - EPSILON)
    target = model.mean_link.value(y_clamped)
    beta0, *_ = np.linalg.lstsq(model.x, target, rcond=None)
    mu_hat = model.mean_link.inverse(model.x @ beta0)
    resid_var = float(np.mean((y - mu_hat) ** 2))
    phi_mm = float(np.mean(mu_hat * (1.0 - mu_hat))) / max(resid_var, 1e-12) - 1.0
    phi_mm = min(max(phi_mm, 0.5), 1e6)
    prec_target = np.full(model.n, float(model.precision_link.value(phi_mm)))
    gamma0, *_ = np.linalg.lstsq(model.z, prec_target, rcond=None)
    return ParamVector(beta0, gamma0)


def _fused_min_objective(model, y_star, y_dagger, estimator):
    """Return f(theta) -> (value, gradient) for the minimized objective.

    MLE and LSMLE are maximizers, so their sign is flipped; the LMDPDE
    divergence is minimized directly. Overflow inside an evaluation
    (possible for wild trial steps) is reported as +inf so the line
    search backs off.
    """
    x, z = model.x, model.z
    n = model.n
    alpha = estimator.alpha
    kind = estimator.kind

    def assemble(u_mean, u_prec):
        return np.concatenate([x.T @ u_mean, z.T @ u_prec])

    def fg(theta):
        try:
            mu, phi = model.predictors(theta)
            g1 = model.mean_link.d1(mu)
            g2 = model.precision_link.d1(phi)
            if kind == EstimatorKind.MLE or alpha == 0.0:
                m = moments(mu, phi, 1.0)
                log_h = egb_logpdf(y_star, mu, phi)
                r = y_star - m.mu_star
                u_mean = phi * r / g1
                u_prec = (mu * r + (y_dagger - m.mu_dagger)) / g2
                scale = 1.0 / n if kind == EstimatorKind.LMDPDE else 1.0
                return (-scale * float(np.sum(log_h)),
                        -scale * assemble(u_mean, u_prec))
            if kind == EstimatorKind.LSMLE:
                one_m = 1.0 - alpha
                m = moments(mu, phi, 1.0 / one_m)
                log_h_star = egb_logpdf(y_star, mu, phi / one_m)
                w = np.exp(alpha * log_h_star)
                value = float(np.sum(np.expm1(alpha * log_h_star)) / alpha)
                r = y_star - m.mu_star
                u_mean = m.phi_scaled * r / g1 * w
                u_prec = (mu * r + (y_dagger - m.mu_dagger)) / (one_m * g2) * w
                return -value, -assemble(u_mean, u_prec)
            # LMDPDE, alpha > 0
            m1 = moments(mu, phi, 1.0)
            a = 1.0 + alpha
            ma = moments(mu, phi, a)
            log_k = log_k_integral(mu, phi, a)
            if np.any(log_k > 700.0):
                raise OverflowError
            k = np.exp(log_k)
            log_h = egb_logpdf(y_star, mu, phi)
            w = np.exp(alpha * log_h)
            value = float(np.mean(k - a / alpha * w))
            r = y_star - m1.mu_star
            d_star = ma.mu_star - m1.mu_star
            d_dag = ma.mu_dagger - m1.mu_dagger
            u_mean = phi * r / g1 * w - phi * k * d_star / g1
            u_prec = ((mu * r + (y_dagger - m1.mu_dagger)) / g2 * w
                      - k * (mu * d_star + d_dag) / g2)
            return value, -(a / n) * assemble(u_mean, u_prec)
        except (OverflowError, FloatingPointError):
            return np.inf, np.zeros(model.p)

    return fg


def _natural_objective(model, y, theta, estimator):
    if estimator.kind == EstimatorKind.MLE:
        return loglik(model, y, theta)
    if estimator.kind == EstimatorKind.LSMLE:
        return lsmle_objective(model, y, theta, estimator.alpha)
    return lmdpde_objective(model, y, theta, estimator.alpha)


def fit(model, y, estimator, options=None):
    """Fit the model by quasi-Newton optimization with analytic gradients.

    Convergence means the infinity norm of the estimating function,
    scaled by max(1, |objective|), is at or below the gradient
    tolerance. If the first optimizer run stalls short of that, up to
    two restarts are made from the best iterate so far (each restart
    begins with a fresh Hessian approximation). Non-convergence is
    reported in the result, never raised.
    """
    options = options or FitOptions()
    y = np.asarray(y, dtype=float)
    y_star, y_dagger = transform_response(y)
    start = options.starting_point or starting_values(model, y)
    fg = _fused_min_objective(model, y_star, y_dagger, estimator)

    theta = start.theta
    total_iter = 0
    message = ""
    for attempt in range(3):
        res = _minimize(
            fg, theta, jac=True, method="BFGS",
            options={"maxiter": options.max_iterations,
                     "gtol": 1e-14,
                     "xrtol": options.parameter_tolerance})
        total_iter += int(res.nit)
        message = str(res.message)
        if np.all(np.isfinite(res.x)):
            theta = res.x
        if _scaled_criterion(model, y, theta, estimator) <= options.gradient_tolerance:
            break
        theta = _polish(model, y, theta, estimator)
        if _scaled_criterion(model, y, theta, estimator) <= options.gradient_tolerance:
            break
        if res.nit == 0 and attempt > 0:
            break  # restart made no progress; stop burning budget

    objective = _natural_objective(model, y, theta, estimator)
    criterion = _scaled_criterion(model, y, theta, estimator)
    converged = bool(np.isfinite(criterion)
                     and criterion <= options.gradient_tolerance
                     and np.isfinite(objective))

    from . import inference  # deferred: inference imports this module

    parts = inference.sandwich(model, theta, estimator)
    cov_ok = parts.ok and converged
    se = (np.sqrt(np.diag(parts.vcov))
          if parts.ok else np.full(model.p, np.nan))
    weights = inference.raw_weights(model, y_star, theta, estimator)

    return FitResult(
        model=model,
        y=y,
        estimator=estimator,
        theta=model.split(theta),
        converged=converged,
        iterations=total_iter,
        objective=objective,
        gradient_norm=criterion,
        covariance=parts.vcov,
        standard_errors=se,
        weights=weights,
        cov_ok=bool(cov_ok),
        message=message,
    )


def _scaled_criterion(model, y, theta, estimator):
    """Infinity norm of the estimating function over max(1, |objective|)."""
    try:
        value = _natural_objective(model, y, theta, estimator)
        grad = estimating_function(model, y, theta, estimator)
    except (OverflowError, FloatingPointError):
        return np.inf
    if not np.all(np.isfinite(grad)) or not np.isfinite(value):
        return np.inf
    return float(np.max(np.abs(grad)) / max(1.0, abs(value)))


def _polish(model, y, theta, estimator):
    """Last-mile root solve of the estimating equation.

    Quasi-Newton line searches can stall from precision loss a hair
    above the convergence criterion. From that close, a derivative-free
    hybrid root solve is quadratically convergent. The solution is
    accepted only when it improves the criterion without materially
    changing the objective, which rules out hopping to a spurious
    distant root of the estimating function.
    """
    def target(t):
        try:
            g = estimating_function(model, y, t, estimator)
        except (OverflowError, FloatingPointError):
            return np.full(theta.size, 1e12)
        return np.where(np.isfinite(g), g, 1e12)

    try:
        sol = _root(target, theta, method="hybr")
    except Exception:
        return theta
    if not np.all(np.isfinite(sol.x)):
        return theta
    before = _scaled_criterion(model, y, theta, estimator)
    after = _scaled_criterion(model, y, sol.x, estimator)
    if not after < before:
        return theta
    try:
        obj_old = _natural_objective(model, y, theta, estimator)
        obj_new = _natural_objective(model, y, sol.x, estimator)
    except (OverflowError, FloatingPointError):
        return theta
    if abs(obj_new - obj_old) > 1e-4 * max(1.0, abs(obj_old)):
        return theta
    return sol.x
