"""Sandwich covariances, Wald-type tests, influence, and weights.

Both robust estimators are M-estimators, so their asymptotic covariance
has the sandwich form V = Lambda^{-1} Sigma Lambda^{-1}, where Lambda is
the expected derivative of the estimating function and Sigma the second
moment of its per-observation contributions. Every block reduces to the
Fisher information at alpha = 0, making V the usual inverse information.

All per-observation block scalars below have closed forms built from the
power-closure of the logit-scale density. Two identities drive them. For
a scale a > 0,

    h(.; mu, phi)^a = K_a * h(.; mu, a phi) up to normalization,

with K_a given by ``k_integral``, so expectations of score products
against h^(1+a') become moments of the same family at a shifted
precision plus mean-shift corrections. For the surrogate estimator the
same trick applies to products of the inflated-precision density
h_star = h(.; mu, phi/(1-alpha)) with h itself:

    h_star^alpha h = b_1 h(.; mu, phi/(1-alpha))
    h_star^(2 alpha) h = b_2 h(.; mu, (1+alpha) phi/(1-alpha)),

with the log-beta ratios b_1, b_2 computed in log space. The mean-shift
terms between the two reference precisions enter the Sigma blocks; they
vanish at alpha = 0.

Sign convention: the LSMLE Lambda block is stored with its leading minus
sign (it is the expected gradient of the estimating function, which is
negative definite near the optimum). The sandwich is invariant to that
sign, and the stored matrix matches the derivative definition exactly,
which is what the quadrature tests check.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .density import egb_logpdf, log_k_integral, moments
from .estimators import EstimatorKind, centering_e
from .specfun import trigamma

__all__ = [
    "SandwichParts",
    "HypothesisSpec",
    "TestResult",
    "lmdpde_sandwich",
    "lsmle_sandwich",
    "sandwich",
    "wald_test",
    "influence",
    "observation_weights",
]

_RCOND_FLOOR = 1e-12


@dataclass(frozen=True)
class SandwichParts:
    """Assembled sandwich matrices plus their per-observation scalars.

    ``per_obs`` maps scalar names (lam11, lam12, lam22, sig11, sig12,
    sig22, and estimator-specific extras like cent1/cent2 or b1/b2) to
    length-n arrays; the tests verify each against its defining
    expectation by quadrature.
    """

    lam: np.ndarray
    sigma: np.ndarray
    vcov: np.ndarray
    rcond: float
    ok: bool
    per_obs: dict


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float


class HypothesisSpec:
    """Restriction m(theta) = eta0 with Jacobian of full row rank.

    Linear restrictions are given by a d x p matrix and target vector.
    Smooth nonlinear restrictions pass callables ``func`` (theta -> d
    vector) and ``jac`` (theta -> d x p matrix) instead.
    """

    def __init__(self, matrix=None, eta0=None, func=None, jac=None):
        if (matrix is None) == (func is None):
            raise ValueError("give either a matrix or a pair of callables")
        if func is not None and jac is None:
            raise ValueError("a nonlinear restriction needs its Jacobian")
        self.matrix = None if matrix is None else np.atleast_2d(
            np.asarray(matrix, dtype=float))
        self.eta0 = None if eta0 is None else np.atleast_1d(
            np.asarray(eta0, dtype=float))
        if self.matrix is not None:
            if self.eta0 is None:
                self.eta0 = np.zeros(self.matrix.shape[0])
            if self.eta0.shape[0] != self.matrix.shape[0]:
                raise ValueError("matrix and eta0 sizes disagree")
        self.func = func
        self.jac = jac

    @classmethod
    def coordinates(cls, indices, values, p):
        """Restriction theta[indices] = values inside a length-p theta."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if indices.shape != values.shape:
            raise ValueError("indices and values must pair up")
        m = np.zeros((indices.size, p))
        m[np.arange(indices.size), indices] = 1.0
        return cls(matrix=m, eta0=values)

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.matrix is not None:
            return self.matrix @ theta - self.eta0, self.matrix
        value = np.atleast_1d(np.asarray(self.func(theta), dtype=float))
        jac = np.atleast_2d(np.asarray(self.jac(theta), dtype=float))
        return value, jac


def _assemble(x, z, s11, s12, s22):
    """Block matrix [[x' D11 x, x' D12 z], [z' D12 x, z' D22 z]]."""
    xtx = x.T @ (x * s11[:, None])
    xtz = x.T @ (z * s12[:, None])
    ztz = z.T @ (z * s22[:, None])
    return np.block([[xtx, xtz], [xtz.T, ztz]])


def _finish(lam, sigma, p):
    """Invert the sandwich with condition guards and a PSD projection."""
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(sigma))):
        return np.full((p, p), np.nan), 0.0, False
    svals = np.linalg.svd(lam, compute_uv=False)
    rcond = float(svals[-1] / svals[0]) if svals[0] > 0 else 0.0
    if not np.isfinite(rcond) or rcond < _RCOND_FLOOR:
        return np.full((p, p), np.nan), rcond, False
    inner = np.linalg.solve(lam, sigma)
    vcov = np.linalg.solve(lam, inner.T).T
    vcov = 0.5 * (vcov + vcov.T)
    eigvals, eigvecs = np.linalg.eigh(vcov)
    floor = -1e-10 * max(1.0, float(eigvals[-1]))
    if eigvals[0] < floor:
        return vcov, rcond, False
    eigvals = np.clip(eigvals, 0.0, None)
    vcov = (eigvecs * eigvals) @ eigvecs.T
    return vcov, rcond, True


def _gamma_scalars(model, mu, phi, g1, g2, a, base):
    """The five closed-form scalars of the power-divergence blocks at
    power a: centering pair (gam1, gam2) and the three matrix scalars
    (gam11, gam12, gam22). ``base`` holds the unshifted moments."""
    ma = moments(mu, phi, a)
    k = np.exp(log_k_integral(mu, phi, a))
    ds = ma.mu_star - base.mu_star
    dd = ma.mu_dagger - base.mu_dagger
    tri_b = trigamma((1.0 - mu) * ma.phi_scaled)
    gam1 = phi * k * ds / g1
    gam2 = k * (mu * ds + dd) / g2
    gam11 = phi * phi * k * (ma.v + ds * ds) / (g1 * g1)
    gam12 = phi * k * (mu * (ma.v + ds * ds) - tri_b + ds * dd) / (g1 * g2)
    gam22 = k * (ma.d + (mu * ds + dd) ** 2) / (g2 * g2)
    return gam1, gam2, gam11, gam12, gam22


def lmdpde_sandwich(model, theta, alpha):
    """Sandwich parts for the power-divergence estimator.

    Lambda uses the block scalars at power 1 + alpha; Sigma uses the
    scalars at 1 + 2 alpha minus the outer product of the centering
    pair. At alpha = 0 both equal the Fisher information.
    """
    mu, phi = model.predictors(theta)
    g1 = model.mean_link.d1(mu)
    g2 = model.precision_link.d1(phi)
    base = moments(mu, phi, 1.0)
    e1, e2, l11, l12, l22 = _gamma_scalars(
        model, mu, phi, g1, g2, 1.0 + alpha, base)
    _, _, q11, q12, q22 = _gamma_scalars(
        model, mu, phi, g1, g2, 1.0 + 2.0 * alpha, base)
    s11 = q11 - e1 * e1
    s12 = q12 - e1 * e2
    s22 = q22 - e2 * e2
    lam = _assemble(model.x, model.z, l11, l12, l22)
    sigma = _assemble(model.x, model.z, s11, s12, s22)
    vcov, rcond, ok = _finish(lam, sigma, model.p)
    return SandwichParts(lam, sigma, vcov, rcond, ok, {
        "lam11": l11, "lam12": l12, "lam22": l22,
        "sig11": s11, "sig12": s12, "sig22": s22,
        "cent1": e1, "cent2": e2,
    })


def lsmle_sandwich(model, theta, alpha):
    """Sandwich parts for the surrogate likelihood estimator.

    With phi_t = phi/(1-alpha) and phi_p = (1+alpha) phi_t, the Lambda
    scalars are moments at phi_t weighted by b_1, and the Sigma scalars
    are moments at phi_p weighted by b_2 plus mean-shift corrections
    between the two precisions. Lambda is stored with its minus sign.
    """
    mu, phi = model.predictors(theta)
    g1 = model.mean_link.d1(mu)
    g2 = model.precision_link.d1(phi)
    one_m = 1.0 - alpha
    mt = moments(mu, phi, 1.0 / one_m)           # at phi_t
    mp = moments(mu, phi, (1.0 + alpha) / one_m)  # at phi_p
    phi_t = mt.phi_scaled
    lb = _log_beta_pair(mu, phi)
    lbt = _log_beta_pair(mu, phi_t)
    lbp = _log_beta_pair(mu, mp.phi_scaled)
    b1 = np.exp(one_m * lbt - lb)
    b2 = np.exp(lbp - 2.0 * alpha * lbt - lb)

    l11 = -one_m * b1 * phi_t * phi_t * mt.v / (g1 * g1)
    l12 = -b1 * mt.c / (g1 * g2)
    l22 = -b1 * mt.d / (one_m * g2 * g2)

    m_shift = mp.mu_star - mt.mu_star
    d_shift = mp.mu_dagger - mt.mu_dagger
    tri_bp = trigamma((1.0 - mu) * mp.phi_scaled)
    s11 = b2 * phi_t * phi_t * (mp.v + m_shift ** 2) / (g1 * g1)
    s12 = (b2 * phi_t
           * (mu * (mp.v + m_shift ** 2) - tri_bp + m_shift * d_shift)
           / (one_m * g1 * g2))
    s22 = (b2 * (mp.d + (mu * m_shift + d_shift) ** 2)
           / (one_m * one_m * g2 * g2))

    lam = _assemble(model.x, model.z, l11, l12, l22)
    sigma = _assemble(model.x, model.z, s11, s12, s22)
    vcov, rcond, ok = _finish(lam, sigma, model.p)
    return SandwichParts(lam, sigma, vcov, rcond, ok, {
        "lam11": l11, "lam12": l12, "lam22": l22,
        "sig11": s11, "sig12": s12, "sig22": s22,
        "b1": b1, "b2": b2,
    })


def _log_beta_pair(mu, phi):
    from .specfun import log_beta
    return log_beta(mu * phi, (1.0 - mu) * phi)


def sandwich(model, theta, estimator):
    """Covariance parts for any estimator kind at its alpha.

    At alpha = 0 every kind is the maximum likelihood estimator, so all
    of them share the inverse-information path; fitted tables then agree
    bit for bit, not just within the reduction tolerance.
    """
    if estimator.kind == EstimatorKind.LSMLE and estimator.alpha != 0.0:
        return lsmle_sandwich(model, theta, estimator.alpha)
    return lmdpde_sandwich(model, theta, estimator.alpha)


def wald_test(fit_result, hypothesis):
    """Wald-type statistic for m(theta) = eta0 using the fit's sandwich.

    The statistic is invariant under invertible linear rescalings of the
    restriction. Requires a converged fit with a usable covariance.
    """
    if not fit_result.converged:
        raise ValueError("cannot test a non-converged fit")
    if not fit_result.cov_ok:
        raise np.linalg.LinAlgError("fit covariance is not usable")
    theta = fit_result.theta.theta
    r, jac = hypothesis.evaluate(theta)
    d = r.shape[0]
    if np.linalg.matrix_rank(jac) < d:
        raise ValueError("restriction Jacobian is rank deficient")
    inner = jac @ fit_result.covariance @ jac.T
    inner = 0.5 * (inner + inner.T)
    svals = np.linalg.svd(inner, compute_uv=False)
    if svals[0] <= 0 or svals[-1] / svals[0] < _RCOND_FLOOR:
        raise np.linalg.LinAlgError("singular inner matrix in Wald test")
    stat = float(max(r @ np.linalg.solve(inner, r), 0.0))
    return TestResult(statistic=stat, df=int(d),
                      p_value=float(chi2.sf(stat, d)))


def influence(model, theta, estimator, y_star, row=0):
    """Influence vector(s) at hypothetical response value(s) y_star.

    Solves Lambda IF = Psi(y_star) for the estimator's per-observation
    contribution Psi at observation ``row``'s covariates. For the
    surrogate estimator Psi = U_star h_star^alpha vanishes in both
    tails. For the power-divergence estimator Psi = U h^alpha - E keeps
    the constant centering term, so the influence tends to the nonzero
    limit -Lambda^{-1} E; it is bounded either way. For alpha = 0 the
    score is unbounded in y_star.

    Returns a length-p vector for scalar input, else an array with one
    row per y_star value.
    """
    scalar_in = np.ndim(y_star) == 0
    y_star = np.atleast_1d(np.asarray(y_star, dtype=float))
    parts = sandwich(model, theta, estimator)
    mu, phi = model.predictors(theta)
    g1 = model.mean_link.d1(mu)
    g2 = model.precision_link.d1(phi)
    alpha = estimator.alpha
    i = int(row)
    xi, zi = model.x[i], model.z[i]
    mu_i, phi_i, g1_i, g2_i = mu[i], phi[i], g1[i], g2[i]

    if estimator.kind == EstimatorKind.LSMLE and alpha > 0.0:
        m = moments(mu_i, phi_i, 1.0 / (1.0 - alpha))
        w = np.exp(alpha * egb_logpdf(y_star, mu_i, phi_i / (1.0 - alpha)))
        r = y_star - m.mu_star
        y_dag = -np.logaddexp(0.0, y_star)
        u_mean = m.phi_scaled * r / g1_i * w
        u_prec = (mu_i * r + (y_dag - m.mu_dagger)) / ((1.0 - alpha) * g2_i) * w
        psi = u_mean[:, None] * xi[None, :]
        psi = np.hstack([psi, u_prec[:, None] * zi[None, :]])
    else:
        m = moments(mu_i, phi_i, 1.0)
        r = y_star - m.mu_star
        y_dag = -np.logaddexp(0.0, y_star)
        u_mean = phi_i * r / g1_i
        u_prec = (mu_i * r + (y_dag - m.mu_dagger)) / g2_i
        if alpha > 0.0:
            w = np.exp(alpha * egb_logpdf(y_star, mu_i, phi_i))
            u_mean = u_mean * w
            u_prec = u_prec * w
        psi = np.hstack([u_mean[:, None] * xi[None, :],
                         u_prec[:, None] * zi[None, :]])
        if estimator.kind == EstimatorKind.LMDPDE and alpha > 0.0:
            cent = centering_e(model, theta, alpha)[i]
            psi = psi - cent[None, :]

    out = np.linalg.solve(parts.lam, psi.T).T
    return out[0] if scalar_in else out


def raw_weights(model, y_star, theta, estimator):
    """Observation weights h^alpha (or h_star^alpha), rescaled to [0, 1]."""
    alpha = estimator.alpha
    n = model.x.shape[0]
    if alpha == 0.0:
        return np.ones(n)
    mu, phi = model.predictors(theta)
    if estimator.kind == EstimatorKind.LSMLE:
        log_h = egb_logpdf(y_star, mu, phi / (1.0 - alpha))
    else:
        log_h = egb_logpdf(y_star, mu, phi)
    w = np.exp(alpha * (log_h - np.max(log_h)))
    return w


def observation_weights(fit_result):
    """Normalized weights of a converged fit (all ones at alpha = 0)."""
    from .model import transform_response
    y_star, _ = transform_response(fit_result.y)
    return raw_weights(fit_result.model, y_star,
                       fit_result.theta.theta, fit_result.estimator)
