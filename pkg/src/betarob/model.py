"""Model specification: links, design matrices, parameters, responses.

The regression model has two submodels sharing one parameter vector
theta = (beta, gamma):

    g_mu(mu_i)  = x_i' beta      (mean, mu_i in (0, 1))
    g_phi(phi_i) = z_i' gamma    (precision, phi_i > 0)

Links are strictly increasing and twice differentiable on their domain.
Inverse links clamp their output to the interior of the domain with
margin EPSILON so that downstream polygamma arguments stay strictly
positive; the clamp is far too small to move any optimizer iterate.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr, ndtri

__all__ = [
    "EPSILON",
    "LinkFunction",
    "LogitLink",
    "ProbitLink",
    "CloglogLink",
    "CauchitLink",
    "LogLink",
    "SqrtLink",
    "IdentityLink",
    "LINKS",
    "get_link",
    "link_eval",
    "ModelSpec",
    "ParamVector",
    "Observation",
    "transform_response",
]

EPSILON = 2.0 ** -40

_UNIT = "unit"          # domain (0, 1), mean submodel
_POSITIVE = "positive"  # domain (0, inf), precision submodel


class LinkFunction:
    """Base class for link functions.

    Subclasses set ``kind`` and ``domain`` and implement ``value``,
    ``inverse``, ``d1`` and ``d2`` (the link, its inverse, and the first
    two derivatives of the link with respect to its natural argument).
    """

    kind = None
    domain = None

    def value(self, x):
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def _clamp(self, x):
        if self.domain == _UNIT:
            return np.clip(x, EPSILON, 1.0 - EPSILON)
        return np.clip(x, EPSILON, 1.0 / EPSILON)

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{self.kind}: non-finite argument")
        if self.domain == _UNIT:
            bad = (x <= 0.0) | (x >= 1.0)
        else:
            bad = x <= 0.0
        if np.any(bad):
            raise ValueError(f"{self.kind}: argument outside the domain")
        return x

    def __repr__(self):
        return f"{type(self).__name__}()"


class LogitLink(LinkFunction):
    kind = "logit"
    domain = _UNIT

    def value(self, x):
        x = self._check_domain(x)
        return np.log(x) - np.log1p(-x)

    def inverse(self, x):
        return self._clamp(expit(np.asarray(x, dtype=float)))

    def d1(self, x):
        x = self._check_domain(x)
        return 1.0 / (x * (1.0 - x))

    def d2(self, x):
        x = self._check_domain(x)
        return (2.0 * x - 1.0) / (x * (1.0 - x)) ** 2


class ProbitLink(LinkFunction):
    kind = "probit"
    domain = _UNIT

    def value(self, x):
        x = self._check_domain(x)
        return ndtri(x)

    def inverse(self, x):
        return self._clamp(ndtr(np.asarray(x, dtype=float)))

    def d1(self, x):
        x = self._check_domain(x)
        z = ndtri(x)
        return np.exp(0.5 * z * z) * np.sqrt(2.0 * np.pi)

    def d2(self, x):
        # g''(mu) = z / pdf(z)^2 with z = ndtri(mu)
        x = self._check_domain(x)
        z = ndtri(x)
        pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        return z / (pdf * pdf)


class CloglogLink(LinkFunction):
    kind = "cloglog"
    domain = _UNIT

    def value(self, x):
        x = self._check_domain(x)
        return np.log(-np.log1p(-x))

    def inverse(self, x):
        return self._clamp(-np.expm1(-np.exp(np.asarray(x, dtype=float))))

    def d1(self, x):
        x = self._check_domain(x)
        u = -np.log1p(-x)
        return 1.0 / ((1.0 - x) * u)

    def d2(self, x):
        x = self._check_domain(x)
        u = -np.log1p(-x)
        return (u - 1.0) / ((1.0 - x) * u) ** 2


class CauchitLink(LinkFunction):
    kind = "cauchit"
    domain = _UNIT

    def value(self, x):
        x = self._check_domain(x)
        return np.tan(np.pi * (x - 0.5))

    def inverse(self, x):
        return self._clamp(0.5 + np.arctan(np.asarray(x, dtype=float)) / np.pi)

    def d1(self, x):
        x = self._check_domain(x)
        t = np.tan(np.pi * (x - 0.5))
        return np.pi * (1.0 + t * t)

    def d2(self, x):
        x = self._check_domain(x)
        t = np.tan(np.pi * (x - 0.5))
        return 2.0 * np.pi**2 * t * (1.0 + t * t)


class LogLink(LinkFunction):
    kind = "log"
    domain = _POSITIVE

    def value(self, x):
        x = self._check_domain(x)
        return np.log(x)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return self._clamp(np.exp(x))

    def d1(self, x):
        x = self._check_domain(x)
        return 1.0 / x

    def d2(self, x):
        x = self._check_domain(x)
        return -1.0 / (x * x)


class SqrtLink(LinkFunction):
    kind = "sqrt"
    domain = _POSITIVE

    def value(self, x):
        x = self._check_domain(x)
        return np.sqrt(x)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        return self._clamp(x * x)

    def d1(self, x):
        x = self._check_domain(x)
        return 0.5 / np.sqrt(x)

    def d2(self, x):
        x = self._check_domain(x)
        return -0.25 * x ** -1.5


class IdentityLink(LinkFunction):
    kind = "identity"
    domain = _POSITIVE

    def value(self, x):
        x = self._check_domain(x)
        return x

    def inverse(self, x):
        return self._clamp(np.asarray(x, dtype=float))

    def d1(self, x):
        x = self._check_domain(x)
        return np.ones_like(x)

    def d2(self, x):
        x = self._check_domain(x)
        return np.zeros_like(x)


LINKS = {
    cls.kind: cls
    for cls in (LogitLink, ProbitLink, CloglogLink, CauchitLink,
                LogLink, SqrtLink, IdentityLink)
}


def get_link(name):
    """Look up a link instance by name (e.g. 'logit', 'log')."""
    try:
        return LINKS[name]()
    except KeyError:
        raise ValueError(
            f"unknown link {name!r}; choose from {sorted(LINKS)}") from None


def link_eval(link, which, x):
    """Evaluate a link: 'value', 'inverse', 'd1' or 'd2' at x."""
    try:
        method = {"value": link.value, "inverse": link.inverse,
                  "d1": link.d1, "d2": link.d2}[which]
    except KeyError:
        raise ValueError(f"unknown evaluation kind {which!r}") from None
    return method(x)


@dataclass(frozen=True)
class ParamVector:
    """Coefficients (beta, gamma) with theta = concat(beta, gamma)."""

    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def theta(self):
        return np.concatenate([self.beta, self.gamma])

    @classmethod
    def from_theta(cls, theta, p1):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:p1], theta[p1:])

    def __len__(self):
        return self.beta.size + self.gamma.size


@dataclass(frozen=True)
class ModelSpec:
    """Design matrices and links for both submodels.

    Parameters
    ----------
    x : ndarray, shape (n, p1)
        Mean-submodel design matrix (include the intercept column
        yourself; nothing is prepended here).
    z : ndarray, shape (n, p2)
        Precision-submodel design matrix.
    mean_link, precision_link : LinkFunction
        Defaults are logit and log.
    mean_names, precision_names : tuple of str, optional
        Column labels used in reports.
    """

    x: np.ndarray
    z: np.ndarray
    mean_link: LinkFunction = field(default_factory=LogitLink)
    precision_link: LinkFunction = field(default_factory=LogLink)
    mean_names: tuple = None
    precision_names: tuple = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        if x.shape[0] != z.shape[0]:
            raise ValueError("x and z must have the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValueError("non-finite design entry")
        n, p1 = x.shape
        p2 = z.shape[1]
        if n <= p1 + p2:
            raise ValueError(
                f"need more observations than parameters (n={n}, p={p1 + p2})")
        if np.linalg.matrix_rank(x) < p1:
            raise ValueError("mean design matrix is rank deficient")
        if np.linalg.matrix_rank(z) < p2:
            raise ValueError("precision design matrix is rank deficient")
        if self.mean_link.domain != _UNIT:
            raise ValueError("mean link must map (0,1) to the real line")
        if self.precision_link.domain != _POSITIVE:
            raise ValueError("precision link must map (0,inf) to the real line")
        x.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        if self.mean_names is None:
            object.__setattr__(
                self, "mean_names",
                tuple(f"x{j}" for j in range(p1)))
        if self.precision_names is None:
            object.__setattr__(
                self, "precision_names",
                tuple(f"z{j}" for j in range(p2)))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p1(self):
        return self.x.shape[1]

    @property
    def p2(self):
        return self.z.shape[1]

    @property
    def p(self):
        return self.p1 + self.p2

    def split(self, theta):
        """View a flat theta as a ParamVector with this model's layout."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise ValueError(f"theta must have length {self.p}")
        return ParamVector(theta[:self.p1], theta[self.p1:])

    def predictors(self, theta):
        """Mean and precision vectors (mu, phi) at theta.

        Raises if a linear predictor overflows to a non-finite value;
        the inverse links then clamp to the interior of the domain.
        """
        pv = theta if isinstance(theta, ParamVector) else self.split(theta)
        eta_mu = self.x @ pv.beta
        eta_phi = self.z @ pv.gamma
        if not (np.all(np.isfinite(eta_mu)) and np.all(np.isfinite(eta_phi))):
            raise FloatingPointError("linear predictor overflowed")
        mu = self.mean_link.inverse(eta_mu)
        phi = self.precision_link.inverse(eta_phi)
        return mu, phi


@dataclass(frozen=True)
class Observation:
    """One response value with its two working transforms."""

    y: float
    y_star: float
    y_dagger: float

    @classmethod
    def from_y(cls, y):
        y_star, y_dagger = transform_response(y)
        return cls(float(y), float(y_star), float(y_dagger))


def transform_response(y):
    """Map y in (0,1) to (y_star, y_dagger) = (logit(y), log(1 - y)).

    Values at or outside the boundary are rejected, not clamped; the
    model's support is the open interval and silently moving data points
    hides ingestion errors.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)) or np.any((y <= 0.0) | (y >= 1.0)):
        raise ValueError("response values must lie strictly inside (0, 1)")
    y_star = np.log(y) - np.log1p(-y)
    y_dagger = np.log1p(-y)
    return y_star, y_dagger


def predictors(model, theta):
    """Module-level alias for ModelSpec.predictors."""
    return model.predictors(theta)
