"""Special functions and the quadrature oracle.

This module provides the three special functions everything else is built
from (``log_beta``, ``digamma``, ``trigamma``) and an adaptive quadrature
routine used by the test suite to brute-force-verify every closed-form
expectation in the package.

The polygamma functions use the classical scheme: upward recurrence to push
the argument to 10 or beyond, then an eight-term asymptotic expansion. That
combination keeps the absolute error below 1e-12 across [1e-6, 1e6].
``log_beta`` composes log-gamma values, with a dedicated Stirling-difference
branch for very lopsided shape pairs where the naive composition loses
digits to cancellation.

All functions are vectorized over numpy arrays and are pure.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad as _quad
from scipy.special import gammaln as _gammaln

__all__ = [
    "QuadratureSpec",
    "IntegrationError",
    "log_beta",
    "digamma",
    "trigamma",
    "integrate",
]

# Asymptotic series for psi(x) ~ ln x - 1/(2x) - w*P(w), w = 1/x^2,
# from the Bernoulli numbers B_{2k}/(2k): 1/12, -1/120, 1/252, ...
_PSI_TAIL = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)

# psi'(x) ~ 1/x + 1/(2x^2) + Q(w)/x^3, w = 1/x^2, coefficients B_{2k}.
_TRI_TAIL = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

# Stirling tail S(z) = ln Gamma(z) - (z - 1/2) ln z + z - ln(2 pi)/2,
# S(z) = sum B_{2k} / (2k (2k-1) z^{2k-1}).
_STIRLING_TAIL = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)

_RECURRENCE_CUTOFF = 10.0
_MAX_SHIFTS = 10  # enough to push any positive argument past the cutoff


class IntegrationError(RuntimeError):
    """Quadrature did not converge or the integrand misbehaved."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and budget for adaptive quadrature.

    Parameters
    ----------
    absolute_tolerance : float
        Target absolute error, must be positive.
    relative_tolerance : float
        Target relative error, must be positive.
    max_subdivisions : int
        Interval subdivision budget, at least 1.
    """

    absolute_tolerance: float = 1e-10
    relative_tolerance: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.absolute_tolerance > 0 and self.relative_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


def _check_positive(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise ValueError(f"{name} must be positive and finite")
    return x


def digamma(x):
    """Digamma function psi(x) for positive arguments.

    Parameters
    ----------
    x : array_like
        Positive real arguments.

    Returns
    -------
    ndarray or float
        psi(x), elementwise. Absolute error below 1e-12 on [1e-6, 1e6].
    """
    scalar_in = np.ndim(x) == 0
    x = _check_positive(x, "x")
    s = np.array(x, dtype=float, copy=True, ndmin=1)
    acc = np.zeros_like(s)
    for _ in range(_MAX_SHIFTS):
        small = s < _RECURRENCE_CUTOFF
        if not small.any():
            break
        acc[small] -= 1.0 / s[small]
        s[small] += 1.0
    w = 1.0 / (s * s)
    tail = np.zeros_like(s)
    for coef in reversed(_PSI_TAIL):
        tail = tail * w + coef
    out = acc + np.log(s) - 0.5 / s - w * tail
    return float(out[0]) if scalar_in else out


def trigamma(x):
    """Trigamma function psi'(x) for positive arguments.

    Same algorithm family as :func:`digamma`: the recurrence
    psi'(x) = psi'(x+1) + 1/x^2 walks the argument up to 10, then an
    eight-term asymptotic series finishes the job.
    """
    scalar_in = np.ndim(x) == 0
    x = _check_positive(x, "x")
    s = np.array(x, dtype=float, copy=True, ndmin=1)
    acc = np.zeros_like(s)
    for _ in range(_MAX_SHIFTS):
        small = s < _RECURRENCE_CUTOFF
        if not small.any():
            break
        acc[small] += 1.0 / (s[small] * s[small])
        s[small] += 1.0
    w = 1.0 / (s * s)
    tail = np.zeros_like(s)
    for coef in reversed(_TRI_TAIL):
        tail = tail * w + coef
    out = acc + 1.0 / s + 0.5 * w + tail * w / s
    return float(out[0]) if scalar_in else out


def _stirling_tail(z):
    w = 1.0 / (z * z)
    tail = np.zeros_like(z)
    for coef in reversed(_STIRLING_TAIL):
        tail = tail * w + coef
    return tail / z


def log_beta(a, b):
    """Natural log of the beta function, ln B(a, b).

    Parameters
    ----------
    a, b : array_like
        Positive shape parameters.

    Returns
    -------
    ndarray or float
        ln B(a, b) with relative error at or below 1e-12 over
        [1e-6, 1e6] in both arguments.

    Notes
    -----
    The generic path is lgamma(a) + lgamma(b) - lgamma(a + b). When one
    shape dwarfs the other (min <= 0.01 max with max >= 30) that
    composition cancels catastrophically, so the large-argument pair is
    expanded with Stirling's series instead:

        lnGamma(hi) - lnGamma(lo + hi)
            = -(hi - 1/2) log1p(lo/hi) - lo ln(lo + hi) + lo
              + S(hi) - S(lo + hi),

    which never subtracts two nearly equal log-gamma values.
    """
    scalar_in = np.ndim(a) == 0 and np.ndim(b) == 0
    a = _check_positive(a, "a")
    b = _check_positive(b, "b")
    a, b = np.broadcast_arrays(np.atleast_1d(a), np.atleast_1d(b))
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    out = _gammaln(a) + _gammaln(b) - _gammaln(a + b)
    skewed = (hi >= 30.0) & (lo <= 0.01 * hi)
    if skewed.any():
        lo_s, hi_s = lo[skewed], hi[skewed]
        out[skewed] = (
            _gammaln(lo_s)
            - (hi_s - 0.5) * np.log1p(lo_s / hi_s)
            - lo_s * np.log(lo_s + hi_s)
            + lo_s
            + _stirling_tail(hi_s)
            - _stirling_tail(lo_s + hi_s)
        )
    return float(out[0]) if scalar_in else out


def integrate(f, lower, upper, spec=None):
    """Adaptive quadrature of ``f`` on (lower, upper).

    Parameters
    ----------
    f : callable
        Real-valued function of one real argument, finite on the open
        interval (endpoint singularities are tolerated by the adaptive
        rule; a NaN anywhere is an error).
    lower, upper : float
        Interval endpoints; ``-numpy.inf`` and ``numpy.inf`` are allowed.
    spec : QuadratureSpec, optional
        Tolerances and subdivision budget.

    Returns
    -------
    float
        The integral within the requested tolerance.

    Raises
    ------
    IntegrationError
        If the routine does not converge within the subdivision budget
        or the integrand returns NaN.
    """
    spec = spec or QuadratureSpec()

    def guarded(t):
        val = f(t)
        if np.isnan(val):
            raise IntegrationError(f"integrand returned NaN at t={t!r}")
        return val

    value, _abserr, info, *rest = _quad(
        guarded,
        lower,
        upper,
        epsabs=spec.absolute_tolerance,
        epsrel=spec.relative_tolerance,
        limit=spec.max_subdivisions,
        full_output=True,
    )
    if rest:  # a warning message is appended on trouble
        raise IntegrationError(f"quadrature did not converge: {rest[0]}")
    del info
    return value
