"""Data-driven choice of the tuning constant alpha.

The selection walks an alpha grid upward from zero, refitting at each
point with a warm start from the previous estimate, and picks the
smallest alpha from which the path of estimates looks flat. Flatness is
measured by the standardized quadratic variation between consecutive
grid estimates,

    SQV_j = p^{-1/2} || (theta_hat(a_{j+1}) - theta_hat(a_j)) / s ||_2,

where s is the vector of standard errors of the alpha = 0 fit. A grid
point a_j is declared stable when SQV_j, ..., SQV_{j+M-1} all fall below
the stability threshold; the walk then stops and returns a_j. A fit
failure anywhere counts as instability at that point. If no stable point
exists by alpha_max, the result is alpha = 0 with ``stable=False``
(estimates then fall back to maximum likelihood).

The grid step, window M, and threshold are tunable. The default
threshold of 0.06 was calibrated on the simulation scenarios in this
package. On clean samples the standardized path moves by 0.02 to 0.05
per grid step, essentially independent of n, so the walk accepts
alpha = 0 almost always. Contaminated paths are unstable in one of two
ways: mean-shifted outliers at moderate design points push the early
steps to 0.4 or more, while outliers planted at extreme design points
drag the estimates gradually, with steps climbing from about 0.06
until the fit sheds the outliers in one large jump. In both regimes
the path falls back to the clean level right after the jump, so 0.06
rejects the pre-jump path and selects the first alpha past it.
"""

from dataclasses import dataclass, field

import numpy as np

from .estimators import Estimator, EstimatorKind, FitOptions, fit

__all__ = ["TuningConfig", "GridPoint", "TuningResult", "select_alpha"]


@dataclass(frozen=True)
class TuningConfig:
    grid_step: float = 0.02
    alpha_max: float = 0.5
    stability_window: int = 3
    stability_threshold: float = 0.06

    def __post_init__(self):
        if not 0.0 < self.grid_step <= self.alpha_max <= 1.0:
            raise ValueError("need 0 < grid_step <= alpha_max <= 1")
        if self.stability_window < 2:
            raise ValueError("stability window must be at least 2")
        if self.stability_threshold <= 0:
            raise ValueError("stability threshold must be positive")

    def grid(self):
        k = int(round(self.alpha_max / self.grid_step))
        return np.round(np.arange(k + 1) * self.grid_step, 10)


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    converged: bool
    theta: np.ndarray
    sqv: float  # variation from the previous grid point; nan for the first


@dataclass(frozen=True)
class TuningResult:
    alpha: float
    stable: bool
    trace: tuple


def select_alpha(model, y, kind, config=None, options=None):
    """Walk the alpha grid and return the smallest stable alpha.

    Parameters
    ----------
    model : ModelSpec
    y : ndarray
    kind : EstimatorKind
        LSMLE or LMDPDE (the kind whose path is examined).
    config : TuningConfig, optional
    options : FitOptions, optional
        Passed to every grid fit (starting points are overridden by the
        warm-start chain).

    Returns
    -------
    TuningResult
        ``alpha`` is always a grid point; ``stable`` is False when the
        walk ran out of grid or the baseline fit failed, in which case
        alpha is 0.
    """
    if kind == EstimatorKind.MLE:
        raise ValueError("tuning selects alpha for a robust estimator kind")
    config = config or TuningConfig()
    options = options or FitOptions()
    grid = config.grid()
    threshold = config.stability_threshold
    window = config.stability_window
    p = model.p

    base = fit(model, y, Estimator(kind, 0.0), options)
    trace = [GridPoint(0.0, not base.failed, base.theta.theta.copy(), np.nan)]
    if base.failed:
        return TuningResult(0.0, False, tuple(trace))
    scale = base.standard_errors
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
        return TuningResult(0.0, False, tuple(trace))

    prev_theta = base.theta.theta
    run_start = 0  # grid index where the current low-variation run began
    run_len = 0
    warm = base.theta
    for j in range(1, grid.size):
        alpha = float(grid[j])
        opts = FitOptions(
            max_iterations=options.max_iterations,
            gradient_tolerance=options.gradient_tolerance,
            parameter_tolerance=options.parameter_tolerance,
            starting_point=warm,
        )
        res = fit(model, y, Estimator(kind, alpha), opts)
        if res.failed:
            trace.append(GridPoint(alpha, False, res.theta.theta.copy(),
                                   np.nan))
            run_len = 0
            continue
        sqv = float(np.linalg.norm(
            (res.theta.theta - prev_theta) / scale) / np.sqrt(p))
        trace.append(GridPoint(alpha, True, res.theta.theta.copy(), sqv))
        warm = res.theta
        prev_theta = res.theta.theta
        if sqv < threshold:
            if run_len == 0:
                run_start = j - 1
            run_len += 1
            if run_len >= window:
                return TuningResult(float(grid[run_start]), True,
                                    tuple(trace))
        else:
            run_len = 0
    return TuningResult(0.0, False, tuple(trace))
