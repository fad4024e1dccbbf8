"""Robust estimation and inference for beta regression.

The response is modeled on the logit scale: if y follows a beta law
with mean mu and precision phi, the transformed variable logit(y) has
an exponential-family density whose log stays bounded over the whole
real line. Downweighting observations through powers of that density
gives two robust alternatives to maximum likelihood, one built on a
reweighted likelihood surface (LSMLE) and one on a density power
divergence (LMDPDE), both with a tuning constant alpha trading
efficiency for outlier resistance and both reducing exactly to maximum
likelihood at alpha = 0.

The package covers fitting (``fit``), sandwich covariances and
Wald-type tests (``sandwich``, ``wald_test``), data-driven selection of
alpha (``select_alpha``), residual envelopes (``simulated_envelope``),
and the Monte Carlo scenarios used to study all of the above
(``betarob.simulation``). The ``betarob`` console script exposes the
same operations on CSV files.
"""

from ._version import __version__
from .density import (PerObsMoments, beta_logpdf, egb_logpdf, k_integral,
                      log_k_integral, moments, sample_beta)
from .diagnostics import (EnvelopeBands, leverage, residuals_swr2,
                          simulated_envelope)
from .estimators import (Estimator, EstimatorKind, FitOptions, FitResult,
                         estimating_function, fit, lmdpde_objective,
                         loglik, lsmle_objective, starting_values)
from .inference import (HypothesisSpec, SandwichParts, TestResult,
                        influence, observation_weights, sandwich,
                        wald_test)
from .model import (LINKS, ModelSpec, ParamVector, get_link,
                    transform_response)
from .simulation import (Dataset, ExperimentReport, ScenarioConfig,
                         generate_scenario, run_empirical_levels,
                         run_estimator_comparison, run_failure_rate,
                         scenario_hypotheses, scenario_truth)
from .specfun import QuadratureSpec, digamma, integrate, log_beta, trigamma
from .tuning import TuningConfig, TuningResult, select_alpha

__all__ = [
    "__version__",
    "PerObsMoments", "beta_logpdf", "egb_logpdf", "k_integral",
    "log_k_integral", "moments", "sample_beta",
    "EnvelopeBands", "leverage", "residuals_swr2", "simulated_envelope",
    "Estimator", "EstimatorKind", "FitOptions", "FitResult",
    "estimating_function", "fit", "lmdpde_objective", "loglik",
    "lsmle_objective", "starting_values",
    "HypothesisSpec", "SandwichParts", "TestResult", "influence",
    "observation_weights", "sandwich", "wald_test",
    "LINKS", "ModelSpec", "ParamVector", "get_link", "transform_response",
    "Dataset", "ExperimentReport", "ScenarioConfig", "generate_scenario",
    "run_empirical_levels", "run_estimator_comparison", "run_failure_rate",
    "scenario_hypotheses", "scenario_truth",
    "QuadratureSpec", "digamma", "integrate", "log_beta", "trigamma",
    "TuningConfig", "TuningResult", "select_alpha",
]
