import math

import numpy as np
import pytest

from betarob import (Estimator, EstimatorKind, FitOptions, ModelSpec,
                     estimating_function, fit, lmdpde_objective, loglik,
                     lsmle_objective, sample_beta, starting_values)
from betarob.estimators import centering_e, modified_score_u_star, score_u
from betarob.specfun import integrate
from betarob.density import egb_logpdf

from conftest import make_dataset, make_dataset_p4
import oracle_values as ov


def intercept_only(n=3):
    return ModelSpec(np.ones((n, 1)), np.ones((n, 1)))


def replicated_point(y, mu, phi, n=3):
    """Model with n identical rows pinned at (mu, phi) and constant y."""
    model = intercept_only(n)
    theta = np.array([math.log(mu / (1 - mu)), math.log(phi)])
    return model, np.full(n, y), theta


class TestLoglik:
    def test_uniform_point(self):
        model, y, theta = replicated_point(0.5, 0.5, 2.0)
        assert loglik(model, y, theta) == pytest.approx(0.0, abs=1e-12)

    def test_jacobian_identity(self, dataset):
        model, y = dataset
        theta = np.array([-0.8, -1.5, 4.0])
        y_star = np.log(y) - np.log1p(-y)
        mu, phi = model.predictors(theta)
        direct = np.sum(egb_logpdf(y_star, mu, phi)
                        - np.log(y * (1 - y)))
        assert loglik(model, y, theta) == pytest.approx(direct, rel=1e-12)

    def test_matches_scalar_loop(self, dataset):
        model, y = dataset
        theta = np.array([-1.1, -1.9, 4.2])
        mu, phi = model.predictors(theta)
        total = 0.0
        for i in range(model.n):
            a, b = mu[i] * phi[i], (1 - mu[i]) * phi[i]
            ln_b = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
            total += ((a - 1) * math.log(y[i])
                      + (b - 1) * math.log1p(-y[i]) - ln_b)
        assert loglik(model, y, theta) == pytest.approx(total, rel=1e-12)


class TestLmdpdeObjective:
    def test_symmetric_closed_form(self):
        # K = pi/8, h(0) = 1/4, value = pi/8 - 3 * 0.5
        model, y, theta = replicated_point(0.5, 0.5, 2.0)
        val = lmdpde_objective(model, y, theta, 0.5)
        assert val == pytest.approx(math.pi / 8 - 1.5, rel=1e-12)

    def test_oracle_observation(self):
        model, y, theta = replicated_point(0.37, 0.3, 7.5)
        val = lmdpde_objective(model, y, theta, 0.4)
        assert val == pytest.approx(ov.LMDPDE_V_OBS_CASE, rel=1e-11)

    def test_quadrature_equivalent(self):
        model, y, theta = replicated_point(0.37, 0.3, 7.5)
        alpha = 0.4
        k = integrate(lambda t: math.exp(1.4 * egb_logpdf(t, 0.3, 7.5)),
                      -np.inf, np.inf)
        h_a = math.exp(alpha * egb_logpdf(math.log(0.37 / 0.63), 0.3, 7.5))
        expected = k - (1 + alpha) / alpha * h_a
        assert lmdpde_objective(model, y, theta, alpha) == pytest.approx(
            expected, rel=1e-9)

    def test_finite_on_scenario_b_grid(self):
        # mean down to 0.0015 at phi near 148: beta density unbounded,
        # objective still finite for every alpha
        rng = np.random.default_rng(0)
        n = 40
        x = np.column_stack([np.ones(n), rng.uniform(size=n)])
        model = ModelSpec(x, np.ones((n, 1)))
        theta = np.array([-1.0, -5.5, 5.0])
        mu, phi = model.predictors(theta)
        y = sample_beta(mu, phi, rng)
        for alpha in np.arange(0.0, 0.95, 0.1):
            assert np.isfinite(lmdpde_objective(model, y, theta,
                                                float(alpha)))

    def test_alpha_zero_routes_to_mean_log_density(self, dataset):
        model, y = dataset
        theta = np.array([-1.0, -2.0, 4.0])
        y_star = np.log(y) - np.log1p(-y)
        mu, phi = model.predictors(theta)
        expected = -np.mean(egb_logpdf(y_star, mu, phi))
        assert lmdpde_objective(model, y, theta, 0.0) == pytest.approx(
            expected, rel=1e-12)


class TestLsmleObjective:
    def test_alpha_zero_is_transformed_loglik(self, dataset):
        model, y = dataset
        theta = np.array([-0.9, -2.1, 4.1])
        expected = loglik(model, y, theta) + np.sum(np.log(y * (1 - y)))
        assert lsmle_objective(model, y, theta, 0.0) == pytest.approx(
            expected, rel=1e-12)

    def test_alpha_continuity_at_zero(self, dataset):
        model, y = dataset
        theta = np.array([-0.9, -2.1, 4.1])
        at_zero = lsmle_objective(model, y, theta, 0.0)
        near_zero = lsmle_objective(model, y, theta, 1e-6)
        assert abs(near_zero - at_zero) <= 1e-3

    def test_symmetric_closed_form(self):
        # h*(0) = h(0; 0.5, 4) = 6/16; L = (sqrt(6/16) - 1)/0.5 per obs
        model, y, theta = replicated_point(0.5, 0.5, 2.0)
        val = lsmle_objective(model, y, theta, 0.5) / model.n
        assert val == pytest.approx((math.sqrt(6.0 / 16.0) - 1.0) / 0.5,
                                    rel=1e-12)

    def test_oracle_observation(self):
        model, y, theta = replicated_point(0.37, 0.3, 7.5)
        val = lsmle_objective(model, y, theta, 0.4) / model.n
        assert val == pytest.approx(ov.LSMLE_LQ_OBS_CASE, rel=1e-11)

    def test_rejects_bad_alpha(self, dataset):
        model, y = dataset
        theta = np.array([-0.9, -2.1, 4.1])
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                lsmle_objective(model, y, theta, bad)


class TestScoreU:
    def test_symmetric_point(self):
        model, y, theta = replicated_point(0.5, 0.5, 2.0)
        rows = score_u(model, y, theta)
        # mean block zero; precision block (ln 0.5 + 1)/g'(2), g' = 1/phi
        assert rows[:, 0] == pytest.approx(np.zeros(3), abs=1e-12)
        expected = (math.log(0.5) + 1.0) * 2.0
        assert rows[:, 1] == pytest.approx(np.full(3, expected), rel=1e-12)

    def test_sums_to_loglik_gradient(self, dataset_p4):
        model, y = dataset_p4
        theta = np.array([-0.4, 1.0, 2.8, 0.7])
        total = score_u(model, y, theta).sum(axis=0)
        h = 1e-6
        for j in range(4):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (loglik(model, y, tp) - loglik(model, y, tm)) / (2 * h)
            assert total[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_zero_mean_under_model(self):
        model, _, theta = replicated_point(0.37, 0.3, 7.5)
        est = Estimator(EstimatorKind.MLE)
        for j in (0, 1):
            val = integrate(
                lambda t: _score_component(model, theta, t, j)
                * math.exp(egb_logpdf(t, 0.3, 7.5)),
                -np.inf, np.inf)
            assert val == pytest.approx(0.0, abs=1e-9)


def _score_component(model, theta, t, j):
    from betarob.inference import influence
    # raw score for one hypothetical y_star via the U rows
    from betarob.density import moments
    mu, phi = model.predictors(theta)
    m = moments(mu[0], phi[0], 1.0)
    g1 = model.mean_link.d1(mu[0])
    g2 = model.precision_link.d1(phi[0])
    y_dag = -np.logaddexp(0.0, t)
    if j == 0:
        return phi[0] * (t - m.mu_star) / g1
    return (mu[0] * (t - m.mu_star) + (y_dag - m.mu_dagger)) / g2


class TestModifiedScoreUStar:
    def test_alpha_zero_equals_score(self, dataset):
        model, y = dataset
        theta = np.array([-1.0, -2.0, 4.0])
        assert modified_score_u_star(model, y, theta, 0.0) == pytest.approx(
            score_u(model, y, theta), rel=1e-13)

    def test_is_gradient_of_inflated_log_density(self, dataset_p4):
        model, y = dataset_p4
        theta = np.array([-0.4, 1.0, 2.8, 0.7])
        alpha = 0.3
        rows = modified_score_u_star(model, y, theta, alpha)
        y_star = np.log(y) - np.log1p(-y)
        h = 1e-6

        def ln_h_star(t, i):
            mu, phi = model.predictors(t)
            return egb_logpdf(y_star[i], mu[i], phi[i] / (1 - alpha))

        for i in (0, 7, 19):
            for j in range(4):
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                fd = (ln_h_star(tp, i) - ln_h_star(tm, i)) / (2 * h)
                assert rows[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_fisher_consistency(self):
        # integral of U* (h*)^alpha h must vanish componentwise
        model, _, theta = replicated_point(0.37, 0.3, 7.5)
        alpha = 0.3
        mu, phi = 0.3, 7.5
        from betarob.density import moments
        m = moments(mu, phi, 1.0 / (1 - alpha))
        g1 = model.mean_link.d1(np.array([mu]))[0]
        g2 = model.precision_link.d1(np.array([phi]))[0]

        def u_star(t, j):
            y_dag = -np.logaddexp(0.0, t)
            if j == 0:
                return m.phi_scaled * (t - m.mu_star) / g1
            return (mu * (t - m.mu_star) + (y_dag - m.mu_dagger)) / (
                (1 - alpha) * g2)

        for j in (0, 1):
            val = integrate(
                lambda t: u_star(t, j)
                * math.exp(alpha * egb_logpdf(t, mu, phi / (1 - alpha)))
                * math.exp(egb_logpdf(t, mu, phi)),
                -np.inf, np.inf)
            assert val == pytest.approx(0.0, abs=1e-8)


class TestCenteringE:
    def test_alpha_zero_is_zero(self, dataset):
        model, y = dataset
        theta = np.array([-1.0, -2.0, 4.0])
        assert np.max(np.abs(centering_e(model, theta, 0.0))) < 1e-12

    def test_matches_oracle(self):
        model, _, theta = replicated_point(0.37, 0.3, 7.5)
        rows = centering_e(model, theta, 0.3)
        assert rows[0, 0] == pytest.approx(ov.LMDPDE_E1_03_75_A03,
                                           rel=1e-11)
        assert rows[0, 1] == pytest.approx(ov.LMDPDE_E2_03_75_A03,
                                           rel=1e-11)

    def test_symmetric_mean_block_vanishes(self):
        model, _, theta = replicated_point(0.4, 0.5, 2.0)
        rows = centering_e(model, theta, 0.35)
        assert rows[0, 0] == pytest.approx(0.0, abs=1e-13)


class TestEstimatingFunction:
    def test_all_coincide_at_alpha_zero(self, dataset):
        model, y = dataset
        theta = np.array([-1.0, -2.0, 4.0])
        vals = [estimating_function(model, y, theta, Estimator(kind, 0.0))
                for kind in EstimatorKind]
        assert vals[0] == pytest.approx(vals[1], rel=1e-13)
        assert vals[0] == pytest.approx(vals[2], rel=1e-13)

    def test_lsmle_is_objective_gradient(self, dataset_p4):
        model, y = dataset_p4
        theta = np.array([-0.4, 1.0, 2.8, 0.7])
        alpha = 0.3
        est = estimating_function(model, y, theta,
                                  Estimator(EstimatorKind.LSMLE, alpha))
        h = 1e-6
        for j in range(4):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (lsmle_objective(model, y, tp, alpha)
                  - lsmle_objective(model, y, tm, alpha)) / (2 * h)
            assert est[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_lmdpde_is_scaled_objective_gradient(self, dataset_p4):
        model, y = dataset_p4
        theta = np.array([-0.4, 1.0, 2.8, 0.7])
        alpha = 0.3
        est = estimating_function(model, y, theta,
                                  Estimator(EstimatorKind.LMDPDE, alpha))
        n = model.n
        h = 1e-6
        for j in range(4):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (lmdpde_objective(model, y, tp, alpha)
                  - lmdpde_objective(model, y, tm, alpha)) / (2 * h)
            assert est[j] == pytest.approx(-n / (1 + alpha) * fd,
                                           rel=1e-6, abs=1e-8)

    def test_mle_is_loglik_gradient(self, dataset):
        model, y = dataset
        theta = np.array([-1.0, -2.0, 4.0])
        est = estimating_function(model, y, theta,
                                  Estimator(EstimatorKind.MLE))
        h = 1e-6
        for j in range(3):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (loglik(model, y, tp) - loglik(model, y, tm)) / (2 * h)
            assert est[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


class TestStartingValues:
    def test_symmetric_intercept_only(self):
        model = intercept_only(5)
        y = np.array([0.3, 0.7, 0.4, 0.6, 0.5])
        start = starting_values(model, y)
        assert start.beta[0] == pytest.approx(0.0, abs=1e-10)

    def test_degenerate_response_is_finite(self):
        model = intercept_only(10)
        start = starting_values(model, np.full(10, 0.5))
        assert np.all(np.isfinite(start.theta))

    def test_inside_basin(self, dataset):
        model, y = dataset
        result = fit(model, y, Estimator(EstimatorKind.MLE))
        assert result.converged


class TestEstimatorType:
    def test_mle_rejects_nonzero_alpha(self):
        with pytest.raises(ValueError):
            Estimator(EstimatorKind.MLE, 0.3)
        assert Estimator(EstimatorKind.MLE).alpha == 0.0

    def test_alpha_range_checked(self):
        with pytest.raises(ValueError):
            Estimator(EstimatorKind.LSMLE, 1.0)
        with pytest.raises(ValueError):
            Estimator(EstimatorKind.LMDPDE, -0.2)

    def test_kind_values(self):
        assert EstimatorKind("mle") is EstimatorKind.MLE
        assert EstimatorKind("lsmle") is EstimatorKind.LSMLE
        assert EstimatorKind("lmdpde") is EstimatorKind.LMDPDE


class TestFit:
    def test_alpha_zero_matches_mle(self, dataset):
        model, y = dataset
        opts = FitOptions(gradient_tolerance=1e-9)
        ref = fit(model, y, Estimator(EstimatorKind.MLE), opts)
        for kind in (EstimatorKind.LSMLE, EstimatorKind.LMDPDE):
            other = fit(model, y, Estimator(kind, 0.0), opts)
            assert other.converged
            assert other.theta.theta == pytest.approx(ref.theta.theta,
                                                      abs=1e-6)

    @pytest.mark.parametrize("kind,alpha", [
        (EstimatorKind.MLE, 0.0),
        (EstimatorKind.LSMLE, 0.25),
        (EstimatorKind.LMDPDE, 0.25),
    ])
    def test_converges_and_reports(self, dataset, kind, alpha):
        model, y = dataset
        result = fit(model, y, Estimator(kind, alpha))
        assert result.converged
        assert result.gradient_norm <= 1e-6
        assert result.cov_ok
        assert result.standard_errors.shape == (3,)
        assert np.all(result.standard_errors > 0)
        assert not result.failed

    def test_deterministic(self, dataset):
        model, y = dataset
        est = Estimator(EstimatorKind.LSMLE, 0.3)
        a = fit(model, y, est)
        b = fit(model, y, est)
        assert np.array_equal(a.theta.theta, b.theta.theta)

    def test_estimating_equation_solved(self, dataset):
        model, y = dataset
        est = Estimator(EstimatorKind.LMDPDE, 0.4)
        result = fit(model, y, est)
        g = estimating_function(model, y, result.theta.theta, est)
        scale = max(1.0, abs(result.objective))
        assert np.max(np.abs(g)) / scale <= 1e-6

    def test_custom_start(self, dataset):
        model, y = dataset
        ref = fit(model, y, Estimator(EstimatorKind.MLE))
        opts = FitOptions(starting_point=ref.theta)
        again = fit(model, y, Estimator(EstimatorKind.MLE), opts)
        assert again.converged
        assert again.theta.theta == pytest.approx(ref.theta.theta,
                                                  abs=1e-8)

    def test_rejects_boundary_y(self, dataset):
        model, y = dataset
        y = y.copy()
        y[0] = 0.0
        with pytest.raises(ValueError):
            fit(model, y, Estimator(EstimatorKind.MLE))
