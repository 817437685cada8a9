import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmest.data import Dataset, ScenarioSpec, generate_scenario
from dpmest.errors import (
    DegenerateScaleError,
    RegularityError,
    SeparationError,
    ValidationError,
)
from dpmest.estimators import (
    HuberLocationScale,
    MallowsRegressor,
    PsiConfig,
    RestrictedSpec,
    RobustLogisticRegressor,
    TruncatedScoreMLE,
    fisher_kappa,
    fit_location_scale,
    fit_mallows,
    fit_restricted,
    fit_robust_logistic,
    fit_truncated_mle,
    huber_chi,
    huber_psi,
    huber_psi_prime,
    huber_rho,
    row_weights,
)
from dpmest.numerics import rng_stream
from dpmest.oracle import grid_fit_oracle

# Adaptive quadrature of int min(c^2, x^2) phi(x) dx at c = 1.345.
KAPPA_1345 = 0.71016454826904853


class TestPrimitives:
    def test_zero(self):
        assert huber_psi(0.0, 1.345) == 0.0
        assert huber_chi(0.0, 1.345) == pytest.approx(-fisher_kappa(1.345), abs=1e-15)

    def test_clipping(self):
        assert huber_psi(10.0, 1.345) == 1.345
        assert huber_psi_prime(10.0, 1.345) == 0.0

    def test_odd_symmetry(self):
        assert huber_psi(-10.0, 1.345) == -huber_psi(10.0, 1.345)

    def test_rho(self):
        assert huber_rho(1.0, 2.0) == 0.5
        assert huber_rho(5.0, 2.0) == pytest.approx(2.0 * 5.0 - 2.0, abs=1e-15)

    def test_kink_derivative_zero(self):
        assert huber_psi_prime(1.345, 1.345) == 0.0


class TestFisherKappa:
    def test_limits(self):
        assert fisher_kappa(50.0) == pytest.approx(1.0, abs=1e-10)
        assert fisher_kappa(1e-8) == pytest.approx(0.0, abs=1e-10)

    def test_quadrature_oracle(self):
        k = fisher_kappa(1.345)
        assert 0.70 < k < 0.72
        assert k == pytest.approx(KAPPA_1345, abs=1e-8)

    def test_monotone(self):
        cs = np.linspace(0.1, 5.0, 30)
        ks = [fisher_kappa(c) for c in cs]
        assert all(a < b for a, b in zip(ks, ks[1:]))


class TestLocationScale:
    def test_symmetric_three_points(self):
        fit = fit_location_scale(np.array([-2.0, 0.0, 2.0]))
        assert fit.theta_hat[0] == pytest.approx(0.0, abs=1e-10)

    def test_constant_data(self):
        with pytest.raises(DegenerateScaleError):
            fit_location_scale(np.array([5.0, 5.0, 5.0, 5.0]))

    def test_grid_oracle(self):
        x = rng_stream(31, 0).normal(size=20)
        fit = fit_location_scale(x, PsiConfig(c=1.345))
        mu, sig = grid_fit_oracle(x, c=1.345)
        assert fit.theta_hat[0] == pytest.approx(mu, abs=1e-4)
        assert fit.sigma_hat == pytest.approx(sig, abs=1e-4)

    def test_equation_residual(self):
        x = rng_stream(32, 0).normal(size=50) * 2.0 + 3.0
        fit = fit_location_scale(x)
        c = fit.cfg.c_eff
        r = (x - fit.theta_hat[0]) / fit.sigma_hat
        assert abs(float(np.mean(huber_psi(r, c)))) < 1e-8
        assert abs(float(np.mean(huber_chi(r, c)))) < 1e-8

    def test_affine_equivariance(self):
        x = rng_stream(33, 0).normal(size=40)
        f0 = fit_location_scale(x)
        f1 = fit_location_scale(-2.5 * x + 7.0)
        assert f1.theta_hat[0] == pytest.approx(-2.5 * f0.theta_hat[0] + 7.0, abs=1e-8)
        assert f1.sigma_hat == pytest.approx(2.5 * f0.sigma_hat, abs=1e-8)

    def test_m_hat_symmetric(self):
        x = rng_stream(34, 0).normal(size=30)
        fit = fit_location_scale(x)
        assert np.array_equal(fit.M_hat, fit.M_hat.T)


def _scenario_fit(n, seed, c=1.345, rate=0.0, weight="inverse-norm"):
    kind = "regression-contaminated" if rate > 0 else "regression-normal"
    d = generate_scenario(ScenarioSpec(kind=kind, n=n, seed=seed, contamination_rate=rate))
    cfg = PsiConfig(c=c, weight=weight)
    return d, fit_mallows(d, cfg)


class TestMallows:
    def test_ols_reduction(self):
        gen = rng_stream(41, 0)
        x = np.column_stack([np.ones(60), gen.normal(size=(60, 2))])
        y = x @ np.array([1.0, 2.0, -1.0]) + gen.normal(size=60)
        d = Dataset(x=x, y=y)
        fit = fit_mallows(d, PsiConfig(c=1e6, weight="none"))
        ols = np.linalg.lstsq(x, y, rcond=None)[0]
        assert np.max(np.abs(fit.theta_hat - ols)) < 1e-8

    def test_permutation_invariance(self):
        d, fit = _scenario_fit(200, 42)
        perm = rng_stream(42, 9).permutation(200)
        dp = Dataset(x=d.x[perm], y=d.y[perm], intercept_added=True)
        fp = fit_mallows(dp, PsiConfig(weight="inverse-norm"))
        assert np.max(np.abs(fit.theta_hat - fp.theta_hat)) < 1e-12
        assert abs(fit.sigma_hat - fp.sigma_hat) < 1e-12

    def test_robust_beats_ols_under_contamination(self):
        beta_full = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
        d = generate_scenario(
            ScenarioSpec(kind="regression-contaminated", n=500, seed=43, contamination_rate=0.01)
        )
        rob = fit_mallows(d, PsiConfig(c=1.345, weight="inverse-norm"))
        ols = fit_mallows(d, PsiConfig(c=1e6, weight="none"))
        assert np.linalg.norm(rob.theta_hat - beta_full) < np.linalg.norm(
            ols.theta_hat - beta_full
        )

    def test_regression_equivariance(self):
        d, fit = _scenario_fit(150, 44)
        delta = np.array([0.5, -1.0, 0.25, 2.0, -0.5])
        d2 = Dataset(x=d.x, y=d.y + d.x @ delta, intercept_added=True)
        fit2 = fit_mallows(d2, PsiConfig(weight="inverse-norm"))
        assert np.max(np.abs(fit2.theta_hat - fit.theta_hat - delta)) < 1e-8

    def test_bounded_score(self):
        d, fit = _scenario_fit(300, 45)
        cfg = fit.cfg
        k_tilde = float(np.max(fit.row_w * fit.row_xnorm))
        norms = np.sqrt(np.sum(np.square(fit.psi_values), axis=1))
        assert float(np.max(norms)) <= cfg.c * k_tilde + 1e-12

    def test_equation_residual(self):
        d, fit = _scenario_fit(300, 46)
        assert float(np.max(np.abs(np.mean(fit.psi_joint, axis=0)))) < 1e-8

    def test_psd_plug_ins(self):
        from dpmest.numerics import sym_eigen_extremes

        d, fit = _scenario_fit(120, 47)
        for mat in (fit.M_hat, fit.Q_hat):
            emin, _ = sym_eigen_extremes(mat)
            assert emin >= -1e-10

    def test_rank_deficiency(self):
        gen = rng_stream(48, 0)
        col = gen.normal(size=50)
        x = np.column_stack([np.ones(50), col, col])
        d = Dataset(x=x, y=gen.normal(size=50))
        with pytest.raises(RegularityError, match="regularity check failed"):
            fit_mallows(d, PsiConfig(weight="inverse-norm"))
        # The ridge flag lifts the rank failure.
        fit = fit_mallows(d, PsiConfig(weight="inverse-norm"), ridge=True)
        assert fit.converged

    def test_zero_residuals(self):
        x = np.column_stack([np.ones(20), np.arange(20.0)])
        y = x @ np.array([1.0, 2.0])
        with pytest.raises(DegenerateScaleError):
            fit_mallows(Dataset(x=x, y=y), PsiConfig(weight="none"))


def _logistic_mle_newton(x, y, iters=200):
    """Independent textbook Newton iteration for the logistic MLE."""
    beta = np.zeros(x.shape[1])
    for _ in range(iters):
        eta = x @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = x.T @ (y - p)
        hess = x.T @ (x * (p * (1 - p))[:, None])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    return beta


class TestLogistic:
    def test_mle_reduction(self):
        gen = rng_stream(51, 0)
        x = np.column_stack([np.ones(30), gen.normal(size=(30, 2))])
        eta = x @ np.array([0.3, 1.0, -0.7])
        y = (gen.random(30) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        d = Dataset(x=x, y=y)
        fit = fit_robust_logistic(d, PsiConfig(family="identity", weight="none"))
        oracle = _logistic_mle_newton(x, y)
        assert np.max(np.abs(fit.theta_hat - oracle)) < 1e-6

    def test_symmetric_design_zero_intercept(self):
        gen = rng_stream(52, 0)
        xr = gen.normal(size=(40, 2))
        x = np.column_stack([np.ones(80), np.vstack([xr, -xr])])
        y0 = (gen.random(40) < 0.5).astype(float)
        y = np.concatenate([y0, 1.0 - y0])
        d = Dataset(x=x, y=y)
        fit = fit_robust_logistic(d, PsiConfig(weight="inverse-norm"))
        assert abs(fit.theta_hat[0]) < 1e-8

    def test_separation(self):
        x = np.column_stack([np.ones(10), np.arange(10.0) - 4.5])
        y = (x[:, 1] > 0).astype(float)
        with pytest.raises(SeparationError):
            fit_robust_logistic(Dataset(x=x, y=y), PsiConfig(weight="none"))

    def test_binary_required(self):
        x = np.ones((10, 1))
        with pytest.raises(ValidationError):
            fit_robust_logistic(Dataset(x=x, y=np.linspace(0, 2, 10)))

    def test_equation_residual(self):
        d = generate_scenario(ScenarioSpec(kind="logistic", n=300, seed=53))
        fit = fit_robust_logistic(d, PsiConfig(weight="inverse-norm"))
        assert float(np.max(np.abs(np.mean(fit.psi_joint, axis=0)))) < 1e-8


class TestTruncated:
    def test_untruncated_is_mean(self):
        x = rng_stream(61, 0).normal(size=25)
        fit = fit_truncated_mle(Dataset(x=x[:, None]), "gaussian-mean", c=1e9)
        assert fit.theta_hat[0] == pytest.approx(float(np.mean(x)), abs=1e-10)

    def test_outlier_resistance(self):
        x = np.append(rng_stream(62, 0).normal(size=20), 1e6)
        fit = fit_truncated_mle(Dataset(x=x[:, None]), "gaussian-mean", c=2.0)
        assert abs(fit.theta_hat[0]) < 1.0
        assert float(np.mean(x)) > 1e4

    def test_regression_unclipped_is_ols(self):
        gen = rng_stream(63, 0)
        x = np.column_stack([np.ones(40), gen.normal(size=40)])
        y = x @ np.array([0.5, 1.0]) + 0.01 * gen.normal(size=40)
        d = Dataset(x=x, y=y)
        fit = fit_truncated_mle(d, "regression", c=1e9)
        ols = np.linalg.lstsq(x, y, rcond=None)[0]
        assert np.max(np.abs(fit.theta_hat - ols)) < 1e-8

    def test_score_norm_bounded(self):
        gen = rng_stream(64, 0)
        x = np.column_stack([np.ones(50), gen.normal(size=50)])
        y = x @ np.array([0.0, 1.0]) + gen.normal(size=50) * 3.0
        fit = fit_truncated_mle(Dataset(x=x, y=y), "regression", c=2.0)
        norms = np.sqrt(np.sum(np.square(fit.psi_values), axis=1))
        assert float(np.max(norms)) <= 2.0 + 1e-10


class TestRestricted:
    def test_empty_set_is_unrestricted(self):
        d, fit = _scenario_fit(200, 71)
        r = RestrictedSpec(tested_indices=())
        restr = fit_restricted(d, PsiConfig(weight="inverse-norm"), r)
        assert np.array_equal(restr.theta_hat, fit.theta_hat)

    def test_tested_components_zero(self):
        d, _ = _scenario_fit(200, 72)
        r = RestrictedSpec(tested_indices=(3, 4))
        restr = fit_restricted(d, PsiConfig(weight="inverse-norm"), r)
        assert restr.theta_hat[3] == 0.0
        assert restr.theta_hat[4] == 0.0

    def test_close_to_full_under_null(self):
        n = 2000
        d = generate_scenario(ScenarioSpec(kind="regression-normal", n=n, seed=73))
        cfg = PsiConfig(weight="inverse-norm")
        full = fit_mallows(d, cfg)
        restr = fit_restricted(d, cfg, RestrictedSpec(tested_indices=(3, 4)))
        assert np.linalg.norm(full.theta_hat - restr.theta_hat) < 5.0 / math.sqrt(n)

    def test_intercept_rejected(self):
        d, _ = _scenario_fit(100, 74)
        with pytest.raises(ValidationError):
            fit_restricted(d, PsiConfig(weight="inverse-norm"), RestrictedSpec(tested_indices=(0,)))

    def test_logistic_restricted(self):
        d = generate_scenario(ScenarioSpec(kind="logistic", n=400, seed=75))
        r = RestrictedSpec(tested_indices=(3,))
        restr = fit_restricted(d, PsiConfig(weight="inverse-norm"), r, model="logistic")
        assert restr.theta_hat[3] == 0.0
        assert restr.converged


class TestSklearnApi:
    def test_mallows_regressor(self):
        gen = rng_stream(81, 0)
        x = gen.normal(size=(80, 3))
        y = 1.0 + x @ np.array([1.0, 0.0, -0.5]) + gen.normal(size=80)
        est = MallowsRegressor().fit(x, y)
        assert est.coef_.shape == (3,)
        assert abs(est.intercept_ - 1.0) < 0.5
        pred = est.predict(x)
        assert pred.shape == (80,)
        assert set(est.get_params()) >= {"c", "weight", "weight_cap", "fit_intercept"}

    def test_location_scale_estimator(self):
        x = rng_stream(82, 0).normal(size=60) + 2.0
        est = HuberLocationScale().fit(x)
        assert abs(est.location_ - 2.0) < 0.5
        assert est.scale_ > 0

    def test_logistic_estimator(self):
        gen = rng_stream(83, 0)
        x = gen.normal(size=(100, 2))
        y = (gen.random(100) < 1.0 / (1.0 + np.exp(-x[:, 0]))).astype(float)
        est = RobustLogisticRegressor().fit(x, y)
        proba = est.predict_proba(x)
        assert proba.shape == (100, 2)
        assert np.allclose(proba.sum(axis=1), 1.0)

    def test_truncated_estimator(self):
        x = rng_stream(84, 0).normal(size=50)
        est = TruncatedScoreMLE(model="gaussian-mean").fit(x)
        assert abs(est.location_) < 0.5


@given(st.floats(-50, 50), st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_psi_properties(r, c):
    v = huber_psi(r, c)
    assert abs(v) <= c + 1e-15
    assert v == -huber_psi(-r, c)
    if abs(r) <= c:
        assert v == r


@given(st.floats(0.05, 20))
@settings(max_examples=50, deadline=None)
def test_kappa_in_unit_interval(c):
    # kappa(c) < 1 holds exactly, but for c beyond ~8 the gap is below one
    # ulp of 1.0, so only <= is checkable in double precision there.
    k = fisher_kappa(c)
    assert 0.0 < k <= 1.0
    if c <= 5.0:
        assert k < 1.0
