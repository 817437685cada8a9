import math

import numpy as np
import pytest

from dpmest.data import Dataset
from dpmest.errors import DegenerateScaleError, OracleBudgetError, ValidationError
from dpmest.estimators import PsiConfig, fit_location_scale, fit_truncated_mle
from dpmest.numerics import rng_stream
from dpmest.oracle import (
    DomainGrid,
    brute_local_sensitivity,
    brute_smooth_sensitivity,
    finite_difference_if,
    grid_fit_oracle,
    model_functional,
)
from dpmest.sensitivity import empirical_influence

UNIT_GRID = DomainGrid(points=(0.0, 1.0))


class TestDomainGrid:
    def test_validation(self):
        with pytest.raises(ValidationError):
            DomainGrid(points=(0.0,))
        with pytest.raises(ValidationError):
            DomainGrid(points=(1.0, 0.0))
        with pytest.raises(ValidationError):
            DomainGrid(points=(0.0, math.inf))
        with pytest.raises(ValidationError):
            DomainGrid(points=tuple(float(i) for i in range(40)))

    def test_span(self):
        assert DomainGrid(points=(-1.0, 0.5, 2.0)).span == 3.0


class TestBruteLocal:
    def test_mean_closed_form(self):
        # moving one of n rows across a unit span moves the mean by exactly 1/n
        f = model_functional("mean")
        for n in (2, 5, 10):
            res = brute_local_sensitivity(f, np.zeros(n), UNIT_GRID)
            assert res.value == pytest.approx(1.0 / n, rel=1e-15)

    def test_constant_functional(self):
        f = lambda v, case_weights=None: np.array([1.0])
        res = brute_local_sensitivity(f, np.zeros(5), UNIT_GRID)
        assert res.value == 0.0

    def test_permutation_invariance(self):
        f = model_functional("mean")
        gen = rng_stream(41, 0)
        v = gen.uniform(0.0, 1.0, size=6)
        grid = DomainGrid(points=(0.0, 0.5, 1.0))
        a = brute_local_sensitivity(f, v, grid).value
        b = brute_local_sensitivity(f, v[::-1], grid).value
        assert a == pytest.approx(b, rel=1e-15)

    def test_budget(self):
        f = model_functional("mean")
        with pytest.raises(OracleBudgetError):
            brute_local_sensitivity(f, np.zeros(11), UNIT_GRID)

    def test_matches_ges_path_huber_location(self):
        # exhaustive one-replacement sensitivity against the linearized bound
        # 2 gamma / n; at n=5 the linearization slack is real, so agreement
        # within 50% either way is the honest check
        grid = DomainGrid(points=tuple(np.linspace(-2.0, 2.0, 9)))
        f = model_functional("huber-location")
        for seed in range(6):
            gen = rng_stream(500 + seed, 0)
            v = np.round(gen.uniform(-2.0, 2.0, size=5), 2)
            fit = fit_truncated_mle(Dataset(x=v[:, None]), "gaussian-mean", c=1.345)
            gamma = 1.345 / fit.M_hat[0, 0]
            ls = brute_local_sensitivity(f, v, grid).value
            ratio = ls / (2.0 * gamma / 5.0)
            assert 0.5 <= ratio <= 1.5


class TestBruteSmooth:
    def test_mean_closed_form(self):
        # every neighbor of an on-grid dataset still has LS = 1/n, so the
        # smooth value is attained at hamming distance 0
        f = model_functional("mean")
        out = brute_smooth_sensitivity(f, np.zeros(5), 0.5, UNIT_GRID, max_hamming=2)
        assert out["value"] == pytest.approx(0.2, rel=1e-15)
        assert out["truncation_bound"] == pytest.approx(math.exp(-0.5 * 3) * 1.0, rel=1e-15)

    def test_dominates_local(self):
        f = model_functional("mean")
        gen = rng_stream(42, 0)
        grid = DomainGrid(points=(0.0, 0.5, 1.0))
        for _ in range(5):
            v = grid.points[0] + np.asarray(grid.points)[
                gen.integers(0, 3, size=5)
            ]
            ls = brute_local_sensitivity(f, v, grid).value
            ss = brute_smooth_sensitivity(f, v, 0.3, grid, max_hamming=1)["value"]
            assert ss >= ls - 1e-15

    def test_monotone_in_xi(self):
        f = model_functional("mean")
        gen = rng_stream(43, 0)
        v = gen.uniform(0.0, 1.0, size=4)
        grid = DomainGrid(points=(0.0, 1.0))
        prev = math.inf
        for xi in (0.1, 0.5, 1.0, 3.0):
            out = brute_smooth_sensitivity(f, v, xi, grid, max_hamming=2)["value"]
            assert out <= prev + 1e-15
            prev = out

    def test_budget_and_validation(self):
        f = model_functional("mean")
        with pytest.raises(OracleBudgetError):
            brute_smooth_sensitivity(f, np.zeros(7), 0.5, UNIT_GRID, max_hamming=1)
        with pytest.raises(ValidationError):
            brute_smooth_sensitivity(f, np.zeros(4), 0.0, UNIT_GRID, max_hamming=1)


class TestFiniteDifference:
    def test_mean_exact(self):
        f = model_functional("mean")
        gen = rng_stream(44, 0)
        v = gen.normal(size=30)
        m = float(np.mean(v))
        for obs in (-1.0, 0.3, 2.5):
            fd = finite_difference_if(f, v, obs, 1e-4)
            assert fd[0] == pytest.approx(obs - m, rel=1e-9)

    def test_error_linear_in_step(self):
        f = model_functional("huber-location")
        gen = rng_stream(9, 0)
        v = gen.normal(size=40)
        fit = fit_truncated_mle(Dataset(x=v[:, None]), "gaussian-mean", c=1.345)
        analytic = empirical_influence(fit, 1.7)
        slopes = []
        for t in (1e-4, 1e-5, 1e-6):
            fd = finite_difference_if(f, v, 1.7, t)
            slopes.append(float(np.abs(fd - analytic)[0]) / t)
        assert max(slopes) <= 2.0 * min(slopes)
        assert slopes[-1] * 1e-6 < 1e-4

    def test_step_validation(self):
        f = model_functional("mean")
        with pytest.raises(ValidationError):
            finite_difference_if(f, np.zeros(5), 0.0, 0.5)


class TestGridFitOracle:
    def test_agrees_with_solver(self):
        for seed in range(5):
            gen = rng_stream(600 + seed, 0)
            v = gen.normal(size=60) * (1.0 + 0.2 * seed) + seed
            fit = fit_location_scale(v, PsiConfig())
            mu, sig = grid_fit_oracle(v)
            assert mu == pytest.approx(fit.theta_hat[0], abs=1e-4)
            assert sig == pytest.approx(fit.sigma_hat, abs=1e-4)

    def test_constant_data(self):
        with pytest.raises(DegenerateScaleError):
            grid_fit_oracle(np.ones(20))


def test_unknown_model():
    with pytest.raises(ValidationError):
        model_functional("median")
