import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats as sps

from conftest import TESTED
from dpmest.data import Dataset, ScenarioSpec, generate_scenario
from dpmest.errors import UnsupportedDimensionError, ValidationError
from dpmest.estimators import PsiConfig, RestrictedSpec, fit_mallows, fit_restricted
from dpmest.inference import TestResult as InferenceResult
from dpmest.inference import (
    dp_confidence_interval,
    dp_test,
    level_functional,
    lr_statistic,
    score_statistic,
    wald_statistic,
)
from dpmest.privacy import BudgetLedger, PrivacyParams
from dpmest.numerics import chi2_quantile

PARAMS = PrivacyParams(1.0, 1e-4)


def _result_with_pvalue(p, k=1, mode="corrected"):
    return InferenceResult(
        kind="wald",
        statistic=0.0,
        k=k,
        alpha_hat=p,
        dp_pvalue=SimpleNamespace(value=p),
        q_recovered=0.0,
        level_report=None,
        mode=mode,
    )


class TestWald:
    def test_zero_on_restricted_fit(self, reg_dataset):
        cfg = PsiConfig(weight="inverse-norm")
        restr = fit_restricted(reg_dataset, cfg, TESTED)
        assert wald_statistic(restr, TESTED) == 0.0

    def test_k1_hand_formula(self, reg_fit):
        r1 = RestrictedSpec(tested_indices=(3,))
        w = wald_statistic(reg_fit, r1)
        expect = reg_fit.theta_hat[3] ** 2 / reg_fit.V_hat[3, 3]
        assert w == pytest.approx(expect, rel=1e-12)

    def test_empty_set_rejected(self, reg_fit):
        with pytest.raises(ValidationError):
            wald_statistic(reg_fit, RestrictedSpec(tested_indices=()))

    def test_rescaling_invariance(self):
        gen = np.random.Generator(np.random.Philox(77))
        z = gen.normal(size=80)
        y = 1.0 + 0.5 * z + gen.normal(size=80)
        cfg = PsiConfig(c=1e6, weight="none")
        r1 = RestrictedSpec(tested_indices=(1,))
        d1 = Dataset(x=np.column_stack([np.ones(80), z]), y=y)
        d2 = Dataset(x=np.column_stack([np.ones(80), 2.0 * z]), y=y)
        w1 = wald_statistic(fit_mallows(d1, cfg), r1)
        w2 = wald_statistic(fit_mallows(d2, cfg), r1)
        assert w1 == pytest.approx(w2, rel=1e-8)


class TestScoreAndLr:
    def test_score_components(self, reg_dataset, reg_fit):
        cfg = PsiConfig(weight="inverse-norm")
        restr = fit_restricted(reg_dataset, cfg, TESTED)
        stat = score_statistic(restr, TESTED, fit_full_structure=reg_fit)
        assert stat >= 0.0
        # the tested-block mean score at the restricted fit drives the statistic
        z = restr.psi_values[:, [3, 4]].mean(axis=0)
        assert stat == 0.0 if np.allclose(z, 0.0) else stat > 0.0

    def test_score_empty_set(self, reg_fit):
        assert score_statistic(reg_fit, RestrictedSpec(tested_indices=())) == 0.0

    def test_lr_raw_nonpositive(self, reg_dataset, reg_fit):
        cfg = PsiConfig(weight="inverse-norm")
        restr = fit_restricted(reg_dataset, cfg, TESTED)
        out = lr_statistic(reg_fit, restr)
        assert out["S"] <= 1e-12
        assert out["S_tilde"] >= 0.0

    def test_lr_requires_tested_indices(self, reg_fit):
        with pytest.raises(ValidationError):
            lr_statistic(reg_fit, reg_fit)


class TestLevelFunctional:
    def test_trivials(self):
        assert level_functional(0.0, 100, 2) == 1.0
        assert level_functional(10.0, 1000, 2) == pytest.approx(0.0, abs=1e-12)

    def test_quantile_roundtrip(self):
        for k in (1, 2, 5):
            n = 400
            stat = chi2_quantile(k, 0.95) / n
            assert level_functional(stat, n, k) == pytest.approx(0.05, abs=1e-8)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            level_functional(-0.1, 100, 1)


class TestDpTest:
    def test_zero_noise_roundtrip(self, reg_dataset):
        cfg = PsiConfig(weight="inverse-norm")
        for kind in ("wald", "score", "lr"):
            res = dp_test(
                reg_dataset, cfg, TESTED, kind=kind, params=PARAMS, seed=5, gamma_override=0.0
            )
            assert float(res.dp_pvalue.value) == pytest.approx(res.alpha_hat, abs=1e-15)
            assert res.q_recovered == pytest.approx(1000 * res.statistic, rel=1e-8)
            assert res.alpha_hat == level_functional(res.statistic, 1000, 2)

    def test_deterministic(self, reg_dataset):
        cfg = PsiConfig(weight="inverse-norm")
        a = dp_test(reg_dataset, cfg, TESTED, params=PARAMS, seed=5)
        b = dp_test(reg_dataset, cfg, TESTED, params=PARAMS, seed=5)
        c = dp_test(reg_dataset, cfg, TESTED, params=PARAMS, seed=6)
        assert float(a.dp_pvalue.value) == float(b.dp_pvalue.value)
        assert float(a.dp_pvalue.value) != float(c.dp_pvalue.value)

    def test_permutation_invariance(self, reg_dataset):
        cfg = PsiConfig(weight="inverse-norm")
        gen = np.random.Generator(np.random.Philox(3))
        perm = gen.permutation(reg_dataset.n)
        shuffled = Dataset(
            x=reg_dataset.x[perm],
            y=reg_dataset.y[perm],
            column_names=reg_dataset.column_names,
            intercept_added=reg_dataset.intercept_added,
        )
        a = dp_test(reg_dataset, cfg, TESTED, params=PARAMS, seed=5)
        b = dp_test(shuffled, cfg, TESTED, params=PARAMS, seed=5)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-9)
        assert float(a.dp_pvalue.value) == pytest.approx(float(b.dp_pvalue.value), rel=1e-9)

    def test_ledger_single_entry(self, reg_dataset):
        led = BudgetLedger()
        dp_test(reg_dataset, None, TESTED, params=PARAMS, seed=5, ledger=led)
        assert len(led.entries) == 1
        assert led.totals == (1.0, 1e-4)

    def test_paper_literal_mode(self, reg_dataset):
        res = dp_test(
            reg_dataset, None, TESTED, params=PARAMS, seed=5, mode="paper-literal",
            gamma_override=0.0,
        )
        # paper-literal back-maps the released value directly
        assert res.q_recovered == pytest.approx(
            chi2_quantile(2, min(res.alpha_hat, 1.0 - 1e-12)), rel=1e-10
        )

    def test_invalid_arguments(self, reg_dataset):
        with pytest.raises(ValidationError):
            dp_test(reg_dataset, None, TESTED, kind="f-test", params=PARAMS)
        with pytest.raises(ValidationError):
            dp_test(reg_dataset, None, TESTED, params=None)
        with pytest.raises(ValidationError):
            dp_test(reg_dataset, None, TESTED, params=PARAMS, mode="bogus")


class TestConfidenceInterval:
    def test_hand_value(self):
        ci = dp_confidence_interval(_result_with_pvalue(0.05))
        assert ci[1] == pytest.approx(1.959963984540054, abs=1e-3)
        assert ci[0] == -ci[1]

    def test_clamped_pvalue_one(self):
        ci = dp_confidence_interval(_result_with_pvalue(1.0))
        assert ci == (0.0, 0.0)

    def test_k2_rejected(self):
        with pytest.raises(UnsupportedDimensionError):
            dp_confidence_interval(_result_with_pvalue(0.05, k=2))

    def test_attached_for_k1(self, reg_dataset):
        r1 = RestrictedSpec(tested_indices=(4,))
        res = dp_test(reg_dataset, None, r1, params=PARAMS, seed=5, gamma_override=0.0)
        assert res.ci is not None
        assert res.ci == dp_confidence_interval(res)


class TestNullDistributions:
    def test_wald_ks_against_chi2(self, null_reps):
        ks = sps.kstest(null_reps["nW"], lambda q: sps.chi2.cdf(q, df=2))
        assert ks.statistic < 0.05

    def test_score_quantile(self, null_reps):
        q95 = float(np.quantile(null_reps["nR"], 0.95))
        target = chi2_quantile(2, 0.95)
        assert abs(q95 - target) / target < 0.10

    def test_lr_tracks_wald(self, null_reps):
        ratio = null_reps["S_tilde"] / np.maximum(null_reps["W"], 1e-300)
        assert np.all(ratio > 0.5)
        assert np.all(ratio < 2.0)

    def test_alpha_uniform_mean(self, null_reps):
        # under the null the level functional is approximately Uniform(0,1)
        assert abs(float(np.mean(null_reps["alpha"])) - 0.5) < 0.03
