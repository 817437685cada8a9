"""Wald, score, and likelihood-ratio-type statistics, the level functional,
private p-values, quantile back-maps, and confidence intervals.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import RegularityError, UnsupportedDimensionError, ValidationError
from .estimators import (
    PsiConfig,
    RestrictedSpec,
    fit_mallows,
    fit_restricted,
    fit_robust_logistic,
    huber_rho,
)
from .numerics import chi2_cdf, chi2_quantile, sym_eigen_extremes, sym_sqrt_psd, symmetrize
from .privacy import DPRelease, release_pvalue
from .sensitivity import (
    SensitivityReport,
    ges_logistic_bound,
    ges_regression_bound,
    level_ges_quadratic,
    level_ges_wald,
)

__all__ = [
    "TestResult",
    "wald_statistic",
    "score_statistic",
    "lr_statistic",
    "level_functional",
    "dp_test",
    "dp_confidence_interval",
]


@dataclass
class TestResult:
    """Outcome of a differentially private test."""

    kind: str
    statistic: float
    k: int
    alpha_hat: float
    dp_pvalue: DPRelease
    q_recovered: float
    level_report: SensitivityReport
    mode: str
    ci: tuple | None = None


def _blocks(mat, idx):
    p = mat.shape[0]
    rest = [j for j in range(p) if j not in idx]
    return (
        mat[np.ix_(rest, rest)],
        mat[np.ix_(rest, idx)],
        mat[np.ix_(idx, rest)],
        mat[np.ix_(idx, idx)],
    )


def _pd_solve(a, b, what):
    a = symmetrize(a)
    emin, emax = sym_eigen_extremes(a)
    if emin <= 1e-12 * max(emax, 1.0):
        raise RegularityError(f"regularity check failed: {what} is near singular")
    return np.linalg.solve(a, b)


def wald_statistic(fit, r):
    """W = T_(2)' V_(22)^{-1} T_(2) with the sandwich plug-in V."""
    idx = list(r.tested_indices)
    if not idx:
        raise ValidationError("wald statistic requires a nonempty tested set")
    r.validate(fit.p)
    t2 = fit.theta_hat[idx]
    v22 = fit.V_hat[np.ix_(idx, idx)]
    return float(t2 @ _pd_solve(v22, t2, "V_hat_(22)"))


def _m22_1(fit, idx):
    m = fit.jacobian_beta()
    m11, m12, m21, m22 = _blocks(m, idx)
    if m11.size:
        try:
            m22_1 = m22 - m21 @ np.linalg.solve(m11, m12)
        except np.linalg.LinAlgError:
            raise RegularityError("regularity check failed: M_(11) singular")
    else:
        m22_1 = m22
    return m22_1


def score_statistic(fit_restricted, r, fit_full_structure=None):
    """R = Z' U^{-1} Z with Z the tested block of the mean estimating function
    at the restricted fit and U = M_(22.1) V_(22) M_(22.1)'."""
    if not fit_restricted.converged:
        raise ValidationError("restricted fit did not converge")
    idx = list(r.tested_indices)
    if not idx:
        return 0.0
    struct = fit_full_structure or fit_restricted
    z = fit_restricted.psi_values[:, idx].mean(axis=0)
    m22_1 = _m22_1(struct, idx)
    v22 = struct.V_hat[np.ix_(idx, idx)]
    u = m22_1 @ v22 @ m22_1.T
    return float(z @ _pd_solve(u, z, "U(T,F)"))


def lr_statistic(fit_full, fit_restricted):
    """Likelihood-ratio-type statistics.

    S is the raw loss difference (nonpositive by optimality of the full
    fit); the level functional uses the asymptotically equivalent
    nonnegative quadratic form S_tilde = ||M_(22.1)^{1/2} T_(2)||^2.
    """
    if fit_restricted.tested_indices is None:
        raise ValidationError("restricted fit carries no tested index set")
    idx = list(fit_restricted.tested_indices)
    cfg = fit_full.cfg
    if cfg.family != "huber":
        raise ValidationError("lr statistic requires the huber family loss")
    c = cfg.c_eff
    sigma = fit_full.sigma_hat or 1.0
    w = fit_full.row_w
    r_full = fit_full.residuals / sigma
    r_restr = fit_restricted.residuals / sigma
    n = fit_full.n
    s = 2.0 / n * float(np.sum(w * (huber_rho(r_full, c) - huber_rho(r_restr, c))))
    m22_1 = _m22_1(fit_full, idx)
    t2 = fit_full.theta_hat[idx]
    try:
        half = sym_sqrt_psd(symmetrize(m22_1))
    except RegularityError:
        raise
    s_tilde = float(np.sum(np.square(half @ t2)))
    return {"S": s, "S_tilde": s_tilde}


def level_functional(statistic, n, k):
    """alpha = 1 - H_k(n * statistic)."""
    if statistic < -1e-10:
        raise ValidationError(f"statistic must be nonnegative, got {statistic}")
    return float(1.0 - chi2_cdf(k, n * max(statistic, 0.0)))


def _q_recovered(pvalue, k, mode):
    u = 1.0 - pvalue if mode == "corrected" else pvalue
    u = min(max(u, 0.0), 1.0 - 1e-12)
    return chi2_quantile(k, u)


def dp_test(
    d,
    cfg,
    r,
    kind="wald",
    params=None,
    seed=0,
    mode="corrected",
    model="regression",
    stream_id=0,
    ledger=None,
    gamma_override=None,
    bounded_domain=False,
    ridge=False,
):
    """Fit, test, and release a differentially private p-value.

    ``gamma_override`` replaces the level-GES bound (gamma_override=0 gives
    the zero-noise diagnostic path).
    """
    if kind not in ("wald", "score", "lr"):
        raise ValidationError(f"unknown test kind {kind!r}")
    if mode not in ("corrected", "paper-literal"):
        raise ValidationError(f"unknown mode {mode!r}")
    if params is None:
        raise ValidationError("privacy parameters are required")
    cfg = cfg or PsiConfig(weight="inverse-norm")
    idx = list(r.tested_indices)
    k = len(idx)
    if k == 0:
        raise ValidationError("dp_test requires a nonempty tested set")
    r.validate(d.x.shape[1], 0 if d.intercept_added else None)

    if model == "regression":
        fit_full = fit_mallows(d, cfg, ridge=ridge)
        ges = ges_regression_bound(fit_full, bounded_domain=bounded_domain)
    elif model == "logistic":
        fit_full = fit_robust_logistic(d, cfg, ridge=ridge)
        ges = ges_logistic_bound(fit_full, bounded_domain=bounded_domain)
    else:
        raise ValidationError(f"dp_test supports regression/logistic, not {model!r}")
    n = fit_full.n

    if kind == "wald":
        statistic = wald_statistic(fit_full, r)
        level_report = level_ges_wald(fit_full, r, ges.gamma)
    else:
        restr = fit_restricted(d, cfg, r, model=model, ridge=ridge)
        v22 = symmetrize(fit_full.V_hat[np.ix_(idx, idx)])
        emin_v, emax_v = sym_eigen_extremes(v22)
        if emin_v <= 1e-12 * max(emax_v, 1.0):
            raise RegularityError("regularity check failed: V_hat_(22) near singular")
        if kind == "score":
            statistic = score_statistic(restr, r, fit_full_structure=fit_full)
            m22_1 = _m22_1(fit_full, idx)
            _, sup_m = sym_eigen_extremes(symmetrize(m22_1))
            # gamma(Z) <= gamma(T2-block score); propagate through U^{-1/2}
            u = symmetrize(m22_1 @ v22 @ m22_1.T)
            emin_u, emax_u = sym_eigen_extremes(u)
            if emin_u <= 1e-12 * max(emax_u, 1.0):
                raise RegularityError("regularity check failed: U(T,F) near singular")
            gamma_u = sup_m * ges.gamma / math.sqrt(emin_u)
        else:
            stats = lr_statistic(fit_full, restr)
            statistic = stats["S_tilde"]
            m22_1 = symmetrize(_m22_1(fit_full, idx))
            _, sup_m = sym_eigen_extremes(m22_1)
            gamma_u = math.sqrt(max(sup_m, 0.0)) * ges.gamma
        gamma, clamp, method = level_ges_quadratic(statistic, k, n, gamma_u)
        level_report = SensitivityReport(
            gamma=gamma,
            method=method,
            constants={"k": k, "n": n, "gamma_U": gamma_u, "clamp": clamp},
        )

    if gamma_override is not None:
        level_report = SensitivityReport(
            gamma=float(gamma_override), method="override", constants={"k": k, "n": n}
        )
    alpha_hat = level_functional(statistic, n, k)
    dp_p = release_pvalue(
        alpha_hat,
        level_report,
        n,
        params,
        seed,
        stream_id=stream_id,
        ledger=ledger,
        label=f"{kind} p-value",
    )
    q = _q_recovered(float(dp_p.value), k, mode)
    result = TestResult(
        kind=kind,
        statistic=statistic,
        k=k,
        alpha_hat=alpha_hat,
        dp_pvalue=dp_p,
        q_recovered=q,
        level_report=level_report,
        mode=mode,
    )
    if k == 1:
        result.ci = dp_confidence_interval(result)
    return result


def dp_confidence_interval(result):
    """Interval (-sqrt(q), +sqrt(q)) from the released p-value alone."""
    if result.k != 1:
        raise UnsupportedDimensionError("confidence intervals require k=1")
    q = _q_recovered(float(result.dp_pvalue.value), result.k, result.mode)
    half = math.sqrt(max(q, 0.0))
    return (-half, half)
