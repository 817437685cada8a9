"""Empirical influence functions, gross-error-sensitivity bounds, level
sensitivities for tests, and the minimum-sample-size checkers.

The GES bound gamma measures the worst-case effect of a unit mass of
contamination on the functional; it is the scale on which the Gaussian
mechanism is calibrated.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    RegularityError,
    SensitivityUndefinedError,
    UnboundedSensitivityError,
    ValidationError,
)
from .estimators import FitResult, fisher_kappa, huber_psi
from .numerics import chi2_pdf, chi2_sup_bound, sym_eigen_extremes, sym_inv_sqrt, symmetrize

__all__ = [
    "SensitivityReport",
    "empirical_influence",
    "influence_matrix",
    "ges_location_scale",
    "ges_regression_bound",
    "ges_logistic_bound",
    "level_ges_wald",
    "level_ges_quadratic",
    "theorem_min_n",
]


@dataclass
class SensitivityReport:
    """A gross-error-sensitivity bound with its provenance.

    ``if_norms`` are per-observation influence norms on the realized sample;
    gamma dominates them for the exact-formula and eigen-bound methods.
    """

    gamma: float
    method: str
    if_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise UnboundedSensitivityError(
                f"gross-error sensitivity is not a finite nonnegative value: {self.gamma}"
            )


def _psi_at(fit, obs):
    """Joint estimating-function value at a single observation."""
    cfg = fit.cfg
    if fit.model == "location-scale":
        x0 = float(obs)
        c = cfg.c_eff
        kappa = fisher_kappa(c)
        r0 = (x0 - fit.theta_hat[0]) / fit.sigma_hat
        psi = float(huber_psi(r0, c))
        return np.array([psi, psi * psi - kappa])
    if fit.model == "regression":
        x0, y0 = obs
        x0 = np.asarray(x0, dtype=float).ravel()
        c = cfg.c_eff
        kappa = fisher_kappa(c)
        if cfg.weight == "inverse-norm":
            nrm = float(np.linalg.norm(x0))
            w0 = min(1.0, cfg.weight_cap / nrm) if nrm > 0 else 1.0
        else:
            w0 = 1.0
        r0 = (float(y0) - float(x0 @ fit.theta_hat)) / fit.sigma_hat
        psi = float(huber_psi(r0, c))
        return np.append(psi * w0 * x0, w0 * (psi * psi - kappa))
    if fit.model == "logistic":
        from .estimators import _logistic_score_factor, row_weights

        x0, y0 = obs
        x0 = np.asarray(x0, dtype=float).ravel()
        eta = float(x0 @ fit.theta_hat)
        c = cfg.c_eff
        f_obs, _ = _logistic_score_factor(float(y0), eta, c)
        p = 1.0 / (1.0 + math.exp(-eta))
        f1, _ = _logistic_score_factor(1.0, eta, c)
        f0, _ = _logistic_score_factor(0.0, eta, c)
        ef = p * f1 + (1.0 - p) * f0
        w0 = row_weights(x0[None, :], cfg)[0]
        return (float(f_obs) - float(ef)) * w0 * x0
    if fit.model == "truncated-gaussian-mean":
        x0 = float(obs)
        return np.array([float(huber_psi(x0 - fit.theta_hat[0], cfg.c_eff))])
    raise ValidationError(f"no estimating function for model {fit.model!r}")


def empirical_influence(fit, obs):
    """Empirical influence function M_hat^{-1} Psi(obs) at the fitted solution.

    Uses the exact joint Jacobian (including the scale equation where the
    model has one), so the result matches finite-difference contamination of
    the empirical distribution.
    """
    psi = _psi_at(fit, obs)
    try:
        return np.linalg.solve(fit.jac_joint, psi)
    except np.linalg.LinAlgError:
        raise RegularityError("regularity check failed: singular Jacobian in influence")


def influence_matrix(fit):
    """Influence vectors of every observation in the sample, one per row."""
    try:
        return np.linalg.solve(fit.jac_joint, fit.psi_joint.T).T
    except np.linalg.LinAlgError:
        raise RegularityError("regularity check failed: singular Jacobian in influence")


def ges_location_scale(fit):
    """Exact-formula GES pair (location, scale) for the Huber Proposal-2 fit.

    The per-component formulas linearize each equation separately; the
    reported if_norms use the same decoupled linearization so that gamma
    dominates them by construction.
    """
    if fit.model != "location-scale":
        raise ValidationError("ges_location_scale requires a location-scale fit")
    c = fit.cfg.c_eff
    kappa = fisher_kappa(c)
    sigma = fit.sigma_hat
    r = fit.residuals / sigma
    ind = (np.abs(r) < c).astype(float)
    a = float(np.mean(ind))
    e2 = float(np.mean(r * r * ind))
    if a <= 0 or e2 <= 0:
        raise SensitivityUndefinedError("all residuals clipped; GES denominators vanish")
    psi = huber_psi(r, c)
    chi = psi * psi - kappa
    gamma_loc = c * sigma / a
    gamma_scale = (c * c - kappa) * sigma / e2
    loc = SensitivityReport(
        gamma=gamma_loc,
        method="exact-formula",
        if_norms=np.abs(psi) * sigma / a,
        constants={"indicator_mean": a, "kappa": kappa},
    )
    scale = SensitivityReport(
        gamma=gamma_scale,
        method="exact-formula",
        if_norms=np.abs(chi) * sigma / e2,
        constants={"second_moment": e2, "kappa": kappa},
    )
    return loc, scale


def _k_tilde(fit, bounded_domain):
    cfg = fit.cfg
    if cfg.weight == "inverse-norm":
        return float(cfg.weight_cap)
    if bounded_domain:
        return float(np.max(fit.row_w * fit.row_xnorm))
    raise UnboundedSensitivityError(
        "unweighted design has no finite covariate bound; "
        "pass bounded_domain=True to use the data-supported maximum"
    )


def _common_constants(fit, k_tilde, k_n):
    emin, emax = sym_eigen_extremes(fit.M_hat)
    if fit.model == "regression":
        l_n = float(np.max(fit.row_w * np.square(fit.row_xnorm))) / fit.sigma_hat
    else:
        l_n = float(np.max(fit.row_w * np.square(fit.row_xnorm)))
    return {
        "K_n": k_n,
        "L_n": l_n,
        "C1": l_n,
        "C2": 1.0,
        "b": emin,
        "eigen_min_M": emin,
        "eigen_max_M": emax,
        "K_tilde": k_tilde,
    }


def ges_regression_bound(fit, bounded_domain=False):
    """Eigenvalue GES bound c*K_tilde / eigen_min(M_hat) for Mallows fits."""
    if fit.model != "regression":
        raise ValidationError("ges_regression_bound requires a Mallows regression fit")
    c = fit.cfg.c_eff
    if not math.isfinite(c):
        raise UnboundedSensitivityError("identity family has unbounded score")
    kt = _k_tilde(fit, bounded_domain)
    emin, emax = sym_eigen_extremes(fit.M_hat)
    if emin <= 1e-12 * max(emax, 1.0):
        raise RegularityError("regularity check failed: M_hat eigen_min below tolerance")
    gamma = c * kt / emin
    ifm = influence_matrix(fit)
    if_norms = np.sqrt(np.sum(np.square(ifm[:, : fit.p]), axis=1))
    return SensitivityReport(
        gamma=gamma,
        method="eigen-bound",
        if_norms=if_norms,
        constants=_common_constants(fit, kt, c * kt),
    )


def ges_logistic_bound(fit, bounded_domain=False):
    """Eigenvalue GES bound 2*c_psi*K_tilde / eigen_min(M_hat) for logistic fits."""
    if fit.model != "logistic":
        raise ValidationError("ges_logistic_bound requires a logistic fit")
    c = fit.cfg.c_eff
    if not math.isfinite(c):
        raise UnboundedSensitivityError("identity family has unbounded score")
    kt = _k_tilde(fit, bounded_domain)
    emin, emax = sym_eigen_extremes(fit.M_hat)
    if emin <= 1e-12 * max(emax, 1.0):
        raise RegularityError("regularity check failed: M_hat eigen_min below tolerance")
    gamma = 2.0 * c * kt / emin
    ifm = influence_matrix(fit)
    if_norms = np.sqrt(np.sum(np.square(ifm), axis=1))
    return SensitivityReport(
        gamma=gamma,
        method="eigen-bound",
        if_norms=if_norms,
        constants=_common_constants(fit, kt, 2.0 * c * kt),
    )


def level_ges_quadratic(statistic, k, n, gamma_u):
    """Level GES for alpha = 1 - H_k(n * statistic) given gamma(U).

    Pointwise bound 2 n H_k'(n W) ||U|| gamma(U) with ||U|| = sqrt(W),
    clamped above by 2 n sup_z{H_k'(n z^2) z} gamma(U).
    """
    if statistic < 0:
        statistic = 0.0
    clamp = 2.0 * n * chi2_sup_bound(k, n) * gamma_u
    if statistic == 0.0 and k == 1:
        return clamp, clamp, "level-sup-clamped"
    pointwise = 2.0 * n * chi2_pdf(k, n * statistic) * math.sqrt(statistic) * gamma_u
    if not math.isfinite(pointwise) or pointwise >= clamp:
        return clamp, clamp, "level-sup-clamped"
    return pointwise, clamp, "level-pointwise"


def level_ges_wald(fit, r, gamma_T2):
    """Level GES bound for the Wald test of the components in ``r``."""
    if gamma_T2 < 0:
        raise ValidationError("gamma_T2 must be nonnegative")
    idx = list(r.tested_indices)
    k = len(idx)
    if k == 0:
        raise ValidationError("level GES requires a nonempty tested set")
    v22 = symmetrize(fit.V_hat[np.ix_(idx, idx)])
    emin_v, emax_v = sym_eigen_extremes(v22)
    if emin_v <= 1e-12 * max(emax_v, 1.0):
        raise RegularityError("regularity check failed: V_hat_(22) near singular")
    t2 = fit.theta_hat[idx]
    w_n = float(t2 @ np.linalg.solve(v22, t2))
    gamma_u = gamma_T2 / math.sqrt(emin_v)
    n = fit.n
    gamma, clamp, method = level_ges_quadratic(w_n, k, n, gamma_u)
    if_norms = np.zeros(0)
    if fit.psi_joint is not None and method == "level-pointwise":
        ifm = influence_matrix(fit)[:, : fit.p][:, idx]
        vhalf = sym_inv_sqrt(v22)
        u_hat = vhalf @ t2
        dens = chi2_pdf(k, n * w_n)
        if math.isfinite(dens):
            if_norms = 2.0 * n * dens * np.abs(ifm @ vhalf @ u_hat)
    pointwise = gamma if method == "level-pointwise" else float("nan")
    return SensitivityReport(
        gamma=gamma,
        method=method,
        if_norms=if_norms,
        constants={
            "W_n": w_n,
            "k": k,
            "n": n,
            "gamma_U": gamma_u,
            "pointwise": pointwise,
            "clamp": clamp,
        },
    )


def _positive(name, value):
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return float(value)


def theorem_min_n(
    kind,
    m,
    p,
    epsilon,
    delta,
    K_n,
    L_n,
    b,
    eigen_max_M,
    C1=None,
    C2=1.0,
    N0=10,
    C_U=1.0,
    n=None,
):
    """Minimum sample size sufficient for the privacy guarantee.

    Evaluates max{N0, N1, N2} with the recommended constant choices
    C = 1/sqrt(m log(2/delta)), C' = 2C, C1 = L_n, and the substitution of
    2 C2 eigen_max(M^{-1}) K_n for C2 K_n / b. Returns the per-term
    breakdown and, when ``n`` is given, whether it meets the requirement.
    """
    if kind not in ("estimation", "testing"):
        raise ValidationError(f"unknown kind {kind!r}")
    m = int(_positive("m", m))
    p = int(_positive("p", p))
    epsilon = _positive("epsilon", epsilon)
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0,1), got {delta}")
    K_n = _positive("K_n", K_n)
    L_n = _positive("L_n", L_n)
    b = _positive("b", b)
    eigen_max_M = _positive("eigen_max_M", eigen_max_M)
    C1 = L_n if C1 is None else _positive("C1", C1)
    C2 = _positive("C2", C2)
    log2d = math.log(2.0 / delta)
    log_spread = max(0.0, math.log(eigen_max_M / b))
    n1 = (1.0 + (4.0 / epsilon) * (p + 2.0 * log2d) * log_spread) ** 2
    if kind == "estimation":
        # C'^2 m log(2/delta) = 4 with C' = 2 / sqrt(m log(2/delta))
        n2 = 4.0 * (2.0 * L_n / b + (1.0 / b) * (C1 + 2.0 * C2 * K_n / b)) ** 2
    else:
        n2 = (
            C_U * C_U
            * m
            * math.log(1.0 / delta)
            * (K_n * K_n / eigen_max_M)
            * (1.0 + 2.0 * L_n / b + (1.0 / b) * (C1 + C2 * K_n / b)) ** 2
        )
    n_required = int(max(N0, math.ceil(n1), math.ceil(n2)))
    return {
        "n_required": n_required,
        "terms": {"N0": int(N0), "N1": n1, "N2": n2},
        "satisfied": None if n is None else bool(n >= n_required),
    }
