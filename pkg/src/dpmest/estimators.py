"""Robust M-estimation engines.

Huber psi/rho/chi primitives, joint location-scale (Huber Proposal 2),
Mallows regression with joint Proposal-2 scale, robust quasilikelihood
logistic regression, the truncated-score MLE, and restricted fits for
score/LR tests. All fitters accept optional per-observation case weights so
that contaminated empirical distributions (1-t)F_n + t Delta_x can be fit
exactly; this is what the finite-difference influence oracle relies on.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    RegularityError,
    SeparationError,
    ValidationError,
)
from .numerics import normal_cdf, normal_pdf, sym_eigen_extremes, symmetrize

__all__ = [
    "PsiConfig",
    "FitResult",
    "RestrictedSpec",
    "huber_psi",
    "huber_psi_prime",
    "huber_rho",
    "huber_chi",
    "fisher_kappa",
    "row_weights",
    "fit_location_scale",
    "fit_mallows",
    "fit_robust_logistic",
    "fit_truncated_mle",
    "fit_restricted",
    "HuberLocationScale",
    "MallowsRegressor",
    "RobustLogisticRegressor",
    "TruncatedScoreMLE",
]

MAX_ITER = 500
EQ_TOL = 1e-10
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class PsiConfig:
    """Score-function configuration shared by the regression-type fitters."""

    family: str = "huber"
    c: float = 1.345
    weight: str = "none"
    weight_cap: float = 2.0

    def __post_init__(self):
        if self.family not in ("huber", "identity"):
            raise ValidationError(f"unknown psi family {self.family!r}")
        if not self.c > 0:
            raise ValidationError(f"tuning constant c must be positive, got {self.c}")
        if self.weight not in ("none", "inverse-norm"):
            raise ValidationError(f"unknown weight scheme {self.weight!r}")
        if self.weight == "inverse-norm" and not self.weight_cap > 0:
            raise ValidationError("weight cap must be positive")

    @property
    def c_eff(self):
        return math.inf if self.family == "identity" else float(self.c)


@dataclass
class FitResult:
    """Solution of an M-estimating equation with its plug-in matrices.

    ``psi_values`` holds the per-observation estimating function for the
    reported parameter block; ``psi_joint`` and ``jac_joint`` carry the full
    joint system (including the scale equation where present) used by the
    sensitivity module.
    """

    model: str
    theta_hat: np.ndarray
    sigma_hat: float | None
    M_hat: np.ndarray
    Q_hat: np.ndarray
    V_hat: np.ndarray
    residuals: np.ndarray
    psi_values: np.ndarray
    converged: bool
    iterations: int
    cfg: PsiConfig | None
    n: int
    psi_joint: np.ndarray = None
    jac_joint: np.ndarray = None
    row_w: np.ndarray = None
    row_xnorm: np.ndarray = None
    tested_indices: tuple | None = None

    @property
    def p(self):
        return self.theta_hat.shape[0]

    def jacobian_beta(self):
        """-mean Jacobian of the coefficient-block estimating function."""
        if self.model == "regression":
            return self.M_hat / self.sigma_hat
        return self.M_hat


@dataclass(frozen=True)
class RestrictedSpec:
    """The index set of coefficients constrained to zero under H0."""

    tested_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.tested_indices)
        if len(set(idx)) != len(idx):
            raise ValidationError("tested indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValidationError("tested indices must be nonnegative")
        object.__setattr__(self, "tested_indices", idx)

    @property
    def k(self):
        return len(self.tested_indices)

    def validate(self, p, intercept_index=None):
        for i in self.tested_indices:
            if i >= p:
                raise ValidationError(f"tested index {i} out of range for p={p}")
            if intercept_index is not None and i == intercept_index:
                raise ValidationError("tested indices must not include the intercept")


def huber_psi(r, c):
    return np.clip(r, -c, c)


def huber_psi_prime(r, c):
    """Indicator 1{|r| < c}; the kink at |r| = c is assigned derivative 0."""
    return (np.abs(r) < c).astype(float)


def huber_rho(r, c):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    return np.where(a <= c, 0.5 * r * r, c * a - 0.5 * c * c)


def fisher_kappa(c):
    """kappa(c) = integral of min(c^2, x^2) against the standard normal."""
    if not c > 0:
        raise ValidationError(f"c must be positive, got {c}")
    if not math.isfinite(c):
        return 1.0
    # upper tail via erfc avoids cancellation in 1 - Phi(c) for large c
    q = 0.5 * math.erfc(c / math.sqrt(2.0))
    return float(1.0 - 2.0 * c * normal_pdf(c) + 2.0 * (c * c - 1.0) * q)


def huber_chi(r, c, kappa=None):
    if kappa is None:
        kappa = fisher_kappa(c)
    psi = huber_psi(r, c)
    return psi * psi - kappa


def row_weights(x, cfg):
    """Mallows covariate weights w(x) = min{1, r0/||x||} (or all ones)."""
    if cfg.weight == "none":
        return np.ones(x.shape[0])
    norms = np.sqrt(np.sum(np.square(x), axis=1))
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, np.where(norms > 0, cfg.weight_cap / norms, np.inf))


def _case_weights(n, case_weights):
    if case_weights is None:
        return np.ones(n)
    om = np.asarray(case_weights, dtype=float).ravel()
    if om.shape[0] != n or np.any(om < 0) or not np.any(om > 0):
        raise ValidationError("case weights must be nonnegative with positive total")
    return om


def _initial_scale(resid):
    med = np.median(resid)
    mad = np.median(np.abs(resid - med))
    sigma0 = 1.4826 * mad
    if sigma0 <= 0:
        sigma0 = float(np.std(resid))
    if sigma0 <= 0:
        raise DegenerateScaleError("residuals are degenerate; scale cannot be estimated")
    return sigma0


def _check_rank(xtwx, n, ridge):
    """Return (matrix, tau): the system matrix plus the ridge term tau_n = 1/n
    applied when the eigen floor fails and the caller opted in."""
    emin, emax = sym_eigen_extremes(symmetrize(xtwx))
    if emin <= RANK_RTOL * max(emax, 1.0):
        if ridge:
            tau = 1.0 / n
            return xtwx + tau * np.eye(xtwx.shape[0]), tau
        raise RegularityError(
            "regularity check failed: weighted design is rank deficient "
            f"(eigen_min={emin:.3e}, eigen_max={emax:.3e})"
        )
    return xtwx, 0.0


def fit_location_scale(d, cfg=None, case_weights=None):
    """Joint Huber location-scale fit (Proposal 2).

    Solves mean psi_c((x-mu)/sigma) = 0 and mean chi_c((x-mu)/sigma) = 0 by
    IRLS with a Newton polish on the joint 2x2 system.
    """
    if isinstance(d, Dataset):
        if d.m != 1:
            raise ValidationError(f"location-scale requires m=1, got m={d.m}")
        x = d.x[:, 0]
    else:
        x = np.asarray(d, dtype=float).ravel()
    if x.shape[0] < 3:
        raise ValidationError("location-scale fit requires n >= 3")
    cfg = cfg or PsiConfig()
    c = cfg.c_eff
    kappa = fisher_kappa(c) if math.isfinite(c) else 1.0
    om = _case_weights(x.shape[0], case_weights)
    sw = om.sum()

    mu = float(np.median(x))
    sigma = _initial_scale(x)

    def equations(mu, sigma):
        r = (x - mu) / sigma
        psi = huber_psi(r, c)
        g = np.array(
            [
                float(np.dot(om, psi)) / sw,
                float(np.dot(om, psi * psi - kappa)) / sw,
            ]
        )
        return r, psi, g

    def jacobian(r, psi):
        ind = huber_psi_prime(r, c)
        a11 = float(np.dot(om, ind)) / (sw * sigma)
        a12 = float(np.dot(om, ind * r)) / (sw * sigma)
        a21 = float(np.dot(om, 2.0 * psi * ind)) / (sw * sigma)
        a22 = float(np.dot(om, 2.0 * psi * ind * r)) / (sw * sigma)
        return np.array([[a11, a12], [a21, a22]])

    iterations = 0
    for _ in range(MAX_ITER):
        iterations += 1
        r = (x - mu) / sigma
        psi = huber_psi(r, c)
        u = np.where(r == 0, 1.0, np.divide(psi, r, out=np.ones_like(r), where=r != 0))
        denom = float(np.dot(om, u))
        if denom <= 0:
            raise ConvergenceError("all observations downweighted to zero", (mu, sigma))
        mu_new = float(np.dot(om * u, x)) / denom
        s2 = sigma * sigma * float(np.dot(om, psi * psi)) / (kappa * sw)
        if s2 <= 0 or not math.isfinite(s2):
            raise DegenerateScaleError("scale iteration collapsed")
        sigma_new = math.sqrt(s2)
        delta = max(abs(mu_new - mu), abs(sigma_new - sigma))
        mu, sigma = mu_new, sigma_new
        if delta < 1e-9:
            break
    else:
        raise ConvergenceError("location-scale IRLS did not converge", (mu, sigma))

    # Newton polish on the joint system to drive the residual below 1e-10.
    for _ in range(50):
        r, psi, g = equations(mu, sigma)
        if np.max(np.abs(g)) < 1e-13:
            break
        jac = jacobian(r, psi)
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        while sigma + scale * step[1] <= 0:
            scale /= 2.0
        mu += scale * step[0]
        sigma += scale * step[1]
        iterations += 1

    r, psi, g = equations(mu, sigma)
    if np.max(np.abs(g)) > EQ_TOL:
        raise ConvergenceError(
            f"estimating-equation residual {np.max(np.abs(g)):.2e} above tolerance", (mu, sigma)
        )
    jac = jacobian(r, psi)
    chi = psi * psi - kappa
    psi_joint = np.column_stack([psi, chi])
    q = symmetrize((psi_joint * om[:, None]).T @ psi_joint / sw)
    try:
        jinv = np.linalg.inv(jac)
    except np.linalg.LinAlgError:
        raise RegularityError("regularity check failed: singular location-scale Jacobian")
    v = symmetrize(jinv @ q @ jinv.T)
    return FitResult(
        model="location-scale",
        theta_hat=np.array([mu]),
        sigma_hat=sigma,
        M_hat=symmetrize(jac),
        Q_hat=q,
        V_hat=v,
        residuals=x - mu,
        psi_values=psi_joint,
        converged=True,
        iterations=iterations,
        cfg=cfg,
        n=x.shape[0],
        psi_joint=psi_joint,
        jac_joint=jac,
        row_w=np.ones(x.shape[0]),
    )


def _assemble_regression(x, y, beta, sigma, cfg, om, converged, iterations, tested=None,
                         tau=0.0):
    """Build the FitResult matrices for a Mallows regression solution."""
    c = cfg.c_eff
    kappa = fisher_kappa(c)
    w = row_weights(x, cfg)
    sw = om.sum()
    n, p = x.shape
    r = (y - x @ beta) / sigma
    psi = huber_psi(r, c)
    ind = huber_psi_prime(r, c)

    psi_beta = (psi * w)[:, None] * x
    chi_part = w * (psi * psi - kappa)
    psi_joint = np.column_stack([psi_beta, chi_part])

    m_hat = symmetrize((x.T @ (x * (w * ind * om)[:, None]) + tau * np.eye(p)) / sw)
    q_hat = symmetrize(x.T @ (x * (om * np.square(psi * w))[:, None]) / sw)
    emin, emax = sym_eigen_extremes(m_hat)
    if emin <= RANK_RTOL * max(emax, 1.0):
        raise RegularityError(
            f"regularity check failed: M_hat eigen_min {emin:.3e} too small"
        )
    minv = np.linalg.inv(m_hat)
    v_hat = symmetrize(sigma * sigma * minv @ q_hat @ minv.T)

    # Exact joint Jacobian of the (beta, sigma) system, used for influence
    # computations; the off-diagonal blocks capture the scale coupling.
    owi = om * w * ind
    a11 = (x.T @ (x * owi[:, None]) + tau * np.eye(p)) / (sw * sigma)
    a12 = (owi * r) @ x / (sw * sigma)
    a21 = (om * w * 2.0 * psi * ind) @ x / (sw * sigma)
    a22 = float(np.dot(om * w, 2.0 * psi * ind * r)) / (sw * sigma)
    jac = np.zeros((p + 1, p + 1))
    jac[:p, :p] = a11
    jac[:p, p] = a12
    jac[p, :p] = a21
    jac[p, p] = a22

    return FitResult(
        model="regression",
        theta_hat=beta,
        sigma_hat=sigma,
        M_hat=m_hat,
        Q_hat=q_hat,
        V_hat=v_hat,
        residuals=y - x @ beta,
        psi_values=psi_beta,
        converged=converged,
        iterations=iterations,
        cfg=cfg,
        n=n,
        psi_joint=psi_joint,
        jac_joint=jac,
        row_w=w,
        row_xnorm=np.sqrt(np.sum(np.square(x), axis=1)),
        tested_indices=tested,
    )


def _solve_mallows(x, y, cfg, om, ridge, free_mask=None):
    """IRLS + Newton core; returns (beta, sigma, iterations, tau) on the full design.

    ``free_mask`` restricts the beta update to a subset of coordinates (the
    others stay at zero), which implements restricted fits.
    """
    c = cfg.c_eff
    kappa = fisher_kappa(c)
    n, p = x.shape
    if free_mask is None:
        free_mask = np.ones(p, dtype=bool)
    xf = x[:, free_mask]
    w = row_weights(x, cfg)
    sw = om.sum()
    base_w = om * w
    xtwx = xf.T @ (xf * base_w[:, None])
    xtwx, tau = _check_rank(xtwx, n, ridge)
    tau_eye = tau * np.eye(xf.shape[1])

    beta_f = np.linalg.solve(xtwx, xf.T @ (base_w * y))
    resid = y - xf @ beta_f
    y_scale = max(1.0, float(np.max(np.abs(y))))
    if np.max(np.abs(resid)) <= 1e-12 * y_scale:
        raise DegenerateScaleError("zero residual vector; scale is degenerate")
    sigma = _initial_scale(resid)

    def equations(beta_f, sigma):
        r = (y - xf @ beta_f) / sigma
        psi = huber_psi(r, c)
        g_beta = (om * w * psi) @ xf / sw
        g_sigma = float(np.dot(om * w, psi * psi - kappa)) / sw
        return r, psi, np.append(g_beta, g_sigma)

    iterations = 0
    for _ in range(MAX_ITER):
        iterations += 1
        r = (y - xf @ beta_f) / sigma
        psi = huber_psi(r, c)
        u = np.divide(psi, r, out=np.ones_like(r), where=r != 0)
        ww = base_w * u
        lhs = xf.T @ (xf * ww[:, None]) + tau_eye
        try:
            beta_new = np.linalg.solve(lhs, xf.T @ (ww * y))
        except np.linalg.LinAlgError:
            raise RegularityError("regularity check failed: singular IRLS system")
        s2 = sigma * sigma * float(np.dot(base_w, psi * psi)) / (kappa * float(base_w.sum()))
        if s2 <= 0 or not math.isfinite(s2):
            raise DegenerateScaleError("scale iteration collapsed")
        sigma_new = math.sqrt(s2)
        delta = max(float(np.max(np.abs(beta_new - beta_f))), abs(sigma_new - sigma))
        beta_f, sigma = beta_new, sigma_new
        if delta < 1e-9:
            break
    else:
        raise ConvergenceError("Mallows IRLS did not converge", (beta_f, sigma))

    pf = xf.shape[1]
    for _ in range(50):
        r, psi, g = equations(beta_f, sigma)
        if np.max(np.abs(g)) < 1e-13:
            break
        ind = huber_psi_prime(r, c)
        owi = base_w * ind
        jac = np.zeros((pf + 1, pf + 1))
        jac[:pf, :pf] = (xf.T @ (xf * owi[:, None]) + tau_eye) / (sw * sigma)
        jac[:pf, pf] = (owi * r) @ xf / (sw * sigma)
        jac[pf, :pf] = (base_w * 2.0 * psi * ind) @ xf / (sw * sigma)
        jac[pf, pf] = float(np.dot(base_w, 2.0 * psi * ind * r)) / (sw * sigma)
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        while sigma + scale * step[pf] <= 0:
            scale /= 2.0
        beta_f = beta_f + scale * step[:pf]
        sigma = sigma + scale * step[pf]
        iterations += 1

    _, _, g = equations(beta_f, sigma)
    if np.max(np.abs(g)) > EQ_TOL:
        raise ConvergenceError(
            f"estimating-equation residual {np.max(np.abs(g)):.2e} above tolerance",
            (beta_f, sigma),
        )
    beta = np.zeros(p)
    beta[free_mask] = beta_f
    return beta, sigma, iterations, tau


def fit_mallows(d, cfg=None, case_weights=None, ridge=False):
    """Mallows-type robust regression with joint Proposal-2 scale."""
    if d.y is None:
        raise ValidationError("regression fit requires a response")
    cfg = cfg or PsiConfig(weight="inverse-norm")
    x, y = d.x, d.y
    if x.shape[0] <= x.shape[1]:
        raise ValidationError(f"need n > p, got n={x.shape[0]}, p={x.shape[1]}")
    om = _case_weights(x.shape[0], case_weights)
    beta, sigma, iterations, tau = _solve_mallows(x, y, cfg, om, ridge)
    return _assemble_regression(x, y, beta, sigma, cfg, om, True, iterations, tau=tau)


def _logistic_score_factor(v, eta, c):
    """f(v, eta) = psi_c(pearson residual) * sqrt(p q) for response v, and its
    derivative in eta."""
    p = 1.0 / (1.0 + np.exp(-eta))
    q = 1.0 - p
    s = np.sqrt(p * q)
    # s = 0 yields NaN here; the caller treats non-finite scores as separation
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (v - p) / s
        psi = huber_psi(r, c)
        ind = huber_psi_prime(r, c)
        f = psi * s
        # d r / d eta = -s - r (q - p) / 2 ; d s / d eta = (q - p) s / 2
        fprime = ind * (-s - r * (q - p) / 2.0) * s + psi * (q - p) * s / 2.0
    return f, fprime


def _logistic_system(x, y, beta, cfg, om):
    """Mean estimating function, per-row psi values, and -Jacobian."""
    c = cfg.c_eff
    w = row_weights(x, cfg)
    sw = om.sum()
    eta = x @ beta
    p = 1.0 / (1.0 + np.exp(-eta))
    q = 1.0 - p
    f_obs, fp_obs = _logistic_score_factor(y, eta, c)
    f1, fp1 = _logistic_score_factor(1.0, eta, c)
    f0, fp0 = _logistic_score_factor(0.0, eta, c)
    ef = p * f1 + q * f0
    def_deta = p * q * (f1 - f0) + p * fp1 + q * fp0
    centered = f_obs - ef
    psi_rows = (centered * w)[:, None] * x
    g = om @ psi_rows / sw
    b = -(fp_obs - def_deta)
    m_hat = symmetrize(x.T @ (x * (om * w * b)[:, None]) / sw)
    return g, psi_rows, m_hat, centered, p


def fit_robust_logistic(d, cfg=None, case_weights=None, ridge=False):
    """Robust quasilikelihood logistic regression.

    The estimating function is the Huberized Pearson score with covariate
    weights, centered by the exact two-point Fisher-consistency term. With
    the identity family and no weights this reduces to the logistic MLE.
    """
    if d.y is None:
        raise ValidationError("logistic fit requires a response")
    y = d.y
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValidationError("logistic response must be binary 0/1")
    cfg = cfg or PsiConfig()
    x = d.x
    n, p = x.shape
    if n <= p:
        raise ValidationError(f"need n > p, got n={n}, p={p}")
    om = _case_weights(n, case_weights)
    w = row_weights(x, cfg)
    xtwx = x.T @ (x * (om * w)[:, None])
    _check_rank(xtwx, n, ridge)

    beta = np.zeros(p)
    g, psi_rows, m_hat, centered, prob = _logistic_system(x, y, beta, cfg, om)
    iterations = 0
    while np.max(np.abs(g)) > 1e-12:
        iterations += 1
        if not np.all(np.isfinite(g)):
            raise SeparationError("logistic fit diverged (possible separation)", beta)
        if iterations > 200 or np.linalg.norm(beta) > 1e6:
            raise SeparationError("logistic fit diverged (possible separation)", beta)
        try:
            step = np.linalg.solve(m_hat, g)
        except np.linalg.LinAlgError:
            raise RegularityError("regularity check failed: singular logistic Jacobian")
        norm0 = np.max(np.abs(g))
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            g_new, psi_rows, m_hat, centered, prob = _logistic_system(x, y, cand, cfg, om)
            if np.max(np.abs(g_new)) < norm0 or np.linalg.norm(cand) > 1e6:
                break
            scale /= 2.0
        beta = beta + scale * step
        g, psi_rows, m_hat, centered, prob = _logistic_system(x, y, beta, cfg, om)

    if not np.all(np.isfinite(g)):
        raise SeparationError("logistic fit diverged (possible separation)", beta)
    if np.max(np.abs(g)) > EQ_TOL:
        raise ConvergenceError("logistic equations above tolerance", beta)
    sw = om.sum()
    q_hat = symmetrize((psi_rows * om[:, None]).T @ psi_rows / sw)
    emin, emax = sym_eigen_extremes(m_hat)
    if emin <= RANK_RTOL * max(emax, 1.0):
        raise RegularityError("regularity check failed: logistic M_hat near singular")
    minv = np.linalg.inv(m_hat)
    v_hat = symmetrize(minv @ q_hat @ minv.T)
    pq = prob * (1.0 - prob)
    pearson = (y - prob) / np.sqrt(pq)
    return FitResult(
        model="logistic",
        theta_hat=beta,
        sigma_hat=None,
        M_hat=m_hat,
        Q_hat=q_hat,
        V_hat=v_hat,
        residuals=pearson,
        psi_values=psi_rows,
        converged=True,
        iterations=iterations,
        cfg=cfg,
        n=n,
        psi_joint=psi_rows,
        jac_joint=m_hat,
        row_w=row_weights(x, cfg),
        row_xnorm=np.sqrt(np.sum(np.square(x), axis=1)),
    )


def _truncated_system(x, y, beta, c, om):
    scores = (y - x @ beta)[:, None] * x
    norms = np.sqrt(np.sum(np.square(scores), axis=1))
    with np.errstate(divide="ignore"):
        shrink = np.minimum(1.0, np.where(norms > 0, c / norms, np.inf))
    s = scores * shrink[:, None]
    sw = om.sum()
    g = om @ s / sw
    p = x.shape[1]
    jac = np.zeros((p, p))
    unclipped = shrink >= 1.0
    if np.any(unclipped):
        ou = om[unclipped]
        jac += x[unclipped].T @ (x[unclipped] * ou[:, None])
    clipped = ~unclipped
    if np.any(clipped):
        xc = x[clipped]
        sc = scores[clipped]
        nc = norms[clipped]
        oc = om[clipped]
        for i in range(xc.shape[0]):
            shat = sc[i] / nc[i]
            proj = np.eye(p) - np.outer(shat, shat)
            jac += oc[i] * (c / nc[i]) * proj @ np.outer(xc[i], xc[i])
    jac /= sw
    return g, s, jac


def fit_truncated_mle(d, model="gaussian-mean", c=2.0, case_weights=None):
    """MLE with the score truncated to norm at most c.

    For c large enough that no score is clipped this is exactly the MLE.
    """
    if not c > 0:
        raise ValidationError("truncation level c must be positive")
    if model == "gaussian-mean":
        x = d.x[:, 0] if isinstance(d, Dataset) else np.asarray(d, dtype=float).ravel()
        om = _case_weights(x.shape[0], case_weights)
        sw = om.sum()

        def g(theta):
            return float(np.dot(om, huber_psi(x - theta, c))) / sw

        lo, hi = float(np.min(x)) - c, float(np.max(x)) + c
        for _ in range(200):
            mid = (lo + hi) / 2.0
            if g(mid) > 0:
                lo = mid
            else:
                hi = mid
        theta = (lo + hi) / 2.0
        for _ in range(50):
            ind = huber_psi_prime(x - theta, c)
            denom = float(np.dot(om, ind)) / sw
            if denom <= 0:
                break
            val = g(theta)
            if abs(val) < 1e-14:
                break
            theta += val / denom
        if abs(g(theta)) > EQ_TOL:
            raise ConvergenceError("truncated-score equation above tolerance", theta)
        psi = huber_psi(x - theta, c)
        ind = huber_psi_prime(x - theta, c)
        m = np.array([[float(np.dot(om, ind)) / sw]])
        if m[0, 0] <= RANK_RTOL:
            raise RegularityError("regularity check failed: all scores clipped")
        q = np.array([[float(np.dot(om, psi * psi)) / sw]])
        v = symmetrize(np.array([[q[0, 0] / m[0, 0] ** 2]]))
        return FitResult(
            model="truncated-gaussian-mean",
            theta_hat=np.array([theta]),
            sigma_hat=None,
            M_hat=m,
            Q_hat=q,
            V_hat=v,
            residuals=x - theta,
            psi_values=psi[:, None],
            converged=True,
            iterations=0,
            cfg=PsiConfig(c=c),
            n=x.shape[0],
            psi_joint=psi[:, None],
            jac_joint=m,
            row_w=np.ones(x.shape[0]),
        )
    if model != "regression":
        raise ValidationError(f"unknown truncated-mle model {model!r}")
    if d.y is None:
        raise ValidationError("regression model requires a response")
    x, y = d.x, d.y
    n, p = x.shape
    om = _case_weights(n, case_weights)
    _check_rank(x.T @ (x * om[:, None]), n, ridge=False)
    beta = np.linalg.solve(x.T @ (x * om[:, None]), x.T @ (om * y))
    g, s, jac = _truncated_system(x, y, beta, c, om)
    iterations = 0
    while np.max(np.abs(g)) > 1e-12:
        iterations += 1
        if iterations > 200:
            raise ConvergenceError("truncated-score Newton did not converge", beta)
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            raise RegularityError("regularity check failed: singular truncated-score Jacobian")
        norm0 = np.max(np.abs(g))
        scale = 1.0
        for _ in range(40):
            g_new, s, jac = _truncated_system(x, y, beta + scale * step, c, om)
            if np.max(np.abs(g_new)) < norm0:
                break
            scale /= 2.0
        beta = beta + scale * step
        g, s, jac = _truncated_system(x, y, beta, c, om)
    sw = om.sum()
    m = symmetrize(jac)
    q = symmetrize((s * om[:, None]).T @ s / sw)
    emin, emax = sym_eigen_extremes(m)
    if emin <= RANK_RTOL * max(emax, 1.0):
        raise RegularityError("regularity check failed: truncated-score M_hat near singular")
    minv = np.linalg.inv(m)
    v = symmetrize(minv @ q @ minv.T)
    return FitResult(
        model="truncated-regression",
        theta_hat=beta,
        sigma_hat=None,
        M_hat=m,
        Q_hat=q,
        V_hat=v,
        residuals=y - x @ beta,
        psi_values=s,
        converged=True,
        iterations=iterations,
        cfg=PsiConfig(c=c),
        n=n,
        psi_joint=s,
        jac_joint=jac,
        row_w=np.ones(n),
    )


def fit_restricted(d, cfg, r, model="regression", case_weights=None, ridge=False):
    """Fit with the tested coefficient block constrained to zero.

    The returned FitResult is expressed in the full coordinate system: the
    tested components of theta_hat are exactly zero and psi_values / M_hat /
    Q_hat / V_hat are evaluated at the restricted solution.
    """
    n, p = d.x.shape
    intercept_index = 0 if d.intercept_added else None
    r.validate(p, intercept_index)
    if not r.tested_indices:
        if model == "regression":
            return fit_mallows(d, cfg, case_weights=case_weights, ridge=ridge)
        return fit_robust_logistic(d, cfg, case_weights=case_weights, ridge=ridge)
    free = np.ones(p, dtype=bool)
    free[list(r.tested_indices)] = False
    om = _case_weights(n, case_weights)
    if model == "regression":
        if d.y is None:
            raise ValidationError("regression fit requires a response")
        cfg = cfg or PsiConfig(weight="inverse-norm")
        beta, sigma, iterations, tau = _solve_mallows(d.x, d.y, cfg, om, ridge, free_mask=free)
        out = _assemble_regression(
            d.x, d.y, beta, sigma, cfg, om, True, iterations, tested=r.tested_indices, tau=tau
        )
        return out
    if model == "logistic":
        sub = Dataset(
            x=d.x[:, free],
            y=d.y,
            column_names=tuple(np.array(d.column_names)[free]),
            intercept_added=d.intercept_added,
        )
        subfit = fit_robust_logistic(sub, cfg, case_weights=case_weights, ridge=ridge)
        beta = np.zeros(p)
        beta[free] = subfit.theta_hat
        cfg = cfg or PsiConfig()
        g, psi_rows, m_hat, centered, prob = _logistic_system(d.x, d.y, beta, cfg, om)
        sw = om.sum()
        q_hat = symmetrize((psi_rows * om[:, None]).T @ psi_rows / sw)
        minv = np.linalg.inv(m_hat)
        v_hat = symmetrize(minv @ q_hat @ minv.T)
        pq = prob * (1.0 - prob)
        return FitResult(
            model="logistic",
            theta_hat=beta,
            sigma_hat=None,
            M_hat=m_hat,
            Q_hat=q_hat,
            V_hat=v_hat,
            residuals=(d.y - prob) / np.sqrt(pq),
            psi_values=psi_rows,
            converged=subfit.converged,
            iterations=subfit.iterations,
            cfg=cfg,
            n=n,
            psi_joint=psi_rows,
            jac_joint=m_hat,
            row_w=row_weights(d.x, cfg),
            row_xnorm=np.sqrt(np.sum(np.square(d.x), axis=1)),
            tested_indices=r.tested_indices,
        )
    raise ValidationError(f"restricted fits support regression/logistic, not {model!r}")


class HuberLocationScale(BaseEstimator):
    """Joint Huber location-scale estimator with a scikit-learn interface."""

    def __init__(self, c=1.345):
        self.c = c

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False)
        x = X.ravel() if X.ndim == 1 else X[:, 0]
        self.result_ = fit_location_scale(x, PsiConfig(c=self.c))
        self.location_ = float(self.result_.theta_hat[0])
        self.scale_ = float(self.result_.sigma_hat)
        return self

    def predict(self, X):
        check_is_fitted(self, "location_")
        X = check_array(X, ensure_2d=False)
        return np.full(X.shape[0], self.location_)


class MallowsRegressor(RegressorMixin, BaseEstimator):
    """Mallows-type robust linear regression with joint Proposal-2 scale."""

    def __init__(self, c=1.345, weight="inverse-norm", weight_cap=2.0, fit_intercept=True, ridge=False):
        self.c = c
        self.weight = weight
        self.weight_cap = weight_cap
        self.fit_intercept = fit_intercept
        self.ridge = ridge

    def _config(self):
        return PsiConfig(c=self.c, weight=self.weight, weight_cap=self.weight_cap)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        design = np.hstack([np.ones((X.shape[0], 1)), X]) if self.fit_intercept else X
        d = Dataset(x=design, y=y, intercept_added=self.fit_intercept)
        self.result_ = fit_mallows(d, self._config(), ridge=self.ridge)
        theta = self.result_.theta_hat
        if self.fit_intercept:
            self.intercept_ = float(theta[0])
            self.coef_ = theta[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = theta.copy()
        self.scale_ = float(self.result_.sigma_hat)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_


class RobustLogisticRegressor(ClassifierMixin, BaseEstimator):
    """Robust quasilikelihood logistic regression."""

    def __init__(self, c=1.345, weight="inverse-norm", weight_cap=2.0, fit_intercept=True):
        self.c = c
        self.weight = weight
        self.weight_cap = weight_cap
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        design = np.hstack([np.ones((X.shape[0], 1)), X]) if self.fit_intercept else X
        d = Dataset(x=design, y=y, intercept_added=self.fit_intercept)
        cfg = PsiConfig(c=self.c, weight=self.weight, weight_cap=self.weight_cap)
        self.result_ = fit_robust_logistic(d, cfg)
        theta = self.result_.theta_hat
        if self.fit_intercept:
            self.intercept_ = float(theta[0])
            self.coef_ = theta[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = theta.copy()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_

    def predict_proba(self, X):
        eta = self.decision_function(X)
        p = 1.0 / (1.0 + np.exp(-eta))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)


class TruncatedScoreMLE(RegressorMixin, BaseEstimator):
    """Gaussian MLE with the score truncated to norm at most c."""

    def __init__(self, c=2.0, model="regression", fit_intercept=True):
        self.c = c
        self.model = model
        self.fit_intercept = fit_intercept

    def fit(self, X, y=None):
        if self.model == "gaussian-mean":
            X = check_array(X, ensure_2d=False)
            x = X.ravel() if X.ndim == 1 else X[:, 0]
            self.result_ = fit_truncated_mle(Dataset(x=x[:, None]), "gaussian-mean", self.c)
            self.location_ = float(self.result_.theta_hat[0])
            return self
        X, y = check_X_y(X, y)
        design = np.hstack([np.ones((X.shape[0], 1)), X]) if self.fit_intercept else X
        d = Dataset(x=design, y=y, intercept_added=self.fit_intercept)
        self.result_ = fit_truncated_mle(d, "regression", self.c)
        theta = self.result_.theta_hat
        if self.fit_intercept:
            self.intercept_ = float(theta[0])
            self.coef_ = theta[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = theta.copy()
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        if self.model == "gaussian-mean":
            X = check_array(X, ensure_2d=False)
            return np.full(X.shape[0], self.location_)
        X = check_array(X)
        return self.intercept_ + X @ self.coef_
