"""Brute-force ground truth: exhaustive sensitivities on tiny grids,
finite-difference influence functions, and an independent grid-search fitter.

Everything here is deliberately slow and simple; it exists to verify the
closed-form bounds and solvers elsewhere in the package.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateScaleError, OracleBudgetError, ValidationError
from .estimators import (
    PsiConfig,
    fisher_kappa,
    fit_location_scale,
    fit_mallows,
    fit_robust_logistic,
    fit_truncated_mle,
    huber_psi,
)

__all__ = [
    "DomainGrid",
    "model_functional",
    "brute_local_sensitivity",
    "brute_smooth_sensitivity",
    "finite_difference_if",
    "grid_fit_oracle",
    "influence_check_suite",
]

MAX_BRUTE_N = 10
MAX_SMOOTH_N = 6


@dataclass(frozen=True)
class DomainGrid:
    """A small finite discretization of the (univariate) data space."""

    points: tuple

    def __post_init__(self):
        pts = tuple(float(v) for v in self.points)
        if len(pts) < 2 or len(pts) > 32:
            raise ValidationError("grid must have between 2 and 32 points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValidationError("grid points must be strictly increasing")
        if not all(math.isfinite(v) for v in pts):
            raise ValidationError("grid points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def span(self):
        return self.points[-1] - self.points[0]


def model_functional(model, cfg=None, c=1.345):
    """A callable mapping (values, case_weights) to the fitted parameter vector.

    Models: ``mean``, ``huber-location`` (unit scale), ``location-scale``,
    ``regression`` (values are (X, y) tuples), ``logistic``.
    """
    if model == "mean":

        def f(values, case_weights=None):
            v = np.asarray(values, dtype=float).ravel()
            om = np.ones(v.shape[0]) if case_weights is None else np.asarray(case_weights)
            return np.array([float(np.dot(om, v) / om.sum())])

        return f
    if model == "huber-location":

        def f(values, case_weights=None):
            d = Dataset(x=np.asarray(values, dtype=float).ravel()[:, None])
            fit = fit_truncated_mle(d, "gaussian-mean", c=c, case_weights=case_weights)
            return fit.theta_hat.copy()

        return f
    if model == "location-scale":
        cfg_ls = cfg or PsiConfig(c=c)

        def f(values, case_weights=None):
            fit = fit_location_scale(np.asarray(values, dtype=float).ravel(), cfg_ls,
                                     case_weights=case_weights)
            return np.append(fit.theta_hat, fit.sigma_hat)

        return f
    if model == "regression":
        cfg_r = cfg or PsiConfig(c=c, weight="inverse-norm")

        def f(values, case_weights=None):
            x, y = values
            d = Dataset(x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float))
            fit = fit_mallows(d, cfg_r, case_weights=case_weights)
            return np.append(fit.theta_hat, fit.sigma_hat)

        return f
    if model == "logistic":
        cfg_l = cfg or PsiConfig(c=c, weight="inverse-norm")

        def f(values, case_weights=None):
            x, y = values
            d = Dataset(x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float))
            fit = fit_robust_logistic(d, cfg_l, case_weights=case_weights)
            return fit.theta_hat.copy()

        return f
    raise ValidationError(f"unknown model {model!r}")


@dataclass
class BruteResult:
    value: float
    evaluations: int
    failures: int


def brute_local_sensitivity(f, values, grid):
    """Exhaustive local sensitivity: max over single-row replacements.

    Estimator failures on degenerate neighbors are skipped and counted.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.shape[0]
    if n > MAX_BRUTE_N:
        raise OracleBudgetError(f"brute enumeration limited to n <= {MAX_BRUTE_N}, got {n}")
    base = f(v)
    best = 0.0
    evals = 0
    failures = 0
    for i in range(n):
        for g in grid.points:
            if g == v[i]:
                continue
            mod = v.copy()
            mod[i] = g
            evals += 1
            try:
                out = f(mod)
            except DegenerateScaleError:
                failures += 1
                continue
            best = max(best, float(np.linalg.norm(out - base)))
    return BruteResult(value=best, evaluations=evals, failures=failures)


def brute_smooth_sensitivity(f, values, xi, grid, max_hamming, gs_bound=None):
    """Exhaustive smooth sensitivity truncated at ``max_hamming``.

    Returns the truncated supremum sup_{d_H <= max_hamming} e^{-xi d_H} LS(D')
    together with a certified bound on the omitted tail,
    e^{-xi (max_hamming+1)} * gs_bound. By default gs_bound is the grid span,
    which dominates the local sensitivity of any estimator whose output stays
    inside the convex hull of its data.
    """
    if not xi > 0:
        raise ValidationError("xi must be positive")
    v = np.asarray(values, dtype=float).ravel()
    n = v.shape[0]
    if n > MAX_SMOOTH_N:
        raise OracleBudgetError(f"smooth enumeration limited to n <= {MAX_SMOOTH_N}, got {n}")
    max_hamming = min(int(max_hamming), n)
    if gs_bound is None:
        gs_bound = grid.span
    best = 0.0
    evals = 0
    failures = 0
    for h in range(0, max_hamming + 1):
        weight = math.exp(-xi * h)
        for rows in itertools.combinations(range(n), h):
            for repl in itertools.product(grid.points, repeat=h):
                mod = v.copy()
                mod[list(rows)] = repl
                try:
                    ls = brute_local_sensitivity(f, mod, grid)
                except DegenerateScaleError:
                    failures += 1
                    continue
                evals += ls.evaluations
                failures += ls.failures
                best = max(best, weight * ls.value)
    tail = math.exp(-xi * (max_hamming + 1)) * gs_bound
    return {
        "value": best,
        "truncation_bound": tail,
        "evaluations": evals,
        "failures": failures,
    }


def finite_difference_if(f, values, obs, t):
    """Influence of contamination at ``obs``: (f((1-t)F_n + t Delta) - f(F_n)) / t.

    The mixture is fit exactly through case weights: each original row keeps
    weight (1-t)/n and the contamination point enters with weight t.
    """
    if not 0.0 < t < 0.1:
        raise ValidationError(f"step t must lie in (0, 0.1), got {t}")
    if isinstance(values, tuple):
        x, y = values
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        n = x.shape[0]
        x_obs, y_obs = obs
        xc = np.vstack([x, np.asarray(x_obs, dtype=float).ravel()[None, :]])
        yc = np.append(y, float(y_obs))
        om = np.append(np.full(n, (1.0 - t) / n), t)
        base = f((x, y))
        cont = f((xc, yc), om)
    else:
        v = np.asarray(values, dtype=float).ravel()
        n = v.shape[0]
        vc = np.append(v, float(obs))
        om = np.append(np.full(n, (1.0 - t) / n), t)
        base = f(v)
        cont = f(vc, om)
    return (cont - base) / t


def influence_check_suite(n_configs=100, t=1e-6, rtol=1e-3, seed=123):
    """Cross-check the analytic empirical influence function against its
    finite-difference contamination derivative on seeded random configs.

    Cycles through location-scale, regression, logistic, and Huber-location
    models. Returns a report with per-config relative errors and pass counts.
    """
    from .numerics import rng_stream
    from .sensitivity import empirical_influence

    models = ("location-scale", "regression", "logistic", "huber-location")
    results = []
    for i in range(int(n_configs)):
        gen = rng_stream(seed, i)
        model = models[i % len(models)]
        if model == "location-scale":
            v = gen.normal(size=40) * 1.3 + 0.5
            obs = float(gen.uniform(-2.5, 2.5))
            fit = fit_location_scale(v, PsiConfig())
            analytic = np.asarray(empirical_influence(fit, obs))
            fd = finite_difference_if(model_functional("location-scale"), v, obs, t)
        elif model == "huber-location":
            v = gen.normal(size=40)
            obs = float(gen.uniform(-2.5, 2.5))
            fit = fit_truncated_mle(Dataset(x=v[:, None]), "gaussian-mean", c=1.345)
            analytic = np.asarray(empirical_influence(fit, obs))
            fd = finite_difference_if(model_functional("huber-location", c=1.345), v, obs, t)
        elif model == "regression":
            x = gen.normal(size=(60, 3))
            y = x @ np.array([1.0, -0.5, 0.25]) + gen.normal(size=60)
            cfg = PsiConfig(weight="inverse-norm")
            fit = fit_mallows(Dataset(x=x, y=y), cfg)
            x0 = gen.normal(size=3)
            y0 = float(gen.normal())
            analytic = np.asarray(empirical_influence(fit, (x0, y0)))
            fd = finite_difference_if(model_functional("regression", cfg), (x, y), (x0, y0), t)
        else:
            x = gen.normal(size=(80, 2))
            eta = x @ np.array([0.8, -0.6])
            y = (gen.random(80) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
            cfg = PsiConfig(weight="inverse-norm")
            fit = fit_robust_logistic(Dataset(x=x, y=y), cfg)
            x0 = gen.normal(size=2)
            y0 = float(gen.integers(0, 2))
            analytic = np.asarray(empirical_influence(fit, (x0, y0)))
            fd = finite_difference_if(model_functional("logistic", cfg), (x, y), (x0, y0), t)
        err = float(
            np.linalg.norm(fd - analytic) / max(np.linalg.norm(analytic), 1e-12)
        )
        results.append({"model": model, "relative_error": err, "passed": bool(err < rtol)})
    passed = sum(1 for r in results if r["passed"])
    return {
        "configs": len(results),
        "passed": passed,
        "failed": len(results) - passed,
        "max_relative_error": max(r["relative_error"] for r in results),
        "results": results,
    }


def grid_fit_oracle(values, c=1.345, rounds=14, grid_size=33):
    """Independent location-scale solver: nested grid search on the squared
    estimating-equation norm, refined to ~1e-6."""
    v = np.asarray(values, dtype=float).ravel()
    kappa = fisher_kappa(c)
    med = float(np.median(v))
    mad = float(np.median(np.abs(v - med)))
    if mad <= 0:
        raise DegenerateScaleError("constant data: no interior scale minimum")
    mu_lo, mu_hi = float(np.min(v)), float(np.max(v))
    sig0 = 1.4826 * mad
    sig_lo, sig_hi = sig0 / 10.0, sig0 * 10.0

    def objective(mu, sigma):
        r = (v[:, None, None] - mu[None, :, :]) / sigma[None, :, :]
        psi = np.clip(r, -c, c)
        g1 = psi.mean(axis=0)
        g2 = (psi * psi - kappa).mean(axis=0)
        return g1 * g1 + g2 * g2

    best_mu, best_sig = med, sig0
    for _ in range(rounds):
        mus = np.linspace(mu_lo, mu_hi, grid_size)
        sigs = np.linspace(sig_lo, sig_hi, grid_size)
        mg, sg = np.meshgrid(mus, sigs, indexing="ij")
        obj = objective(mg, sg)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        best_mu, best_sig = float(mus[i]), float(sigs[j])
        mu_step = mus[1] - mus[0]
        sig_step = sigs[1] - sigs[0]
        mu_lo, mu_hi = best_mu - 2 * mu_step, best_mu + 2 * mu_step
        sig_lo, sig_hi = max(best_sig - 2 * sig_step, 1e-12), best_sig + 2 * sig_step
    return best_mu, best_sig
