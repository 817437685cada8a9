"""Replicated level/power/estimation experiments with deterministic seeding.

Replication r of a run with master seed s draws its data from substream
(s, r) and its noise from substreams derived from (s, r) and the epsilon
index, so results are independent of execution order and parallelism.
"""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .data import ScenarioSpec, generate_scenario
from .errors import ValidationError
from .estimators import PsiConfig, RestrictedSpec, fit_mallows
from .inference import level_functional, wald_statistic
from .numerics import gaussian_stream
from .privacy import PrivacyParams, mechanism_scale
from .sensitivity import ges_regression_bound, level_ges_wald

__all__ = ["run_level_sweep", "run_power_sweep", "run_estimation"]

MAX_EPSILONS = 6
BETA_DEFAULT = (1.0, 1.0, 0.0, 0.0)


def _resolve_delta(delta, n):
    if delta == "n^-2" or delta is None:
        return 1.0 / (n * n)
    return float(delta)


def _rep_parts(task):
    """One replication: fit, Wald level functional, and sensitivity scales."""
    (kind, n, beta, nu, rate, seed, rep, c, weight, weight_cap, tested) = task
    spec = ScenarioSpec(
        kind=kind, n=n, beta=beta, nu=nu, contamination_rate=rate, seed=seed
    )
    d = generate_scenario(spec, stream_base=rep)
    cfg = PsiConfig(c=c, weight=weight, weight_cap=weight_cap)
    r = RestrictedSpec(tested_indices=tested)
    fit = fit_mallows(d, cfg)
    ges = ges_regression_bound(fit)
    w = wald_statistic(fit, r)
    level = level_ges_wald(fit, r, ges.gamma)
    alpha = level_functional(w, fit.n, r.k)
    return alpha, level.gamma, fit.theta_hat, ges.gamma


def _collect(tasks, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_rep_parts, tasks, chunksize=8))
    return [_rep_parts(t) for t in tasks]


def _noise_streams(seed, rep, eps_index):
    pv = gaussian_stream(seed, rep * 16 + 3 + eps_index)
    est = gaussian_stream(seed, rep * 16 + 9 + eps_index)
    return pv, est


def _sweep(kind, n, beta, nu, rate, epsilons, reps, seed, cfg_args, tested,
           delta, nominal, jobs):
    if len(epsilons) > MAX_EPSILONS:
        raise ValidationError(f"at most {MAX_EPSILONS} epsilon values per sweep")
    c, weight, weight_cap = cfg_args
    tasks = [
        (kind, n, beta, nu, rate, seed, rep, c, weight, weight_cap, tested)
        for rep in range(reps)
    ]
    parts = _collect(tasks, jobs)
    delta_v = _resolve_delta(delta, n)
    params = [PrivacyParams(epsilon=e, delta=delta_v) for e in epsilons]
    beta_arr = np.array(beta, dtype=float)
    if nu is not None:
        beta_arr = beta_arr.copy()
        beta_arr[2] = nu
    beta_full = np.concatenate([[0.0], beta_arr])
    rows = []
    for j, (eps, par) in enumerate(zip(epsilons, params)):
        rejections = 0
        est_errors = np.empty(reps)
        for rep, (alpha, level_gamma, theta, ges_gamma) in enumerate(parts):
            pv_stream, est_stream = _noise_streams(seed, rep, j)
            p_scale = mechanism_scale(level_gamma / n, n, par)
            raw = alpha + p_scale * float(pv_stream.normal())
            pval = min(1.0, max(0.0, raw))
            if pval < nominal:
                rejections += 1
            e_scale = mechanism_scale(ges_gamma / n, n, par)
            released = theta + e_scale * est_stream.normal(theta.shape)
            est_errors[rep] = float(np.linalg.norm(released - beta_full))
        rate_hat = rejections / reps
        rows.append(
            {
                "n": n,
                "nu": nu,
                "epsilon": eps,
                "replications": reps,
                "empirical_level_or_power": rate_hat,
                "mc_stderr": math.sqrt(max(rate_hat * (1.0 - rate_hat), 1e-12) / reps),
                "mean_abs_est_error": float(np.mean(est_errors)),
            }
        )
    return rows


def run_level_sweep(
    n_values,
    epsilons,
    reps,
    seed,
    kind="regression-normal",
    beta=BETA_DEFAULT,
    contamination_rate=0.0,
    c=1.345,
    weight="inverse-norm",
    weight_cap=2.0,
    tested=(3, 4),
    delta="n^-2",
    nominal=0.05,
    jobs=1,
):
    """Empirical level of the DP Wald test across sample sizes and epsilons."""
    rows = []
    for n in n_values:
        rows.extend(
            _sweep(kind, int(n), tuple(beta), None, contamination_rate, list(epsilons),
                   int(reps), int(seed), (c, weight, weight_cap), tuple(tested),
                   delta, nominal, jobs)
        )
    return rows


def run_power_sweep(
    nu_values,
    n,
    epsilons,
    reps,
    seed,
    kind="regression-normal",
    beta=BETA_DEFAULT,
    contamination_rate=0.0,
    c=1.345,
    weight="inverse-norm",
    weight_cap=2.0,
    tested=(3, 4),
    delta="n^-2",
    nominal=0.05,
    jobs=1,
):
    """Empirical power of the DP Wald test across the beta_3 sweep."""
    rows = []
    for nu in nu_values:
        rows.extend(
            _sweep(kind, int(n), tuple(beta), float(nu), contamination_rate,
                   list(epsilons), int(reps), int(seed), (c, weight, weight_cap),
                   tuple(tested), delta, nominal, jobs)
        )
    return rows


def run_estimation(
    n_values,
    epsilon,
    reps,
    seed,
    kind="regression-normal",
    beta=BETA_DEFAULT,
    c=1.345,
    weight="inverse-norm",
    weight_cap=2.0,
    delta="n^-2",
    jobs=1,
):
    """Median private and non-private estimation errors per sample size."""
    out = []
    for n in n_values:
        n = int(n)
        tasks = [
            (kind, n, tuple(beta), None, 0.0, int(seed), rep, c, weight, weight_cap, (3, 4))
            for rep in range(reps)
        ]
        parts = _collect(tasks, jobs)
        par = PrivacyParams(epsilon=float(epsilon), delta=_resolve_delta(delta, n))
        beta_full = np.concatenate([[0.0], np.array(beta, dtype=float)])
        dp_err = np.empty(reps)
        np_err = np.empty(reps)
        for rep, (_, _, theta, ges_gamma) in enumerate(parts):
            _, est_stream = _noise_streams(int(seed), rep, 0)
            e_scale = mechanism_scale(ges_gamma / n, n, par)
            released = theta + e_scale * est_stream.normal(theta.shape)
            dp_err[rep] = float(np.linalg.norm(released - beta_full))
            np_err[rep] = float(np.linalg.norm(theta - beta_full))
        out.append(
            {
                "n": n,
                "epsilon": float(epsilon),
                "replications": reps,
                "median_dp_error": float(np.median(dp_err)),
                "median_nonprivate_error": float(np.median(np_err)),
            }
        )
    return out
