"""Command-line front end: fit/test/ci/simulate/verify subcommands with
deterministic JSON and CSV emission.

Configuration comes from defaults, then an optional key=value config file,
then command-line flags, in increasing priority.
"""

import argparse
import csv
import io
import json
import math
import re
import sys
from types import SimpleNamespace

import numpy as np

from .data import SCENARIO_KINDS, Dataset, ScenarioSpec, generate_scenario, load_csv
from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    OracleBudgetError,
    ParseError,
    RegularityError,
    SensitivityUndefinedError,
    UnboundedSensitivityError,
    UnsupportedDimensionError,
    ValidationError,
)
from .estimators import (
    PsiConfig,
    RestrictedSpec,
    fit_location_scale,
    fit_mallows,
    fit_robust_logistic,
    fit_truncated_mle,
)
from .inference import dp_test
from .numerics import sym_eigen_extremes
from .oracle import (
    DomainGrid,
    brute_local_sensitivity,
    brute_smooth_sensitivity,
    influence_check_suite,
    model_functional,
)
from .privacy import BudgetLedger, PrivacyParams, release_estimate
from .sensitivity import (
    SensitivityReport,
    ges_location_scale,
    ges_logistic_bound,
    ges_regression_bound,
    theorem_min_n,
)
from .simulate import run_level_sweep, run_power_sweep

__all__ = ["main"]

DEFAULTS = {
    "data": None,
    "scenario": None,
    "response": None,
    "add_intercept": False,
    "model": "regression",
    "c": 1.345,
    "weight_cap": 2.0,
    "epsilon": "1.0",
    "delta": "n^-2",
    "seed": 0,
    "reps": 2000,
    "null": None,
    "kind": "wald",
    "mode": "corrected",
    "strict_min_n": False,
    "release_nonprivate": False,
    "out": None,
    "n": "1000",
    "nu": None,
    "contamination": 0.0,
    "sweep": "level",
    "nominal": 0.05,
    "jobs": 1,
    "force_gamma": None,
    "check": "influence",
    "grid": "0,1",
    "xi": 1.0,
    "max_hamming": 2,
    "configs": 100,
    "ridge": False,
}

_FLOAT_KEYS = ("c", "weight_cap", "contamination", "nominal", "xi")
_OPT_FLOAT_KEYS = ("nu", "force_gamma")
_INT_KEYS = ("seed", "reps", "jobs", "max_hamming", "configs")
_BOOL_KEYS = ("add_intercept", "strict_min_n", "release_nonprivate", "ridge")

_NULL_TERM = re.compile(r"^b(\d+)=(-?\d+(?:\.\d+)?)$")


def _parse_config_file(path):
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ParseError(f"cannot read config file {path}: {exc}")
    return out


def _coerce(cfg):
    def as_bool(v):
        if isinstance(v, bool):
            return v
        return str(v).strip().lower() in ("1", "true", "yes", "on")

    for key in _FLOAT_KEYS:
        cfg[key] = float(cfg[key])
    for key in _OPT_FLOAT_KEYS:
        if cfg[key] is not None:
            cfg[key] = float(cfg[key])
    for key in _INT_KEYS:
        cfg[key] = int(cfg[key])
    for key in _BOOL_KEYS:
        cfg[key] = as_bool(cfg[key])
    return cfg


def _merge_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = _parse_config_file(args.config)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    try:
        return _coerce(cfg)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid configuration value: {exc}")


def _float_list(text, what):
    try:
        values = [float(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError:
        raise ParseError(f"cannot parse {what} list from {text!r}")
    if not values:
        raise ParseError(f"empty {what} list")
    return values


def _int_list(text, what):
    return [int(v) for v in _float_list(text, what)]


def _nu_grid(text):
    """A comma list, or lo:hi:step range notation."""
    if ":" in str(text):
        parts = str(text).split(":")
        if len(parts) != 3:
            raise ParseError(f"nu range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ParseError(f"invalid nu range {text!r}")
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 12) for i in range(count)]
    return _float_list(text, "nu")


def _resolve_delta(delta, n):
    if str(delta) == "n^-2":
        return 1.0 / (n * n)
    try:
        return float(delta)
    except ValueError:
        raise ParseError(f"delta must be a float or 'n^-2', got {delta!r}")


def _single_epsilon(cfg):
    eps = _float_list(cfg["epsilon"], "epsilon")
    if len(eps) != 1:
        raise ParseError("this command takes a single epsilon value")
    return eps[0]


def _parse_null(spec, m, intercept_added):
    if not spec:
        raise ParseError("a null specification such as 'b3=0,b4=0' is required")
    idx = []
    for term in str(spec).split(","):
        term = term.strip()
        match = _NULL_TERM.match(term)
        if match is None:
            raise ParseError(f"cannot parse null term {term!r}; expected bK=0")
        k = int(match.group(1))
        if float(match.group(2)) != 0.0:
            raise ParseError(f"only zero nulls are supported, got {term!r}")
        if k < 1:
            raise ParseError("b0 denotes the intercept and cannot be tested")
        col = k if intercept_added else k - 1
        if col >= m:
            raise ParseError(f"unknown column b{k} for a design with {m} columns")
        idx.append(col)
    return RestrictedSpec(tested_indices=tuple(idx))


def _load_dataset(cfg):
    if (cfg["data"] is None) == (cfg["scenario"] is None):
        raise ParseError("exactly one of --data or --scenario is required")
    if cfg["data"] is not None:
        try:
            return load_csv(
                cfg["data"], response=cfg["response"], add_intercept=cfg["add_intercept"]
            )
        except OSError as exc:
            raise ParseError(f"cannot read {cfg['data']}: {exc}")
    if cfg["scenario"] not in SCENARIO_KINDS:
        raise ParseError(
            f"unknown scenario {cfg['scenario']!r}; choose from {', '.join(SCENARIO_KINDS)}"
        )
    n_list = _int_list(cfg["n"], "n")
    if len(n_list) != 1:
        raise ParseError("fit/test/ci take a single n")
    spec = ScenarioSpec(
        kind=cfg["scenario"],
        n=n_list[0],
        nu=cfg["nu"],
        contamination_rate=cfg["contamination"],
        seed=cfg["seed"],
    )
    return generate_scenario(spec)


def _psi_config(cfg, weight="inverse-norm"):
    return PsiConfig(c=cfg["c"], weight=weight, weight_cap=cfg["weight_cap"])


def _values_for_univariate(d):
    if d.y is not None:
        return np.asarray(d.y, dtype=float)
    if d.m != 1:
        raise ParseError("univariate models need a single column or a --response")
    return np.asarray(d.x[:, 0], dtype=float)


def _fit_and_ges(d, cfg):
    """Fit the configured model and return (release target, combined report)."""
    model = cfg["model"]
    if model == "location-scale":
        fit = fit_location_scale(_values_for_univariate(d), PsiConfig(c=cfg["c"]))
        loc, scale = ges_location_scale(fit)
        gamma = math.hypot(loc.gamma, scale.gamma)
        emin, emax = sym_eigen_extremes(fit.M_hat)
        report = SensitivityReport(
            gamma=gamma,
            method="exact-formula",
            constants={
                "K_n": gamma,
                "L_n": max(cfg["c"], 1.0),
                "b": emin,
                "eigen_max_M": emax,
            },
        )
        target = SimpleNamespace(
            converged=fit.converged,
            theta_hat=np.append(fit.theta_hat, fit.sigma_hat),
        )
        return fit, target, report
    if model == "regression":
        if d.y is None:
            raise ParseError("regression requires a response column")
        fit = fit_mallows(d, _psi_config(cfg), ridge=cfg["ridge"])
        report = ges_regression_bound(fit)
        target = SimpleNamespace(
            converged=fit.converged,
            theta_hat=np.append(fit.theta_hat, fit.sigma_hat),
        )
        return fit, target, report
    if model == "logistic":
        if d.y is None:
            raise ParseError("logistic requires a response column")
        fit = fit_robust_logistic(d, _psi_config(cfg), ridge=cfg["ridge"])
        return fit, fit, ges_logistic_bound(fit)
    if model == "truncated-mle":
        if d.y is not None:
            fit = fit_truncated_mle(d, "regression", c=cfg["c"])
            l_n = float(np.max(np.sum(np.square(d.x), axis=1)))
        else:
            fit = fit_truncated_mle(
                Dataset(x=_values_for_univariate(d)[:, None]), "gaussian-mean", c=cfg["c"]
            )
            l_n = 1.0
        emin, emax = sym_eigen_extremes(fit.M_hat)
        if emin <= 1e-12 * max(emax, 1.0):
            raise RegularityError("regularity check failed: M_hat eigen_min below tolerance")
        report = SensitivityReport(
            gamma=cfg["c"] / emin,
            method="eigen-bound",
            constants={"K_n": cfg["c"], "L_n": l_n, "b": emin, "eigen_max_M": emax},
        )
        return fit, fit, report
    raise ParseError(f"unknown model {cfg['model']!r}")


def cmd_fit(cfg):
    d = _load_dataset(cfg)
    epsilon = _single_epsilon(cfg)
    n = d.n
    delta = _resolve_delta(cfg["delta"], n)
    params = PrivacyParams(epsilon=epsilon, delta=delta)
    fit, target, report = _fit_and_ges(d, cfg)
    consts = report.constants
    min_n = theorem_min_n(
        "estimation",
        m=target.theta_hat.shape[0],
        p=target.theta_hat.shape[0],
        epsilon=epsilon,
        delta=delta,
        K_n=consts["K_n"],
        L_n=consts["L_n"],
        b=consts["b"],
        eigen_max_M=consts["eigen_max_M"],
        n=n,
    )
    if cfg["force_gamma"] is not None:
        report = SensitivityReport(gamma=cfg["force_gamma"], method="override")
    ledger = BudgetLedger()
    rel = release_estimate(
        target,
        report,
        n,
        params,
        cfg["seed"],
        stream_id=0,
        ledger=ledger,
        min_n=min_n,
        strict=cfg["strict_min_n"],
        label=cfg["model"],
    )
    doc = {
        "command": "fit",
        "model": cfg["model"],
        "n": n,
        "theta_private": [float(v) for v in np.asarray(rel.value).ravel()],
        "noise_scale": rel.noise_scale,
        "gamma": report.gamma,
        "min_n": {"required": min_n["n_required"], "satisfied": min_n["satisfied"]},
        "ledger": ledger.to_json(),
        "seed": cfg["seed"],
        "epsilon": epsilon,
        "delta": delta,
    }
    if cfg["release_nonprivate"]:
        doc["theta_nonprivate"] = [float(v) for v in target.theta_hat]
    return doc


def _run_test(cfg):
    if cfg["model"] not in ("regression", "logistic"):
        raise ParseError("test/ci support the regression and logistic models")
    d = _load_dataset(cfg)
    if d.y is None:
        raise ParseError(f"{cfg['model']} requires a response column")
    r = _parse_null(cfg["null"], d.m, d.intercept_added)
    epsilon = _single_epsilon(cfg)
    delta = _resolve_delta(cfg["delta"], d.n)
    ledger = BudgetLedger()
    result = dp_test(
        d,
        _psi_config(cfg),
        r,
        kind=cfg["kind"],
        params=PrivacyParams(epsilon=epsilon, delta=delta),
        seed=cfg["seed"],
        mode=cfg["mode"],
        model=cfg["model"],
        ledger=ledger,
        gamma_override=cfg["force_gamma"],
        ridge=cfg["ridge"],
    )
    doc = {
        "command": "test",
        "kind": result.kind,
        "k": result.k,
        "dp_pvalue": float(result.dp_pvalue.value),
        "q_recovered": result.q_recovered,
        "ci": list(result.ci) if result.ci is not None else None,
        "mode": result.mode,
        "ledger": ledger.to_json(),
        "n": d.n,
        "seed": cfg["seed"],
        "epsilon": epsilon,
        "delta": delta,
    }
    if cfg["release_nonprivate"]:
        doc["statistic"] = result.statistic
        doc["alpha_hat"] = result.alpha_hat
    return doc, result


def cmd_test(cfg):
    doc, _ = _run_test(cfg)
    return doc


def cmd_ci(cfg):
    doc, result = _run_test(cfg)
    if result.k != 1:
        raise UnsupportedDimensionError("confidence intervals require a single tested column")
    doc["command"] = "ci"
    return doc


def cmd_simulate(cfg):
    scenario = cfg["scenario"]
    if scenario is None:
        scenario = "regression-contaminated" if cfg["contamination"] > 0 else "regression-normal"
    elif scenario not in SCENARIO_KINDS:
        raise ParseError(f"unknown scenario {scenario!r}")
    epsilons = _float_list(cfg["epsilon"], "epsilon")
    tested = (3, 4)
    if cfg["null"]:
        tested = _parse_null(cfg["null"], 5, True).tested_indices
    common = dict(
        epsilons=epsilons,
        reps=cfg["reps"],
        seed=cfg["seed"],
        kind=scenario,
        contamination_rate=cfg["contamination"],
        c=cfg["c"],
        weight_cap=cfg["weight_cap"],
        tested=tested,
        delta=cfg["delta"],
        nominal=cfg["nominal"],
        jobs=cfg["jobs"],
    )
    if cfg["sweep"] == "level":
        rows = run_level_sweep(_int_list(cfg["n"], "n"), **common)
    elif cfg["sweep"] == "power":
        if cfg["nu"] is not None:
            nus = [cfg["nu"]]
        else:
            nus = _nu_grid("-0.5:0.5:0.05")
        n_list = _int_list(cfg["n"], "n")
        if len(n_list) != 1:
            raise ParseError("power sweeps take a single n")
        rows = run_power_sweep(nus, n_list[0], **common)
    else:
        raise ParseError(f"unknown sweep {cfg['sweep']!r}; choose level or power")
    return rows


def cmd_verify(cfg):
    check = cfg["check"]
    if check == "influence":
        report = influence_check_suite(n_configs=cfg["configs"], seed=cfg["seed"])
        return {
            "command": "verify",
            "check": "influence",
            "configs": report["configs"],
            "passed": report["passed"],
            "failed": report["failed"],
            "max_relative_error": report["max_relative_error"],
        }
    grid = DomainGrid(points=tuple(_float_list(cfg["grid"], "grid")))
    n_list = _int_list(cfg["n"], "n")
    if len(n_list) != 1:
        raise ParseError("verify takes a single n")
    n = n_list[0]
    values = np.array([grid.points[i % len(grid.points)] for i in range(n)], dtype=float)
    f = model_functional("mean")
    if check == "local":
        ls = brute_local_sensitivity(f, values, grid)
        return {
            "command": "verify",
            "check": "local",
            "n": n,
            "local_sensitivity": ls.value,
            "evaluations": ls.evaluations,
            "failures": ls.failures,
        }
    if check == "smooth":
        ss = brute_smooth_sensitivity(
            f, values, cfg["xi"], grid, max_hamming=cfg["max_hamming"]
        )
        ls = brute_local_sensitivity(f, values, grid)
        mech = math.sqrt(math.log(max(n, 2))) * grid.span / n
        return {
            "command": "verify",
            "check": "smooth",
            "n": n,
            "xi": cfg["xi"],
            "smooth_sensitivity": ss["value"],
            "local_sensitivity": ls.value,
            "dominates_local": bool(ss["value"] >= ls.value - 1e-15),
            "truncation_bound": ss["truncation_bound"],
            "mechanism_ratio": ss["value"] / mech if mech > 0 else float("inf"),
            "evaluations": ss["evaluations"],
            "failures": ss["failures"],
        }
    raise ParseError(f"unknown check {check!r}; choose influence, local, or smooth")


def _emit(result, cfg):
    if isinstance(result, list):
        buf = io.StringIO()
        fields = list(result[0].keys())
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in result:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in fields})
        text = buf.getvalue()
    else:
        text = json.dumps(result, sort_keys=True, indent=2) + "\n"
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dpmest",
        description="Differentially private robust M-estimation and testing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "fit a model and release a private estimate"),
        ("test", "run a private Wald/score/LR test"),
        ("ci", "private confidence interval for one coefficient"),
        ("simulate", "replicated level/power sweeps to CSV"),
        ("verify", "brute-force oracle checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", help="CSV input path")
        p.add_argument("--scenario", help="synthetic scenario name")
        p.add_argument("--response", help="response column name or index")
        p.add_argument("--add-intercept", dest="add_intercept", action="store_const",
                       const=True, default=None, help="prepend an intercept column")
        p.add_argument("--model", choices=["location-scale", "regression", "logistic",
                                           "truncated-mle"])
        p.add_argument("--c", type=float, help="Huber tuning constant")
        p.add_argument("--weight-cap", dest="weight_cap", type=float,
                       help="Mallows weight cap r0 in w(x)=min(1, r0/|x|)")
        p.add_argument("--epsilon", help="epsilon, or comma list for sweeps")
        p.add_argument("--delta", help="delta, or the rule n^-2")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int, help="replications per sweep cell")
        p.add_argument("--null", help="null spec such as b3=0,b4=0")
        p.add_argument("--kind", choices=["wald", "score", "lr"])
        p.add_argument("--mode", choices=["corrected", "paper-literal"])
        p.add_argument("--strict-min-n", dest="strict_min_n", action="store_const",
                       const=True, default=None)
        p.add_argument("--release-nonprivate", dest="release_nonprivate",
                       action="store_const", const=True, default=None,
                       help="include non-private values (breaks privacy; testing only)")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--n", help="sample size, or comma list for level sweeps")
        p.add_argument("--nu", type=float, help="value of beta_3 in scenarios")
        p.add_argument("--contamination", type=float, help="contamination rate")
        p.add_argument("--sweep", choices=["level", "power"])
        p.add_argument("--nominal", type=float, help="nominal test level")
        p.add_argument("--jobs", type=int, help="parallel replication workers")
        p.add_argument("--force-gamma", dest="force_gamma", type=float,
                       help="override the sensitivity bound (testing hook)")
        p.add_argument("--check", choices=["influence", "local", "smooth"])
        p.add_argument("--grid", help="comma list of oracle grid points")
        p.add_argument("--xi", type=float, help="smooth sensitivity parameter")
        p.add_argument("--max-hamming", dest="max_hamming", type=int)
        p.add_argument("--configs", type=int, help="verify influence config count")
        p.add_argument("--ridge", action="store_const", const=True, default=None,
                       help="add a small ridge to rank-deficient designs")
    return parser


_COMMANDS = {
    "fit": cmd_fit,
    "test": cmd_test,
    "ci": cmd_ci,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}

_EXIT_CODES = (
    (OracleBudgetError, 6),
    (UnsupportedDimensionError, 5),
    (UnboundedSensitivityError, 4),
    (SensitivityUndefinedError, 4),
    (RegularityError, 3),
    (ConvergenceError, 3),
    (DegenerateScaleError, 3),
    (ValidationError, 2),
)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        result = _COMMANDS[args.command](cfg)
        _emit(result, cfg)
    except Exception as exc:
        for exc_type, code in _EXIT_CODES:
            if isinstance(exc, exc_type):
                print(f"dpmest: {exc}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
