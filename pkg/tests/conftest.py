import numpy as np
import pytest

from dpmest.data import ScenarioSpec, generate_scenario
from dpmest.estimators import PsiConfig, RestrictedSpec, fit_mallows, fit_restricted
from dpmest.inference import (
    level_functional,
    lr_statistic,
    score_statistic,
    wald_statistic,
)

NULL_SEED = 101
NULL_REPS = 2000
TESTED = RestrictedSpec(tested_indices=(3, 4))


@pytest.fixture(scope="session")
def reg_dataset():
    spec = ScenarioSpec(kind="regression-normal", n=1000, seed=42)
    return generate_scenario(spec)


@pytest.fixture(scope="session")
def reg_fit(reg_dataset):
    return fit_mallows(reg_dataset, PsiConfig(weight="inverse-norm"))


@pytest.fixture(scope="session")
def null_reps():
    """Per-replication statistics under the null scenario at n=1000.

    Shared by the distributional invariants and the acceptance criteria so
    the 2000 fits are computed once per session.
    """
    cfg = PsiConfig(weight="inverse-norm")
    n = 1000
    rows = {"nW": [], "alpha": [], "nR": [], "S_tilde": [], "W": []}
    for rep in range(NULL_REPS):
        spec = ScenarioSpec(kind="regression-normal", n=n, seed=NULL_SEED)
        d = generate_scenario(spec, stream_base=rep)
        fit = fit_mallows(d, cfg)
        w = wald_statistic(fit, TESTED)
        restr = fit_restricted(d, cfg, TESTED)
        r_stat = score_statistic(restr, TESTED, fit_full_structure=fit)
        s = lr_statistic(fit, restr)
        rows["W"].append(w)
        rows["nW"].append(n * w)
        rows["alpha"].append(level_functional(w, n, TESTED.k))
        rows["nR"].append(n * r_stat)
        rows["S_tilde"].append(s["S_tilde"])
    return {k: np.array(v) for k, v in rows.items()}
