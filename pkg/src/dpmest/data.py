"""Dataset ingestion and the synthetic scenario generators.

A Dataset is an n x m design with an optional response vector; scenario
generation covers the clean, heavy-tailed, contaminated, and power-sweep
regression designs plus a univariate location-scale sample and a logistic
design, all fully determined by a seed.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .numerics import rng_stream

__all__ = [
    "Dataset",
    "ScenarioSpec",
    "load_csv",
    "save_csv",
    "generate_scenario",
]

SCENARIO_KINDS = (
    "location-scale",
    "regression-normal",
    "regression-t4-errors",
    "regression-t4-both",
    "regression-contaminated",
    "logistic",
)


@dataclass(frozen=True)
class Dataset:
    """An n x m numeric design with an optional response column."""

    x: np.ndarray
    y: np.ndarray | None = None
    column_names: tuple = ()
    intercept_added: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValidationError(f"design must be a nonempty 2-d array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("design contains non-finite entries")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape[0] != x.shape[0]:
                raise ValidationError(
                    f"response length {y.shape[0]} does not match n={x.shape[0]}"
                )
            if not np.all(np.isfinite(y)):
                raise ValidationError("response contains non-finite entries")
            y = y.copy()
            y.setflags(write=False)
            object.__setattr__(self, "y", y)
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"x{j + 1}" for j in range(x.shape[1]))
            )
        elif len(self.column_names) != x.shape[1]:
            raise ValidationError("column_names length does not match the design width")
        else:
            object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def m(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of a synthetic scenario."""

    kind: str
    n: int
    beta: tuple = (1.0, 1.0, 0.0, 0.0)
    nu: float | None = None
    contamination_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 10:
            raise ValidationError(f"scenario n must be an integer >= 10, got {self.n}")
        if not 0.0 <= self.contamination_rate < 0.5:
            raise ValidationError(
                f"contamination_rate must lie in [0, 0.5), got {self.contamination_rate}"
            )
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))


def load_csv(path, response=None, add_intercept=False):
    """Read an RFC-4180-style CSV with a header row into a Dataset.

    ``response`` selects a column by name or zero-based index; it is removed
    from the design. ``add_intercept`` prepends a column of ones.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or all(not h for h in header):
        raise ParseError(f"{path}: missing header row")
    body = rows[1:]
    if not body:
        raise ParseError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)), dtype=float)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: cell at row {i + 2}, column {header[j]!r} is not numeric: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise ParseError(
                    f"{path}: cell at row {i + 2}, column {header[j]!r} is not finite"
                )
            values[i, j] = v
    y = None
    names = list(header)
    if response is not None:
        if isinstance(response, str):
            if response not in names:
                raise ParseError(f"{path}: response column {response!r} not found")
            ridx = names.index(response)
        else:
            ridx = int(response)
            if not 0 <= ridx < len(names):
                raise ParseError(f"{path}: response index {response} out of range")
        y = values[:, ridx]
        values = np.delete(values, ridx, axis=1)
        del names[ridx]
    if add_intercept:
        values = np.hstack([np.ones((values.shape[0], 1)), values])
        names = ["intercept"] + names
    return Dataset(x=values, y=y, column_names=tuple(names), intercept_added=add_intercept)


def save_csv(path, dataset, response_name="y"):
    """Write a Dataset to CSV with 17 significant digits."""
    names = list(dataset.column_names)
    cols = [dataset.x[:, j] for j in range(dataset.m)]
    if dataset.y is not None:
        names.append(response_name)
        cols.append(dataset.y)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(dataset.n):
            writer.writerow([format(c[i], ".17g") for c in cols])


def _ar1_cov(p, rho=0.5):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _t4_draws(gen, size):
    """Student t with 4 df as normal / sqrt(chi2_4 / 4)."""
    z = gen.standard_normal(size)
    chi = np.sum(np.square(gen.standard_normal(size=(4,) + tuple(np.atleast_1d(size)))), axis=0)
    return z / np.sqrt(chi / 4.0)


def generate_scenario(spec, stream_base=0):
    """Generate the Dataset described by ``spec``, determined by its seed.

    ``stream_base`` offsets the internal substream ids so that replication r
    of a simulation can pass ``stream_base=r`` and stay independent of the
    other replications under the same seed.
    """
    n = int(spec.n)
    beta = np.array(spec.beta, dtype=float)
    if spec.nu is not None:
        if beta.size < 3:
            raise ValidationError("nu sweep requires at least three coefficients")
        beta = beta.copy()
        beta[2] = float(spec.nu)
    base = int(stream_base) * 16
    gen_x = rng_stream(spec.seed, base + 0)
    gen_u = rng_stream(spec.seed, base + 1)
    gen_c = rng_stream(spec.seed, base + 2)

    if spec.kind == "location-scale":
        loc = beta[0] if beta.size else 0.0
        x = loc + gen_x.standard_normal(n)
        return Dataset(x=x[:, None], column_names=("x1",))

    p = beta.size
    if spec.kind == "logistic":
        cov = _ar1_cov(p - 1) if p > 1 else np.eye(0)
        chol = np.linalg.cholesky(cov) if p > 1 else cov
        xraw = gen_x.standard_normal((n, p - 1)) @ chol.T
        x = np.hstack([np.ones((n, 1)), xraw])
        eta = x @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        y = (gen_u.random(n) < prob).astype(float)
        names = ("intercept",) + tuple(f"x{j + 1}" for j in range(p - 1))
        return Dataset(x=x, y=y, column_names=names, intercept_added=True)

    cov = _ar1_cov(p)
    chol = np.linalg.cholesky(cov)
    if spec.kind == "regression-t4-both":
        xraw = _t4_draws(gen_x, (n, p)) @ chol.T
    else:
        xraw = gen_x.standard_normal((n, p)) @ chol.T
    if spec.kind in ("regression-t4-errors", "regression-t4-both"):
        u = _t4_draws(gen_u, n)
    else:
        u = gen_u.standard_normal(n)
    y = xraw @ beta + u
    if spec.kind == "regression-contaminated" and spec.contamination_rate > 0:
        k = int(round(spec.contamination_rate * n))
        if k > 0:
            rows_y = gen_c.choice(n, size=k, replace=False)
            rows_x = gen_c.choice(n, size=k, replace=False)
            y = y.copy()
            y[rows_y] = 12.0 + 0.1 * gen_c.standard_normal(k)
            xraw = xraw.copy()
            xraw[rows_x, 1] = 5.0 + 0.1 * gen_c.standard_normal(k)
    x = np.hstack([np.ones((n, 1)), xraw])
    names = ("intercept",) + tuple(f"x{j + 1}" for j in range(p))
    return Dataset(x=x, y=y, column_names=names, intercept_added=True)
