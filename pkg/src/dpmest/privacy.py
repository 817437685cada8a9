"""The Gaussian release mechanism, output clamping, and the budget ledger.

The mechanism adds noise with scale gamma * 5 sqrt(2 ln(n) ln(2/delta)) /
(epsilon n) to the released quantity. Release helpers convert a sensitivity
report's unit-contamination gamma to the per-record scale gamma/n before
calling the mechanism; see ``release_estimate`` for the rationale.
"""

import math
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from .errors import UnboundedSensitivityError, ValidationError
from .numerics import gaussian_stream

__all__ = [
    "PrivacyParams",
    "DPRelease",
    "BudgetLedger",
    "mechanism_scale",
    "release_estimate",
    "release_pvalue",
]


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) privacy parameter pair."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta must lie in (0,1), got {self.delta}")


@dataclass
class DPRelease:
    """A noisy release together with everything needed to reproduce it."""

    value: np.ndarray | float
    noise_scale: float
    gamma_used: float
    seed: int
    stream_id: int
    params: PrivacyParams
    n: int
    min_n_satisfied: bool | None = None
    min_n_required: int | None = None
    raw_unclamped: np.ndarray | float | None = None
    label: str = ""


class BudgetLedger:
    """Tracks (epsilon, delta) spends with exact decimal accumulation."""

    def __init__(self):
        self.entries = []
        self._eps_total = Decimal(0)
        self._delta_total = Decimal(0)

    def spend(self, label, params):
        self.entries.append((label, params.epsilon, params.delta))
        self._eps_total += Decimal(repr(params.epsilon))
        self._delta_total += Decimal(repr(params.delta))

    @property
    def totals(self):
        return (float(self._eps_total), float(self._delta_total))

    def to_json(self):
        return {
            "entries": [
                {"label": label, "epsilon": eps, "delta": delta}
                for label, eps, delta in self.entries
            ],
            "total_epsilon": float(self._eps_total),
            "total_delta": float(self._delta_total),
        }


def mechanism_scale(gamma, n, params):
    """Noise scale gamma * 5 sqrt(2 ln(n) ln(2/delta)) / (epsilon n)."""
    if gamma < 0 or not math.isfinite(gamma):
        raise UnboundedSensitivityError(f"gamma must be finite and nonnegative, got {gamma}")
    if int(n) != n or n < 2:
        raise ValidationError(f"sample size must be an integer >= 2, got {n}")
    return (
        gamma
        * 5.0
        * math.sqrt(2.0 * math.log(n) * math.log(2.0 / params.delta))
        / (params.epsilon * n)
    )


def _release_vector(value, gamma, n, params, seed, stream_id, label, ledger, min_n):
    scale = mechanism_scale(gamma, n, params)
    value = np.asarray(value, dtype=float)
    noise = gaussian_stream(seed, stream_id).normal(value.shape) if scale > 0 else np.zeros(value.shape)
    released = value + scale * noise
    if ledger is not None:
        ledger.spend(label, params)
    required = None if min_n is None else min_n["n_required"]
    satisfied = None if min_n is None else min_n["satisfied"]
    return DPRelease(
        value=released,
        noise_scale=scale,
        gamma_used=gamma,
        seed=int(seed),
        stream_id=int(stream_id),
        params=params,
        n=int(n),
        min_n_satisfied=satisfied,
        min_n_required=required,
        label=label,
    )


def release_estimate(
    fit,
    report,
    n,
    params,
    seed,
    stream_id=0,
    ledger=None,
    min_n=None,
    strict=False,
    label="estimate",
):
    """Release theta_hat with Gaussian noise calibrated to the fit's GES.

    ``report.gamma`` bounds the influence of a unit mass of contamination;
    replacing one record moves the empirical distribution by mass 1/n, so
    the mechanism is fed the per-record sensitivity gamma/n.
    """
    if not fit.converged:
        raise ValidationError("refusing to release a non-converged fit")
    if not math.isfinite(report.gamma):
        raise UnboundedSensitivityError("infinite gross-error sensitivity; release refused")
    if strict and min_n is not None and min_n["satisfied"] is False:
        raise ValidationError(
            f"strict mode: n={n} below the required minimum {min_n['n_required']}"
        )
    gamma_used = report.gamma / n
    return _release_vector(
        fit.theta_hat, gamma_used, n, params, seed, stream_id, label, ledger, min_n
    )


def release_pvalue(
    alpha_hat,
    level_report,
    n,
    params,
    seed,
    stream_id=0,
    ledger=None,
    min_n=None,
    strict=False,
    label="p-value",
):
    """Release the level functional, clamped to [0,1] as post-processing."""
    if not 0.0 <= alpha_hat <= 1.0:
        raise ValidationError(f"alpha_hat must lie in [0,1], got {alpha_hat}")
    gamma = level_report.gamma if hasattr(level_report, "gamma") else float(level_report)
    if not math.isfinite(gamma):
        raise UnboundedSensitivityError("infinite level sensitivity; release refused")
    if strict and min_n is not None and min_n["satisfied"] is False:
        raise ValidationError(
            f"strict mode: n={n} below the required minimum {min_n['n_required']}"
        )
    gamma_used = gamma / n
    rel = _release_vector(
        np.array([alpha_hat]), gamma_used, n, params, seed, stream_id, label, ledger, min_n
    )
    raw = float(rel.value[0])
    rel.raw_unclamped = raw
    rel.value = min(1.0, max(0.0, raw))
    return rel
