"""Gaussian noise calibration, zCDP composition accounting, and budget schedules.

Composition is tracked in zero-concentrated form: a Gaussian release with
l2 sensitivity D and std sigma costs rho = D^2 / (2 sigma^2), and rho adds
linearly across releases. Conversion to (epsilon, delta) happens only at the
edges via epsilon = rho + 2 * sqrt(rho * ln(1/delta)).

Non-private mode is the explicit literal epsilon = inf: it maps to rho = inf
and sigma = 0 and can never arise from arithmetic on finite budgets.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExceededError,
    InfiniteBudgetError,
    NonPositiveSensitivityError,
    ZeroIterationsError,
)

# l2 sensitivity of a one-vote-per-record histogram under replace-one-record
# neighbors: one count drops by 1, another rises by 1.
VOTE_SENSITIVITY = math.sqrt(2.0)

SCHEDULE_KINDS = ("even", "increasing", "decreasing")


def eps_from_rho(rho: float, delta: float) -> float:
    """Standard zCDP -> (eps, delta) conversion."""
    if rho == 0.0:
        return 0.0
    if math.isinf(rho):
        return math.inf
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


def rho_from_eps(epsilon: float, delta: float) -> float:
    """Invert eps_from_rho by bisection (eps is strictly increasing in rho)."""
    if math.isinf(epsilon):
        return math.inf
    lo, hi = 0.0, epsilon  # eps(rho) >= rho, so the root lies below epsilon
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eps_from_rho(mid, delta) < epsilon:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-18:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PrivacyBudget:
    """(epsilon, delta) target with its zCDP equivalent rho."""

    epsilon: float
    delta: float
    rho: float = field(default=None)  # derived unless explicitly provided

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not math.isinf(self.epsilon) and not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.rho is None:
            object.__setattr__(self, "rho", rho_from_eps(self.epsilon, self.delta))

    @classmethod
    def infinite(cls) -> "PrivacyBudget":
        return cls(epsilon=math.inf, delta=0.0, rho=math.inf)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.epsilon)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise std paired with the l2 sensitivity it was calibrated for."""

    sigma: float
    sensitivity: float

    def rho_cost(self) -> float:
        if self.sigma == 0.0:
            return math.inf
        return self.sensitivity**2 / (2.0 * self.sigma**2)


def calibrate(budget: PrivacyBudget, sensitivity: float) -> NoiseSpec:
    """Gaussian std for one release consuming the whole budget.

    Infinite budgets are refused so the sigma = 0 path is always an explicit
    branch at the call site.
    """
    if sensitivity <= 0:
        raise NonPositiveSensitivityError(f"sensitivity must be > 0, got {sensitivity}")
    if budget.is_infinite:
        raise InfiniteBudgetError("calibrate() does not handle epsilon = inf; use sigma = 0 explicitly")
    return NoiseSpec(sigma=sensitivity / math.sqrt(2.0 * budget.rho), sensitivity=sensitivity)


def noise_for_rho(rho: float, sensitivity: float) -> NoiseSpec:
    """Gaussian std for a release charged rho; rho = inf yields sigma = 0."""
    if sensitivity <= 0:
        raise NonPositiveSensitivityError(f"sensitivity must be > 0, got {sensitivity}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if math.isinf(rho):
        return NoiseSpec(sigma=0.0, sensitivity=sensitivity)
    return NoiseSpec(sigma=sensitivity / math.sqrt(2.0 * rho), sensitivity=sensitivity)


def add_gaussian(values, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Element-wise independent Gaussian noise; sigma = 0 is exactly the identity."""
    values = np.asarray(values, dtype=float)
    if spec.sigma == 0.0:
        return values.copy()
    return values + rng.normal(0.0, spec.sigma, size=values.shape)


def clamp_normalize(values) -> np.ndarray:
    """Zero negatives then normalize to a probability vector; an all-zero
    result falls back to uniform (the unique symmetric choice)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot normalize an empty vector")
    clamped = np.maximum(values, 0.0)
    total = clamped.sum()
    if total <= 0.0:
        return np.full(values.shape, 1.0 / values.size)
    return clamped / total


@dataclass(frozen=True)
class BudgetSchedule:
    """Per-iteration budget shares; they sum to 1."""

    kind: str
    shares: tuple

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if abs(sum(self.shares) - 1.0) > 1e-12:
            raise ValueError("schedule shares must sum to 1")
        if any(s <= 0 for s in self.shares):
            raise ValueError("schedule shares must be positive")
        if self.kind == "increasing" and len(self.shares) > 1:
            if not all(a < b for a, b in zip(self.shares, self.shares[1:])):
                raise ValueError("increasing schedule must be strictly ascending")
        if self.kind == "decreasing" and len(self.shares) > 1:
            if not all(a > b for a, b in zip(self.shares, self.shares[1:])):
                raise ValueError("decreasing schedule must be strictly descending")

    @property
    def T(self) -> int:
        return len(self.shares)


def make_schedule(kind: str, T: int) -> BudgetSchedule:
    """even: 1/T each; increasing: t / sum(1..T); decreasing: the reverse."""
    if T < 1:
        raise ZeroIterationsError(f"schedule needs T >= 1, got {T}")
    if kind == "even":
        shares = (1.0 / T,) * T
    elif kind == "increasing":
        total = T * (T + 1) / 2
        shares = tuple(t / total for t in range(1, T + 1))
    elif kind == "decreasing":
        total = T * (T + 1) / 2
        shares = tuple(t / total for t in range(T, 0, -1))
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return BudgetSchedule(kind=kind, shares=shares)


class AccountantLedger:
    """Append-only record of rho charges with a hard cap.

    Every mechanism invocation that touches private data must charge here
    before releasing output; post-processing never does.
    """

    # relative slack for float accumulation when charging exactly up to cap
    _SLACK = 1e-9

    def __init__(self, cap: float = math.inf):
        if cap < 0:
            raise ValueError("cap must be non-negative")
        self.cap = cap
        self.charges: list = []

    @property
    def total_rho(self) -> float:
        return math.fsum(rho for _, rho in self.charges)

    def charge(self, label: str, rho: float) -> None:
        if rho < 0:
            raise ValueError(f"charge must be non-negative, got {rho}")
        new_total = self.total_rho + rho
        if new_total > self.cap * (1.0 + self._SLACK) + 1e-12:
            raise BudgetExceededError(
                f"charge {label!r} ({rho}) would lift total to {new_total} > cap {self.cap}")
        self.charges.append((label, rho))

    def snapshot(self) -> tuple:
        return tuple(self.charges)

    def epsilon(self, delta: float) -> float:
        return eps_from_rho(self.total_rho, delta)

    def to_dict(self, delta: float) -> dict:
        rows = []
        cumulative = 0.0
        for label, rho in self.charges:
            cumulative += rho
            rows.append({"label": label, "rho": _json_real(rho), "cumulative": _json_real(cumulative)})
        return {
            "charges": rows,
            "total_rho": _json_real(self.total_rho),
            "epsilon": _json_real(self.epsilon(delta)),
            "delta": delta,
        }

    def dump_json(self, path, delta: float) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(delta), fh, indent=2)
            fh.write("\n")


def _json_real(value: float):
    """Keep dumps strict-JSON: infinities become the string 'inf'."""
    return "inf" if math.isinf(value) else value


class RandomStreams:
    """One root seed per run; every mechanism invocation pulls an independent,
    labeled substream so artifacts are reproducible file-for-file."""

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed)

    def stream(self, label: str) -> np.random.Generator:
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
        return np.random.default_rng(np.random.SeedSequence([self.root_seed, *words]))
