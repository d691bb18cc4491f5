"""Workload-aware private evolution for tabular records.

Each round, every private record votes for its nearest candidate under the
workload-aware distance; the vote histogram is privatized with Gaussian
noise, clamped, normalized, and resampled into an elite set that seeds the
generator's next variation round. The run returns the final resampled elite
(the set actually filtered by private votes) rather than a raw generator
batch, plus a per-iteration trace suitable for convergence plots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, Provenance
from .errors import EmptyDatasetError, EmptyPoolError, RetryBudgetExhaustedError
from .generators import CandidateGenerator
from .privacy import (
    VOTE_SENSITIVITY,
    AccountantLedger,
    BudgetSchedule,
    NoiseSpec,
    PrivacyBudget,
    RandomStreams,
    add_gaussian,
    clamp_normalize,
    noise_for_rho,
)
from .workload import Workload, evaluate, marginal_tv_distance, nearest_candidates, workload_error


@dataclass(frozen=True)
class PeConfig:
    """Inputs of one private-evolution run."""

    workload: Workload
    budget: PrivacyBudget
    schedule: BudgetSchedule
    n_synth: int
    pool_factor: float = 2.0

    def __post_init__(self):
        if self.n_synth < 1:
            raise ValueError("n_synth must be >= 1")
        if self.pool_factor < 1.0:
            raise ValueError("pool_factor must be >= 1")

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def pool_size(self) -> int:
        return int(math.ceil(self.pool_factor * self.n_synth))


@dataclass
class VoteHistogram:
    """Raw one-vote-per-record counts, their noisy version, and the clamped
    normalized sampling distribution."""

    raw: np.ndarray
    noisy: Optional[np.ndarray] = None
    distribution: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PeIteration:
    iteration: int
    workload_error: float
    column_tv: dict
    rho_spent: float
    pool_size: int
    elite_size: int


@dataclass
class PeTrace:
    """Per-iteration convergence record; the plot-ready artifact."""

    iterations: list = field(default_factory=list)
    generator_rejects: int = 0

    def append(self, entry: PeIteration) -> None:
        self.iterations.append(entry)

    def __len__(self) -> int:
        return len(self.iterations)

    def errors(self) -> list:
        return [it.workload_error for it in self.iterations]

    def to_rows(self) -> list:
        rows = []
        for it in self.iterations:
            row = {"iteration": it.iteration, "workload_error": it.workload_error}
            for col, tv in it.column_tv.items():
                row[f"tv_{col}"] = tv
            row["rho_spent"] = "inf" if math.isinf(it.rho_spent) else it.rho_spent
            row["pool_size"] = it.pool_size
            row["elite_size"] = it.elite_size
            rows.append(row)
        return rows

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_rows(), fh, indent=2)
            fh.write("\n")


def vote(s_priv: Dataset, pool, workload: Workload) -> VoteHistogram:
    """Each private record adds one count to its nearest candidate's bin."""
    if not pool:
        raise EmptyPoolError("candidate pool is empty")
    if len(s_priv) == 0:
        raise EmptyDatasetError("private dataset is empty")
    winners = nearest_candidates(s_priv.rows, pool, workload)
    raw = np.bincount(winners, minlength=len(pool)).astype(float)
    return VoteHistogram(raw=raw)


def privatize_votes(histogram: VoteHistogram, spec: NoiseSpec, ledger: AccountantLedger,
                    rng: np.random.Generator, label: str = "pe-iter") -> VoteHistogram:
    """Noise, clamp, normalize; exactly one ledger charge for the release."""
    ledger.charge(label, spec.rho_cost())
    histogram.noisy = add_gaussian(histogram.raw, spec, rng)
    histogram.distribution = clamp_normalize(histogram.noisy)
    return histogram


def resample_elite(histogram: VoteHistogram, pool, n_synth: int,
                   rng: np.random.Generator) -> list:
    """n_synth draws with replacement from the privatized distribution."""
    picks = rng.choice(len(pool), size=n_synth, replace=True, p=histogram.distribution)
    return [pool[i] for i in picks]


def run_pe(s_priv: Dataset, config: PeConfig, generator: CandidateGenerator,
           ledger: AccountantLedger, streams: RandomStreams):
    """Full private-evolution loop; returns (synthetic dataset, trace).

    Per-iteration noise: rho_t = share_t * rho_total, sigma_t calibrated to
    the vote histogram's replace-one sensitivity sqrt(2). An infinite budget
    maps to sigma = 0 (exact votes).
    """
    schema = s_priv.schema
    workload = config.workload
    priv_answers = evaluate(workload, s_priv)

    batch = generator.random_api(schema, config.pool_size, streams.stream("pe-random"))
    _require_full(batch, config.n_synth)
    pool = list(batch.records)
    rejects = batch.rejected_count

    trace = PeTrace()
    elite_ds = None
    for t in range(1, config.T + 1):
        histogram = vote(s_priv, pool, workload)
        rho_t = config.schedule.shares[t - 1] * config.budget.rho
        spec = noise_for_rho(rho_t, VOTE_SENSITIVITY)
        privatize_votes(histogram, spec, ledger, streams.stream(f"pe-noise-{t}"),
                        label=f"pe-iter-{t}")
        elite = resample_elite(histogram, pool, config.n_synth, streams.stream(f"pe-resample-{t}"))
        elite_ds = Dataset(schema, elite, Provenance.SYNTHETIC, validate=False)
        err = workload_error(priv_answers, evaluate(workload, elite_ds), norm="l1")
        trace.append(PeIteration(
            iteration=t,
            workload_error=err,
            column_tv=marginal_tv_distance(schema, s_priv, elite_ds),
            rho_spent=ledger.total_rho,
            pool_size=len(pool),
            elite_size=len(elite),
        ))
        if t < config.T:
            batch = generator.variation_api(elite_ds, config.pool_size,
                                            streams.stream(f"pe-vary-{t}"))
            _require_full(batch, config.n_synth)
            pool = list(batch.records)
            rejects += batch.rejected_count

    trace.generator_rejects = rejects
    return elite_ds, trace


def _require_full(batch, n_synth: int) -> None:
    if len(batch) < n_synth:
        raise RetryBudgetExhaustedError(
            f"generator supplied {len(batch)} records, need at least {n_synth}")
