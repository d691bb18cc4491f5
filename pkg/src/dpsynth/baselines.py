"""Reference baselines run under the same accounting and evaluation as the
main mechanisms: direct DP workload answers, the product-of-marginals
sampler, uniform-domain public data, and the no-DP generator-data row."""

from __future__ import annotations

import numpy as np

from .data import Dataset, Provenance, TableSchema
from .generators import cache_load
from .privacy import (
    AccountantLedger,
    PrivacyBudget,
    add_gaussian,
    clamp_normalize,
    noise_for_rho,
)
from .publicfit import NoisyAnswers, measure_noisy
from .workload import Workload, evaluate, workload_error


def dp_workload(s_priv: Dataset, workload: Workload, budget: PrivacyBudget,
                ledger: AccountantLedger, rng: np.random.Generator) -> NoisyAnswers:
    """Answer the workload directly with Gaussian noise; no synthetic data."""
    return measure_noisy(s_priv, workload, budget.rho, ledger, rng, label="dp-workload")


def fit_independent_marginals(s_priv: Dataset, schema: TableSchema, budget: PrivacyBudget,
                              ledger: AccountantLedger, rng: np.random.Generator) -> list:
    """Noisy clamp-normalized 1-way binned marginals, one ledger charge per
    column, budget split evenly across columns."""
    d = len(schema)
    bins = s_priv.bin_matrix()
    n = len(s_priv)
    distributions = []
    for j, col in enumerate(schema.columns):
        fractions = np.bincount(bins[:, j], minlength=col.size) / n
        spec = noise_for_rho(budget.rho / d, np.sqrt(2.0) / n)
        ledger.charge(f"independent-{col.name}", spec.rho_cost())
        noisy = add_gaussian(fractions, spec, rng)
        distributions.append(clamp_normalize(noisy))
    return distributions


def sample_product(schema: TableSchema, distributions: list, n_synth: int,
                   rng: np.random.Generator) -> Dataset:
    """Sample records from the product of per-column bin distributions;
    numerical cells are drawn uniformly within their sampled bin."""
    columns = []
    for col, probs in zip(schema.columns, distributions):
        picks = rng.choice(col.size, size=n_synth, p=probs)
        if col.is_categorical:
            columns.append([int(b) for b in picks])
        else:
            width = (col.max - col.min) / col.bins
            values = col.min + picks * width + rng.uniform(0.0, 1.0, size=n_synth) * width
            columns.append([float(v) for v in values])
    rows = [tuple(c[i] for c in columns) for i in range(n_synth)]
    return Dataset(schema, rows, Provenance.SYNTHETIC, validate=False)


def independent_baseline(s_priv: Dataset, schema: TableSchema, n_synth: int,
                         budget: PrivacyBudget, ledger: AccountantLedger,
                         rng: np.random.Generator) -> Dataset:
    """Private 1-way marginals, then samples from their product distribution."""
    distributions = fit_independent_marginals(s_priv, schema, budget, ledger, rng)
    return sample_product(schema, distributions, n_synth, rng)


def uniform_public(schema: TableSchema, n: int, rng: np.random.Generator) -> Dataset:
    """n records drawn uniformly from the binned domain; zero privacy cost."""
    if n < 1:
        raise ValueError("n must be >= 1")
    uniform = [np.full(col.size, 1.0 / col.size) for col in schema.columns]
    ds = sample_product(schema, uniform, n, rng)
    return Dataset(schema, ds.rows, Provenance.PUBLIC, validate=False)


def generator_no_dp(cache_path, workload: Workload, s_priv: Dataset) -> dict:
    """Workload error of raw cached generator data against the private data.

    No privacy dependence: the same row applies at every epsilon.
    """
    batch = cache_load(cache_path, s_priv.schema)
    generated = batch.to_dataset(Provenance.GENERATED)
    priv = evaluate(workload, s_priv)
    gen = evaluate(workload, generated)
    return {
        "werror_l1": workload_error(priv, gen, norm="l1"),
        "werror_linf": workload_error(priv, gen, norm="linf"),
        "records": len(generated),
    }
