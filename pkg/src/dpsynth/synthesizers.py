"""Estimator-style wrappers around the mechanisms.

Every synthesizer follows the familiar fit/sample shape: ``fit`` consumes the
private dataset and performs all differentially private releases, ``sample``
is pure post-processing. Constructor arguments are stored unmodified so
``get_params`` / ``set_params`` / ``clone`` from scikit-learn work as usual.
"""

from __future__ import annotations

import itertools
from typing import Optional

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import fit_independent_marginals, sample_product
from .data import Dataset, Provenance, TableSchema
from .evolution import PeConfig, run_pe
from .generators import CandidateGenerator, MockGenerator, cache_load
from .privacy import AccountantLedger, PrivacyBudget, RandomStreams, make_schedule
from .publicfit import (
    gemini_inference_weights,
    jam_lite_weights,
    mst_lite_weights,
    mwem_refine,
    sample_from_weights,
)
from .workload import Workload, build_grouped_numeric_workload, build_marginal_workload


def check_dataset(X, require_schema: Optional[TableSchema] = None) -> Dataset:
    """Validate the estimator input: a Dataset, optionally on a fixed schema."""
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a Dataset, got {type(X).__name__}")
    if len(X) == 0:
        raise ValueError("dataset is empty")
    if require_schema is not None and X.schema != require_schema:
        raise ValueError("dataset schema does not match the expected schema")
    return X


def resolve_workload(spec, schema: TableSchema) -> Workload:
    """Accept a Workload, a spec dict, or None (all 2-way marginals)."""
    if isinstance(spec, Workload):
        return spec
    if spec is None:
        spec = {"kind": "marginal", "k": 2}
    kind = spec.get("kind", "marginal")
    if kind == "marginal":
        return build_marginal_workload(schema, k=spec.get("ks", spec.get("k", 2)),
                                       subsets=spec.get("subsets"))
    if kind == "grouped_numeric":
        return build_grouped_numeric_workload(schema, spec["cat_cols"], spec["num_cols"])
    raise ValueError(f"unknown workload kind {kind!r}")


def resolve_public(public, schema: TableSchema) -> Dataset:
    """Accept a public Dataset or a generator-cache path."""
    if isinstance(public, Dataset):
        return public
    if isinstance(public, (str, bytes)) or hasattr(public, "__fspath__"):
        return cache_load(public, schema).to_dataset(Provenance.PUBLIC)
    raise TypeError("public must be a Dataset or a cache path")


class BaseSynthesizer(BaseEstimator):
    """Shared fit/sample plumbing."""

    def _budget(self) -> PrivacyBudget:
        if self.epsilon == float("inf"):
            return PrivacyBudget.infinite()
        return PrivacyBudget(epsilon=self.epsilon, delta=self.delta)

    def _check_fitted(self, attr: str):
        if not hasattr(self, attr):
            raise NotFittedError(f"{type(self).__name__} must be fitted before sampling")

    def fit(self, X, y=None):
        raise NotImplementedError

    def sample(self, n: Optional[int] = None) -> Dataset:
        raise NotImplementedError


class PrivateEvolution(BaseSynthesizer):
    """Generate-vote-resample synthesis against a candidate generator.

    Defaults follow the observed-optimal configuration: a single iteration
    with an increasing budget schedule and a double-size candidate pool.
    """

    def __init__(self, epsilon=1.0, delta=1e-6, iterations=1, n_synth=1000,
                 pool_factor=2.0, schedule="increasing", workload=None,
                 generator=None, seed=0):
        self.epsilon = epsilon
        self.delta = delta
        self.iterations = iterations
        self.n_synth = n_synth
        self.pool_factor = pool_factor
        self.schedule = schedule
        self.workload = workload
        self.generator = generator
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        workload = resolve_workload(self.workload, X.schema)
        generator = self.generator or MockGenerator()
        if not isinstance(generator, CandidateGenerator):
            raise TypeError("generator must be a CandidateGenerator")
        budget = self._budget()
        config = PeConfig(workload=workload, budget=budget,
                          schedule=make_schedule(self.schedule, self.iterations),
                          n_synth=self.n_synth, pool_factor=self.pool_factor)
        self.ledger_ = AccountantLedger(cap=budget.rho)
        streams = RandomStreams(self.seed)
        self.synthetic_data_, self.trace_ = run_pe(X, config, generator, self.ledger_, streams)
        self.workload_ = workload
        return self

    def sample(self, n: Optional[int] = None) -> Dataset:
        self._check_fitted("synthetic_data_")
        if n is None:
            return self.synthetic_data_
        rng = RandomStreams(self.seed).stream("sample")
        picks = rng.integers(0, len(self.synthetic_data_), size=n)
        rows = [self.synthetic_data_.rows[i] for i in picks]
        return Dataset(self.synthetic_data_.schema, rows, Provenance.SYNTHETIC, validate=False)


class _WeightedPublicSynthesizer(BaseSynthesizer):
    """Base for mechanisms whose fit produces a distribution over public records."""

    def sample(self, n: Optional[int] = None) -> Dataset:
        self._check_fitted("weights_")
        rng = RandomStreams(self.seed).stream("sample")
        return sample_from_weights(self.weights_, n if n is not None else self.n_synth, rng)


class GeminiInference(_WeightedPublicSynthesizer):
    """One-shot pipeline: noisy full-workload answers, then a nonnegative
    least-squares fit of weights over the public records."""

    def __init__(self, public=None, epsilon=1.0, delta=1e-6, workload=None,
                 n_synth=1000, seed=0):
        self.public = public
        self.epsilon = epsilon
        self.delta = delta
        self.workload = workload
        self.n_synth = n_synth
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        public = resolve_public(self.public, X.schema)
        workload = resolve_workload(self.workload, X.schema)
        budget = self._budget()
        self.ledger_ = AccountantLedger(cap=budget.rho)
        rng = RandomStreams(self.seed).stream("gemini-inference")
        self.weights_ = gemini_inference_weights(public, workload, X, budget,
                                                 self.ledger_, rng)
        self.workload_ = workload
        return self


class PublicMwem(_WeightedPublicSynthesizer):
    """MWEM restricted to a public-record support."""

    def __init__(self, public=None, epsilon=1.0, delta=1e-6, workload=None,
                 rounds=10, n_synth=1000, seed=0):
        self.public = public
        self.epsilon = epsilon
        self.delta = delta
        self.workload = workload
        self.rounds = rounds
        self.n_synth = n_synth
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        public = resolve_public(self.public, X.schema)
        workload = resolve_workload(self.workload, X.schema)
        budget = self._budget()
        self.ledger_ = AccountantLedger(cap=budget.rho)
        rng = RandomStreams(self.seed).stream("mwem")
        self.weights_ = mwem_refine(public, workload, X, self.rounds, budget,
                                    self.ledger_, rng)
        self.workload_ = workload
        return self


class MstLite(_WeightedPublicSynthesizer):
    """Noisy spanning-tree marginal selection with a public-weight generation step."""

    def __init__(self, public=None, epsilon=1.0, delta=1e-6, n_synth=1000,
                 shares=(0.1, 0.45, 0.45), seed=0):
        self.public = public
        self.epsilon = epsilon
        self.delta = delta
        self.n_synth = n_synth
        self.shares = shares
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        public = resolve_public(self.public, X.schema)
        budget = self._budget()
        self.ledger_ = AccountantLedger(cap=budget.rho)
        rng = RandomStreams(self.seed).stream("mst-lite")
        self.weights_ = mst_lite_weights(X, X.schema, public, budget, self.ledger_,
                                         rng, shares=tuple(self.shares))
        return self


class JamLite(_WeightedPublicSynthesizer):
    """Per-marginal private choice between public answers and noisy private ones."""

    def __init__(self, public=None, marginals=None, epsilon=1.0, delta=1e-6,
                 n_synth=1000, decision_share=0.1, seed=0):
        self.public = public
        self.marginals = marginals
        self.epsilon = epsilon
        self.delta = delta
        self.n_synth = n_synth
        self.decision_share = decision_share
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        public = resolve_public(self.public, X.schema)
        marginals = self.marginals
        if marginals is None:
            marginals = list(itertools.combinations(range(len(X.schema)), 2))
        budget = self._budget()
        self.ledger_ = AccountantLedger(cap=budget.rho)
        rng = RandomStreams(self.seed).stream("jam-lite")
        self.plan_, self.weights_ = jam_lite_weights(
            X, public, marginals, budget, self.ledger_, rng,
            decision_share=self.decision_share)
        return self


class IndependentMarginals(BaseSynthesizer):
    """Noisy 1-way marginals sampled as a product distribution."""

    def __init__(self, epsilon=1.0, delta=1e-6, n_synth=1000, seed=0):
        self.epsilon = epsilon
        self.delta = delta
        self.n_synth = n_synth
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        budget = self._budget()
        self.ledger_ = AccountantLedger(cap=budget.rho)
        rng = RandomStreams(self.seed).stream("independent")
        self.schema_ = X.schema
        self.column_distributions_ = fit_independent_marginals(
            X, X.schema, budget, self.ledger_, rng)
        return self

    def sample(self, n: Optional[int] = None) -> Dataset:
        self._check_fitted("column_distributions_")
        rng = RandomStreams(self.seed).stream("sample")
        return sample_product(self.schema_, self.column_distributions_,
                              n if n is not None else self.n_synth, rng)
