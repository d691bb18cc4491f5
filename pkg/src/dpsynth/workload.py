"""Linear-query workloads, workload error, and the workload-aware record distance.

A workload is an ordered family of bounded per-record predicates. Dataset
answers are stored as fractions (1/n) * sum_j psi_i(x_j) so that datasets of
different sizes compare directly; raw counts are available behind a flag for
sensitivity bookkeeping.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, Record, TableSchema, bin_index, bin_records
from .errors import (
    DuplicateSubsetError,
    EmptyDatasetError,
    EmptyPoolError,
    KTooLargeError,
    LengthMismatchError,
    WrongColumnKindError,
)

MARGINAL = "marginal"
GROUPED_NUMERIC = "grouped_numeric"

# Below this many predicate evaluations the voting path skips the dedup +
# matrix precomputation and scores records directly.
PREDICATE_MATRIX_THRESHOLD = 4096


@dataclass(frozen=True)
class LinearQuery:
    """One bounded predicate. Marginal-cell queries are indicators over binned
    cells; grouped-numeric queries are group indicators times a rescaled value."""

    descriptor: str
    bound: float
    cols: tuple            # column positions the predicate reads
    bins: Optional[tuple] = None   # marginal: one bin per column
    num_col: Optional[int] = None  # grouped-numeric: the scaled column

    def evaluate(self, record: Record, schema: TableSchema) -> float:
        if self.num_col is None:
            for c, b in zip(self.cols, self.bins):
                if bin_index(schema.columns[c], record[c]) != b:
                    return 0.0
            return 1.0
        for c, b in zip(self.cols, self.bins):
            if int(record[c]) != b:
                return 0.0
        col = schema.columns[self.num_col]
        return (record[self.num_col] - col.min) / (col.max - col.min)


class Workload:
    """Ordered list of linear queries over one schema."""

    def __init__(self, schema: TableSchema, queries: Sequence[LinearQuery], kind: str,
                 subsets: tuple = ()):
        if not queries:
            raise ValueError("workload must contain at least one query")
        descriptors = [q.descriptor for q in queries]
        if len(set(descriptors)) != len(descriptors):
            raise DuplicateSubsetError("workload descriptors must be unique")
        self.schema = schema
        self.queries = tuple(queries)
        self.kind = kind
        self.subsets = subsets  # marginal column-index subsets, in query order

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def descriptors(self) -> list:
        return [q.descriptor for q in self.queries]

    def identity_hash(self) -> str:
        payload = json.dumps([self.schema.content_hash()] + self.descriptors,
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def record_l2_bound(self) -> float:
        """Per-record l2 norm bound of the predicate vector, sqrt(sum_i bound_i^2)."""
        return float(np.sqrt(sum(q.bound**2 for q in self.queries)))

    def max_bound(self) -> float:
        return max(q.bound for q in self.queries)

    def predicate_vector(self, record: Record) -> np.ndarray:
        """Direct per-query evaluation; the slow reference path."""
        return np.array([q.evaluate(record, self.schema) for q in self.queries], dtype=float)

    def predicate_matrix(self, records: Sequence[Record]) -> np.ndarray:
        """(n_records, n_queries) predicate values, vectorized over records."""
        n = len(records)
        out = np.zeros((n, len(self.queries)), dtype=float)
        if n == 0:
            return out
        bins = bin_records(self.schema, records)
        cells = np.asarray(records, dtype=float).reshape(n, len(self.schema))
        for qi, q in enumerate(self.queries):
            mask = np.ones(n, dtype=bool)
            for c, b in zip(q.cols, q.bins or ()):
                mask &= bins[:, c] == b
            if q.num_col is None:
                out[mask, qi] = 1.0
            else:
                col = self.schema.columns[q.num_col]
                scaled = (cells[:, q.num_col] - col.min) / (col.max - col.min)
                out[mask, qi] = scaled[mask]
        return out

    def answers(self, records: Sequence[Record], weights: Optional[np.ndarray] = None,
                as_counts: bool = False) -> np.ndarray:
        """Workload answers for a record multiset, deduplicating repeated records."""
        uniq, counts = unique_records(records)
        if weights is not None:
            w = np.zeros(len(uniq))
            index = {r: i for i, r in enumerate(uniq)}
            for r, wi in zip(records, weights):
                w[index[tuple(r)]] += wi
        else:
            w = counts.astype(float)
        matrix = self.predicate_matrix(uniq)
        totals = matrix.T @ w
        if as_counts or weights is not None:
            return totals
        return totals / len(records)

    def evaluate(self, dataset: Dataset) -> "AnswerVector":
        return evaluate(self, dataset)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "queries": len(self.queries), "descriptors": self.descriptors}

    def answers_report(self, answers: "AnswerVector") -> dict:
        """Descriptor -> answer mapping for JSON reports."""
        return dict(zip(self.descriptors, (float(v) for v in answers.values)))


@dataclass(frozen=True, eq=False)
class AnswerVector:
    """Workload answers as dataset fractions plus the record count behind them."""

    values: np.ndarray
    n: int
    workload_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def unique_records(records: Sequence[Record]):
    """First-occurrence-ordered unique records with multiplicities."""
    index = {}
    counts = []
    uniq = []
    for r in records:
        t = tuple(r)
        i = index.get(t)
        if i is None:
            index[t] = len(uniq)
            uniq.append(t)
            counts.append(1)
        else:
            counts[i] += 1
    return uniq, np.asarray(counts, dtype=np.int64)


def _marginal_subsets(schema: TableSchema, k, subsets) -> list:
    names = schema.column_names()
    if subsets is not None:
        resolved = []
        for subset in subsets:
            idx = tuple(schema.column_index(c) if isinstance(c, str) else int(c) for c in subset)
            if len(set(idx)) != len(idx):
                raise DuplicateSubsetError(f"subset {subset!r} repeats a column")
            for i in idx:
                if not 0 <= i < len(names):
                    raise KTooLargeError(f"column index {i} out of range")
            resolved.append(idx)
        if len({frozenset(s) for s in resolved}) != len(resolved):
            raise DuplicateSubsetError("duplicate subsets in workload")
        return resolved
    ks = [k] if isinstance(k, int) else list(k)
    for kk in ks:
        if kk > len(names):
            raise KTooLargeError(f"k={kk} exceeds column count {len(names)}")
        if kk < 1:
            raise KTooLargeError(f"k={kk} must be >= 1")
    out = []
    for kk in ks:
        out.extend(itertools.combinations(range(len(names)), kk))
    return out


def build_marginal_workload(schema: TableSchema, k=2, subsets=None) -> Workload:
    """One indicator query per cell of each k-way (binned) marginal.

    *k* may be an int or an iterable of arities; explicit *subsets* (column
    names or indices) override the default all-combinations expansion.
    """
    resolved = _marginal_subsets(schema, k, subsets)
    queries = []
    for subset in resolved:
        sizes = [schema.columns[c].size for c in subset]
        names = "x".join(schema.columns[c].name for c in subset)
        for cell in itertools.product(*(range(s) for s in sizes)):
            cell_txt = ",".join(str(b) for b in cell)
            queries.append(LinearQuery(
                descriptor=f"marginal:{names}={cell_txt}",
                bound=1.0, cols=tuple(subset), bins=tuple(cell)))
    return Workload(schema, queries, MARGINAL, subsets=tuple(resolved))


def build_grouped_numeric_workload(schema: TableSchema, cat_cols, num_cols) -> Workload:
    """For each categorical combination g and numerical column j, the query
    psi(x) = 1[x_cat == g] * (x_j - min_j) / (max_j - min_j)."""
    if not cat_cols or not num_cols:
        raise WrongColumnKindError("grouped workload needs categorical and numerical columns")
    cat_idx = [schema.column_index(c) if isinstance(c, str) else int(c) for c in cat_cols]
    num_idx = [schema.column_index(c) if isinstance(c, str) else int(c) for c in num_cols]
    for i in cat_idx:
        if not schema.columns[i].is_categorical:
            raise WrongColumnKindError(f"column {schema.columns[i].name!r} is not categorical")
    for i in num_idx:
        if schema.columns[i].is_categorical:
            raise WrongColumnKindError(f"column {schema.columns[i].name!r} is not numerical")
    queries = []
    group_names = ",".join(schema.columns[i].name for i in cat_idx)
    for group in itertools.product(*(range(schema.columns[i].size) for i in cat_idx)):
        group_txt = ",".join(str(g) for g in group)
        for j in num_idx:
            queries.append(LinearQuery(
                descriptor=f"grouped:{group_names}={group_txt}:{schema.columns[j].name}",
                bound=1.0, cols=tuple(cat_idx), bins=tuple(group), num_col=j))
    return Workload(schema, queries, GROUPED_NUMERIC)


def evaluate(workload: Workload, dataset: Dataset) -> AnswerVector:
    """Fraction answers (1/n) * sum_j psi_i(x_j) for every query."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate a workload on an empty dataset")
    values = workload.answers(dataset.rows)
    return AnswerVector(values=values, n=len(dataset), workload_hash=workload.identity_hash())


def workload_error(a: AnswerVector, b: AnswerVector, norm: str = "l1") -> float:
    """L1 or Linf gap between two answer vectors from the same workload."""
    if len(a.values) != len(b.values):
        raise LengthMismatchError(f"answer lengths differ: {len(a.values)} vs {len(b.values)}")
    if a.workload_hash and b.workload_hash and a.workload_hash != b.workload_hash:
        raise LengthMismatchError("answer vectors come from different workloads")
    gap = np.abs(a.values - b.values)
    if norm == "l1":
        return float(gap.sum())
    if norm == "linf":
        return float(gap.max())
    raise ValueError(f"unknown norm {norm!r}")


def wdist(x: Record, c: Record, workload: Workload) -> float:
    """Workload-aware distance: sum_i |psi_i(x) - psi_i(c)|."""
    return float(np.abs(workload.predicate_vector(x) - workload.predicate_vector(c)).sum())


def nearest_candidate(x: Record, pool: Sequence[Record], workload: Workload) -> int:
    """Index of the wdist-argmin candidate; ties break to the lowest index."""
    if not pool:
        raise EmptyPoolError("candidate pool is empty")
    distances = distance_matrix([x], pool, workload)[0]
    return int(np.argmin(distances))


def distance_matrix(records: Sequence[Record], pool: Sequence[Record],
                    workload: Workload) -> np.ndarray:
    """(n_records, n_pool) matrix of wdist values.

    Predicates are evaluated once per unique record on either side when the
    total evaluation count crosses PREDICATE_MATRIX_THRESHOLD; the expansion
    back to original indices keeps argmin tie-breaking identical to the
    direct path.
    """
    if not pool:
        raise EmptyPoolError("candidate pool is empty")
    if not records:
        return np.zeros((0, len(pool)))
    small = len(records) * len(pool) * len(workload) <= PREDICATE_MATRIX_THRESHOLD
    if small:
        left = workload.predicate_matrix(records)
        right = workload.predicate_matrix(pool)
        return cdist(left, right, metric="cityblock")
    uniq_left, _ = unique_records(records)
    uniq_right, _ = unique_records(pool)
    left = workload.predicate_matrix(uniq_left)
    right = workload.predicate_matrix(uniq_right)
    dm = cdist(left, right, metric="cityblock")
    left_map = {r: i for i, r in enumerate(uniq_left)}
    right_map = {r: i for i, r in enumerate(uniq_right)}
    rows = np.fromiter((left_map[tuple(r)] for r in records), dtype=np.int64, count=len(records))
    cols = np.fromiter((right_map[tuple(c)] for c in pool), dtype=np.int64, count=len(pool))
    return dm[np.ix_(rows, cols)]


def nearest_candidates(records: Sequence[Record], pool: Sequence[Record],
                       workload: Workload) -> np.ndarray:
    """Vectorized nearest_candidate for a batch of records (lowest-index ties)."""
    dm = distance_matrix(records, pool, workload)
    return np.argmin(dm, axis=1)


def marginal_tv_distance(schema: TableSchema, a: Dataset, b: Dataset) -> dict:
    """Per-column total-variation distance between binned 1-way marginals."""
    out = {}
    bins_a, bins_b = a.bin_matrix(), b.bin_matrix()
    for j, col in enumerate(schema.columns):
        pa = np.bincount(bins_a[:, j], minlength=col.size) / max(len(a), 1)
        pb = np.bincount(bins_b[:, j], minlength=col.size) / max(len(b), 1)
        out[col.name] = 0.5 * float(np.abs(pa - pb).sum())
    return out
