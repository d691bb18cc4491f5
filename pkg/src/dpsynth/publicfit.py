"""One-shot pipelines: fit a weighted distribution over public records to
noisy private statistics, and the mechanisms built on that subroutine.

The core solver finds nonnegative per-record weights minimizing the squared
l2 gap between reweighted public answers and noisy private answers, via
projected gradient with backtracking line search. Everything downstream of
the ledger charges is post-processing: sampling and fitting read only noisy
answers and public data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, Provenance, TableSchema
from .errors import DegenerateFitError, EmptyPublicSetError
from .privacy import AccountantLedger, NoiseSpec, PrivacyBudget, add_gaussian, noise_for_rho
from .workload import Workload, build_marginal_workload, evaluate, unique_records

PUBLIC_SOURCE = "public"
PRIVATE_SOURCE = "private"


@dataclass(frozen=True, eq=False)
class NoisyAnswers:
    """Gaussian-noised fraction answers to a workload on the private data."""

    values: np.ndarray
    workload: Workload
    noise_spec: NoiseSpec
    label: str
    n: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.values) != len(self.workload):
            raise ValueError("answer length must match workload size")


@dataclass
class PublicWeights:
    """Fitted distribution over public records.

    weights is the normalized (sum-1) form used for sampling; raw_weights is
    the unnormalized optimum, and residual the l2 error it achieves.
    """

    weights: np.ndarray
    support: Dataset
    raw_weights: np.ndarray
    residual: float
    objective: float
    iterations: int
    degenerate: bool = False

    def diagnostics(self) -> dict:
        return {"residual": self.residual, "objective": self.objective,
                "iterations": self.iterations, "degenerate": self.degenerate}


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 10000


@dataclass(frozen=True)
class PlanEntry:
    descriptor: str
    source: str
    d_hat: float
    expected_private_error: float
    budget_share: float = 0.0  # fraction of total rho spent measuring this marginal


@dataclass
class MeasurementPlan:
    """Per-marginal public-vs-private sourcing decisions."""

    entries: list = field(default_factory=list)

    def sources(self) -> list:
        return [e.source for e in self.entries]

    def to_dict(self) -> list:
        return [{"descriptor": e.descriptor, "source": e.source, "d_hat": e.d_hat,
                 "expected_private_error": e.expected_private_error,
                 "budget_share": e.budget_share} for e in self.entries]

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def measure_noisy(s_priv: Dataset, workload: Workload, rho: float,
                  ledger: AccountantLedger, rng: np.random.Generator,
                  label: str = "measure") -> NoisyAnswers:
    """Fraction answers plus Gaussian noise calibrated to the per-record
    l2 contribution bound sqrt(sum_i bound_i^2) / n."""
    exact = evaluate(workload, s_priv)
    sensitivity = workload.record_l2_bound() / len(s_priv)
    spec = noise_for_rho(rho, sensitivity)
    ledger.charge(label, spec.rho_cost())
    values = add_gaussian(exact.values, spec, rng)
    return NoisyAnswers(values=values, workload=workload, noise_spec=spec,
                        label=label, n=len(s_priv))


# ---------------------------------------------------------------------------
# nonnegative least squares


def _nnls_projected_gradient(A: np.ndarray, y: np.ndarray, w0: np.ndarray,
                             tol: float, max_iter: int):
    """min_{w >= 0} ||A w - y||^2 by projected gradient.

    Steps start from a Barzilai-Borwein estimate and backtrack under an
    Armijo sufficient-decrease condition; the objective is asserted
    non-increasing at every accepted step.
    """
    w = np.maximum(w0, 0.0)
    resid = A @ w - y
    obj = float(resid @ resid)
    grad = 2.0 * (A.T @ resid)
    step = 1.0 / max(float(np.abs(A).sum(axis=0).max() ** 2), 1e-12)
    prev_w = None
    prev_grad = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        pg = np.where(w > 0, grad, np.minimum(grad, 0.0))
        if float(np.linalg.norm(pg)) <= tol:
            break
        if prev_w is not None:
            dw = w - prev_w
            dg = grad - prev_grad
            denom = float(dw @ dg)
            if denom > 1e-300:
                step = float(dw @ dw) / denom
        step = min(max(step, 1e-16), 1e16)
        prev_w, prev_grad = w, grad
        alpha = step
        for _ in range(60):
            cand = np.maximum(w - alpha * grad, 0.0)
            delta = cand - w
            cand_resid = A @ cand - y
            cand_obj = float(cand_resid @ cand_resid)
            if cand_obj <= obj + 1e-4 * float(grad @ delta) + 1e-15:
                break
            alpha *= 0.5
        else:
            break  # no descent step at machine precision
        assert cand_obj <= obj + 1e-12 * max(1.0, obj), "objective must not increase"
        w, resid, obj = cand, cand_resid, cand_obj
        grad = 2.0 * (A.T @ resid)
    return w, obj, iterations


def fit_weights(public: Dataset, workload: Workload, y_tilde,
                options: Optional[FitOptions] = None) -> PublicWeights:
    """Nonnegative per-record weights minimizing ||sum_x w_x Q(x) - y||_2^2.

    Identical public records share one solver variable; the fitted mass is
    split equally among duplicates so the returned vector stays per-record.
    """
    if len(public) == 0:
        raise EmptyPublicSetError("public dataset is empty")
    options = options or FitOptions()
    y = y_tilde.values if isinstance(y_tilde, NoisyAnswers) else np.asarray(y_tilde, dtype=float)
    if len(y) != len(workload):
        raise ValueError(f"answer length {len(y)} != workload size {len(workload)}")
    uniq, counts = unique_records(public.rows)
    A = workload.predicate_matrix(uniq).T  # (queries, unique records)
    w0 = counts / len(public)
    v, obj, iterations = _nnls_projected_gradient(A, y, w0, options.tol, options.max_iter)
    total = float(v.sum())
    index = {r: i for i, r in enumerate(uniq)}
    raw = np.array([v[index[tuple(r)]] / counts[index[tuple(r)]] for r in public.rows])
    if total <= 0.0:
        raise DegenerateFitError("fit converged to the all-zero weight vector")
    return PublicWeights(
        weights=raw / total,
        support=public,
        raw_weights=raw,
        residual=float(math.sqrt(obj)),
        objective=float(obj),
        iterations=iterations,
    )


def sample_from_weights(weights: PublicWeights, n: int, rng: np.random.Generator) -> Dataset:
    """n i.i.d. draws with replacement from the fitted distribution."""
    if weights.degenerate:
        raise DegenerateFitError("cannot sample from degenerate weights")
    picks = rng.choice(len(weights.support), size=n, replace=True, p=weights.weights)
    rows = [weights.support.rows[i] for i in picks]
    return Dataset(weights.support.schema, rows, Provenance.SYNTHETIC, validate=False)


# ---------------------------------------------------------------------------
# MWEM over a public support


def mwem_refine(public: Dataset, workload: Workload, s_priv: Dataset, rounds: int,
                budget: PrivacyBudget, ledger: AccountantLedger,
                rng: np.random.Generator) -> PublicWeights:
    """Multiplicative-weights refinement of a distribution over public records.

    The warm start is the support restriction itself: weights begin uniform
    over the public records. Each round selects the worst-approximated query
    by the exponential mechanism, measures it with Gaussian noise, and applies
    the multiplicative update w_x *= exp(psi_q(x) * (y_q - q(w)) / 2).
    Budget is split evenly between selection and measurement in every round.
    """
    if len(public) == 0:
        raise EmptyPublicSetError("public dataset is empty")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    uniq, counts = unique_records(public.rows)
    A = workload.predicate_matrix(uniq).T  # (queries, unique)
    w = counts / len(public)
    priv = evaluate(workload, s_priv).values
    n_priv = len(s_priv)
    score_sensitivity = workload.max_bound() / n_priv
    rho_round = budget.rho / rounds
    measured = []
    for r in range(1, rounds + 1):
        synth = A @ w
        scores = np.abs(synth - priv)
        rho_sel = rho_round / 2.0
        rho_meas = rho_round / 2.0
        if budget.is_infinite:
            q = int(np.argmax(scores))
        else:
            eps_sel = math.sqrt(8.0 * rho_sel)  # exponential mechanism at rho = eps^2 / 8
            logits = eps_sel * scores / (2.0 * score_sensitivity)
            logits -= logits.max()
            probs = np.exp(logits)
            probs /= probs.sum()
            q = int(rng.choice(len(scores), p=probs))
        ledger.charge(f"mwem-select-{r}", rho_sel)
        bound_q = workload.queries[q].bound
        spec = noise_for_rho(rho_meas, bound_q / n_priv)
        ledger.charge(f"mwem-measure-{r}", spec.rho_cost())
        y_q = float(add_gaussian(np.array([priv[q]]), spec, rng)[0])
        measured.append((q, y_q))
        w = w * np.exp(A[q] * (y_q - synth[q]) / 2.0)
        w = w / w.sum()
    index = {rec: i for i, rec in enumerate(uniq)}
    raw = np.array([w[index[tuple(rec)]] / counts[index[tuple(rec)]] for rec in public.rows])
    fitted = A @ w
    residual = math.sqrt(sum((float(fitted[q]) - y) ** 2 for q, y in measured))
    return PublicWeights(weights=raw, support=public, raw_weights=raw,
                         residual=residual, objective=residual**2,
                         iterations=rounds)


# ---------------------------------------------------------------------------
# one-shot mechanisms


def gemini_inference_weights(public: Dataset, workload: Workload, s_priv: Dataset,
                             budget: PrivacyBudget, ledger: AccountantLedger,
                             rng: np.random.Generator) -> PublicWeights:
    """Measure the full workload noisily, then fit public weights."""
    y = measure_noisy(s_priv, workload, budget.rho, ledger, rng, label="gemini-inference")
    return fit_weights(public, workload, y)


def gemini_inference(public: Dataset, workload: Workload, s_priv: Dataset,
                     budget: PrivacyBudget, ledger: AccountantLedger,
                     rng: np.random.Generator, n_synth: int = 1000) -> Dataset:
    """Measure the full workload noisily, fit public weights, sample."""
    weights = gemini_inference_weights(public, workload, s_priv, budget, ledger, rng)
    return sample_from_weights(weights, n_synth, rng)


def _mutual_information(joint: np.ndarray) -> float:
    """Plug-in mutual information (nats) of a joint probability table."""
    joint = joint / joint.sum()
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    mi = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            p = joint[i, j]
            if p > 0:
                mi += p * math.log(p / (px[i] * py[j]))
    return mi


def pairwise_mutual_information(s_priv: Dataset) -> np.ndarray:
    """Exact plug-in MI for every column pair of the binned dataset."""
    schema = s_priv.schema
    bins = s_priv.bin_matrix()
    d = len(schema)
    scores = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            si, sj = schema.columns[i].size, schema.columns[j].size
            joint = np.zeros((si, sj))
            np.add.at(joint, (bins[:, i], bins[:, j]), 1.0)
            scores[i, j] = scores[j, i] = _mutual_information(joint)
    return scores


def _maximum_spanning_tree(scores: np.ndarray) -> list:
    """Prim's algorithm; ties resolve to the lexicographically first edge."""
    d = scores.shape[0]
    in_tree = {0}
    edges = []
    while len(in_tree) < d:
        best = None
        for i in sorted(in_tree):
            for j in range(d):
                if j in in_tree:
                    continue
                if best is None or scores[i, j] > best[0]:
                    best = (scores[i, j], i, j)
        edges.append((min(best[1], best[2]), max(best[1], best[2])))
        in_tree.add(best[2])
    return sorted(edges)


def mst_lite_weights(s_priv: Dataset, schema: TableSchema, public: Dataset,
                     budget: PrivacyBudget, ledger: AccountantLedger,
                     rng: np.random.Generator,
                     shares: tuple = (0.1, 0.45, 0.45)) -> PublicWeights:
    """Spanning-tree marginal selection, noisy measurement, public-weight fit.

    shares = (pair selection scores, 1-way measurements, 2-way measurements);
    the generation step is post-processing and consumes no budget.
    """
    d = len(schema)
    if d < 2:
        raise ValueError("mst_lite needs at least two columns")
    n = len(s_priv)
    rho_sel, rho_1way, rho_2way = (s * budget.rho for s in shares)

    scores = pairwise_mutual_information(s_priv)
    n_pairs = d * (d - 1) // 2
    # crude replace-one bound on plug-in MI of one pair table
    mi_sensitivity = 6.0 * (1.0 + math.log(max(n, 2))) / n
    sel_spec = noise_for_rho(rho_sel, mi_sensitivity * math.sqrt(n_pairs))
    ledger.charge("mst-select", sel_spec.rho_cost())
    noisy = scores.copy()
    upper = np.triu_indices(d, k=1)
    noisy[upper] = add_gaussian(scores[upper], sel_spec, rng)
    noisy.T[upper] = noisy[upper]
    pairs = _maximum_spanning_tree(noisy)

    subsets = [(j,) for j in range(d)] + [tuple(p) for p in pairs]
    measured = []
    for subset in subsets:
        marginal = build_marginal_workload(schema, subsets=[subset])
        if len(subset) == 1:
            rho_m = rho_1way / d
            label = f"mst-1way-{schema.columns[subset[0]].name}"
        else:
            rho_m = rho_2way / len(pairs)
            label = f"mst-2way-{schema.columns[subset[0]].name}x{schema.columns[subset[1]].name}"
        measured.append(measure_noisy(s_priv, marginal, rho_m, ledger, rng, label=label))

    fit_workload = build_marginal_workload(schema, subsets=subsets)
    y = np.concatenate([m.values for m in measured])
    return fit_weights(public, fit_workload, y)


def mst_lite(s_priv: Dataset, schema: TableSchema, public: Dataset,
             budget: PrivacyBudget, ledger: AccountantLedger, rng: np.random.Generator,
             n_synth: int = 1000, shares: tuple = (0.1, 0.45, 0.45)) -> Dataset:
    weights = mst_lite_weights(s_priv, schema, public, budget, ledger, rng, shares)
    return sample_from_weights(weights, n_synth, rng)


def jam_lite_weights(s_priv: Dataset, public: Dataset, marginals: Sequence,
                     budget: PrivacyBudget, ledger: AccountantLedger,
                     rng: np.random.Generator, decision_share: float = 0.1):
    """Per-marginal choice between free public answers and noisy private ones.

    Each marginal gets a small slice to estimate the public-private l1 gap;
    the marginal is sourced publicly when that noisy gap undercuts the
    expected l1 error of a private Gaussian measurement, sigma * sqrt(2/pi)
    per cell. Returns (plan, fitted weights).
    """
    if not marginals:
        raise ValueError("jam_lite needs a non-empty marginal set")
    schema = s_priv.schema
    n = len(s_priv)
    M = len(marginals)
    rho_decide = decision_share * budget.rho / M
    rho_measure_each = (1.0 - decision_share) * budget.rho / M

    workloads = [build_marginal_workload(schema, subsets=[m]) for m in marginals]
    plan = MeasurementPlan()
    for m_w, subset in zip(workloads, marginals):
        priv_vals = evaluate(m_w, s_priv).values
        pub_vals = evaluate(m_w, public).values
        gap = float(np.abs(priv_vals - pub_vals).sum())
        gap_spec = noise_for_rho(rho_decide, 2.0 / n)  # replace-one moves the l1 gap by <= 2/n
        ledger.charge(f"jam-decide-{m_w.descriptors[0].split('=')[0]}", gap_spec.rho_cost())
        d_hat = float(add_gaussian(np.array([gap]), gap_spec, rng)[0])
        cells = len(m_w)
        sigma_m = noise_for_rho(rho_measure_each, m_w.record_l2_bound() / n).sigma
        expected_private = sigma_m * math.sqrt(2.0 / math.pi) * cells
        source = PUBLIC_SOURCE if d_hat < expected_private else PRIVATE_SOURCE
        plan.entries.append(PlanEntry(
            descriptor=m_w.descriptors[0].split("=")[0],
            source=source, d_hat=d_hat, expected_private_error=expected_private))

    n_private = sum(1 for e in plan.entries if e.source == PRIVATE_SOURCE)
    rho_private = ((1.0 - decision_share) * budget.rho / n_private) if n_private else 0.0
    measure_share = ((1.0 - decision_share) / n_private) if n_private else 0.0
    plan.entries = [replace(e, budget_share=measure_share if e.source == PRIVATE_SOURCE else 0.0)
                    for e in plan.entries]
    answers = []
    for m_w, entry in zip(workloads, plan.entries):
        if entry.source == PRIVATE_SOURCE:
            measured = measure_noisy(s_priv, m_w, rho_private, ledger, rng,
                                     label=f"jam-measure-{entry.descriptor}")
            answers.append(measured.values)
        else:
            answers.append(evaluate(m_w, public).values)  # public data costs nothing

    fit_workload = build_marginal_workload(schema, subsets=list(marginals))
    weights = fit_weights(public, fit_workload, np.concatenate(answers))
    return plan, weights


def jam_lite(s_priv: Dataset, public: Dataset, marginals: Sequence,
             budget: PrivacyBudget, ledger: AccountantLedger, rng: np.random.Generator,
             n_synth: int = 1000, decision_share: float = 0.1):
    """jam_lite_weights plus a sampling step; returns (plan, synthetic dataset)."""
    plan, weights = jam_lite_weights(s_priv, public, marginals, budget, ledger, rng,
                                     decision_share=decision_share)
    return plan, sample_from_weights(weights, n_synth, rng)
