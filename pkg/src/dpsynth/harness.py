"""Experiment configuration, epsilon sweeps, and report generation.

A config describes one private dataset, one workload, a list of methods, and
the (epsilon x seed) grid. Each grid cell runs with a fresh ledger and its
own labeled random substreams; reports are written in a stable column order
so fixed-seed runs are reproducible byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines
from .data import ClampPolicy, Dataset, Provenance, TableSchema, load_dataset
from .errors import ConfigError, DPSynthError, WorkloadMismatchError
from .evolution import PeConfig, run_pe
from .generators import (
    CachedGenerator,
    EndpointConfig,
    MockGenerator,
    MockPriorConfig,
    RemoteGenerator,
    cache_load,
)
from .privacy import AccountantLedger, PrivacyBudget, RandomStreams, make_schedule
from .publicfit import gemini_inference, jam_lite, mst_lite, mwem_refine, sample_from_weights
from .workload import Workload, evaluate, workload_error
from .synthesizers import resolve_workload

ARTIFACT_VERSION = "0.1.0"
CONFIG_VERSION = 1

REPORT_COLUMNS = ["method", "epsilon", "seed", "werror_l1", "werror_linf",
                  "runtime_ms", "final_epsilon", "final_delta", "gen_rejects"]

_TOP_KEYS = {"version", "private_data", "schema", "workload", "methods", "epsilons",
             "delta", "seeds", "generator", "output_dir", "record_runtime"}
_METHOD_KEYS = {
    "pe": {"id", "kind", "T", "n_synth", "pool_factor", "schedule"},
    "oneshot": {"id", "kind", "pipeline", "n_synth", "rounds", "marginals", "shares",
                "decision_share"},
    "baseline": {"id", "kind", "baseline", "n_synth", "path", "cache"},
}
_GENERATOR_KEYS = {"mock_config", "mock_config_path", "endpoint_config", "cache", "n_public"}
ONESHOT_PIPELINES = ("gemini-inference", "mst-lite", "jam-lite", "mwem")
BASELINE_KINDS = ("dp-workload", "independent", "uniform-public",
                  "in-distribution-public", "generator-no-dp")


@dataclass
class ExperimentConfig:
    private_data: str
    schema: str
    workload: dict
    methods: list
    epsilons: list
    delta: float
    seeds: list
    generator: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    record_runtime: bool = True
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def from_dict(cls, payload: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(payload) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if payload.get("version") != CONFIG_VERSION:
            raise ConfigError(f"config version must be {CONFIG_VERSION}")
        for key in ("private_data", "schema", "workload", "methods", "epsilons",
                    "delta", "seeds"):
            if key not in payload:
                raise ConfigError(f"config missing required key {key!r}")
        config = cls(
            private_data=payload["private_data"],
            schema=payload["schema"],
            workload=payload["workload"],
            methods=payload["methods"],
            epsilons=payload["epsilons"],
            delta=payload["delta"],
            seeds=payload["seeds"],
            generator=payload.get("generator", {}),
            output_dir=payload.get("output_dir"),
            record_runtime=payload.get("record_runtime", True),
            base_dir=Path(base_dir),
        )
        config.validate()
        return config

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(payload, base_dir=path.parent)

    def resolve_path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def parse_epsilons(self) -> list:
        out = []
        for e in self.epsilons:
            if e == "inf":
                out.append(math.inf)
            elif isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0 and math.isfinite(e):
                out.append(float(e))
            else:
                raise ConfigError(f"epsilon must be positive or the literal \"inf\", got {e!r}")
        return out

    def validate(self) -> None:
        if not self.epsilons:
            raise ConfigError("epsilons must be non-empty")
        self.parse_epsilons()
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if not (isinstance(self.delta, float) and 0 < self.delta < 1):
            raise ConfigError("delta must lie in (0, 1)")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        ids = set()
        for m in self.methods:
            kind = m.get("kind")
            if kind not in _METHOD_KEYS:
                raise ConfigError(f"unknown method kind {kind!r}")
            unknown = set(m) - _METHOD_KEYS[kind]
            if unknown:
                raise ConfigError(f"method {m.get('id')!r}: unknown keys {sorted(unknown)}")
            method_id = m.get("id")
            if not method_id or not re.fullmatch(r"[A-Za-z0-9._-]+", method_id):
                raise ConfigError(f"method id {method_id!r} must be a simple token")
            if m["id"] in ids:
                raise ConfigError(f"duplicate method id {m['id']!r}")
            ids.add(m["id"])
            if kind == "oneshot" and m.get("pipeline") not in ONESHOT_PIPELINES:
                raise ConfigError(f"unknown pipeline {m.get('pipeline')!r}")
            if kind == "baseline" and m.get("baseline") not in BASELINE_KINDS:
                raise ConfigError(f"unknown baseline {m.get('baseline')!r}")
        unknown = set(self.generator) - _GENERATOR_KEYS
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        # fail fast on missing files before any private data is touched
        for path in (self.private_data, self.schema):
            if not self.resolve_path(path).exists():
                raise ConfigError(f"file not found: {path}")
        for key in ("mock_config_path", "endpoint_config", "cache"):
            if key in self.generator and not self.resolve_path(self.generator[key]).exists():
                raise ConfigError(f"generator {key} not found: {self.generator[key]}")
        for m in self.methods:
            if m.get("baseline") == "in-distribution-public":
                if "path" not in m or not self.resolve_path(m["path"]).exists():
                    raise ConfigError(f"method {m['id']!r}: in-distribution public file missing")
            if m.get("baseline") == "generator-no-dp":
                if "cache" not in m or not self.resolve_path(m["cache"]).exists():
                    raise ConfigError(f"method {m['id']!r}: generator cache missing")

    def content_hash(self) -> str:
        payload = {k: getattr(self, k) for k in
                   ("private_data", "schema", "workload", "methods", "epsilons",
                    "delta", "seeds", "generator")}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ReportRow:
    method: str
    epsilon: float
    seed: int
    werror_l1: float
    werror_linf: float
    runtime_ms: float
    final_epsilon: float
    final_delta: float
    gen_rejects: int

    def as_csv_fields(self) -> list:
        return [self.method, _fmt(self.epsilon), str(self.seed), _fmt(self.werror_l1),
                _fmt(self.werror_linf), _fmt(self.runtime_ms), _fmt(self.final_epsilon),
                _fmt(self.final_delta), str(self.gen_rejects)]

    def as_dict(self) -> dict:
        return {
            "method": self.method, "epsilon": _json_real(self.epsilon), "seed": self.seed,
            "werror_l1": self.werror_l1, "werror_linf": self.werror_linf,
            "runtime_ms": self.runtime_ms, "final_epsilon": _json_real(self.final_epsilon),
            "final_delta": self.final_delta, "gen_rejects": self.gen_rejects,
        }


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(float(x))


def _json_real(x: float):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _build_generator(config: ExperimentConfig, schema: TableSchema):
    gen = config.generator
    if "endpoint_config" in gen:
        return RemoteGenerator(EndpointConfig.from_json(config.resolve_path(gen["endpoint_config"])))
    if "cache" in gen:
        return CachedGenerator(config.resolve_path(gen["cache"]), schema)
    if "mock_config_path" in gen:
        return MockGenerator(MockPriorConfig.from_json(config.resolve_path(gen["mock_config_path"])))
    if "mock_config" in gen:
        return MockGenerator(MockPriorConfig.from_dict(gen["mock_config"]))
    return MockGenerator()


def _public_dataset(config: ExperimentConfig, schema: TableSchema,
                    streams: RandomStreams):
    """Public records for one-shot pipelines: (dataset, generator rejects)."""
    gen = config.generator
    if "cache" in gen:
        batch = cache_load(config.resolve_path(gen["cache"]), schema)
    else:
        generator = _build_generator(config, schema)
        n_public = int(gen.get("n_public", 10000))
        batch = generator.random_api(schema, n_public, streams.stream("public-batch"))
    return batch.to_dataset(Provenance.PUBLIC), batch.rejected_count


def _run_method(method: dict, config: ExperimentConfig, s_priv: Dataset,
                workload: Workload, budget: PrivacyBudget, ledger: AccountantLedger,
                streams: RandomStreams):
    """Returns (werror_l1, werror_linf, gen_rejects, extras dict)."""
    schema = s_priv.schema
    priv_answers = evaluate(workload, s_priv)
    kind = method["kind"]
    extras = {}

    if kind == "pe":
        generator = _build_generator(config, schema)
        pe_config = PeConfig(
            workload=workload, budget=budget,
            schedule=make_schedule(method.get("schedule", "increasing"), method.get("T", 1)),
            n_synth=method.get("n_synth", 1000),
            pool_factor=method.get("pool_factor", 2.0))
        synth, trace = run_pe(s_priv, pe_config, generator, ledger, streams)
        extras["trace"] = trace
        answers = evaluate(workload, synth)
        return (workload_error(priv_answers, answers, "l1"),
                workload_error(priv_answers, answers, "linf"),
                trace.generator_rejects, extras)

    if kind == "oneshot":
        public, public_rejects = _public_dataset(config, schema, streams)
        n_synth = method.get("n_synth", 1000)
        pipeline = method["pipeline"]
        rng = streams.stream(f"oneshot-{pipeline}")
        if pipeline == "gemini-inference":
            synth = gemini_inference(public, workload, s_priv, budget, ledger, rng, n_synth)
        elif pipeline == "mwem":
            weights = mwem_refine(public, workload, s_priv, method.get("rounds", 10),
                                  budget, ledger, rng)
            synth = sample_from_weights(weights, n_synth, rng)
        elif pipeline == "mst-lite":
            synth = mst_lite(s_priv, schema, public, budget, ledger, rng, n_synth,
                             shares=tuple(method.get("shares", (0.1, 0.45, 0.45))))
        else:  # jam-lite
            marginals = method.get("marginals")
            if marginals is None:
                marginals = [list(p) for p in workload.subsets if len(p) == 2] or \
                            [list(p) for p in workload.subsets]
            plan, synth = jam_lite(s_priv, public, [tuple(m) for m in marginals],
                                   budget, ledger, rng, n_synth,
                                   decision_share=method.get("decision_share", 0.1))
            extras["plan"] = plan
        answers = evaluate(workload, synth)
        return (workload_error(priv_answers, answers, "l1"),
                workload_error(priv_answers, answers, "linf"), public_rejects, extras)

    # baselines
    name = method["baseline"]
    rng = streams.stream(f"baseline-{name}")
    if name == "dp-workload":
        noisy = baselines.dp_workload(s_priv, workload, budget, ledger, rng)
        gap = np.abs(noisy.values - priv_answers.values)
        return float(gap.sum()), float(gap.max()), 0, extras
    if name == "independent":
        synth = baselines.independent_baseline(s_priv, schema, method.get("n_synth", 1000),
                                               budget, ledger, rng)
    elif name == "uniform-public":
        synth = baselines.uniform_public(schema, method.get("n_synth", 1000), rng)
    elif name == "in-distribution-public":
        synth = load_dataset(config.resolve_path(method["path"]), schema,
                             ClampPolicy.REJECT, Provenance.PUBLIC)
    else:  # generator-no-dp
        row = baselines.generator_no_dp(config.resolve_path(method["cache"]), workload, s_priv)
        return row["werror_l1"], row["werror_linf"], 0, extras
    answers = evaluate(workload, synth)
    return (workload_error(priv_answers, answers, "l1"),
            workload_error(priv_answers, answers, "linf"), 0, extras)


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Run the (method x epsilon x seed) grid and write report artifacts.

    Returns {"report_csv": path, "report_json": path, "rows": [...]}.
    """
    out = Path(out_dir or config.output_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "ledgers").mkdir(exist_ok=True)

    schema = TableSchema.from_json(config.resolve_path(config.schema))
    s_priv = load_dataset(config.resolve_path(config.private_data), schema,
                          ClampPolicy.REJECT, Provenance.PRIVATE)
    workload = resolve_workload(config.workload, schema)

    rows: list = []
    errors: list = []
    for method in config.methods:
        for epsilon in config.parse_epsilons():
            budget = PrivacyBudget.infinite() if math.isinf(epsilon) else \
                PrivacyBudget(epsilon=epsilon, delta=config.delta)
            for seed in config.seeds:
                ledger = AccountantLedger(cap=budget.rho)
                streams = RandomStreams(seed)
                started = time.perf_counter()
                try:
                    l1, linf, rejects, extras = _run_method(
                        method, config, s_priv, workload, budget, ledger, streams)
                except (DPSynthError, ValueError, TypeError) as exc:
                    errors.append({"method": method["id"], "epsilon": _json_real(epsilon),
                                   "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
                    continue
                elapsed_ms = (time.perf_counter() - started) * 1000.0
                final_eps = ledger.epsilon(config.delta)
                assert final_eps <= epsilon * (1 + 1e-9) or math.isinf(epsilon), \
                    "ledger epsilon exceeded the configured budget"
                rows.append(ReportRow(
                    method=method["id"], epsilon=epsilon, seed=seed,
                    werror_l1=l1, werror_linf=linf,
                    runtime_ms=elapsed_ms if config.record_runtime else 0.0,
                    final_epsilon=final_eps, final_delta=config.delta,
                    gen_rejects=rejects))
                tag = f"{method['id']}-eps{_fmt(epsilon)}-seed{seed}"
                ledger.dump_json(out / "ledgers" / f"{tag}.json", config.delta)
                if "trace" in extras:
                    (out / "traces").mkdir(exist_ok=True)
                    extras["trace"].to_csv(out / "traces" / f"{tag}.csv")
                if "plan" in extras:
                    (out / "plans").mkdir(exist_ok=True)
                    extras["plan"].to_json(out / "plans" / f"{tag}.json")

    report_csv = out / "report.csv"
    with open(report_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row.as_csv_fields()) + "\n")
    report_json = out / "report.json"
    payload = {
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": config.content_hash(),
        "workload_hash": workload.identity_hash(),
        "rows": [r.as_dict() for r in rows],
        "errors": errors,
    }
    with open(report_json, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return {"report_csv": str(report_csv), "report_json": str(report_json),
            "rows": rows, "errors": errors}


def compare_methods(report_paths, out_path=None) -> list:
    """Merge reports into per-(method, epsilon) means and sample stds.

    All reports must carry the same workload identity hash.
    """
    reports = []
    for path in report_paths:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        reports.append(payload)
    hashes = {r["workload_hash"] for r in reports}
    if len(hashes) > 1:
        raise WorkloadMismatchError("reports were produced against different workloads")
    groups: dict = {}
    for payload in reports:
        for row in payload["rows"]:
            key = (row["method"], row["epsilon"])
            groups.setdefault(key, []).append(row)
    merged = []
    for (method, epsilon), group in sorted(groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        l1 = np.array([g["werror_l1"] for g in group], dtype=float)
        linf = np.array([g["werror_linf"] for g in group], dtype=float)
        merged.append({
            "method": method, "epsilon": epsilon, "n_runs": len(group),
            "werror_l1_mean": float(l1.mean()),
            "werror_l1_std": float(l1.std(ddof=1)) if len(l1) > 1 else 0.0,
            "werror_linf_mean": float(linf.mean()),
            "werror_linf_std": float(linf.std(ddof=1)) if len(linf) > 1 else 0.0,
        })
    if out_path:
        cols = ["method", "epsilon", "n_runs", "werror_l1_mean", "werror_l1_std",
                "werror_linf_mean", "werror_linf_std"]
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in merged:
                fh.write(",".join(str(row[c]) if c in ("method", "epsilon", "n_runs")
                                  else repr(row[c]) for c in cols) + "\n")
    return merged
