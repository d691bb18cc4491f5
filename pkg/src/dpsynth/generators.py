"""Candidate generators: the random/variation API over a foundation model.

Three implementations share one request/batch contract: a deterministic mock
backed by a configurable prior, an HTTP structured-output client, and a
persistent JSONL cache that lets one generation run feed many mechanisms.

The privacy firewall is structural: random-mode requests cannot carry record
values at all, and variation-mode requests only accept datasets tagged
Synthetic, i.e. records that came out of a privatized resampling step.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests
from scipy.stats import truncnorm

from .data import (
    Dataset,
    Provenance,
    Record,
    TableSchema,
    record_from_dict,
    record_to_dict,
)
from .errors import (
    AuthFailureError,
    CorruptCacheError,
    GeneratorUnavailableError,
    MalformedResponseError,
    PrivacyFirewallError,
    SchemaError,
    SchemaHashMismatchError,
)

logger = logging.getLogger(__name__)

RANDOM = "random"
VARIATION = "variation"


@dataclass(frozen=True)
class GenerationParams:
    top_k: int = 1
    temperature: float = 1.0


@dataclass(frozen=True)
class GeneratorRequest:
    """What a generator is allowed to see: the schema, the mode, and (for
    variation only) already-privatized exemplar records."""

    schema: TableSchema
    mode: str
    n: int
    elite: tuple = ()
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.mode == RANDOM and self.elite:
            raise PrivacyFirewallError("random requests must not carry record values")
        if self.mode == VARIATION and not self.elite:
            raise ValueError("variation requests need a non-empty elite set")

    @classmethod
    def random(cls, schema: TableSchema, n: int,
               params: Optional[GenerationParams] = None) -> "GeneratorRequest":
        return cls(schema=schema, mode=RANDOM, n=n, params=params or GenerationParams())

    @classmethod
    def variation(cls, schema: TableSchema, elite: Dataset, n: int,
                  params: Optional[GenerationParams] = None) -> "GeneratorRequest":
        if elite.provenance is not Provenance.SYNTHETIC:
            raise PrivacyFirewallError(
                f"variation elite must be privatized output (Synthetic), got {elite.provenance.value}")
        if len(elite) == 0:
            raise ValueError("variation requests need a non-empty elite set")
        return cls(schema=schema, mode=VARIATION, n=n, elite=elite.rows,
                   params=params or GenerationParams())


@dataclass
class GeneratorBatch:
    """Schema-validated generator output plus rejection statistics."""

    schema: TableSchema
    records: tuple
    rejected_count: int = 0
    source: str = "mock"
    params: GenerationParams = field(default_factory=GenerationParams)
    partial: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def to_dataset(self, provenance: Provenance = Provenance.GENERATED) -> Dataset:
        return Dataset(self.schema, self.records, provenance, validate=False)


class CandidateGenerator:
    """Interface every generator backend implements."""

    def generate(self, request: GeneratorRequest, rng: np.random.Generator) -> GeneratorBatch:
        raise NotImplementedError

    def random_api(self, schema: TableSchema, n: int, rng: np.random.Generator,
                   params: Optional[GenerationParams] = None) -> GeneratorBatch:
        return self.generate(GeneratorRequest.random(schema, n, params), rng)

    def variation_api(self, elite: Dataset, n: int, rng: np.random.Generator,
                      params: Optional[GenerationParams] = None) -> GeneratorBatch:
        return self.generate(GeneratorRequest.variation(elite.schema, elite, n, params), rng)


# ---------------------------------------------------------------------------
# mock generator


@dataclass(frozen=True)
class MockPriorConfig:
    """Stand-in for a foundation model's prior over realistic records.

    categorical: column name -> probabilities over its domain.
    numerical:   column name -> {"dist": "uniform"} or
                 {"dist": "truncnorm", "mean": m, "std": s} over [min, max].
    dependencies: (parent, child, table) triples; the child is drawn from
                 table[parent_bin], a distribution over the child's binned
                 domain, overriding its root entry. One parent per child,
                 acyclic.
    Columns without an entry default to uniform.
    """

    categorical: dict = field(default_factory=dict)
    numerical: dict = field(default_factory=dict)
    dependencies: tuple = ()
    variation_resample_prob: float = 0.3

    @classmethod
    def uniform(cls, variation_resample_prob: float = 0.3) -> "MockPriorConfig":
        return cls(variation_resample_prob=variation_resample_prob)

    @classmethod
    def from_dict(cls, payload: dict) -> "MockPriorConfig":
        return cls(
            categorical={k: tuple(v) for k, v in payload.get("categorical", {}).items()},
            numerical=dict(payload.get("numerical", {})),
            dependencies=tuple((d["parent"], d["child"], tuple(tuple(row) for row in d["table"]))
                               for d in payload.get("dependencies", ())),
            variation_resample_prob=payload.get("variation_resample_prob", 0.3),
        )

    @classmethod
    def from_json(cls, path) -> "MockPriorConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate(self, schema: TableSchema) -> None:
        if not 0.0 <= self.variation_resample_prob <= 1.0:
            raise ValueError("variation_resample_prob must lie in [0, 1]")
        for name, probs in self.categorical.items():
            col = schema.columns[schema.column_index(name)]
            if not col.is_categorical:
                raise SchemaError(f"{name!r} has a categorical prior but is numerical")
            if len(probs) != col.size:
                raise SchemaError(f"{name!r}: prior length {len(probs)} != domain size {col.size}")
            if abs(sum(probs) - 1.0) > 1e-9:
                raise SchemaError(f"{name!r}: prior must sum to 1")
        for name, spec in self.numerical.items():
            col = schema.columns[schema.column_index(name)]
            if col.is_categorical:
                raise SchemaError(f"{name!r} has a numerical prior but is categorical")
            if spec.get("dist") not in ("uniform", "truncnorm"):
                raise SchemaError(f"{name!r}: unknown distribution {spec.get('dist')!r}")
        children = set()
        for parent, child, table in self.dependencies:
            p = schema.columns[schema.column_index(parent)]
            c = schema.columns[schema.column_index(child)]
            if child in children:
                raise SchemaError(f"column {child!r} has more than one parent")
            children.add(child)
            if len(table) != p.size:
                raise SchemaError(f"dependency {parent!r}->{child!r}: table needs {p.size} rows")
            for row in table:
                if len(row) != c.size:
                    raise SchemaError(f"dependency {parent!r}->{child!r}: rows need {c.size} entries")
                if abs(sum(row) - 1.0) > 1e-9:
                    raise SchemaError(f"dependency {parent!r}->{child!r}: rows must sum to 1")
        self._topo_order(schema)  # raises on cycles

    def _topo_order(self, schema: TableSchema) -> list:
        """Column evaluation order with parents before children."""
        parent_of = {child: parent for parent, child, _ in self.dependencies}
        order, seen = [], set()

        def visit(name, trail):
            if name in seen:
                return
            if name in trail:
                raise SchemaError(f"dependency cycle through {name!r}")
            if name in parent_of:
                visit(parent_of[name], trail | {name})
            seen.add(name)
            order.append(name)

        for col in schema.columns:
            visit(col.name, frozenset())
        return order


class MockGenerator(CandidateGenerator):
    """Deterministic generator over a configured prior; never rejects."""

    def __init__(self, config: Optional[MockPriorConfig] = None):
        self.config = config or MockPriorConfig.uniform()

    def generate(self, request: GeneratorRequest, rng: np.random.Generator) -> GeneratorBatch:
        schema = request.schema
        self.config.validate(schema)
        if request.mode == RANDOM:
            records = self._sample(schema, request.n, rng)
        else:
            records = self._vary(schema, request.elite, request.n, rng)
        return GeneratorBatch(schema=schema, records=records, rejected_count=0,
                              source="mock", params=request.params)

    # -- sampling -------------------------------------------------------

    def _column_sampler(self, schema: TableSchema, name: str):
        """Draw n root values for one column."""
        col = schema.columns[schema.column_index(name)]
        if col.is_categorical:
            probs = np.asarray(self.config.categorical.get(name, ()), dtype=float)
            if probs.size == 0:
                probs = np.full(col.size, 1.0 / col.size)

            def draw(n, rng):
                return rng.choice(col.size, size=n, p=probs).astype(float)
        else:
            spec = self.config.numerical.get(name, {"dist": "uniform"})
            if spec["dist"] == "uniform":
                def draw(n, rng):
                    return rng.uniform(col.min, col.max, size=n)
            else:
                a = (col.min - spec["mean"]) / spec["std"]
                b = (col.max - spec["mean"]) / spec["std"]

                def draw(n, rng):
                    v = truncnorm.rvs(a, b, loc=spec["mean"], scale=spec["std"],
                                      size=n, random_state=rng)
                    return np.clip(v, col.min, col.max)
        return draw

    def _conditional_draw(self, schema: TableSchema, child: str, table,
                          parent_bins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        col = schema.columns[schema.column_index(child)]
        out = np.empty(parent_bins.shape[0], dtype=float)
        for b in range(len(table)):  # ascending parent bins keeps rng use deterministic
            mask = parent_bins == b
            count = int(mask.sum())
            if count == 0:
                continue
            child_bins = rng.choice(col.size, size=count, p=np.asarray(table[b], dtype=float))
            if col.is_categorical:
                out[mask] = child_bins.astype(float)
            else:
                width = (col.max - col.min) / col.bins
                lo = col.min + child_bins * width
                out[mask] = lo + rng.uniform(0.0, 1.0, size=count) * width
        return out

    def _sample(self, schema: TableSchema, n: int, rng: np.random.Generator) -> tuple:
        parent_of = {child: (parent, table) for parent, child, table in self.config.dependencies}
        values = {}
        for name in self.config._topo_order(schema):
            if name in parent_of:
                parent, table = parent_of[name]
                pcol = schema.columns[schema.column_index(parent)]
                pbins = _bin_array(pcol, values[parent])
                values[name] = self._conditional_draw(schema, name, table, pbins, rng)
            else:
                values[name] = self._column_sampler(schema, name)(n, rng)
        return _columns_to_records(schema, values, n)

    def _vary(self, schema: TableSchema, elite: Sequence[Record], n: int,
              rng: np.random.Generator) -> tuple:
        """Copy a uniformly chosen elite record, then independently resample
        each field with probability variation_resample_prob."""
        picks = rng.integers(0, len(elite), size=n)
        base = np.asarray(elite, dtype=float).reshape(len(elite), len(schema))[picks]
        resample = rng.random((n, len(schema))) < self.config.variation_resample_prob
        parent_of = {child: (parent, table) for parent, child, table in self.config.dependencies}
        values = {col.name: base[:, j].copy() for j, col in enumerate(schema.columns)}
        for name in self.config._topo_order(schema):
            j = schema.column_index(name)
            mask = resample[:, j]
            count = int(mask.sum())
            if count == 0:
                continue
            if name in parent_of:
                parent, table = parent_of[name]
                pcol = schema.columns[schema.column_index(parent)]
                pbins = _bin_array(pcol, values[parent][mask])
                values[name][mask] = self._conditional_draw(schema, name, table, pbins, rng)
            else:
                values[name][mask] = self._column_sampler(schema, name)(count, rng)
        return _columns_to_records(schema, values, n)


def _bin_array(col, values: np.ndarray) -> np.ndarray:
    if col.is_categorical:
        return values.astype(np.int64)
    width = (col.max - col.min) / col.bins
    return np.clip(np.floor((values - col.min) / width).astype(np.int64), 0, col.bins - 1)


def _columns_to_records(schema: TableSchema, values: dict, n: int) -> tuple:
    cols = []
    for col in schema.columns:
        v = values[col.name]
        cols.append([int(x) for x in v] if col.is_categorical else [float(x) for x in v])
    return tuple(tuple(col[i] for col in cols) for i in range(n))


# ---------------------------------------------------------------------------
# remote generator


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model_id: str
    per_call_record_cap: int = 1000
    timeout_ms: int = 30000
    max_in_flight: int = 4
    retry_cap: int = 5
    auth_token_env: str = ""
    variation_examples_per_call: int = 10

    @classmethod
    def from_json(cls, path) -> "EndpointConfig":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**payload)


class RemoteGenerator(CandidateGenerator):
    """Structured-output HTTP client.

    Each call asks for up to per_call_record_cap records; responses are
    JSON-lines objects keyed by column name. Schema-invalid records are
    dropped and re-requested, never repaired, so the generator's output
    distribution is measured honestly.
    """

    def __init__(self, config: EndpointConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.session = session or requests.Session()

    def _auth_headers(self) -> dict:
        if not self.config.auth_token_env:
            return {}
        token = os.environ.get(self.config.auth_token_env)
        if token is None:
            raise AuthFailureError(
                f"environment variable {self.config.auth_token_env!r} is not set")
        return {"Authorization": f"Bearer {token}"}

    def _payload(self, request: GeneratorRequest, count: int, call_index: int) -> dict:
        payload = {
            "model_id": self.config.model_id,
            "mode": request.mode,
            "n": count,
            "response_schema": request.schema.to_dict(),
            "generation_params": {"top_k": request.params.top_k,
                                  "temperature": request.params.temperature},
        }
        if request.mode == VARIATION:
            per_call = max(1, self.config.variation_examples_per_call)
            start = (call_index * per_call) % len(request.elite)
            chosen = [request.elite[(start + i) % len(request.elite)]
                      for i in range(min(per_call, len(request.elite)))]
            payload["examples"] = [record_to_dict(request.schema, r) for r in chosen]
        return payload

    def _one_call(self, request: GeneratorRequest, count: int, call_index: int):
        """Returns (valid_records, rejected) or raises a retryable error."""
        headers = self._auth_headers()
        try:
            resp = self.session.post(self.config.url, json=self._payload(request, count, call_index),
                                     headers=headers, timeout=self.config.timeout_ms / 1000.0)
        except requests.RequestException as exc:
            raise GeneratorUnavailableError(f"call {call_index}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthFailureError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise GeneratorUnavailableError(f"call {call_index}: HTTP {resp.status_code}")
        try:
            text = resp.content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedResponseError(f"call {call_index}: non-text payload") from exc
        valid, rejected = [], 0
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                valid.append(record_from_dict(request.schema, obj))
            except (json.JSONDecodeError, SchemaError) as exc:
                rejected += 1
                logger.warning("dropped generator record (call %d): %s | payload: %.200s",
                               call_index, exc, line)
        return valid, rejected

    def generate(self, request: GeneratorRequest, rng: np.random.Generator) -> GeneratorBatch:
        del rng  # remote sampling is not seedable from here
        cfg = self.config
        target = request.n
        records: list = []
        rejected = 0
        failures = 0
        call_index = 0

        def run_wave(counts):
            nonlocal rejected, failures, call_index
            specs = [(call_index + i, c) for i, c in enumerate(counts)]
            call_index += len(counts)
            results = [None] * len(specs)
            errors: list = []

            def work(slot, idx, count):
                try:
                    results[slot] = self._one_call(request, count, idx)
                except (GeneratorUnavailableError, MalformedResponseError) as exc:
                    errors.append(exc)
                    results[slot] = ([], 0)

            if cfg.max_in_flight > 1 and len(specs) > 1:
                with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
                    futures = [pool.submit(work, slot, idx, count)
                               for slot, (idx, count) in enumerate(specs)]
                    for f in futures:
                        f.result()
            else:
                for slot, (idx, count) in enumerate(specs):
                    work(slot, idx, count)
            failures += len(errors)
            for valid, rej in results:  # request order
                records.extend(valid)
                rejected += rej

        if target > 0:
            initial = []
            remaining = target
            while remaining > 0:
                initial.append(min(cfg.per_call_record_cap, remaining))
                remaining -= initial[-1]
            run_wave(initial)
            extra_calls = 0
            while len(records) < target and extra_calls < cfg.retry_cap:
                run_wave([min(cfg.per_call_record_cap, target - len(records))])
                extra_calls += 1
            if not records and failures and target > 0:
                raise GeneratorUnavailableError(
                    f"no records after {call_index} calls ({failures} failed)")

        got = tuple(records[:target])
        return GeneratorBatch(schema=request.schema, records=got, rejected_count=rejected,
                              source=f"remote:{cfg.model_id}", params=request.params,
                              partial=len(got) < target)


def remote_generate(request: GeneratorRequest, config: EndpointConfig,
                    session: Optional[requests.Session] = None) -> GeneratorBatch:
    """One-off remote generation without keeping a generator instance around."""
    rng = np.random.default_rng(0)  # unused; remote sampling is server-side
    return RemoteGenerator(config, session=session).generate(request, rng)


# ---------------------------------------------------------------------------
# cache


def cache_store(batch: GeneratorBatch, path) -> None:
    """Persist a batch as JSONL: header object, then one record per line.

    The write is atomic (temp file + rename) and the serialization is
    deterministic for identical content apart from the creation timestamp.
    """
    schema = batch.schema
    header = {
        "schema_hash": schema.content_hash(),
        "generation_params": {"top_k": batch.params.top_k, "temperature": batch.params.temperature},
        "source": batch.source,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "records": len(batch.records),
    }
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
            for record in batch.records:
                fh.write(json.dumps(record_to_dict(schema, record),
                                    sort_keys=True, separators=(",", ":")) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_load(path, schema: TableSchema) -> GeneratorBatch:
    """Load a cached batch, verifying the schema hash and every record."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorruptCacheError(f"{path}: {exc}") from exc
    if not lines:
        raise CorruptCacheError(f"{path}: empty cache file")
    try:
        header = json.loads(lines[0])
        stored_hash = header["schema_hash"]
        params = GenerationParams(**header.get("generation_params", {}))
        source = header.get("source", "cache")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCacheError(f"{path}: bad header: {exc}") from exc
    if stored_hash != schema.content_hash():
        raise SchemaHashMismatchError(
            f"{path}: cache built for schema hash {stored_hash[:12]}..., "
            f"expected {schema.content_hash()[:12]}...")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(record_from_dict(schema, json.loads(line)))
        except (json.JSONDecodeError, SchemaError) as exc:
            raise CorruptCacheError(f"{path}: line {i}: {exc}") from exc
    return GeneratorBatch(schema=schema, records=tuple(records), rejected_count=0,
                          source=f"cache:{path}", params=params)


class CachedGenerator(CandidateGenerator):
    """Serves random-mode requests from a cache file; variation falls back to
    mock-style resampling over the cached records' empirical distribution."""

    def __init__(self, path, schema: TableSchema):
        self.batch = cache_load(path, schema)
        self.path = str(path)

    def generate(self, request: GeneratorRequest, rng: np.random.Generator) -> GeneratorBatch:
        if request.mode != RANDOM:
            raise ValueError("cached generators only serve random-mode requests")
        pool = self.batch.records
        if request.n > len(pool):
            picks = rng.integers(0, len(pool), size=request.n)
            records = tuple(pool[i] for i in picks)
        else:
            records = pool[:request.n]
        return GeneratorBatch(schema=request.schema, records=records, rejected_count=0,
                              source=f"cache:{self.path}", params=request.params)
