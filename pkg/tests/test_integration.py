"""Cross-module paths not covered by the per-module suites."""

import json
import math

import numpy as np
import pytest

from dpsynth.data import ColumnSpec, Dataset, Provenance, TableSchema
from dpsynth.cli import main
from dpsynth.evolution import PeConfig, run_pe
from dpsynth.generators import (
    CachedGenerator,
    EndpointConfig,
    GeneratorRequest,
    MockGenerator,
    MockPriorConfig,
    cache_store,
)
from dpsynth.privacy import AccountantLedger, PrivacyBudget, RandomStreams, make_schedule
from dpsynth.workload import build_grouped_numeric_workload, distance_matrix, wdist

from conftest import random_dataset, random_records


@pytest.fixture
def mixed_schema():
    return TableSchema(name="mixed", columns=(
        ColumnSpec.categorical("vendor", ("1", "2")),
        ColumnSpec.categorical("payment", ("card", "cash", "other")),
        ColumnSpec.numerical("distance", 0.0, 50.0, 10),
        ColumnSpec.numerical("fare", 0.0, 200.0, 10),
    ))


def test_run_pe_with_grouped_numeric_workload(mixed_schema, rng):
    """The grouped scaled-L1 workload drives the full voting loop."""
    s_priv = random_dataset(mixed_schema, 400, rng)
    workload = build_grouped_numeric_workload(
        mixed_schema, ["vendor", "payment"], ["distance", "fare"])
    assert len(workload) == 2 * 3 * 2
    budget = PrivacyBudget(epsilon=1.0, delta=1e-6)
    config = PeConfig(workload=workload, budget=budget,
                      schedule=make_schedule("increasing", 3), n_synth=80)
    ledger = AccountantLedger(cap=budget.rho)
    synth, trace = run_pe(s_priv, config, MockGenerator(), ledger, RandomStreams(11))
    assert len(synth) == 80
    assert len(trace) == 3
    assert ledger.total_rho == pytest.approx(budget.rho, rel=1e-9)


def test_grouped_distance_matrix_matches_wdist(mixed_schema, rng):
    workload = build_grouped_numeric_workload(mixed_schema, ["vendor"], ["fare"])
    records = random_records(mixed_schema, 15, rng)
    pool = random_records(mixed_schema, 10, rng)
    dm = distance_matrix(records, pool, workload)
    for i in (0, 7, 14):
        for j in (0, 5, 9):
            assert dm[i, j] == pytest.approx(wdist(records[i], pool[j], workload))


def test_mock_prior_config_json_round_trip(tmp_path, mixed_schema, rng):
    payload = {
        "categorical": {"vendor": [0.7, 0.3]},
        "numerical": {"fare": {"dist": "truncnorm", "mean": 30.0, "std": 20.0}},
        "dependencies": [{"parent": "vendor", "child": "payment",
                          "table": [[0.8, 0.1, 0.1], [0.2, 0.5, 0.3]]}],
        "variation_resample_prob": 0.25,
    }
    path = tmp_path / "prior.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    config = MockPriorConfig.from_json(path)
    assert config.variation_resample_prob == 0.25
    assert config.dependencies[0][0] == "vendor"
    batch = MockGenerator(config).random_api(mixed_schema, 200, rng)
    assert len(batch) == 200


def test_cli_generate_with_mock_config_file(tmp_path, mixed_schema):
    schema_path = tmp_path / "schema.json"
    mixed_schema.to_json(schema_path)
    prior_path = tmp_path / "prior.json"
    prior_path.write_text(json.dumps({"categorical": {"vendor": [0.9, 0.1]}}))
    out = tmp_path / "cache.jsonl"
    assert main(["generate", "--schema", str(schema_path), "--n", "400",
                 "--mock-config", str(prior_path), "--seed", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    rows = [json.loads(line) for line in lines[1:]]
    freq = sum(1 for r in rows if r["vendor"] == "1") / len(rows)
    assert freq == pytest.approx(0.9, abs=0.05)


def test_endpoint_config_from_json(tmp_path):
    path = tmp_path / "endpoint.json"
    path.write_text(json.dumps({"url": "http://localhost:1/x", "model_id": "m",
                                "retry_cap": 2, "max_in_flight": 1}))
    config = EndpointConfig.from_json(path)
    assert config.model_id == "m"
    assert config.per_call_record_cap == 1000  # default preserved


def test_remote_generate_function_unreachable(mixed_schema):
    from dpsynth.errors import GeneratorUnavailableError
    from dpsynth.generators import remote_generate

    config = EndpointConfig(url="http://127.0.0.1:9/none", model_id="m",
                            retry_cap=1, max_in_flight=1, timeout_ms=200)
    with pytest.raises(GeneratorUnavailableError):
        remote_generate(GeneratorRequest.random(mixed_schema, 3), config)


def test_cached_generator_rejects_variation(tmp_path, mixed_schema, rng):
    batch = MockGenerator().random_api(mixed_schema, 30, rng)
    path = tmp_path / "cache.jsonl"
    cache_store(batch, path)
    gen = CachedGenerator(path, mixed_schema)
    elite = Dataset(mixed_schema, batch.records[:3], Provenance.SYNTHETIC)
    with pytest.raises(ValueError):
        gen.variation_api(elite, 5, rng)


def test_cached_generator_oversamples_with_replacement(tmp_path, mixed_schema, rng):
    batch = MockGenerator().random_api(mixed_schema, 10, rng)
    path = tmp_path / "cache.jsonl"
    cache_store(batch, path)
    gen = CachedGenerator(path, mixed_schema)
    out = gen.random_api(mixed_schema, 25, np.random.default_rng(0))
    assert len(out) == 25
    assert set(out.records) <= set(batch.records)


def test_evaluate_large_cached_batch(mixed_schema):
    """Answer computation stays fast on a six-figure record count."""
    import time
    from dpsynth.workload import build_marginal_workload, evaluate

    rows = MockGenerator().random_api(mixed_schema, 131000,
                                      np.random.default_rng(1)).records
    ds = Dataset(mixed_schema, rows, Provenance.GENERATED, validate=False)
    workload = build_marginal_workload(mixed_schema, k=2)
    started = time.perf_counter()
    answers = evaluate(workload, ds)
    assert time.perf_counter() - started < 10.0
    assert answers.values.sum() == pytest.approx(len(workload.subsets), abs=1e-6)
