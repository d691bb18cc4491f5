"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 privacy-budget error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import ClampPolicy, Provenance, TableSchema, load_dataset
from .errors import BudgetExceededError, ConfigError, DPSynthError, SchemaError
from .generators import (
    EndpointConfig,
    GenerationParams,
    GeneratorRequest,
    MockGenerator,
    MockPriorConfig,
    RemoteGenerator,
    cache_store,
)
from .harness import ExperimentConfig, compare_methods, run_experiment
from .privacy import RandomStreams
from .workload import evaluate, workload_error
from .synthesizers import resolve_workload

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed list")
    parser.add_argument("--out-dir", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsynth",
                                     description="DP synthetic tabular data toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schema", help="schema utilities")
    schema_sub = p.add_subparsers(dest="schema_command", required=True)
    v = schema_sub.add_parser("validate", help="validate a schema JSON document")
    v.add_argument("path")

    g = sub.add_parser("generate", help="one-shot batch generation into a cache file")
    g.add_argument("--schema", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--mock-config", default=None)
    g.add_argument("--endpoint-config", default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--top-k", type=int, default=1)
    g.add_argument("--temperature", type=float, default=1.0)

    for name, help_text in (("run-pe", "run private-evolution methods from a config"),
                            ("run-oneshot", "run one-shot pipelines from a config"),
                            ("baseline", "run baseline methods from a config")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        _add_common(p)
        if name == "run-oneshot":
            p.add_argument("--pipeline", default=None,
                           choices=["gemini-inference", "mst-lite", "jam-lite", "mwem"])
        if name == "baseline":
            p.add_argument("--kind", default=None,
                           choices=["dp-workload", "independent", "uniform-public",
                                    "in-distribution-public", "generator-no-dp"])

    p = sub.add_parser("run", help="run every method in a config")
    p.add_argument("--config", required=True)
    _add_common(p)

    p = sub.add_parser("evaluate", help="workload error between two datasets")
    p.add_argument("--schema", required=True)
    p.add_argument("--private", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--workload", default=None, help="workload spec JSON file (default 2-way marginals)")

    p = sub.add_parser("compare", help="merge reports into a comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default=None)
    return parser


def _cmd_schema_validate(args) -> int:
    schema = TableSchema.from_json(args.path)
    sizes = schema.column_sizes()
    print(f"schema {schema.name!r}: {len(schema)} columns, binned domain sizes {sizes}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    schema = TableSchema.from_json(args.schema)
    params = GenerationParams(top_k=args.top_k, temperature=args.temperature)
    if args.endpoint_config:
        generator = RemoteGenerator(EndpointConfig.from_json(args.endpoint_config))
    elif args.mock_config:
        generator = MockGenerator(MockPriorConfig.from_json(args.mock_config))
    else:
        generator = MockGenerator()
    rng = RandomStreams(args.seed).stream("generate")
    batch = generator.generate(GeneratorRequest.random(schema, args.n, params), rng)
    cache_store(batch, args.out)
    print(f"wrote {len(batch)} records to {args.out} "
          f"({batch.rejected_count} rejected, source {batch.source})")
    if batch.partial:
        print("warning: batch is partial (retry budget exhausted)", file=sys.stderr)
    return EXIT_OK


def _filter_methods(config: ExperimentConfig, args) -> ExperimentConfig:
    command = args.command
    if command == "run-pe":
        keep = [m for m in config.methods if m["kind"] == "pe"]
    elif command == "run-oneshot":
        keep = [m for m in config.methods if m["kind"] == "oneshot"
                and (args.pipeline is None or m["pipeline"] == args.pipeline)]
    elif command == "baseline":
        keep = [m for m in config.methods if m["kind"] == "baseline"
                and (args.kind is None or m["baseline"] == args.kind)]
    else:
        keep = config.methods
    if not keep:
        raise ConfigError(f"config has no methods matching {command}")
    config.methods = keep
    return config


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    config = _filter_methods(config, args)
    if args.seed is not None:
        config.seeds = [args.seed]
    result = run_experiment(config, out_dir=args.out_dir)
    print(f"wrote {result['report_csv']} ({len(result['rows'])} rows, "
          f"{len(result['errors'])} failed)")
    for err in result["errors"]:
        print(f"  failed: {err['method']} eps={err['epsilon']} seed={err['seed']}: "
              f"{err['error']}", file=sys.stderr)
    if not result["rows"] and result["errors"]:
        if any("BudgetExceededError" in err["error"] for err in result["errors"]):
            raise BudgetExceededError("every run failed; at least one exceeded its budget")
        return 1
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    schema = TableSchema.from_json(args.schema)
    spec = None
    if args.workload:
        spec = json.loads(Path(args.workload).read_text(encoding="utf-8"))
    workload = resolve_workload(spec, schema)
    s_priv = load_dataset(args.private, schema, ClampPolicy.REJECT, Provenance.PRIVATE)
    synth = load_dataset(args.synthetic, schema, ClampPolicy.CLAMP, Provenance.SYNTHETIC)
    a, b = evaluate(workload, s_priv), evaluate(workload, synth)
    print(json.dumps({
        "queries": len(workload),
        "werror_l1": workload_error(a, b, "l1"),
        "werror_linf": workload_error(a, b, "linf"),
    }, indent=2))
    return EXIT_OK


def _cmd_compare(args) -> int:
    merged = compare_methods(args.reports, out_path=args.out)
    for row in merged:
        print(f"{row['method']} eps={row['epsilon']}: "
              f"l1={row['werror_l1_mean']:.6g} +/- {row['werror_l1_std']:.3g} "
              f"({row['n_runs']} runs)")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "schema":
            return _cmd_schema_validate(args)
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command in ("run", "run-pe", "run-oneshot", "baseline"):
            return _cmd_run(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "compare":
            return _cmd_compare(args)
        parser.error(f"unknown command {args.command!r}")
    except BudgetExceededError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DPSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
