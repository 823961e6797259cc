"""Command line entry points.

Subcommands:
  run-synthetic      sequential design on freshly generated worlds
  run-semisynthetic  sequential design on a counterfactual table
  validate-config    parse and check a config file, report the result
  true-ate           print the ground-truth average effect of a table

Exit codes: 0 success, 2 configuration or usage error, 1 runtime error.
Summaries go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import yaml

from .benchdata import load_table, resolve_schema, true_ate
from .errors import ConfigError, SchemaError
from .experiment import (
    SEMISYNTHETIC,
    SYNTHETIC,
    default_config,
    load_config,
    run_experiment,
    summary_lines,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="targeted-design",
        description="Sequential experimental design for a treatment effect "
        "under a partially linear outcome model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file (built-in defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--replications", type=int, help="override the replication count")
        p.add_argument("--output", help="override the CSV output path")
        p.add_argument(
            "--workers", type=int,
            help="worker processes (default: TARGETED_DESIGN_THREADS env var, or one per CPU)",
        )
        return p

    add_run("run-synthetic", "run the synthetic-world study")
    p_semi = add_run("run-semisynthetic", "run the counterfactual-table study")
    p_semi.add_argument("--data", help="override the counterfactual table path")

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("--config", required=True)

    p_ate = sub.add_parser("true-ate", help="print a table's true average effect")
    p_ate.add_argument("--data", required=True, help="counterfactual CSV path")
    p_ate.add_argument(
        "--schema", default="basic",
        help="builtin schema name (basic, ihdp) or a YAML mapping file",
    )
    return parser


def _load_schema_arg(spec: str):
    if os.path.isfile(spec):
        with open(spec) as fh:
            return resolve_schema(yaml.safe_load(fh))
    return resolve_schema(spec)


def _run(args: argparse.Namespace, mode: str) -> int:
    if args.config:
        cfg = load_config(args.config)
        if cfg.mode != mode:
            raise ConfigError(f"{args.config} has mode {cfg.mode!r}, expected {mode!r}")
    else:
        cfg = default_config(mode)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.replications is not None:
        updates["replications"] = args.replications
    if args.output is not None:
        updates["output_path"] = args.output
    if mode == SEMISYNTHETIC and args.data:
        updates["data_path"] = args.data
    if not cfg.output_path and "output_path" not in updates:
        updates["output_path"] = f"{mode}_curves.csv"
    if updates:
        cfg = replace(cfg, **updates)
    cfg.validate()

    start = time.perf_counter()
    curves = run_experiment(cfg, workers=args.workers)
    elapsed = time.perf_counter() - start
    for line in summary_lines(curves):
        print(line)
    print(f"wrote {cfg.output_path} ({curves.replications} replications, {elapsed:.1f} s)")
    if curves.jitter_events:
        print(f"diagnostics: {curves.jitter_events} jitter escalations", file=sys.stderr)
    if curves.invalid_candidates:
        print(
            f"diagnostics: {curves.invalid_candidates} candidates skipped as "
            "numerically invalid",
            file=sys.stderr,
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run-synthetic":
            return _run(args, SYNTHETIC)
        if args.command == "run-semisynthetic":
            return _run(args, SEMISYNTHETIC)
        if args.command == "validate-config":
            cfg = load_config(args.config)
            print(
                f"ok: {cfg.mode} / {cfg.replications} replications / "
                f"{cfg.total_steps} steps / pool {cfg.pool_size} / seed {cfg.seed}"
            )
            return 0
        if args.command == "true-ate":
            table = load_table(args.data, _load_schema_arg(args.schema))
            print(f"{true_ate(table):.17g}")
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
