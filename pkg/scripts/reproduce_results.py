#!/usr/bin/env python3
"""Run both benchmark studies end to end and print the final comparison.

Executes the synthetic-world study and the counterfactual-table study from
the shipped configs, writes one error-curve CSV per study, and prints the
final-step mean absolute error of each selection strategy plus their ratio.
Use --quick for a fast smoke run with fewer replications.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from targeted_design.experiment import load_config, run_experiment, summary_lines  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--output-dir", default="results", help="directory for the curve CSVs"
    )
    parser.add_argument(
        "--workers", type=int, default=None,
        help="worker processes (default: TARGETED_DESIGN_THREADS env var, or one per CPU)",
    )
    parser.add_argument(
        "--replications", type=int, default=None,
        help="override the replication count of both studies",
    )
    parser.add_argument(
        "--quick", action="store_true",
        help="smoke mode: 20 replications instead of the configured 200",
    )
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reps = args.replications if args.replications is not None else (20 if args.quick else None)

    for name in ("synthetic", "semisynthetic"):
        cfg = load_config(str(ROOT / "configs" / f"{name}.yaml"))
        updates = {"output_path": str(out_dir / f"{name}_curves.csv")}
        if reps is not None:
            updates["replications"] = reps
        cfg = replace(cfg, **updates)

        print(f"== {name} study: {cfg.replications} replications, "
              f"{cfg.total_steps} observations each ==")
        start = time.perf_counter()
        curves = run_experiment(cfg, workers=args.workers)
        elapsed = time.perf_counter() - start
        for line in summary_lines(curves):
            print("  " + line)
        print(f"  wrote {cfg.output_path} in {elapsed:.1f} s")
        if curves.jitter_events or curves.invalid_candidates:
            print(
                f"  diagnostics: {curves.jitter_events} jitter escalations, "
                f"{curves.invalid_candidates} invalid candidates",
                file=sys.stderr,
            )
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
