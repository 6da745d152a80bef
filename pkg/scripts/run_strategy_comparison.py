#!/usr/bin/env python3
"""Run all four strategy arms across the benchmark landscapes and tabulate
measurements-to-target per seed, plus the non-adaptive/adaptive reach ratios.

Writes one run directory per (seed, strategy) under --out and a summary CSV.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from knobtuner.backends import SyntheticBackend, load_landscape, load_log, synthetic_runtime
from knobtuner.driver import STRATEGIES, TuningTask, tune
from knobtuner.report import measurements_to_reach
from knobtuner.space import enumerate_space, load_space


def enumerated_oracle(space, landscape) -> float:
    return min(synthetic_runtime(landscape, c) for c in enumerate_space(space))


def run_seed(space, landscape, seed, budget, strategies, out_dir, target_frac):
    oracle = enumerated_oracle(space, landscape)
    ceiling = (1.0 + target_frac) * oracle
    row = {"seed": seed, "oracle_runtime_s": f"{oracle:.6g}"}
    for strategy in strategies:
        task = TuningTask(space=space, backend_spec="synthetic:benchmark",
                          strategy=strategy, budget=budget, seed=seed)
        t0 = time.monotonic()
        result = tune(task, out_dir / f"seed{seed}" / strategy,
                      backend=SyntheticBackend(landscape))
        elapsed = time.monotonic() - t0
        reach = measurements_to_reach(load_log(result.log_path), ceiling)
        gap = result.best_runtime_s / oracle - 1.0
        row[f"{strategy}_reach"] = "" if reach is None else str(reach)
        row[f"{strategy}_gap"] = f"{gap:.4f}"
        print(f"seed {seed} {strategy:6s} reach={str(reach):>5s} "
              f"gap={gap:7.2%} wall={elapsed:5.1f}s", flush=True)
    for plain, adaptive in (("sa", "sa+as"), ("rl", "rl+as")):
        if plain in strategies and adaptive in strategies:
            r_plain = row[f"{plain}_reach"]
            r_adapt = row[f"{adaptive}_reach"]
            if not r_adapt:
                ratio = ""
            elif not r_plain:
                ratio = "inf"
            else:
                ratio = f"{int(r_plain) / int(r_adapt):.2f}"
            row[f"{plain}_over_{adaptive}"] = ratio
            print(f"seed {seed} reach ratio {plain}/{adaptive} = {ratio or 'n/a'}", flush=True)
    return row


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--space", default="spaces/bench_grid4d.json")
    parser.add_argument("--landscape-dir", default="landscapes")
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--budget", type=int, default=1000)
    parser.add_argument("--strategies", default="sa,sa+as,rl,rl+as")
    parser.add_argument("--target-frac", type=float, default=0.10,
                        help="reach target as a fraction above the oracle runtime")
    parser.add_argument("--out", default="comparison_out")
    args = parser.parse_args()

    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        parser.error(f"unknown strategies: {', '.join(unknown)}")

    space = load_space(args.space)
    out_dir = Path(args.out)
    rows = []
    for seed in (int(s) for s in args.seeds.split(",")):
        landscape_path = Path(args.landscape_dir) / f"bench_grid4d_s{seed}.json"
        if not landscape_path.exists():
            print(f"missing {landscape_path}; run scripts/gen_fixture_landscapes.py first",
                  file=sys.stderr)
            return 2
        landscape = load_landscape(landscape_path, space)
        rows.append(run_seed(space, landscape, seed, args.budget, strategies,
                             out_dir, args.target_frac))

    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "strategy_comparison.csv"
    with table.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {table}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
