"""Command-line entry point: tune, compare, report, enumerate, gen-landscape."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .backends import gen_landscape, load_landscape, save_landscape, synthetic_runtime
from .driver import STRATEGIES, TuningTask, tune
from .errors import KnobTunerError
from .report import RunData, compare_runs, write_report_files
from .space import enumerate_space, knob_values, load_space

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    """Usage problems exit with status 1; argparse's default of 2 is reserved
    for runtime failures here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="knobtuner", description="Design-space autotuner over measurement backends.")
    sub = parser.add_subparsers(dest="command", required=True)

    tune_p = sub.add_parser("tune", help="run one strategy arm to budget exhaustion")
    tune_p.add_argument("--space", required=True, help="design-space JSON file")
    tune_p.add_argument("--backend", required=True, help="synthetic:LANDSCAPE.json | external:CMD | replay:LOG")
    tune_p.add_argument("--strategy", required=True, choices=STRATEGIES)
    tune_p.add_argument("--budget", required=True, type=int, help="max hardware measurements")
    tune_p.add_argument("--seed", type=int, default=0)
    tune_p.add_argument("--out", required=True, help="output directory for log and summary")

    cmp_p = sub.add_parser("compare", help="run several strategy arms on one task and tabulate")
    cmp_p.add_argument("--space", required=True)
    cmp_p.add_argument("--backend", required=True)
    cmp_p.add_argument("--strategies", default="sa,sa+as,rl,rl+as", help="comma-separated arm list")
    cmp_p.add_argument("--budget", required=True, type=int)
    cmp_p.add_argument("--seed", type=int, default=0)
    cmp_p.add_argument("--out", required=True)
    cmp_p.add_argument("--oracle", choices=("none", "enumerate"), default="none",
                       help="enumerate: compute the true optimum for gap columns (synthetic only)")

    rep_p = sub.add_parser("report", help="tabulate existing run directories")
    rep_p.add_argument("--runs", required=True, nargs="+", help="run directories with summary + log")
    rep_p.add_argument("--out", required=True)
    rep_p.add_argument("--oracle-runtime", type=float, default=None)
    rep_p.add_argument("--project-from", default=None,
                       help="strategy whose measured configs get a 2-D projection CSV")

    enum_p = sub.add_parser("enumerate", help="brute-force oracle for an enumerable space")
    enum_p.add_argument("--space", required=True)
    enum_p.add_argument("--backend", required=True, help="must be synthetic:LANDSCAPE.json")
    enum_p.add_argument("--out", default=None, help="write the oracle JSON here instead of stdout")

    gen_p = sub.add_parser("gen-landscape", help="emit a seeded synthetic landscape file")
    gen_p.add_argument("--space", required=True)
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", required=True)
    gen_p.add_argument("--centers", type=int, default=4)
    gen_p.add_argument("--total-depth", type=float, default=0.9)
    gen_p.add_argument("--radius-min", type=float, default=0.1)
    gen_p.add_argument("--radius-max", type=float, default=0.3)
    gen_p.add_argument("--base-runtime", type=float, default=1.0)
    gen_p.add_argument("--noise-rel", type=float, default=0.02)
    return parser


def _enumerated_oracle(space_path: str, backend_spec: str) -> tuple[list[int], float]:
    kind, _, arg = backend_spec.partition(":")
    if kind != "synthetic":
        raise ValueError(f"oracle enumeration needs a synthetic backend, got {kind!r}")
    space = load_space(space_path)
    landscape = load_landscape(arg, space)
    best_config = None
    best_runtime = float("inf")
    for config in enumerate_space(space):
        runtime = synthetic_runtime(landscape, config)
        if runtime < best_runtime:
            best_runtime = runtime
            best_config = config
    return list(best_config.indices), best_runtime


def _cmd_tune(ns) -> int:
    space = load_space(ns.space)
    task = TuningTask(space=space, backend_spec=ns.backend, strategy=ns.strategy,
                      budget=ns.budget, seed=ns.seed)
    result = tune(task, ns.out)
    print(f"best_config={list(result.best_config.indices)} "
          f"values={list(knob_values(space, result.best_config))} "
          f"best_runtime_s={result.best_runtime_s:.6g} "
          f"measurements={result.measurements_used} rounds={result.rounds}")
    print(f"summary: {Path(ns.out) / 'summary.json'}")
    return 0


def _cmd_compare(ns) -> int:
    strategies = [s.strip() for s in ns.strategies.split(",") if s.strip()]
    if not strategies:
        raise ValueError("--strategies is empty")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}; expected one of {', '.join(STRATEGIES)}")
    space = load_space(ns.space)
    out = Path(ns.out)
    runs = []
    for strategy in strategies:
        task = TuningTask(space=space, backend_spec=ns.backend, strategy=strategy,
                          budget=ns.budget, seed=ns.seed)
        run_dir = out / "runs" / strategy
        logger.info("running arm %s", strategy)
        tune(task, run_dir)
        runs.append(RunData.from_dir(run_dir))
    oracle_runtime = None
    if ns.oracle == "enumerate":
        _, oracle_runtime = _enumerated_oracle(ns.space, ns.backend)
    write_report_files(out, runs, oracle_runtime=oracle_runtime)
    sys.stdout.write(compare_runs(runs, oracle_runtime).to_text())
    return 0


def _cmd_report(ns) -> int:
    runs = [RunData.from_dir(d) for d in ns.runs]
    project_from = None
    if ns.project_from is not None:
        matches = [r for r in runs if r.strategy == ns.project_from]
        if not matches:
            raise ValueError(f"no run with strategy {ns.project_from!r} among --runs")
        project_from = matches[0]
    write_report_files(ns.out, runs, oracle_runtime=ns.oracle_runtime, project_from=project_from)
    sys.stdout.write(compare_runs(runs, ns.oracle_runtime).to_text())
    return 0


def _cmd_enumerate(ns) -> int:
    indices, runtime = _enumerated_oracle(ns.space, ns.backend)
    space = load_space(ns.space)
    from .space import Configuration

    obj = {
        "best_config_indices": indices,
        "best_config_values": list(knob_values(space, Configuration(tuple(indices)))),
        "best_runtime_s": runtime,
        "space_size": space.total_cardinality,
    }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if ns.out:
        Path(ns.out).write_text(text, encoding="utf-8")
        print(f"oracle: {ns.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_gen_landscape(ns) -> int:
    space = load_space(ns.space)
    landscape = gen_landscape(
        space, seed=ns.seed, n_centers=ns.centers, total_depth=ns.total_depth,
        radius_range=(ns.radius_min, ns.radius_max),
        base_runtime=ns.base_runtime, noise_rel=ns.noise_rel,
    )
    save_landscape(landscape, ns.out)
    print(f"landscape: {ns.out}")
    return 0


_COMMANDS = {
    "tune": _cmd_tune,
    "compare": _cmd_compare,
    "report": _cmd_report,
    "enumerate": _cmd_enumerate,
    "gen-landscape": _cmd_gen_landscape,
}


def main(argv=None) -> int:
    level_name = os.environ.get("KNOBTUNER_LOG_LEVEL", "error").lower()
    if level_name not in LOG_LEVELS:
        sys.stderr.write(
            f"knobtuner: error: KNOBTUNER_LOG_LEVEL={level_name!r} "
            f"(expected one of {', '.join(LOG_LEVELS)})\n"
        )
        return 1
    logging.basicConfig(level=LOG_LEVELS[level_name], format="%(levelname)s %(name)s: %(message)s")

    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[ns.command](ns)
    except (KnobTunerError, OSError, ValueError) as exc:
        sys.stderr.write(f"knobtuner: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
