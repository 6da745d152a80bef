"""Evaluation metrics over measurement logs, plus plot-ready CSV emitters."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import MeasurementRecord, load_log
from .driver import LOG_FILENAME, SUMMARY_FILENAME, best_so_far_curve
from .errors import DegenerateVarianceError, MismatchedTaskError
from .space import Configuration

CONVERGENCE_WINDOW = 8
POWER_TOL = 1e-9
POWER_MAX_ITERS = 1000

COMPARISON_SCHEMA = "# knobtuner comparison v1"
CURVE_SCHEMA = "# knobtuner curve v1"
PROJECTION_SCHEMA = "# knobtuner projection v1"


def steps_to_convergence(scores: Sequence[float], window: int = CONVERGENCE_WINDOW) -> int:
    """Steps until the running best stops improving for `window` consecutive steps.

    Returns the position of the last improvement once the stall is confirmed,
    or the full length when the sequence ends before a stall that long.
    """
    if len(scores) == 0:
        raise ValueError("steps_to_convergence requires at least one step")
    if window < 1:
        raise ValueError("window must be at least 1")
    best = -np.inf
    last_improvement = 0
    for i, score in enumerate(scores, start=1):
        if score > best:
            best = float(score)
            last_improvement = i
        if i - last_improvement >= window:
            return last_improvement
    return len(scores)


def measurements_to_reach(records: Sequence[MeasurementRecord], runtime_ceiling: float) -> int | None:
    """1-based index of the first measurement at or under the ceiling, if any."""
    for i, record in enumerate(records, start=1):
        if not record.failed and record.runtime_s <= runtime_ceiling:
            return i
    return None


def per_step_best(trajectory) -> list[float]:
    """The round's best surrogate score after each search step.

    Entry e landing at step s makes its score visible from step s onward;
    steps where nothing moved keep the previous best. Index 0 covers the start
    configurations. Requires a trajectory carrying step_indices.
    """
    steps = trajectory.step_indices
    if steps is None:
        raise ValueError("trajectory does not carry step indices")
    horizon = max(steps)
    best = np.full(horizon + 1, -np.inf)
    for (_, score), s in zip(trajectory.entries, steps):
        if score > best[s]:
            best[s] = score
    return np.maximum.accumulate(best).tolist()


def convergence_steps_for_round(trajectory, window: int = CONVERGENCE_WINDOW) -> int:
    """Search steps until the round's best score stalls for `window` steps."""
    return steps_to_convergence(per_step_best(trajectory), window=window)


@dataclass(frozen=True)
class ExperimentMetrics:
    steps_per_round: tuple[int, ...]
    measurements: int
    curve: tuple[tuple[int, float], ...]
    optimality_gap: float | None


def experiment_metrics(
    records: Sequence[MeasurementRecord],
    step_sequences: Sequence[Sequence[float]] = (),
    oracle_runtime: float | None = None,
) -> ExperimentMetrics:
    curve = best_so_far_curve(records)
    gap = None
    if oracle_runtime is not None:
        ok = [r.runtime_s for r in records if not r.failed]
        if ok:
            gap = (min(ok) - oracle_runtime) / oracle_runtime
    return ExperimentMetrics(
        steps_per_round=tuple(steps_to_convergence(s) for s in step_sequences),
        measurements=len(records),
        curve=tuple(curve),
        optimality_gap=gap,
    )


@dataclass(frozen=True)
class RunData:
    """One finished tuning run: its summary fields plus the loaded log."""

    strategy: str
    seed: int
    budget: int
    space_name: str
    best_runtime_s: float
    best_fitness: float
    measurements_used: int
    records: tuple[MeasurementRecord, ...]

    @classmethod
    def from_dir(cls, run_dir: str | Path) -> "RunData":
        run_dir = Path(run_dir)
        summary = json.loads((run_dir / SUMMARY_FILENAME).read_text(encoding="utf-8"))
        records = tuple(load_log(run_dir / LOG_FILENAME))
        return cls(
            strategy=summary["strategy"],
            seed=summary["seed"],
            budget=summary["budget"],
            space_name=summary["space"],
            best_runtime_s=summary["best_runtime_s"],
            best_fitness=summary["best_fitness"],
            measurements_used=summary["measurements_used"],
            records=records,
        )

    def wall_time_s(self) -> float:
        stamps = [r.timestamp for r in self.records]
        return max(stamps) - min(stamps) if stamps else 0.0


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    measurements_used: int
    wall_time_s: float
    best_runtime_s: float
    best_fitness: float
    optimality_gap: float | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]

    _COLUMNS = (
        "strategy", "measurements_used", "wall_time_s",
        "best_runtime_s", "best_fitness", "optimality_gap",
    )

    def to_csv(self) -> str:
        lines = [COMPARISON_SCHEMA, ",".join(self._COLUMNS)]
        for row in self.rows:
            gap = "" if row.optimality_gap is None else repr(row.optimality_gap)
            lines.append(
                f"{row.strategy},{row.measurements_used},{repr(row.wall_time_s)},"
                f"{repr(row.best_runtime_s)},{repr(row.best_fitness)},{gap}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        cells = [list(self._COLUMNS)]
        for row in self.rows:
            gap = "-" if row.optimality_gap is None else f"{row.optimality_gap:.4f}"
            cells.append([
                row.strategy, str(row.measurements_used), f"{row.wall_time_s:.3f}",
                f"{row.best_runtime_s:.6f}", f"{row.best_fitness:.6f}", gap,
            ])
        widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
        return "\n".join(lines) + "\n"


def compare_runs(runs: Sequence[RunData], oracle_runtime: float | None = None) -> ComparisonTable:
    """Side-by-side table of strategy arms that ran the same task."""
    if len(runs) < 2:
        raise MismatchedTaskError(f"comparison needs at least 2 runs, got {len(runs)}")
    first = runs[0]
    for run in runs[1:]:
        for attr in ("space_name", "budget", "seed"):
            if getattr(run, attr) != getattr(first, attr):
                raise MismatchedTaskError(
                    f"runs disagree on {attr}: {getattr(first, attr)!r} vs {getattr(run, attr)!r}"
                )
    rows = []
    for run in runs:
        gap = None
        if oracle_runtime is not None:
            gap = (run.best_runtime_s - oracle_runtime) / oracle_runtime
        rows.append(ComparisonRow(
            strategy=run.strategy,
            measurements_used=run.measurements_used,
            wall_time_s=run.wall_time_s(),
            best_runtime_s=run.best_runtime_s,
            best_fitness=run.best_fitness,
            optimality_gap=gap,
        ))
    return ComparisonTable(rows=tuple(rows))


def _power_iterate(matrix: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Dominant unit eigenvector and eigenvalue of a PSD matrix."""
    d = matrix.shape[0]
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(POWER_MAX_ITERS):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm < POWER_TOL:
            break
        w /= norm
        if np.linalg.norm(w - v) < POWER_TOL or np.linalg.norm(w + v) < POWER_TOL:
            v = w
            break
        v = w
    nonzero = np.nonzero(np.abs(v) > POWER_TOL)[0]
    if nonzero.size and v[nonzero[0]] < 0:
        v = -v
    return v, float(v @ matrix @ v)


def pca_project(configs: Sequence[Configuration]) -> list[tuple[float, float]]:
    """Center index vectors and project onto the top two principal axes."""
    if len(configs) < 2:
        raise ValueError("pca_project requires at least 2 configurations")
    X = np.array([c.indices for c in configs], dtype=np.float64)
    if X.shape[1] < 2:
        raise ValueError("pca_project requires at least 2 knobs")
    Xc = X - X.mean(axis=0)
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    if not np.any(np.abs(cov) > 0.0):
        raise DegenerateVarianceError("all configurations identical: covariance is zero")
    rng = np.random.default_rng(0)
    v1, lam1 = _power_iterate(cov, rng)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, _ = _power_iterate(deflated, rng)
    # rank-1 data leaves no second direction; any unit vector orthogonal to v1 works
    if abs(np.linalg.norm(v2) - 1.0) > 0.5 or abs(v2 @ v1) > 1e-6:
        basis = np.eye(X.shape[1])
        residuals = basis - np.outer(basis @ v1, v1)
        pick = int(np.argmax(np.linalg.norm(residuals, axis=1)))
        v2 = residuals[pick] / np.linalg.norm(residuals[pick])
        nonzero = np.nonzero(np.abs(v2) > POWER_TOL)[0]
        if nonzero.size and v2[nonzero[0]] < 0:
            v2 = -v2
    xs = Xc @ v1
    ys = Xc @ v2
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def curve_csv(curve: Sequence[tuple[int, float]]) -> str:
    lines = [CURVE_SCHEMA, "measurement_index,best_fitness"]
    lines.extend(f"{i},{repr(f)}" for i, f in curve)
    return "\n".join(lines) + "\n"


def projection_csv(configs: Sequence[Configuration], points: Sequence[tuple[float, float]]) -> str:
    lines = [PROJECTION_SCHEMA, "config,x,y"]
    for config, (x, y) in zip(configs, points):
        lines.append(f"{' '.join(str(i) for i in config.indices)},{repr(x)},{repr(y)}")
    return "\n".join(lines) + "\n"


def write_report_files(
    out_dir: str | Path,
    runs: Sequence[RunData],
    oracle_runtime: float | None = None,
    project_from: RunData | None = None,
) -> list[Path]:
    """Emit comparison.csv, one curve per strategy, and an optional projection."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    table = compare_runs(runs, oracle_runtime)
    path = out / "comparison.csv"
    path.write_text(table.to_csv(), encoding="utf-8")
    written.append(path)

    for run in runs:
        curve = best_so_far_curve(run.records)
        path = out / f"curve_{run.strategy.replace('+', '_')}.csv"
        path.write_text(curve_csv(curve), encoding="utf-8")
        written.append(path)

    if project_from is not None and len(project_from.records) >= 2:
        configs = [r.config for r in project_from.records]
        points = pca_project(configs)
        path = out / "projection.csv"
        path.write_text(projection_csv(configs, points), encoding="utf-8")
        written.append(path)
    return written
