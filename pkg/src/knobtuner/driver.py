"""Tuning loop: search round, sample, measure, refit, repeat under a budget."""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agent import AgentHyperparams, Trajectory, init_agent, run_search_round
from .backends import (
    Backend,
    MeasurementRecord,
    make_backend,
    measure_batch,
)
from .cost_model import BoostParams, CostModel, TrainingSet, featurize_batch, fit, predict
from .errors import EnumerationCapError, NoValidResultError
from .sa import SAParams, run_sa_round
from .sampler import VisitedSet, adaptive_sample
from .space import Configuration, DesignSpace, enumerate_space, knob_values, random_config

logger = logging.getLogger(__name__)

STRATEGIES = ("rl+as", "rl", "sa+as", "sa", "random")
GREEDY_BATCH = 64
LOG_FILENAME = "measurements.jsonl"
SUMMARY_FILENAME = "summary.json"


def zero_clock() -> float:
    """Timestamp stub used by default so repeated runs produce identical logs."""
    return 0.0


@dataclass(frozen=True)
class TuningTask:
    space: DesignSpace
    backend_spec: str
    strategy: str
    budget: int
    seed: int = 0
    agent_params: AgentHyperparams = field(default_factory=AgentHyperparams)
    sa_params: SAParams = field(default_factory=SAParams)
    boost_params: BoostParams = field(default_factory=BoostParams)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        self.boost_params.validate()


@dataclass(frozen=True)
class TuningResult:
    best_config: Configuration
    best_runtime_s: float
    best_fitness: float
    measurements_used: int
    rounds: int
    log_path: str


def _round_seed(seed: int, round_index: int) -> int:
    ss = np.random.SeedSequence(seed & (2**64 - 1), spawn_key=(round_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _random_unvisited(
    space: DesignSpace, visited: VisitedSet, count: int, rng: np.random.Generator
) -> list[Configuration]:
    """Distinct unvisited configurations; falls back to an exact sweep when draws stall."""
    if count <= 0:
        return []
    batch: list[Configuration] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    limit = max(200, 20 * count)
    while len(batch) < count and attempts < limit:
        attempts += 1
        cand = random_config(space, rng)
        if cand.indices in seen or cand in visited:
            continue
        seen.add(cand.indices)
        batch.append(cand)
    if len(batch) < count:
        try:
            pool = [c for c in enumerate_space(space) if c not in visited and c.indices not in seen]
        except EnumerationCapError:
            return batch
        take = min(count - len(batch), len(pool))
        if take > 0:
            picks = rng.choice(len(pool), size=take, replace=False)
            batch.extend(pool[int(i)] for i in picks)
    return batch


def _top_unvisited(trajectory: Trajectory, visited: VisitedSet, cap: int) -> list[Configuration]:
    """Best `cap` distinct unvisited trajectory configs by their surrogate scores."""
    configs: list[Configuration] = []
    scores: list[float] = []
    seen: set[tuple[int, ...]] = set()
    for config, score in trajectory.entries:
        if config.indices in seen or config in visited:
            continue
        seen.add(config.indices)
        configs.append(config)
        scores.append(score)
    if not configs:
        return []
    order = np.argsort(-np.asarray(scores), kind="stable")
    return [configs[int(i)] for i in order[:cap]]


def _restart_configs(
    space: DesignSpace,
    records: Sequence[MeasurementRecord],
    model: CostModel,
    count: int,
    rng: np.random.Generator,
) -> list[Configuration]:
    """The best `count` previously measured configs, as next-round episode starts.

    Ranking uses measured fitness; failed measurements fall back to the
    surrogate's prediction. Short histories are padded with random configs.
    """
    configs = [r.config for r in records]
    fitness = np.array([r.fitness for r in records], dtype=np.float64)
    failed = [i for i, r in enumerate(records) if r.failed]
    if failed:
        fitness[failed] = predict(model, space, [records[i].config for i in failed])
    order = np.argsort(-fitness, kind="stable")
    starts = [configs[int(i)] for i in order[:count]]
    while len(starts) < count:
        starts.append(random_config(space, rng))
    return starts


def _fit_model(space: DesignSpace, records: Sequence[MeasurementRecord], params: BoostParams) -> CostModel:
    ok = [r for r in records if not r.failed]
    if not ok:
        return CostModel.sentinel(space.n_knobs)
    features = featurize_batch(space, [r.config for r in ok])
    targets = np.array([r.fitness for r in ok], dtype=np.float64)
    return fit(TrainingSet(features=features, targets=targets), params)


def _best_record(records: Sequence[MeasurementRecord]) -> MeasurementRecord | None:
    best = None
    for r in records:
        if r.failed:
            continue
        if best is None or r.runtime_s < best.runtime_s:
            best = r
    return best


def tune(
    task: TuningTask,
    out_dir: str | Path,
    backend: Backend | None = None,
    clock: Callable[[], float] = zero_clock,
) -> TuningResult:
    """Run one tuning task to budget exhaustion; writes the log and a summary file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / LOG_FILENAME
    if log_path.exists():
        raise ValueError(f"measurement log already exists: {log_path}")
    if backend is None:
        backend = make_backend(task.backend_spec, task.space)

    rng = np.random.default_rng(np.random.SeedSequence(task.seed & (2**64 - 1), spawn_key=(0xD21,)))
    visited = VisitedSet()
    records: list[MeasurementRecord] = []
    agent = None
    if task.strategy in ("rl", "rl+as"):
        agent = init_agent(task.space, task.agent_params, task.seed)

    bootstrap = _random_unvisited(
        task.space, visited, min(task.agent_params.episodes_per_round, task.budget), rng
    )
    rounds = 0
    if bootstrap:
        new = measure_batch(backend, bootstrap, iteration=0, log_path=log_path, clock=clock)
        visited.add_all(bootstrap)
        records.extend(new)
        rounds = 1

    while len(records) < task.budget:
        round_index = rounds
        remaining = task.budget - len(records)
        model = None
        trajectory = None

        if task.strategy in ("rl", "rl+as"):
            model = _fit_model(task.space, records, task.boost_params)
            starts = _restart_configs(
                task.space, records, model, task.agent_params.episodes_per_round, rng
            )
            trajectory = run_search_round(agent, model, task.space, starts)
        elif task.strategy in ("sa", "sa+as"):
            model = _fit_model(task.space, records, task.boost_params)
            starts = [random_config(task.space, rng) for _ in range(task.sa_params.chains)]
            trajectory = run_sa_round(task.sa_params, model, task.space, starts, _round_seed(task.seed, round_index))

        if task.strategy.endswith("+as"):
            batch = adaptive_sample(trajectory, visited, task.space, _round_seed(task.seed, round_index))
        elif trajectory is not None:
            batch = _top_unvisited(trajectory, visited, GREEDY_BATCH)
        else:
            batch = []

        if not batch:
            batch = _random_unvisited(task.space, visited, min(GREEDY_BATCH, remaining), rng)
        if not batch:
            logger.info("design space exhausted after %d measurements", len(records))
            break

        batch = batch[:remaining]
        new = measure_batch(backend, batch, iteration=round_index, log_path=log_path, clock=clock)
        visited.add_all(batch)
        records.extend(new)
        rounds += 1

    best = _best_record(records)
    if best is None:
        raise NoValidResultError(
            f"no successful measurement in {len(records)} attempts; cannot report a best configuration"
        )
    result = TuningResult(
        best_config=best.config,
        best_runtime_s=best.runtime_s,
        best_fitness=best.fitness,
        measurements_used=len(records),
        rounds=rounds,
        log_path=str(log_path),
    )
    _write_summary(out / SUMMARY_FILENAME, task, result)
    return result


def _write_summary(path: Path, task: TuningTask, result: TuningResult) -> None:
    obj = {
        "strategy": task.strategy,
        "seed": task.seed,
        "budget": task.budget,
        "space": task.space.name,
        "backend": task.backend_spec,
        "best_config_indices": list(result.best_config.indices),
        "best_config_values": list(knob_values(task.space, result.best_config)),
        "best_runtime_s": result.best_runtime_s,
        "best_fitness": result.best_fitness,
        "measurements_used": result.measurements_used,
        "rounds": result.rounds,
        "log_path": result.log_path,
        "agent_params": task.agent_params.to_dict(),
        "sa_params": dataclasses.asdict(task.sa_params),
        "boost_params": dataclasses.asdict(task.boost_params),
    }
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def best_so_far_curve(records: Sequence[MeasurementRecord]) -> list[tuple[int, float]]:
    """Prefix-best fitness per measurement index; starts at the first success."""
    if not records:
        raise ValueError("best_so_far_curve requires a non-empty log")
    curve: list[tuple[int, float]] = []
    best = float("inf")
    for i, record in enumerate(records, start=1):
        if not record.failed and record.runtime_s < best:
            best = record.runtime_s
        if best < float("inf"):
            curve.append((i, 1.0 / best))
    if not curve:
        logger.warning("all %d measurements failed; best-so-far curve is empty", len(records))
    return curve
