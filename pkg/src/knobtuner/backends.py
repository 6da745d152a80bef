"""Fitness measurement: synthetic, external-command, and replay backends.

Every measurement is appended to a JSON Lines log before the batch returns,
making the log the ground truth for replay, analysis, and resume. Failed
measurements carry runtime infinity and fitness 0; in the log the infinite
runtime is encoded as null because JSON has no Infinity literal.
"""

from __future__ import annotations

import hashlib
import json
import math
import shlex
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BackendUnavailableError, LogParseError, SpaceParseError
from .space import Configuration, DesignSpace, knob_values, validate_config

DEFAULT_EXTERNAL_TIMEOUT_S = 600.0

_LOG_KEYS = ("indices", "runtime_s", "fitness", "failed", "iteration", "backend", "timestamp")


@dataclass(frozen=True)
class MeasurementRecord:
    """One ground-truth fitness observation; the unit persisted to the log."""

    config: Configuration
    runtime_s: float  # seconds; math.inf when the measurement failed
    fitness: float  # 1/runtime_s, or 0.0 when failed
    failed: bool
    iteration: int
    backend: str
    timestamp: float  # UTC seconds

    def __post_init__(self) -> None:
        if self.failed:
            if not math.isinf(self.runtime_s) or self.fitness != 0.0:
                raise ValueError("failed record must have runtime_s=inf and fitness=0")
        else:
            if not (math.isfinite(self.runtime_s) and self.runtime_s > 0):
                raise ValueError(f"runtime_s must be positive and finite, got {self.runtime_s}")
            if self.fitness != 1.0 / self.runtime_s:
                raise ValueError("fitness must equal 1/runtime_s exactly")


def make_record(
    config: Configuration,
    runtime_s: float,
    iteration: int,
    backend: str,
    timestamp: float,
) -> MeasurementRecord:
    """Build a record from a raw runtime; non-finite or non-positive means failed."""
    failed = not (math.isfinite(runtime_s) and runtime_s > 0)
    return MeasurementRecord(
        config=config,
        runtime_s=math.inf if failed else float(runtime_s),
        fitness=0.0 if failed else 1.0 / float(runtime_s),
        failed=failed,
        iteration=iteration,
        backend=backend,
        timestamp=float(timestamp),
    )


def record_to_line(record: MeasurementRecord) -> str:
    obj = {
        "indices": list(record.config.indices),
        "runtime_s": None if record.failed else record.runtime_s,
        "fitness": record.fitness,
        "failed": record.failed,
        "iteration": record.iteration,
        "backend": record.backend,
        "timestamp": record.timestamp,
    }
    return json.dumps(obj)


def _record_from_obj(obj: dict) -> MeasurementRecord:
    if sorted(obj) != sorted(_LOG_KEYS):
        raise ValueError(f"expected keys {list(_LOG_KEYS)}, got {sorted(obj)}")
    runtime = obj["runtime_s"]
    return MeasurementRecord(
        config=Configuration(indices=tuple(obj["indices"])),
        runtime_s=math.inf if runtime is None else float(runtime),
        fitness=float(obj["fitness"]),
        failed=bool(obj["failed"]),
        iteration=int(obj["iteration"]),
        backend=str(obj["backend"]),
        timestamp=float(obj["timestamp"]),
    )


def append_records(path: str | Path, records: Sequence[MeasurementRecord]) -> None:
    """Append-only log write; never touches earlier lines."""
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_line(record) + "\n")


def load_log(path: str | Path) -> list[MeasurementRecord]:
    """Read a measurement log; raises with the 1-based line number on bad lines."""
    records: list[MeasurementRecord] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(_record_from_obj(json.loads(line)))
        except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
            raise LogParseError(f"line {lineno}: {exc}") from exc
    return records


@dataclass(frozen=True)
class SyntheticLandscape:
    """Deterministic stand-in for hardware: a few basins plus hash noise.

    Runtime at x is base*(1 - sum_j depth_j*exp(-|x-c_j|^2/r_j^2)) scaled by
    (1 + noise_rel*u) with u in [-1,1] a pure hash of (seed, indices), then
    clamped below at 1% of base. Depths must sum below 1 so runtime stays
    positive before the clamp.
    """

    seed: int
    space: DesignSpace
    centers: tuple[tuple[int, ...], ...]  # index vectors
    depths: tuple[float, ...]
    radii: tuple[float, ...]
    base_runtime: float = 1.0
    noise_rel: float = 0.0

    def __post_init__(self) -> None:
        if not (len(self.centers) == len(self.depths) == len(self.radii)):
            raise ValueError("centers, depths, and radii must have equal lengths")
        for c in self.centers:
            if len(c) != self.space.n_knobs:
                raise ValueError(f"center {c} does not match the {self.space.n_knobs}-knob space")
        if any(d <= 0 for d in self.depths) or sum(self.depths) >= 1.0:
            raise ValueError("depths must be positive and sum below 1")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.base_runtime <= 0:
            raise ValueError("base_runtime must be positive")
        if not 0.0 <= self.noise_rel < 1.0:
            raise ValueError(f"noise_rel must be in [0, 1), got {self.noise_rel}")


def _hash_unit(seed: int, indices: tuple[int, ...]) -> float:
    """Pure hash of (seed, indices) mapped into [-1, 1]."""
    payload = (str(seed) + ":" + ",".join(str(i) for i in indices)).encode("ascii")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return 2.0 * (int.from_bytes(digest, "big") / 2.0**64) - 1.0


def synthetic_runtime(landscape: SyntheticLandscape, config: Configuration) -> float:
    validate_config(landscape.space, config)
    x = np.array(config.indices, dtype=np.float64)
    depth_term = 0.0
    for center, depth, radius in zip(landscape.centers, landscape.depths, landscape.radii):
        d2 = float(np.sum((x - np.array(center, dtype=np.float64)) ** 2))
        depth_term += depth * math.exp(-d2 / (radius * radius))
    runtime = landscape.base_runtime * (1.0 - depth_term)
    if landscape.noise_rel > 0.0:
        runtime *= 1.0 + landscape.noise_rel * _hash_unit(landscape.seed, config.indices)
    return max(runtime, 0.01 * landscape.base_runtime)


def true_fitness(landscape: SyntheticLandscape, config: Configuration) -> float:
    return 1.0 / synthetic_runtime(landscape, config)


def landscape_to_dict(landscape: SyntheticLandscape) -> dict:
    return {
        "seed": landscape.seed,
        "centers": [list(c) for c in landscape.centers],
        "depths": list(landscape.depths),
        "radii": list(landscape.radii),
        "base_runtime": landscape.base_runtime,
        "noise_rel": landscape.noise_rel,
    }


def landscape_from_dict(obj: dict, space: DesignSpace) -> SyntheticLandscape:
    try:
        return SyntheticLandscape(
            seed=int(obj["seed"]),
            space=space,
            centers=tuple(tuple(int(v) for v in c) for c in obj["centers"]),
            depths=tuple(float(d) for d in obj["depths"]),
            radii=tuple(float(r) for r in obj["radii"]),
            base_runtime=float(obj["base_runtime"]),
            noise_rel=float(obj["noise_rel"]),
        )
    except (KeyError, TypeError) as exc:
        raise SpaceParseError(f"malformed landscape document: {exc}") from exc


def load_landscape(path: str | Path, space: DesignSpace) -> SyntheticLandscape:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceParseError(f"malformed landscape document: {exc}") from exc
    return landscape_from_dict(obj, space)


def save_landscape(landscape: SyntheticLandscape, path: str | Path) -> None:
    Path(path).write_text(json.dumps(landscape_to_dict(landscape), indent=2) + "\n", encoding="utf-8")


def gen_landscape(
    space: DesignSpace,
    seed: int,
    n_centers: int = 4,
    total_depth: float = 0.9,
    radius_range: tuple[float, float] = (0.1, 0.3),
    base_runtime: float = 1.0,
    noise_rel: float = 0.02,
) -> SyntheticLandscape:
    """Seeded landscape factory: random basin centers on the index lattice.

    Radii are drawn as fractions of the lattice diagonal so basin width scales
    with the space; depths split total_depth with the first basin dominant.
    """
    if n_centers < 1:
        raise ValueError("n_centers must be >= 1")
    if not 0.0 < total_depth < 1.0:
        raise ValueError("total_depth must be in (0, 1)")
    rng = np.random.default_rng(seed)
    cards = space.cardinalities
    centers: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    while len(centers) < n_centers:
        c = tuple(int(rng.integers(0, card)) for card in cards)
        if c not in seen:
            seen.add(c)
            centers.append(c)
    # geometric weights: the first basin is the global optimum by a clear margin
    weights = np.array([0.5**i for i in range(n_centers)], dtype=np.float64)
    weights[0] *= 2.0
    depths = total_depth * weights / weights.sum()
    diag = math.sqrt(sum((card - 1) ** 2 for card in cards))
    radii = rng.uniform(radius_range[0], radius_range[1], size=n_centers) * max(diag, 1.0)
    return SyntheticLandscape(
        seed=seed,
        space=space,
        centers=tuple(centers),
        depths=tuple(float(d) for d in depths),
        radii=tuple(float(r) for r in radii),
        base_runtime=base_runtime,
        noise_rel=noise_rel,
    )


class SyntheticBackend:
    """Pure-function backend over a SyntheticLandscape."""

    tag = "synthetic"

    def __init__(self, landscape: SyntheticLandscape):
        self.landscape = landscape
        self.space = landscape.space

    def batch_runtimes(self, configs: Sequence[Configuration]) -> list[float]:
        return [synthetic_runtime(self.landscape, c) for c in configs]


class ExternalBackend:
    """Spawns a command per batch and speaks the knob-values JSON protocol.

    stdin:  {"knobs": [[v1, v2, ...], ...]}  (actual knob values, not indices)
    stdout: {"runtimes_s": [floats...]}      (-1 marks a failed entry)
    Nonzero exit, timeout, or malformed output is a batch-level failure.
    """

    tag = "external"

    def __init__(self, command: str, space: DesignSpace, timeout_s: float = DEFAULT_EXTERNAL_TIMEOUT_S):
        if not command.strip():
            raise ValueError("external backend command is empty")
        self.command = command
        self.space = space
        self.timeout_s = timeout_s

    def batch_runtimes(self, configs: Sequence[Configuration]) -> list[float]:
        payload = json.dumps({"knobs": [list(knob_values(self.space, c)) for c in configs]})
        try:
            proc = subprocess.run(
                shlex.split(self.command),
                input=payload.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout_s,
            )
        except FileNotFoundError as exc:
            raise BackendUnavailableError(f"external command not found: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise BackendUnavailableError(f"external command timed out after {self.timeout_s}s") from exc
        if proc.returncode != 0:
            raise BackendUnavailableError(
                f"external command exited with status {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        try:
            out = json.loads(proc.stdout.decode("utf-8"))
            runtimes = [float(r) for r in out["runtimes_s"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailableError(f"external command produced malformed output: {exc}") from exc
        if len(runtimes) != len(configs):
            raise BackendUnavailableError(f"external command returned {len(runtimes)} runtimes for {len(configs)} configs")
        # -1 (or any non-positive entry) marks a failed configuration
        return [r if r > 0 else math.inf for r in runtimes]


class ReplayBackend:
    """Replays runtimes from a prior log; the first record per config wins."""

    tag = "replay"

    def __init__(self, records: Sequence[MeasurementRecord], space: DesignSpace):
        self.space = space
        self._runtimes: dict[tuple[int, ...], float] = {}
        for record in records:
            self._runtimes.setdefault(record.config.indices, record.runtime_s)

    @classmethod
    def from_log(cls, path: str | Path, space: DesignSpace) -> "ReplayBackend":
        return cls(load_log(path), space)

    def batch_runtimes(self, configs: Sequence[Configuration]) -> list[float]:
        out = []
        for c in configs:
            if c.indices not in self._runtimes:
                raise BackendUnavailableError(f"replay log has no measurement for configuration {list(c.indices)}")
            out.append(self._runtimes[c.indices])
        return out


Backend = SyntheticBackend | ExternalBackend | ReplayBackend


def make_backend(spec: str, space: DesignSpace) -> Backend:
    """Parse a backend spec: synthetic:LANDSCAPE.json | external:CMD | replay:LOG."""
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise ValueError(f"backend spec {spec!r} must look like kind:argument")
    if kind == "synthetic":
        return SyntheticBackend(load_landscape(arg, space))
    if kind == "external":
        return ExternalBackend(arg, space)
    if kind == "replay":
        return ReplayBackend.from_log(arg, space)
    raise ValueError(f"unknown backend kind {kind!r} (expected synthetic, external, or replay)")


def measure_batch(
    backend: Backend,
    configs: Sequence[Configuration],
    iteration: int,
    log_path: str | Path | None = None,
    clock: Callable[[], float] = time.time,
) -> list[MeasurementRecord]:
    """Measure a batch in input order; records hit the log before returning."""
    if not configs:
        raise ValueError("measure_batch requires a non-empty batch")
    for c in configs:
        validate_config(backend.space, c)
    runtimes = backend.batch_runtimes(configs)
    now = clock()
    records = [
        make_record(config, runtime, iteration=iteration, backend=backend.tag, timestamp=now)
        for config, runtime in zip(configs, runtimes)
    ]
    if log_path is not None:
        append_records(log_path, records)
    return records
