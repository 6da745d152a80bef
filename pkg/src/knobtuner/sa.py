"""Simulated-annealing baseline over the surrogate cost model.

Chains are independent Metropolis walkers maximizing the surrogate score with
single-knob +/-1 proposals and a geometric cooling schedule. Each chain owns a
generator spawned from the round seed, so running chains in lockstep (one
batched surrogate query per step, which is what this implementation does) is
bit-identical to running them one after another.

Per-chain draw order each step: knob index, proposal sign, then an acceptance
uniform only when the proposal degrades the score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import Trajectory
from .cost_model import CostModel, feature_table, predict
from .space import Configuration, DesignSpace, random_config, validate_config

TEMPERATURE_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class SAParams:
    chains: int = 64
    steps_per_round: int = 128
    initial_temperature: float | None = None  # None: std of the start scores (fallback 1.0)
    cooling: float = 0.99

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")
        if self.steps_per_round < 1:
            raise ValueError(f"steps_per_round must be >= 1, got {self.steps_per_round}")
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ValueError(f"initial_temperature must be > 0, got {self.initial_temperature}")
        if not 0.0 < self.cooling <= 1.0:
            raise ValueError(f"cooling must be in (0, 1], got {self.cooling}")


def _propose_into(
    idx: np.ndarray, out: np.ndarray, cards: np.ndarray, rngs: list[np.random.Generator]
) -> None:
    """Random single-knob +/-1 move per chain row, clamped to the lattice.

    Per-chain draw order is knob index then proposal sign, so trajectories are
    bit-identical to proposing one configuration at a time.
    """
    np.copyto(out, idx)
    n_knobs = idx.shape[1]
    for c, rng in enumerate(rngs):
        knob = int(rng.integers(0, n_knobs))
        sign = int(rng.integers(0, 2)) * 2 - 1
        moved = out[c, knob] + sign
        out[c, knob] = min(max(moved, 0), cards[knob] - 1)


def run_sa_round(
    params: SAParams,
    model: CostModel,
    space: DesignSpace,
    starts: list[Configuration],
    seed: int,
) -> Trajectory:
    """Metropolis chains on the surrogate; returns starts plus accepted moves.

    starts shorter than `chains` are padded with seeded uniform-random
    configurations; extras beyond `chains` are ignored.
    """
    if not starts:
        raise ValueError("run_sa_round needs at least one start configuration")
    for c in starts:
        validate_config(space, c)

    seed_seq = np.random.SeedSequence(seed & (2**64 - 1))
    pad_rng = np.random.default_rng(seed_seq)
    chain_rngs = [np.random.default_rng(s) for s in seed_seq.spawn(params.chains)]

    configs = list(starts[: params.chains])
    while len(configs) < params.chains:
        configs.append(random_config(space, pad_rng))

    scores = predict(model, space, configs).tolist()
    accepted: list[list[tuple[Configuration, float]]] = [
        [(c, s)] for c, s in zip(configs, scores)
    ]
    accepted_steps: list[list[int]] = [[0] for _ in range(params.chains)]

    if params.initial_temperature is not None:
        temperature = params.initial_temperature
    else:
        std = float(np.std(scores))
        temperature = std if std > TEMPERATURE_STD_FLOOR else 1.0

    table, neg_prefix = feature_table(space)
    if neg_prefix.any():
        raise ValueError("featurize requires non-negative knob values")
    cards = np.array(space.cardinalities, dtype=np.int64)
    knob_axis = np.arange(space.n_knobs)
    idx = np.array([c.indices for c in configs], dtype=np.int64)
    prop_idx = np.empty_like(idx)

    for step in range(1, params.steps_per_round + 1):
        _propose_into(idx, prop_idx, cards, chain_rngs)
        prop_scores = model.predict_features(table[knob_axis, prop_idx])
        for c in range(params.chains):
            delta = float(prop_scores[c]) - scores[c]
            if delta >= 0.0 or chain_rngs[c].random() < math.exp(delta / temperature):
                idx[c] = prop_idx[c]
                moved = Configuration(indices=tuple(int(i) for i in prop_idx[c]))
                scores[c] = float(prop_scores[c])
                accepted[c].append((moved, scores[c]))
                accepted_steps[c].append(step)
        temperature *= params.cooling

    entries = tuple(entry for chain in accepted for entry in chain)
    steps = tuple(s for chain in accepted_steps for s in chain)
    return Trajectory(entries=entries, step_indices=steps)
