"""PPO search agent walking the configuration lattice.

Each round runs a batch of episodes from given start configurations. The
agent samples one direction per knob each step, the resulting configurations
are scored in a single surrogate query at the end of the round, and one PPO
update is applied. An episode ends when the agent samples the all-stay action
(its own declaration of convergence) or after max_steps_per_episode steps.

Determinism: episode randomness comes from generators derived as
SeedSequence(seed, spawn_key=(round_index, episode_index)), so results do not
depend on scheduling and are reproducible from the checkpoint alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from . import nets
from .cost_model import CostModel, predict
from .errors import DimensionMismatchError
from .space import Action, Configuration, DesignSpace, apply_action, encode_state, validate_config

REWARD_STD_FLOOR = 1e-8
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AgentHyperparams:
    adam_step_size: float = 1e-3
    discount: float = 0.9
    gae_parameter: float = 0.99
    epochs: int = 3
    clip: float = 0.3
    value_coef: float = 1.0
    entropy_coef: float = 0.1
    episodes_per_round: int = 64
    max_steps_per_episode: int = 32
    shared_width: int = 128
    head_width: int = 64

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value}")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if not 0.0 < self.gae_parameter <= 1.0:
            raise ValueError(f"gae_parameter must be in (0, 1], got {self.gae_parameter}")
        if self.clip <= 0.0:
            raise ValueError(f"clip must be > 0, got {self.clip}")
        if self.adam_step_size <= 0.0:
            raise ValueError(f"adam_step_size must be > 0, got {self.adam_step_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.episodes_per_round < 1:
            raise ValueError(f"episodes_per_round must be >= 1, got {self.episodes_per_round}")
        if self.max_steps_per_episode < 0:
            raise ValueError(f"max_steps_per_episode must be >= 0, got {self.max_steps_per_episode}")
        if self.shared_width < 1 or self.head_width < 1:
            raise ValueError("network widths must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, obj: dict) -> "AgentHyperparams":
        return cls(**obj)


@dataclass(frozen=True)
class Rollout:
    """Flattened step data for one round; episodes delimited by end indices."""

    states: np.ndarray  # (T, n) float64
    actions: np.ndarray  # (T, n) int64, values in {0,1,2} (decrement/stay/increment)
    log_probs: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,) normalized within the round
    values: np.ndarray  # (T,)
    episode_boundaries: tuple[int, ...]  # strictly increasing, last == T

    def __post_init__(self) -> None:
        T = self.states.shape[0]
        if T == 0:
            raise ValueError("rollout is empty")
        parallel = (self.actions.shape[0], self.log_probs.shape[0], self.rewards.shape[0], self.values.shape[0])
        if any(length != T for length in parallel):
            raise ValueError(f"rollout lists disagree on length: {T} vs {parallel}")
        b = self.episode_boundaries
        if not b or b[-1] != T or any(y <= x for x, y in zip((0,) + b, b)):
            raise ValueError(f"episode boundaries {b} must be strictly increasing and end at {T}")

    def __len__(self) -> int:
        return int(self.states.shape[0])


@dataclass(frozen=True)
class Trajectory:
    """Configurations visited by a search round, with surrogate scores.

    step_indices, when present, give each entry's position on the round's step
    clock (0 for a start configuration, s for a move made at step s), letting
    per-step statistics be rebuilt from the flat entry list.
    """

    entries: tuple[tuple[Configuration, float], ...]
    step_indices: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("trajectory is empty")
        if self.step_indices is not None and len(self.step_indices) != len(self.entries):
            raise ValueError(
                f"step_indices length {len(self.step_indices)} does not match {len(self.entries)} entries"
            )

    def configs(self) -> list[Configuration]:
        return [c for c, _ in self.entries]

    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Agent:
    space_knobs: int
    hyper: AgentHyperparams
    seed: int
    params: nets.Params
    adam: nets.AdamState
    rounds_completed: int = 0

    def policy_value(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-knob action probabilities (B, n, 3) and state values (B,)."""
        logits, values, _ = nets.forward(self.params, states)
        return nets.softmax(logits), values

    def to_json(self) -> str:
        obj = {
            "version": CHECKPOINT_VERSION,
            "space_knobs": self.space_knobs,
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
            "rounds_completed": self.rounds_completed,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "adam_m": {k: v.tolist() for k, v in self.adam.m.items()},
            "adam_v": {k: v.tolist() for k, v in self.adam.v.items()},
            "adam_t": self.adam.t,
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Agent":
        obj = json.loads(text)
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
        params = {k: np.array(v, dtype=np.float64) for k, v in obj["params"].items()}
        adam = nets.AdamState(
            m={k: np.array(v, dtype=np.float64) for k, v in obj["adam_m"].items()},
            v={k: np.array(v, dtype=np.float64) for k, v in obj["adam_v"].items()},
            t=int(obj["adam_t"]),
        )
        return cls(
            space_knobs=int(obj["space_knobs"]),
            hyper=AgentHyperparams.from_dict(obj["hyper"]),
            seed=int(obj["seed"]),
            params=params,
            adam=adam,
            rounds_completed=int(obj["rounds_completed"]),
        )


def init_agent(space: DesignSpace, hyper: AgentHyperparams = AgentHyperparams(), seed: int = 0) -> Agent:
    rng = np.random.default_rng(np.random.SeedSequence(seed & (2**64 - 1)))
    params = nets.init_params(space.n_knobs, hyper.shared_width, hyper.head_width, rng)
    return Agent(
        space_knobs=space.n_knobs,
        hyper=hyper,
        seed=seed,
        params=params,
        adam=nets.AdamState.for_params(params),
    )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminal_value: float,
    discount: float,
    gae_parameter: float,
) -> np.ndarray:
    """delta_t = r_t + g*V_{t+1} - V_t (V_L = terminal); A_t = delta_t + g*l*A_{t+1}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1 or rewards.shape[0] < 1:
        raise DimensionMismatchError(f"rewards {rewards.shape} and values {values.shape} must be equal-length 1-D")
    next_values = np.append(values[1:], terminal_value)
    deltas = rewards + discount * next_values - values
    advantages = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + discount * gae_parameter * acc
        advantages[t] = acc
    return advantages


def _episode_slices(boundaries: tuple[int, ...]) -> list[slice]:
    starts = (0,) + boundaries[:-1]
    return [slice(a, b) for a, b in zip(starts, boundaries)]


def ppo_update(agent: Agent, rollout: Rollout, hyper: AgentHyperparams) -> nets.LossReport:
    """Runs `epochs` full-batch clipped-surrogate passes; returns final-epoch losses.

    Advantages come from per-episode GAE with terminal value 0 (both for
    self-declared convergence and truncation), then are normalized to zero
    mean and unit std; a sub-1e-8 std zeroes them out instead.
    """
    if rollout.states.shape[1] != agent.space_knobs:
        raise DimensionMismatchError(
            f"rollout states have {rollout.states.shape[1]} knobs, agent expects {agent.space_knobs}"
        )
    advantages = np.empty(len(rollout))
    for sl in _episode_slices(rollout.episode_boundaries):
        advantages[sl] = compute_gae(
            rollout.rewards[sl], rollout.values[sl], 0.0, hyper.discount, hyper.gae_parameter
        )
    std = float(advantages.std())
    if std < REWARD_STD_FLOOR:
        # degenerate round: zero the value targets too, else Adam rescales
        # the float residue into a full-size step
        advantages = np.zeros_like(advantages)
        returns = rollout.values.copy()
    else:
        returns = advantages + rollout.values
        advantages = (advantages - advantages.mean()) / std

    report = nets.LossReport(0.0, 0.0, 0.0, 0.0)
    for _ in range(hyper.epochs):
        report, grads = nets.ppo_loss_and_grads(
            agent.params,
            rollout.states,
            rollout.actions,
            rollout.log_probs,
            advantages,
            returns,
            clip=hyper.clip,
            value_coef=hyper.value_coef,
            entropy_coef=hyper.entropy_coef,
        )
        nets.adam_step(agent.params, grads, agent.adam, hyper.adam_step_size)
    return report


def _sample_actions(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per knob: probs (B, n, 3), u (B, n) uniforms -> indices (B, n)."""
    cdf = np.cumsum(probs, axis=-1)
    return (u[..., None] > cdf[..., :2]).sum(axis=-1)


def run_search_round(
    agent: Agent,
    model: CostModel,
    space: DesignSpace,
    starts: list[Configuration],
) -> Trajectory:
    """One search round: episodes from each start, one PPO update, trajectory out."""
    if not starts:
        raise ValueError("run_search_round needs at least one start configuration")
    if space.n_knobs != agent.space_knobs:
        raise DimensionMismatchError(f"agent built for {agent.space_knobs} knobs, space has {space.n_knobs}")
    for c in starts:
        validate_config(space, c)
    hyper = agent.hyper
    round_index = agent.rounds_completed

    if hyper.max_steps_per_episode == 0:
        scores = predict(model, space, starts)
        agent.rounds_completed += 1
        return Trajectory(
            entries=tuple((c, float(s)) for c, s in zip(starts, scores)),
            step_indices=(0,) * len(starts),
        )

    n_episodes = len(starts)
    seed_u64 = agent.seed & (2**64 - 1)
    rngs = [
        np.random.default_rng(np.random.SeedSequence(seed_u64, spawn_key=(round_index, e)))
        for e in range(n_episodes)
    ]

    # per-episode buffers; episodes run in lockstep so the forward pass batches
    configs = list(starts)
    visited: list[list[Configuration]] = [[c] for c in starts]
    states_buf: list[list[np.ndarray]] = [[] for _ in range(n_episodes)]
    actions_buf: list[list[np.ndarray]] = [[] for _ in range(n_episodes)]
    logp_buf: list[list[float]] = [[] for _ in range(n_episodes)]
    value_buf: list[list[float]] = [[] for _ in range(n_episodes)]
    active = list(range(n_episodes))

    for _ in range(hyper.max_steps_per_episode):
        if not active:
            break
        X = np.stack([encode_state(space, configs[e]) for e in active])
        logits, values, _ = nets.forward(agent.params, X)
        probs = nets.softmax(logits)
        U = np.stack([rngs[e].random(space.n_knobs) for e in active])
        action_idx = _sample_actions(probs, U)
        logps = nets.joint_log_prob(logits, action_idx)
        still_active = []
        for row, e in enumerate(active):
            action = Action(directions=tuple(int(a) - 1 for a in action_idx[row]))
            nxt = apply_action(space, configs[e], action)
            states_buf[e].append(X[row])
            actions_buf[e].append(action_idx[row])
            logp_buf[e].append(float(logps[row]))
            value_buf[e].append(float(values[row]))
            visited[e].append(nxt)
            configs[e] = nxt
            if not action.is_stay:
                still_active.append(e)
        active = still_active

    # one batched surrogate query scores every visited configuration
    flat_configs = [c for ep in visited for c in ep]
    flat_scores = predict(model, space, flat_configs)
    entries = tuple((c, float(s)) for c, s in zip(flat_configs, flat_scores))
    step_indices = tuple(s for ep in visited for s in range(len(ep)))

    # rewards: score of the configuration each step landed on
    rewards_per_ep: list[np.ndarray] = []
    pos = 0
    for ep in visited:
        scores = flat_scores[pos : pos + len(ep)]
        rewards_per_ep.append(np.asarray(scores[1:], dtype=np.float64))
        pos += len(ep)

    all_rewards = np.concatenate(rewards_per_ep)
    mean, std = float(all_rewards.mean()), float(all_rewards.std())
    if std < REWARD_STD_FLOOR:
        normalized = [np.zeros_like(r) for r in rewards_per_ep]
    else:
        normalized = [(r - mean) / std for r in rewards_per_ep]

    boundaries: list[int] = []
    total = 0
    for e in range(n_episodes):
        total += len(states_buf[e])
        boundaries.append(total)
    rollout = Rollout(
        states=np.concatenate([np.stack(s) for s in states_buf]),
        actions=np.concatenate([np.stack(a) for a in actions_buf]),
        log_probs=np.array([x for ep in logp_buf for x in ep], dtype=np.float64),
        rewards=np.concatenate(normalized),
        values=np.array([x for ep in value_buf for x in ep], dtype=np.float64),
        episode_boundaries=tuple(boundaries),
    )
    ppo_update(agent, rollout, hyper)
    agent.rounds_completed += 1
    return Trajectory(entries=entries, step_indices=step_indices)
