"""Actor-critic network with hand-written forward/backward passes.

One shared tanh layer feeds a policy head (per-knob 3-way categorical logits
over decrement/stay/increment) and a scalar value head. Everything is plain
float64 numpy; gradients are computed analytically and checked against finite
differences in the test suite.

Parameter layout (dict key -> shape, n knobs, shared width h, head width g):
    w1 (h, n), b1 (h,), w2p (g, h), b2p (g,), w3p (3n, g), b3p (3n,),
    w2v (g, h), b2v (g,), w3v (1, g), b3v (1,)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# weight matrices are drawn in this order; biases start at zero
PARAM_KEYS = ("w1", "b1", "w2p", "b2p", "w3p", "b3p", "w2v", "b2v", "w3v", "b3v")

Params = dict[str, np.ndarray]


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def init_params(n_knobs: int, shared_width: int, head_width: int, rng: np.random.Generator) -> Params:
    if n_knobs < 1 or shared_width < 1 or head_width < 1:
        raise ValueError("network sizes must be positive")
    return {
        "w1": _xavier(rng, shared_width, n_knobs),
        "b1": np.zeros(shared_width),
        "w2p": _xavier(rng, head_width, shared_width),
        "b2p": np.zeros(head_width),
        "w3p": _xavier(rng, 3 * n_knobs, head_width),
        "b3p": np.zeros(3 * n_knobs),
        "w2v": _xavier(rng, head_width, shared_width),
        "b2v": np.zeros(head_width),
        "w3v": _xavier(rng, 1, head_width),
        "b3v": np.zeros(1),
    }


def forward(params: Params, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """Returns (logits (B, n, 3), values (B,), cache for backward)."""
    B = X.shape[0]
    h1 = np.tanh(X @ params["w1"].T + params["b1"])
    hp = np.tanh(h1 @ params["w2p"].T + params["b2p"])
    logits = (hp @ params["w3p"].T + params["b3p"]).reshape(B, -1, 3)
    hv = np.tanh(h1 @ params["w2v"].T + params["b2v"])
    values = (hv @ params["w3v"].T + params["b3v"])[:, 0]
    cache = {"X": X, "h1": h1, "hp": hp, "hv": hv}
    return logits, values, cache


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def joint_log_prob(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Sum of per-knob categorical log-probs; actions hold indices in {0,1,2}."""
    logp = log_softmax(logits)
    B, n, _ = logits.shape
    picked = logp[np.arange(B)[:, None], np.arange(n)[None, :], actions]
    return picked.sum(axis=1)


def joint_entropy(logits: np.ndarray) -> np.ndarray:
    """Entropy of the factored action distribution, per sample."""
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1).sum(axis=-1)


@dataclass(frozen=True)
class LossReport:
    policy_loss: float
    value_loss: float
    entropy: float
    total: float


def ppo_loss_and_grads(
    params: Params,
    X: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    clip: float,
    value_coef: float,
    entropy_coef: float,
) -> tuple[LossReport, Params]:
    """Clipped-surrogate PPO loss and its analytic gradient.

    total = -mean(min(ratio*A, clip(ratio)*A)) + value_coef*MSE(v, returns)
            - entropy_coef*mean(joint entropy)
    """
    B = X.shape[0]
    logits, values, cache = forward(params, X)
    logp = log_softmax(logits)
    probs = np.exp(logp)

    new_log_probs = joint_log_prob(logits, actions)
    ratio = np.exp(new_log_probs - old_log_probs)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr_raw = ratio * advantages
    surr_clip = clipped * advantages
    objective = np.minimum(surr_raw, surr_clip)
    policy_loss = -float(objective.mean())

    per_dim_entropy = -(probs * logp).sum(axis=-1)  # (B, n)
    entropy_per_sample = per_dim_entropy.sum(axis=-1)
    entropy = float(entropy_per_sample.mean())

    v_err = values - returns
    value_loss = float(np.mean(v_err * v_err))

    total = policy_loss + value_coef * value_loss - entropy_coef * entropy

    # gradient wrt logits: clipped-surrogate term flows only where the raw
    # branch attains the min (the clamped branch is constant in the params)
    n = logits.shape[1]
    take_raw = surr_raw <= surr_clip
    coeff = np.where(take_raw, advantages * ratio, 0.0) / B  # d(-policy_loss)/d logpi
    onehot = np.zeros_like(logits)
    onehot[np.arange(B)[:, None], np.arange(n)[None, :], actions] = 1.0
    d_logits = -coeff[:, None, None] * (onehot - probs)
    # entropy bonus: dH/dz_k = -p_k (log p_k + H)
    d_logits += (entropy_coef / B) * probs * (logp + per_dim_entropy[:, :, None])

    d_values = value_coef * 2.0 * v_err / B

    grads = _backward(params, cache, d_logits.reshape(B, 3 * n), d_values[:, None])
    return LossReport(policy_loss=policy_loss, value_loss=value_loss, entropy=entropy, total=total), grads


def _backward(params: Params, cache: dict, d_logits_flat: np.ndarray, d_values: np.ndarray) -> Params:
    X, h1, hp, hv = cache["X"], cache["h1"], cache["hp"], cache["hv"]

    grads: Params = {}
    grads["w3p"] = d_logits_flat.T @ hp
    grads["b3p"] = d_logits_flat.sum(axis=0)
    d_hp = d_logits_flat @ params["w3p"]
    d_pre2p = d_hp * (1.0 - hp * hp)
    grads["w2p"] = d_pre2p.T @ h1
    grads["b2p"] = d_pre2p.sum(axis=0)

    grads["w3v"] = d_values.T @ hv
    grads["b3v"] = d_values.sum(axis=0)
    d_hv = d_values @ params["w3v"]
    d_pre2v = d_hv * (1.0 - hv * hv)
    grads["w2v"] = d_pre2v.T @ h1
    grads["b2v"] = d_pre2v.sum(axis=0)

    d_h1 = d_pre2p @ params["w2p"] + d_pre2v @ params["w2v"]
    d_pre1 = d_h1 * (1.0 - h1 * h1)
    grads["w1"] = d_pre1.T @ X
    grads["b1"] = d_pre1.sum(axis=0)
    return grads


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(params: Params, grads: Params, state: AdamState, step_size: float) -> None:
    """One Adam update, in place on params and state."""
    state.t += 1
    bias1 = 1.0 - ADAM_BETA1**state.t
    bias2 = 1.0 - ADAM_BETA2**state.t
    for k in params:
        g = grads[k]
        state.m[k] = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g
        state.v[k] = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[k] / bias1
        v_hat = state.v[k] / bias2
        params[k] -= step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def flatten_params(params: Params) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in PARAM_KEYS])


def unflatten_params(flat: np.ndarray, template: Params) -> Params:
    out: Params = {}
    pos = 0
    for k in PARAM_KEYS:
        size = template[k].size
        out[k] = flat[pos : pos + size].reshape(template[k].shape).copy()
        pos += size
    return out
