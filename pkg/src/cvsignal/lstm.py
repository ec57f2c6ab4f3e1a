"""Single-layer LSTM regression network implemented on numpy.

Weights live in a plain dict so training code, the optimizer, and the
gradient checker can treat parameters uniformly. Gate order in the stacked
matrices is (input, forget, cell, output).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PARAM_KEYS = ("w_x", "w_h", "b", "w_out", "b_out")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(input_dim: int, hidden: int, seed: int) -> dict[str, np.ndarray]:
    """Glorot-scaled initial weights; forget-gate bias starts at 1."""
    rng = np.random.default_rng(seed)
    scale_x = math.sqrt(1.0 / input_dim)
    scale_h = math.sqrt(1.0 / hidden)
    params = {
        "w_x": rng.uniform(-scale_x, scale_x, size=(input_dim, 4 * hidden)),
        "w_h": rng.uniform(-scale_h, scale_h, size=(hidden, 4 * hidden)),
        "b": np.zeros(4 * hidden),
        "w_out": rng.uniform(-scale_h, scale_h, size=hidden),
        "b_out": np.zeros(1),
    }
    params["b"][hidden:2 * hidden] = 1.0
    return params


def forward_batch(params: dict, x: np.ndarray):
    """Run the network over a batch of sequences.

    x has shape (batch, steps, features); returns (predictions, cache) where
    predictions is (batch,) and cache holds everything backward() needs.
    """
    batch, steps, _ = x.shape
    hidden = params["w_h"].shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    cache = []
    for t in range(steps):
        x_t = x[:, t, :]
        z = x_t @ params["w_x"] + h @ params["w_h"] + params["b"]
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = _sigmoid(z[:, 3 * hidden:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append((x_t, h, c, i, f, g, o, tanh_c))
        h, c = h_new, c_new
    y = h @ params["w_out"] + params["b_out"][0]
    return y, (cache, h)


def mse_loss(y: np.ndarray, target: np.ndarray) -> float:
    d = y - target
    return float(np.mean(d * d))


def loss_and_gradients(params: dict, x: np.ndarray, target: np.ndarray):
    """Mean-squared-error loss and its analytic gradients (full BPTT)."""
    y, (cache, h_last) = forward_batch(params, x)
    batch = x.shape[0]
    hidden = params["w_h"].shape[0]
    loss = mse_loss(y, target)

    dy = 2.0 * (y - target) / batch
    grads = {
        "w_x": np.zeros_like(params["w_x"]),
        "w_h": np.zeros_like(params["w_h"]),
        "b": np.zeros_like(params["b"]),
        "w_out": h_last.T @ dy,
        "b_out": np.array([dy.sum()]),
    }
    dh = np.outer(dy, params["w_out"])
    dc = np.zeros((batch, hidden))
    for t in range(len(cache) - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        do = dh * tanh_c
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        grads["w_x"] += x_t.T @ dz
        grads["w_h"] += h_prev.T @ dz
        grads["b"] += dz.sum(axis=0)
        dh = dz @ params["w_h"].T
        dc = dc * f
    return loss, grads


def flatten_params(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in PARAM_KEYS])


def unflatten_params(vec: np.ndarray, template: dict) -> dict:
    out = {}
    pos = 0
    for k in PARAM_KEYS:
        size = template[k].size
        out[k] = vec[pos:pos + size].reshape(template[k].shape).copy()
        pos += size
    return out


@dataclass
class NadamConfig:
    learning_rate: float = 0.001
    schedule_decay: float = 0.004
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be > 0")


@dataclass
class NadamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    m_schedule: float = 1.0


def nadam_step(params: dict, grads: dict, state: NadamState,
               cfg: NadamConfig) -> None:
    """One Nadam update in place (Nesterov-momentum Adam with the
    0.96-power momentum schedule)."""
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.step += 1
    t = state.step
    mu_t = cfg.beta1 * (1.0 - 0.5 * 0.96 ** (t * cfg.schedule_decay))
    mu_t1 = cfg.beta1 * (1.0 - 0.5 * 0.96 ** ((t + 1) * cfg.schedule_decay))
    m_schedule_new = state.m_schedule * mu_t
    m_schedule_next = m_schedule_new * mu_t1
    state.m_schedule = m_schedule_new
    for k, p in params.items():
        g = grads[k]
        g_prime = g / (1.0 - m_schedule_new)
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        m_prime = state.m[k] / (1.0 - m_schedule_next)
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        v_prime = state.v[k] / (1.0 - cfg.beta2 ** t)
        m_bar = (1.0 - mu_t) * g_prime + mu_t1 * m_prime
        p -= cfg.learning_rate * m_bar / (np.sqrt(v_prime) + cfg.epsilon)
