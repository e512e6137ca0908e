"""Policies and checkpoints.

``MlpPolicy`` is a Gaussian actor-critic: two tanh hidden layers per head,
a tanh-squashed action mean, a learned state-independent log-std, and a
linear value output. Forward and backward passes are plain numpy so runs
are bitwise reproducible under a fixed seed.

``ReplayPolicy`` tracks a stored joint trajectory and is used both as a
demonstration-replay baseline and as the checkpoint kind produced directly
from retargeted trajectories.
"""

from __future__ import annotations

import math

import numpy as np

from .serialize import check_version, load_json, save_json

CHECKPOINT_FORMAT_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)


def _layer_init(rng, n_in, n_out, scale):
    w = rng.standard_normal((n_in, n_out)) * (scale / math.sqrt(n_in))
    return w, np.zeros(n_out)


class MlpPolicy:
    """Two-layer actor + two-layer critic over flat observations."""

    kind = "mlp"

    def __init__(self, obs_size, action_size, hidden=128, log_std_init=-0.5, rng=None):
        rng = rng or np.random.default_rng(0)
        self.obs_size = int(obs_size)
        self.action_size = int(action_size)
        self.hidden = int(hidden)
        p = {}
        p["a_w1"], p["a_b1"] = _layer_init(rng, obs_size, hidden, 1.0)
        p["a_w2"], p["a_b2"] = _layer_init(rng, hidden, hidden, 1.0)
        p["a_wm"], p["a_bm"] = _layer_init(rng, hidden, action_size, 0.01)
        p["log_std"] = np.full(action_size, float(log_std_init))
        p["c_w1"], p["c_b1"] = _layer_init(rng, obs_size, hidden, 1.0)
        p["c_w2"], p["c_b2"] = _layer_init(rng, hidden, hidden, 1.0)
        p["c_wv"], p["c_bv"] = _layer_init(rng, hidden, 1, 1.0)
        self.params = p
        self._adam = None

    # -- forward -----------------------------------------------------------

    def forward(self, obs):
        """Batched forward pass. obs (B, obs_size) -> (mean, value, cache)."""
        p = self.params
        x = np.atleast_2d(np.asarray(obs, dtype=float))
        h1 = np.tanh(x @ p["a_w1"] + p["a_b1"])
        h2 = np.tanh(h1 @ p["a_w2"] + p["a_b2"])
        mean = np.tanh(h2 @ p["a_wm"] + p["a_bm"])
        g1 = np.tanh(x @ p["c_w1"] + p["c_b1"])
        g2 = np.tanh(g1 @ p["c_w2"] + p["c_b2"])
        value = (g2 @ p["c_wv"] + p["c_bv"])[:, 0]
        cache = (x, h1, h2, mean, g1, g2)
        return mean, value, cache

    def backward(self, cache, d_mean, d_value):
        """Gradients of a scalar loss given dL/dmean and dL/dvalue."""
        p = self.params
        x, h1, h2, mean, g1, g2 = cache
        g = {}

        dz3 = d_mean * (1.0 - mean * mean)
        g["a_wm"] = h2.T @ dz3
        g["a_bm"] = dz3.sum(axis=0)
        dh2 = dz3 @ p["a_wm"].T
        dz2 = dh2 * (1.0 - h2 * h2)
        g["a_w2"] = h1.T @ dz2
        g["a_b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["a_w2"].T
        dz1 = dh1 * (1.0 - h1 * h1)
        g["a_w1"] = x.T @ dz1
        g["a_b1"] = dz1.sum(axis=0)

        dv = d_value.reshape(-1, 1)
        g["c_wv"] = g2.T @ dv
        g["c_bv"] = dv.sum(axis=0)
        dg2 = dv @ p["c_wv"].T
        dy2 = dg2 * (1.0 - g2 * g2)
        g["c_w2"] = g1.T @ dy2
        g["c_b2"] = dy2.sum(axis=0)
        dg1 = dy2 @ p["c_w2"].T
        dy1 = dg1 * (1.0 - g1 * g1)
        g["c_w1"] = x.T @ dy1
        g["c_b1"] = dy1.sum(axis=0)
        return g

    # -- distribution helpers ------------------------------------------------

    @property
    def std(self):
        return np.exp(self.params["log_std"])

    def log_prob(self, mean, actions):
        """Diagonal-Gaussian log density of actions under N(mean, std^2)."""
        log_std = self.params["log_std"]
        z = (actions - mean) / np.exp(log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * self.action_size * LOG_2PI

    def entropy(self):
        return float(np.sum(self.params["log_std"]) + 0.5 * self.action_size * (LOG_2PI + 1.0))

    # -- acting ---------------------------------------------------------------

    def act_batch(self, obs, rng, deterministic=False):
        """(actions, log_probs, values) for a batch of observations."""
        mean, value, _ = self.forward(obs)
        if deterministic:
            actions = mean
        else:
            actions = mean + self.std * rng.standard_normal(mean.shape)
        return actions, self.log_prob(mean, actions), value

    def act(self, obs, deterministic=False, rng=None):
        actions, _, _ = self.act_batch(
            np.asarray(obs, dtype=float)[None, :],
            rng if rng is not None else np.random.default_rng(0),
            deterministic=deterministic,
        )
        return actions[0]

    def reset(self):
        pass

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params):
        for k in self.params:
            self.params[k] = np.asarray(params[k], dtype=float).copy()

    def to_dict(self):
        return {
            "obs_size": self.obs_size,
            "action_size": self.action_size,
            "hidden": self.hidden,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @staticmethod
    def from_dict(d) -> "MlpPolicy":
        policy = MlpPolicy(d["obs_size"], d["action_size"], d["hidden"])
        policy.set_params({k: np.asarray(v, dtype=float) for k, v in d["params"].items()})
        return policy


class ReplayPolicy:
    """Replays a stored joint-position sequence through delta actions.

    Reads the current joints from the observation prefix and emits the
    clipped delta toward the next stored frame; holds the final frame once
    the sequence is exhausted. Stateful across steps: call reset() at
    episode start.
    """

    kind = "replay"

    def __init__(self, q_sequence, action_scale):
        self.q_sequence = np.asarray(q_sequence, dtype=float)
        if self.q_sequence.ndim != 2 or len(self.q_sequence) < 1:
            raise ValueError("q_sequence must be (T, dof) with T >= 1")
        self.action_scale = float(action_scale)
        self._k = 1

    @property
    def dof(self):
        return self.q_sequence.shape[1]

    def reset(self):
        self._k = 1

    def act(self, obs, deterministic=True, rng=None):
        q_now = np.asarray(obs, dtype=float)[: self.dof]
        k = min(self._k, len(self.q_sequence) - 1)
        self._k += 1
        return np.clip((self.q_sequence[k] - q_now) / self.action_scale, -1.0, 1.0)

    def to_dict(self):
        return {
            "q_sequence": self.q_sequence.tolist(),
            "action_scale": self.action_scale,
        }

    @staticmethod
    def from_dict(d) -> "ReplayPolicy":
        return ReplayPolicy(np.asarray(d["q_sequence"], dtype=float), d["action_scale"])


# -- checkpoint IO -----------------------------------------------------------


def save_checkpoint(path, policy, extras: dict | None = None):
    """Write a versioned checkpoint: policy kind + parameters + any extra
    sections (reward/curriculum/train configs, rng state, metrics)."""
    payload = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "kind": policy.kind,
        "policy": policy.to_dict(),
    }
    if extras:
        payload.update(extras)
    save_json(path, payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (policy, full payload dict)."""
    d = load_json(path)
    check_version(d, CHECKPOINT_FORMAT_VERSION, "checkpoint")
    kind = d.get("kind")
    if kind == "mlp":
        policy = MlpPolicy.from_dict(d["policy"])
    elif kind == "replay":
        policy = ReplayPolicy.from_dict(d["policy"])
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    return policy, d
