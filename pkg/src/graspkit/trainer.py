"""On-policy training: rollout collection, GAE, clipped-surrogate PPO, and
the two-phase (fixed pose, then curriculum) training loop.

Everything is seed-driven numpy. Rollouts step environments sequentially
in a fixed order, so a fixed seed reproduces metrics bitwise; parallelism
is "vectorized" in the many-instances sense, not threads.
"""

from __future__ import annotations

import csv
import math
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState, sample_pose, update as curriculum_update
from .env import GraspEnv, SceneConfig
from .policy import MlpPolicy, save_checkpoint
from .reward import ReferenceTrajectory, RewardConfig


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    lr: float = 3e-4
    epochs_per_batch: int = 10
    batch_episodes: int = 16  # horizon * batch_episodes transitions per update
    total_steps: int = 200_000
    seed: int = 0
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    pretrain_steps: int = 60_000  # phase 1: fixed initial pose (sigma = 0)
    n_envs: int = 8
    hidden: int = 128
    log_std_init: float = -0.5
    minibatch_size: int = 512
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    kl_limit: float = 0.02
    reward_scale: float = 1.0  # conditions value targets; metrics stay raw

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be > 0")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "curriculum"}
        d["curriculum"] = self.curriculum.to_dict()
        return d

    @staticmethod
    def from_dict(d) -> "TrainConfig":
        d = dict(d)
        if "curriculum" in d:
            d["curriculum"] = CurriculumConfig.from_dict(d["curriculum"])
        return TrainConfig(**d)


@dataclass
class RolloutBatch:
    """Time-major (n_steps, n_envs) arrays plus per-episode records."""

    obs: np.ndarray  # (T, N, obs)
    actions: np.ndarray  # (T, N, act)
    log_probs: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N)
    values: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N) float 0/1
    last_values: np.ndarray  # (N,) bootstrap for unfinished episodes
    episodes: list = field(default_factory=list)  # {return, length, success}

    @property
    def size(self) -> int:
        return int(self.rewards.size)

    def flat(self):
        T, N = self.rewards.shape
        return (
            self.obs.reshape(T * N, -1),
            self.actions.reshape(T * N, -1),
            self.log_probs.reshape(T * N),
        )


def collect_rollouts(
    policy,
    envs,
    ref: ReferenceTrajectory | None,
    reward_cfg: RewardConfig | None,
    n_steps: int,
    rng: np.random.Generator,
    pose_sampler=None,
) -> RolloutBatch:
    """Collect exactly n_steps * len(envs) transitions.

    Episodes auto-reset with ``pose_sampler(rng)`` initial poses (or the
    scene default when no sampler is given). Environments are stepped in
    list order with one shared rng, so collection is deterministic under a
    fixed seed. ``ref``/``reward_cfg`` override the envs' own when given.
    """
    for env in envs:
        if ref is not None and hasattr(env, "ref"):
            env.ref = ref
        if reward_cfg is not None and hasattr(env, "reward_cfg"):
            env.reward_cfg = reward_cfg

    n = len(envs)
    current = []
    ep_return = [0.0] * n
    ep_length = [0] * n
    for i, env in enumerate(envs):
        if getattr(env, "state", None) is None or not hasattr(env, "_pending_obs"):
            current.append(env.reset(pose_sampler(rng) if pose_sampler else None))
        else:  # resume a mid-episode env from the previous batch
            current.append(env._pending_obs)
            ep_return[i] = getattr(env, "_ep_return", 0.0)
            ep_length[i] = getattr(env, "_ep_length", 0)

    obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf = [], [], [], [], [], []
    episodes = []

    for _ in range(n_steps):
        obs_mat = np.stack(current)
        actions, log_probs, values = policy.act_batch(obs_mat, rng)
        rewards = np.zeros(n)
        dones = np.zeros(n)
        for i, env in enumerate(envs):
            try:
                obs2, r, done, info = env.step(actions[i])
            except Exception as e:
                raise RuntimeError(f"env {i} failed: {e}") from e
            rewards[i] = r
            dones[i] = float(done)
            ep_return[i] += r
            ep_length[i] += 1
            if done:
                episodes.append(
                    {
                        "return": ep_return[i],
                        "length": ep_length[i],
                        "success": bool(info.get("success", False)),
                    }
                )
                ep_return[i] = 0.0
                ep_length[i] = 0
                obs2 = env.reset(pose_sampler(rng) if pose_sampler else None)
                if hasattr(policy, "reset"):
                    policy.reset()
            current[i] = obs2
        obs_buf.append(obs_mat)
        act_buf.append(actions)
        logp_buf.append(log_probs)
        rew_buf.append(rewards)
        val_buf.append(values)
        done_buf.append(dones)

    # carry per-env episode accumulators across batches
    for i, env in enumerate(envs):
        env._pending_obs = current[i]
        env._ep_return = ep_return[i]
        env._ep_length = ep_length[i]

    _, last_values, _ = policy.forward(np.stack(current))
    return RolloutBatch(
        obs=np.stack(obs_buf),
        actions=np.stack(act_buf),
        log_probs=np.stack(logp_buf),
        rewards=np.stack(rew_buf),
        values=np.stack(val_buf),
        dones=np.stack(done_buf),
        last_values=last_values,
        episodes=episodes,
    )


def compute_gae(
    batch: RolloutBatch,
    gamma: float,
    lam: float,
    normalize: bool = True,
    reward_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets, shape (T, N).

    Episode boundaries (dones) cut the recursion; the final step bootstraps
    from ``batch.last_values``. With normalize=True advantages are shifted
    and scaled to mean 0 / std 1 over the whole batch.
    """
    T, N = batch.rewards.shape
    adv = np.zeros((T, N))
    running = np.zeros(N)
    for t in range(T - 1, -1, -1):
        next_values = batch.values[t + 1] if t + 1 < T else batch.last_values
        nonterminal = 1.0 - batch.dones[t]
        delta = (
            reward_scale * batch.rewards[t]
            + gamma * next_values * nonterminal
            - batch.values[t]
        )
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    returns = adv + batch.values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


def ppo_loss_terms(policy: MlpPolicy, obs, actions, logp_old, adv, returns, cfg: TrainConfig):
    """Forward pass + loss pieces for one minibatch. Returns (loss values,
    gradients dict); gradients are ready for the optimizer."""
    mean, value, cache = policy.forward(obs)
    logp = policy.log_prob(mean, actions)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    value_err = value - returns
    value_loss = 0.5 * float(np.mean(value_err * value_err))
    entropy = policy.entropy()
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy

    B = len(obs)
    active = (surr1 <= surr2).astype(float)  # gradient flows through the unclipped branch
    d_logp = -(adv * ratio * active) / B
    std2 = np.exp(2.0 * policy.params["log_std"])
    diff = actions - mean
    d_mean = d_logp[:, None] * diff / std2
    z2 = diff * diff / std2
    d_log_std = np.sum(d_logp[:, None] * (z2 - 1.0), axis=0) - cfg.ent_coef
    d_value = cfg.vf_coef * value_err / B

    grads = policy.backward(cache, d_mean, d_value)
    grads["log_std"] = d_log_std

    kl = float(np.mean((ratio - 1.0) - np.log(np.maximum(ratio, 1e-12))))
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio))
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "kl": kl,
        "clip_frac": clip_frac,
    }
    return stats, grads


class Adam:
    """Plain Adam over a dict of parameter arrays (updated in place)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            self.params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def ppo_update(
    policy: MlpPolicy,
    batch: RolloutBatch,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    advantages: np.ndarray | None = None,
    returns: np.ndarray | None = None,
) -> dict:
    """Clipped-surrogate update over the batch; epochs stop early once the
    approximate KL to the behavior policy exceeds cfg.kl_limit.

    A non-finite loss or gradient aborts the update before applying it and
    reports ``diverged=True`` in the stats.
    """
    if batch.size == 0:
        raise ValueError("empty batch")
    if advantages is None or returns is None:
        advantages, returns = compute_gae(
            batch, cfg.gamma, cfg.gae_lambda, normalize=True, reward_scale=cfg.reward_scale
        )
    obs, actions, logp_old = batch.flat()
    adv = np.asarray(advantages).reshape(-1)
    ret = np.asarray(returns).reshape(-1)
    B = len(obs)

    if policy._adam is None:
        policy._adam = Adam(policy.params, cfg.lr)
    optimizer = policy._adam

    agg = {"policy_loss": [], "value_loss": [], "kl": [], "clip_frac": []}
    epochs_done = 0
    diverged = False
    stop = False
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(B) if rng is not None else np.arange(B)
        for lo in range(0, B, cfg.minibatch_size):
            idx = order[lo : lo + cfg.minibatch_size]
            stats, grads = ppo_loss_terms(
                policy, obs[idx], actions[idx], logp_old[idx], adv[idx], ret[idx], cfg
            )
            if not math.isfinite(stats["loss"]) or any(
                not np.all(np.isfinite(g)) for g in grads.values()
            ):
                diverged = True
                stop = True
                break
            optimizer.step(grads)
            for k in agg:
                agg[k].append(stats[k])
            if stats["kl"] > cfg.kl_limit:
                stop = True
                break
        if stop:
            break
        epochs_done += 1

    out = {k: float(np.mean(v)) if v else 0.0 for k, v in agg.items()}
    out["epochs_done"] = epochs_done
    out["diverged"] = diverged
    return out


@dataclass
class TrainResult:
    policy: MlpPolicy
    curriculum_state: CurriculumState
    metrics: list  # one dict per update round
    reward_cfg: RewardConfig
    diverged: bool = False
    checkpoint_path: str | None = None


def _sigma_sampler(scene: SceneConfig, sigma: float, cc: CurriculumConfig):
    if sigma <= 0.0:
        return None
    state = CurriculumState(sigma=sigma)

    def sampler(rng):
        return sample_pose(scene.init_pose, state, cc, rng)

    return sampler


def train(
    scene: SceneConfig,
    ref: ReferenceTrajectory,
    cfg: TrainConfig,
    reward_cfg: RewardConfig | None = None,
    out_dir: str | None = None,
    curriculum_enabled: bool = True,
    fixed_sigma: float | None = None,
) -> TrainResult:
    """Two-phase PPO run: fixed initial pose for ``pretrain_steps``, then
    success-gated curriculum randomization until ``total_steps``.

    ``fixed_sigma`` (with curriculum_enabled=False) trains at one constant
    randomization level instead — the "direct training" baseline. Fully
    reproducible from cfg.seed; NaN divergence checkpoints the last good
    parameters and stops with a diagnostic row in the metrics.
    """
    rng = np.random.default_rng(cfg.seed)
    reward_cfg = scene.reward_config(reward_cfg)
    envs = [GraspEnv(scene, ref, reward_cfg) for _ in range(cfg.n_envs)]
    policy = MlpPolicy(
        scene.observation_size(), scene.dof, cfg.hidden, cfg.log_std_init, rng
    )
    cc = cfg.curriculum
    curr_state = CurriculumState()
    window = deque(maxlen=cc.eval_window)
    steps_per_batch = max(1, (cfg.batch_episodes * scene.horizon) // cfg.n_envs)
    metrics = []
    total = 0
    diverged = False
    last_good = policy.copy_params()

    while total < cfg.total_steps:
        if fixed_sigma is not None:
            sigma_now = float(fixed_sigma)
        elif total < cfg.pretrain_steps or not curriculum_enabled:
            sigma_now = 0.0
        else:
            sigma_now = curr_state.sigma
        sampler = _sigma_sampler(scene, sigma_now, cc)
        batch = collect_rollouts(policy, envs, None, None, steps_per_batch, rng, sampler)
        total += batch.size
        for ep in batch.episodes:
            window.append(1.0 if ep["success"] else 0.0)
        stats = ppo_update(policy, batch, cfg, rng)
        success_rate = float(np.mean(window)) if window else 0.0

        if stats["diverged"] or not policy.finite():
            policy.set_params(last_good)
            diverged = True
        else:
            last_good = policy.copy_params()

        in_curriculum = (
            curriculum_enabled and fixed_sigma is None and total >= cfg.pretrain_steps
        )
        if in_curriculum and not diverged:
            curr_state = curriculum_update(curr_state, success_rate, cc)

        row = {
            "step": total,
            "return": float(np.mean([e["return"] for e in batch.episodes]))
            if batch.episodes
            else 0.0,
            "success_rate": success_rate,
            "sigma": sigma_now,
            "episodes": len(batch.episodes),
            **{k: stats[k] for k in ("policy_loss", "value_loss", "kl", "clip_frac")},
            "diverged": diverged,
        }
        metrics.append(row)
        if diverged:
            break

    checkpoint_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, "policy.json")
        save_checkpoint(
            checkpoint_path,
            policy,
            extras={
                "reward_config": reward_cfg.to_dict(),
                "curriculum": curr_state.to_dict(),
                "train_config": cfg.to_dict(),
                "rng_state": rng.bit_generator.state,
            },
        )
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metrics)
        from .curriculum import save_history_csv

        save_history_csv(os.path.join(out_dir, "curriculum.csv"), curr_state)

    return TrainResult(policy, curr_state, metrics, reward_cfg, diverged, checkpoint_path)


def evaluate(
    policy,
    scene: SceneConfig,
    ref: ReferenceTrajectory,
    n_episodes: int,
    sigma: float = 0.0,
    reward_cfg: RewardConfig | None = None,
    curriculum_cfg: CurriculumConfig | None = None,
    seed: int = 0,
) -> dict:
    """Deterministic-action evaluation: SR = successes / n_episodes.

    ``sigma`` scales initial-pose randomization exactly as in training.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    env = GraspEnv(scene, ref, reward_cfg or scene.reward_config())
    cc = curriculum_cfg or CurriculumConfig()
    sampler = _sigma_sampler(scene, sigma, cc)
    records = []
    for _ in range(n_episodes):
        obs = env.reset(sampler(rng) if sampler else None)
        if hasattr(policy, "reset"):
            policy.reset()
        ep_return = 0.0
        length = 0
        success = False
        done = False
        while not done:
            action = policy.act(obs, deterministic=True, rng=rng)
            obs, r, done, info = env.step(action)
            ep_return += r
            length += 1
            success = bool(info.get("success", False))
        records.append({"return": ep_return, "length": length, "success": success})
    n_success = sum(r["success"] for r in records)
    return {
        "success_rate": n_success / n_episodes,
        "mean_return": float(np.mean([r["return"] for r in records])),
        "episodes": records,
    }


def write_metrics_csv(path, metrics: list):
    if not metrics:
        return
    keys = list(metrics[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=keys)
        writer.writeheader()
        for row in metrics:
            writer.writerow(row)
