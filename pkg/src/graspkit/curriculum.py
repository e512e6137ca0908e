"""Success-gated pose randomization schedule.

A noise factor sigma in [0, 1] scales uniform randomization of the
object's initial xy position and z-axis rotation. Sigma starts at 0 and
grows by a fixed increment each time the measured success rate exceeds
the threshold zeta; it never decreases.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .transforms import Pose, quat_from_z_rotation, quat_mul


@dataclass
class CurriculumConfig:
    p_max: tuple = (0.05, 0.05)  # xy half-range at sigma = 1, meters
    theta_max: float = math.radians(30.0)  # z-rotation half-range at sigma = 1
    zeta: float = 0.8  # success threshold that opens the gate
    sigma_step: float = 0.01
    eval_window: int = 100  # episodes per success-rate estimate

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must be in [0, 1]")
        if self.sigma_step <= 0:
            raise ValueError("sigma_step must be > 0")

    def to_dict(self):
        return {
            "p_max": list(self.p_max),
            "theta_max": self.theta_max,
            "zeta": self.zeta,
            "sigma_step": self.sigma_step,
            "eval_window": self.eval_window,
        }

    @staticmethod
    def from_dict(d) -> "CurriculumConfig":
        d = dict(d)
        if "p_max" in d:
            d["p_max"] = tuple(d["p_max"])
        return CurriculumConfig(**d)


@dataclass
class CurriculumState:
    sigma: float = 0.0
    rounds: int = 0
    history: list = field(default_factory=list)  # (round, sigma, success_rate)

    def to_dict(self):
        return {
            "sigma": self.sigma,
            "rounds": self.rounds,
            "history": [list(h) for h in self.history],
        }

    @staticmethod
    def from_dict(d) -> "CurriculumState":
        return CurriculumState(
            sigma=float(d.get("sigma", 0.0)),
            rounds=int(d.get("rounds", 0)),
            history=[tuple(h) for h in d.get("history", [])],
        )


def sample_pose(
    p_init: Pose, state: CurriculumState, cfg: CurriculumConfig, rng: np.random.Generator
) -> Pose:
    """Draw an initial object pose: xy uniform in p_init +- sigma * p_max,
    z unchanged, plus a uniform z-axis rotation in +- sigma * theta_max.

    At sigma = 0 this returns p_init exactly. Deterministic given the rng.
    """
    sigma = state.sigma
    dx = rng.uniform(-sigma * cfg.p_max[0], sigma * cfg.p_max[0])
    dy = rng.uniform(-sigma * cfg.p_max[1], sigma * cfg.p_max[1])
    dtheta = rng.uniform(-sigma * cfg.theta_max, sigma * cfg.theta_max)
    pos = p_init.pos + np.array([dx, dy, 0.0])
    if dtheta == 0.0:
        quat = p_init.quat.copy()
    else:
        quat = quat_mul(quat_from_z_rotation(dtheta), p_init.quat)
    return Pose(pos, quat)


def update(
    state: CurriculumState, success_rate: float, cfg: CurriculumConfig
) -> CurriculumState:
    """Open the gate (sigma += sigma_step, capped at 1) iff success_rate
    strictly exceeds zeta. Always appends one history row."""
    if not 0.0 <= success_rate <= 1.0:
        raise ValueError("success_rate must be in [0, 1]")
    sigma = state.sigma
    if success_rate > cfg.zeta:
        sigma = min(1.0, sigma + cfg.sigma_step)
    rounds = state.rounds + 1
    history = list(state.history)
    history.append((rounds, sigma, float(success_rate)))
    return CurriculumState(sigma=sigma, rounds=rounds, history=history)


def save_history_csv(path, state: CurriculumState):
    """Export (round, sigma, success_rate) rows for plotting the schedule."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "sigma", "success_rate"])
        for row in state.history:
            writer.writerow(list(row))
