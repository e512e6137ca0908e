"""Grasp-training rewards.

Three terms: a progress-gated trajectory-following reward that pays only
when the furthest matched reference index strictly increases, a heuristic
contact reward (thumb plus at least two other fingers), and a height
reward with a success bonus. They compose as

    R = R_follow + R_contact * (1 + R_height)

so contact gates the height term. Fingertip states are poses relative to
the object frame; the reference trajectory is a sequence of such states
extracted from a retargeted demonstration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import KinematicChain, attach, forward_kinematics
from .serialize import check_version, load_json, save_json
from .transforms import Pose

REFERENCE_FORMAT_VERSION = 1

N_FINGERS = 5
THUMB = 0


@dataclass
class RewardConfig:
    alpha_pos: float = 1.0  # 1/m, weight of fingertip position error
    alpha_rot: float = 0.03  # 1/rad, weight of fingertip rotation error
    eta: float = 30.0  # base progress payout
    beta_prog: float = 0.2  # extra payout per matched reference index
    epsilon: float = 0.04  # match threshold on dist
    contact_value: float = 0.5
    height_coeff: float = 10.0  # reward per meter of lift
    success_bonus: float = 5.0
    target_height: float = 0.20  # m of lift that counts as success
    table_height: float = 0.0  # rest height of the object center (set by the env)

    def __post_init__(self):
        for name in ("alpha_pos", "alpha_rot", "eta", "beta_prog", "contact_value",
                     "height_coeff", "success_bonus", "target_height"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    def to_dict(self):
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d) -> "RewardConfig":
        return RewardConfig(**d)


@dataclass
class RewardState:
    """Furthest matched reference index seen so far in the episode (-1 =
    nothing matched yet). Monotonically non-decreasing within an episode."""

    best_k: int = -1


class FingertipState:
    """Five fingertip poses (thumb first) expressed in the object frame."""

    __slots__ = ("pos", "quat")

    def __init__(self, pos, quat):
        self.pos = np.asarray(pos, dtype=float)
        self.quat = np.asarray(quat, dtype=float)
        if self.pos.shape != (N_FINGERS, 3) or self.quat.shape != (N_FINGERS, 4):
            raise ValueError("FingertipState needs 5 positions and 5 quaternions")
        norms = np.linalg.norm(self.quat, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("fingertip quaternions must be unit")

    @staticmethod
    def from_poses(poses) -> "FingertipState":
        return FingertipState(
            np.stack([p.pos for p in poses]), np.stack([p.quat for p in poses])
        )


class ReferenceTrajectory:
    """The d_k sequence: per-frame fingertip-in-object-frame poses."""

    def __init__(self, pos, quat):
        self.pos = np.asarray(pos, dtype=float)  # (T, 5, 3)
        self.quat = np.asarray(quat, dtype=float)  # (T, 5, 4)
        if (
            self.pos.ndim != 3
            or self.pos.shape[1:] != (N_FINGERS, 3)
            or self.quat.shape != self.pos.shape[:2] + (4,)
            or self.pos.shape[0] < 1
        ):
            raise ValueError("reference needs T >= 1 frames of 5 fingertip poses")

    def __len__(self):
        return self.pos.shape[0]

    def state(self, k) -> FingertipState:
        return FingertipState(self.pos[k], self.quat[k])

    @staticmethod
    def from_states(states) -> "ReferenceTrajectory":
        return ReferenceTrajectory(
            np.stack([s.pos for s in states]), np.stack([s.quat for s in states])
        )

    def to_dict(self):
        return {
            "version": REFERENCE_FORMAT_VERSION,
            "T": len(self),
            "states": [
                {
                    "fingertips": [
                        {"pos": [float(v) for v in self.pos[k, i]],
                         "quat": [float(v) for v in self.quat[k, i]]}
                        for i in range(N_FINGERS)
                    ]
                }
                for k in range(len(self))
            ],
        }

    @staticmethod
    def from_dict(d) -> "ReferenceTrajectory":
        check_version(d, REFERENCE_FORMAT_VERSION, "reference trajectory")
        pos = np.array([[f["pos"] for f in s["fingertips"]] for s in d["states"]], dtype=float)
        quat = np.array([[f["quat"] for f in s["fingertips"]] for s in d["states"]], dtype=float)
        ref = ReferenceTrajectory(pos, quat)
        if d.get("T") is not None and int(d["T"]) != len(ref):
            raise ValueError("reference file T does not match number of states")
        return ref

    def save(self, path):
        save_json(path, self.to_dict())

    @staticmethod
    def load(path) -> "ReferenceTrajectory":
        return ReferenceTrajectory.from_dict(load_json(path))


# -- metric and reward terms ------------------------------------------------


def _quat_angles(q1, q2):
    """Row-wise geodesic angles 2*acos(|<q1,q2>|) between unit quaternions.

    Evaluated in the equivalent atan2 form, which is exact for (near-)
    identical rotations where the arccosine would bottom out near 1e-8.
    """
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    # vector part of q1 * conj(q2); its scalar part is <q1, q2>
    rx = -w1 * x2 + x1 * w2 - y1 * z2 + z1 * y2
    ry = -w1 * y2 + y1 * w2 - z1 * x2 + x1 * z2
    rz = -w1 * z2 + z1 * w2 - x1 * y2 + y1 * x2
    sin_half = np.sqrt(rx * rx + ry * ry + rz * rz)
    cos_half = np.abs(w1 * w2 + x1 * x2 + y1 * y2 + z1 * z2)
    return 2.0 * np.arctan2(sin_half, cos_half)


def dist(s: FingertipState, d: FingertipState, cfg: RewardConfig) -> float:
    """Summed fingertip pose distance: alpha_pos * |dpos| + alpha_rot * angle."""
    dp = np.linalg.norm(s.pos - d.pos, axis=1)
    da = _quat_angles(s.quat, d.quat)
    return float(cfg.alpha_pos * dp.sum() + cfg.alpha_rot * da.sum())


def dist_to_all(s: FingertipState, ref: ReferenceTrajectory, cfg: RewardConfig) -> np.ndarray:
    """Vector of dist(s, d_k) for every reference index k."""
    dp = np.linalg.norm(ref.pos - s.pos, axis=2)  # (T, 5)
    da = _quat_angles(ref.quat, s.quat)
    return cfg.alpha_pos * dp.sum(axis=1) + cfg.alpha_rot * da.sum(axis=1)


def r_dist(s: FingertipState, d: FingertipState, cfg: RewardConfig) -> float:
    """Bounded proximity reward in (0, 1]: 1 - tanh(dist)."""
    return 1.0 - float(np.tanh(dist(s, d, cfg)))


def k_max(s: FingertipState, ref: ReferenceTrajectory, cfg: RewardConfig) -> int:
    """Largest reference index within epsilon of s, or -1 if none."""
    hits = np.nonzero(dist_to_all(s, ref, cfg) < cfg.epsilon)[0]
    return int(hits[-1]) if hits.size else -1


def _follow(s, ref, state, cfg):
    """(reward, new_state, k_current) for the progress-gated term."""
    k = k_max(s, ref, cfg)
    if k > state.best_k:
        reward = r_dist(s, ref.state(k), cfg) * (cfg.eta + cfg.beta_prog * k)
        return reward, RewardState(best_k=k), k
    return 0.0, state, k


def trajectory_following_reward(
    s: FingertipState,
    ref: ReferenceTrajectory,
    state: RewardState,
    cfg: RewardConfig,
) -> tuple[float, RewardState]:
    """Progress-gated payout: r_dist(s, d_k) * (eta + beta_prog * k) when the
    furthest matched index k strictly exceeds the episode's best so far,
    else 0. Returns the reward and the updated state."""
    reward, new_state, _ = _follow(s, ref, state, cfg)
    return reward, new_state


def contact_reward(contacts, cfg: RewardConfig) -> float:
    """contact_value when the thumb and at least two other fingers touch."""
    contacts = list(contacts)
    if len(contacts) != N_FINGERS:
        raise ValueError(f"expected {N_FINGERS} contact flags")
    others = sum(bool(c) for c in contacts[1:])
    return cfg.contact_value if (contacts[THUMB] and others >= 2) else 0.0


def height_reward(object_height: float, cfg: RewardConfig) -> float:
    """Lift-proportional reward plus a bonus at the success height."""
    if not np.isfinite(object_height):
        raise ValueError("object height must be finite")
    lift = object_height - cfg.table_height
    reward = cfg.height_coeff * max(lift, 0.0)
    if lift >= cfg.target_height:
        reward += cfg.success_bonus
    return reward


def total_reward(
    s: FingertipState,
    ref: ReferenceTrajectory,
    state: RewardState,
    contacts,
    object_height: float,
    cfg: RewardConfig,
) -> tuple[float, RewardState]:
    """Composite reward R_follow + R_contact * (1 + R_height)."""
    reward, new_state, _ = reward_terms(s, ref, state, contacts, object_height, cfg)
    return reward, new_state


def reward_terms(
    s: FingertipState,
    ref: ReferenceTrajectory,
    state: RewardState,
    contacts,
    object_height: float,
    cfg: RewardConfig,
) -> tuple[float, RewardState, dict]:
    """Like total_reward but also returns the term breakdown for logging."""
    r_follow, new_state, k_current = _follow(s, ref, state, cfg)
    r_contact = contact_reward(contacts, cfg)
    r_height = height_reward(object_height, cfg)
    total = r_follow + r_contact * (1.0 + r_height)
    info = {
        "r_follow": r_follow,
        "r_contact": r_contact,
        "r_height": r_height,
        "k_current": k_current,
        "best_k": new_state.best_k,
    }
    return total, new_state, info


def trajectory_mapping_reward(
    s: FingertipState, ref: ReferenceTrajectory, t: int, cfg: RewardConfig
) -> float:
    """Index-aligned comparator reward: r_dist(s_t, d_t).

    Enforces state-to-state alignment at matching time indices; kept as a
    baseline comparator for tests, not used by the environment.
    """
    if not 0 <= t < len(ref):
        raise ValueError(f"reference index {t} out of range [0, {len(ref)})")
    return r_dist(s, ref.state(t), cfg)


# -- reference extraction ---------------------------------------------------


def fingertip_state_from_fk(frames: dict, fingertips, object_pose: Pose) -> FingertipState:
    """Fingertip poses from an FK frame map, re-expressed in the object frame."""
    inv = object_pose.inverse()
    return FingertipState.from_poses([inv.compose(frames[name]) for name in fingertips])


def build_reference(
    traj,
    chain_arm: KinematicChain,
    chain_hand: KinematicChain,
    mount: Pose,
) -> ReferenceTrajectory:
    """Derive the reference d_k sequence from a robot trajectory by forward
    kinematics of the mounted arm+hand chain."""
    combined = attach(chain_arm, chain_hand, mount)
    states = []
    for f in traj.frames:
        q = np.concatenate([f.q_arm, f.q_hand])
        fk = forward_kinematics(combined, q)
        states.append(fingertip_state_from_fk(fk, combined.fingertips, f.object_pose))
    return ReferenceTrajectory.from_states(states)


__all__ = [
    "RewardConfig",
    "RewardState",
    "FingertipState",
    "ReferenceTrajectory",
    "dist",
    "dist_to_all",
    "r_dist",
    "k_max",
    "trajectory_following_reward",
    "contact_reward",
    "height_reward",
    "total_reward",
    "reward_terms",
    "trajectory_mapping_reward",
    "fingertip_state_from_fk",
    "build_reference",
]
