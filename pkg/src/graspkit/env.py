"""Quasi-static kinematic grasp environment.

Actions are clamped joint-target deltas. There is no physics: the object
never moves unless it is rigidly attached to the palm, which happens after
the contact condition (thumb + two other fingers within the contact
tolerance of the object surface) holds on two consecutive steps. Success
is lifting the object by the target height. The world model intentionally
mirrors the contact reward so environment and reward semantics agree.

The step/reset core is functional (explicit EnvState in, new EnvState
out); ``GraspEnv`` wraps it with the usual stateful reset/step interface
for rollout collection. Instances share only immutable scene data.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import KinematicChain, attach, frames_raw
from .reward import (
    FingertipState,
    ReferenceTrajectory,
    RewardConfig,
    RewardState,
    reward_terms,
)
from .serialize import check_version, load_json, save_json
from .transforms import Pose, quat_conj, quat_mul_batch, quat_rotate_batch

SCENE_FORMAT_VERSION = 1

BOX = "box"
CYLINDER = "cylinder"


@dataclass(frozen=True)
class ObjectSpec:
    """Mass-less primitive: a box (full extents) or a z-aligned cylinder."""

    kind: str
    dims: tuple  # box: (dx, dy, dz); cylinder: (radius, height)

    def __post_init__(self):
        if self.kind == BOX:
            if len(self.dims) != 3:
                raise ValueError("box dims must be (dx, dy, dz)")
        elif self.kind == CYLINDER:
            if len(self.dims) != 2:
                raise ValueError("cylinder dims must be (radius, height)")
        else:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if any(d <= 0 for d in self.dims):
            raise ValueError("object dimensions must be positive")

    @property
    def half_height(self) -> float:
        return self.dims[2] / 2 if self.kind == BOX else self.dims[1] / 2


def _sdf_local(points: np.ndarray, spec: ObjectSpec) -> np.ndarray:
    """Signed distances for object-frame points (n, 3); negative inside."""
    if spec.kind == BOX:
        half = 0.5 * np.asarray(spec.dims, dtype=float)
        d = np.abs(points) - half
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(d.max(axis=1), 0.0)
        return outside + inside
    radius, height = spec.dims
    dr = np.hypot(points[:, 0], points[:, 1]) - radius
    dz = np.abs(points[:, 2]) - 0.5 * height
    outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
    return np.where((dr > 0.0) & (dz > 0.0), outside, np.maximum(dr, dz))


def signed_distance(point, spec: ObjectSpec, pose: Pose) -> float:
    """Exact signed distance from a world point to the primitive surface
    (negative inside)."""
    p = pose.inverse().transform_point(point)
    if spec.kind == BOX:
        half = 0.5 * np.asarray(spec.dims, dtype=float)
        d = np.abs(p) - half
        outside = np.linalg.norm(np.maximum(d, 0.0))
        inside = min(float(d.max()), 0.0)
        return float(outside + inside)
    radius, height = spec.dims
    dr = math.hypot(p[0], p[1]) - radius
    dz = abs(p[2]) - 0.5 * height
    if dr > 0.0 and dz > 0.0:
        return math.hypot(dr, dz)
    return max(dr, dz)


@dataclass
class SceneConfig:
    """Static description of one grasp scene."""

    arm: KinematicChain
    hand: KinematicChain
    mount: Pose
    obj: ObjectSpec
    init_pose: Pose
    table_height: float = 0.0  # z of the tabletop surface
    horizon: int = 80
    action_scale: float = 0.05  # rad (or m) per unit action component
    contact_tol: float = 0.01  # m
    target_height: float = 0.20  # required lift of the object center
    table_bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0))  # allowed object xy
    home_q_arm: np.ndarray | None = None
    home_q_hand: np.ndarray | None = None
    name: str = "scene"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.contact_tol <= 0 or self.action_scale <= 0:
            raise ValueError("contact_tol and action_scale must be > 0")
        if self.home_q_arm is None:
            self.home_q_arm = self.arm.mid_q()
        if self.home_q_hand is None:
            self.home_q_hand = self.hand.mid_q()
        self.home_q_arm = self.arm.clamp(np.asarray(self.home_q_arm, dtype=float))
        self.home_q_hand = self.hand.clamp(np.asarray(self.home_q_hand, dtype=float))
        self.combined = attach(self.arm, self.hand, self.mount)

    @property
    def dof(self) -> int:
        return self.arm.dof + self.hand.dof

    def reward_config(self, base: RewardConfig | None = None) -> RewardConfig:
        """Reward config wired to this scene: the height baseline is the
        object's rest center height and target_height matches the scene."""
        base = base or RewardConfig()
        return replace(
            base,
            table_height=float(self.init_pose.pos[2]),
            target_height=self.target_height,
        )

    def observation_size(self) -> int:
        return self.dof + 3 * 5 + 3 + 4 + 1

    @staticmethod
    def load(path) -> "SceneConfig":
        d = load_json(path)
        check_version(d, SCENE_FORMAT_VERSION, "scene")
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        chains = d["chains"]
        obj = d["object"]
        home = d.get("home", {})
        return SceneConfig(
            arm=KinematicChain.load(resolve(chains["arm"])),
            hand=KinematicChain.load(resolve(chains["hand"])),
            mount=Pose.from_dict(chains["mount"]),
            obj=ObjectSpec(kind=obj["kind"], dims=tuple(obj["dims"])),
            init_pose=Pose.from_dict(obj["init_pose"]),
            table_height=float(d.get("table_height", 0.0)),
            horizon=int(d.get("H", 80)),
            action_scale=float(d.get("action_scale", 0.05)),
            contact_tol=float(d.get("delta", 0.01)),
            target_height=float(d.get("target_height", 0.20)),
            table_bounds=tuple(tuple(b) for b in d.get("table_bounds", ((-1, 1), (-1, 1)))),
            home_q_arm=np.asarray(home["q_arm"], dtype=float) if "q_arm" in home else None,
            home_q_hand=np.asarray(home["q_hand"], dtype=float) if "q_hand" in home else None,
            name=d.get("name", os.path.basename(path)),
        )


@dataclass
class EnvState:
    q_arm: np.ndarray
    q_hand: np.ndarray
    object_pose: Pose
    attached: bool = False
    grasp_offset: Pose | None = None  # palm^-1 * object, captured at attach
    contact_streak: int = 0
    step_index: int = 0
    reward_state: RewardState = field(default_factory=RewardState)
    done: bool = False
    success: bool = False


def reset(scene: SceneConfig, curriculum_pose: Pose | None = None, seed=None) -> EnvState:
    """Fresh episode: joints at home, object at the curriculum pose (default
    the scene's initial pose), nothing attached, best_k = -1.

    The reset itself draws no random numbers; ``seed`` is accepted for
    interface symmetry and ignored.
    """
    pose = (curriculum_pose or scene.init_pose).copy()
    (xlo, xhi), (ylo, yhi) = scene.table_bounds
    x, y = float(pose.pos[0]), float(pose.pos[1])
    if not (xlo <= x <= xhi and ylo <= y <= yhi):
        raise ValueError(
            f"object pose ({x:.3f}, {y:.3f}) outside table bounds {scene.table_bounds}"
        )
    return EnvState(
        q_arm=scene.home_q_arm.copy(),
        q_hand=scene.home_q_hand.copy(),
        object_pose=pose,
    )


def _tip_palm_arrays(scene: SceneConfig, q):
    """Fingertip and palm world frames from one FK sweep: (tips_pos (5,3),
    tips_quat (5,4), palm Pose)."""
    names = list(scene.combined.fingertips) + [scene.combined.palm]
    pos, quat = frames_raw(scene.combined, q, names)
    return pos[:-1], quat[:-1], Pose(pos[-1], quat[-1])


def _relative_tips(object_pose: Pose, tips_pos, tips_quat) -> FingertipState:
    inv_q = quat_conj(object_pose.quat)
    rel_pos = quat_rotate_batch(inv_q, tips_pos - object_pose.pos)
    rel_quat = quat_mul_batch(inv_q, tips_quat)
    rel_quat /= np.linalg.norm(rel_quat, axis=1, keepdims=True)
    return FingertipState(rel_pos, rel_quat)


def observe(scene: SceneConfig, state: EnvState, ref_len: int) -> np.ndarray:
    """Observation vector: joints, fingertip positions in the object frame,
    object pose, and normalized best-matched progress."""
    q = np.concatenate([state.q_arm, state.q_hand])
    tips_pos, tips_quat, _ = _tip_palm_arrays(scene, q)
    s = _relative_tips(state.object_pose, tips_pos, tips_quat)
    return _assemble_obs(q, s.pos, state, ref_len)


def _assemble_obs(q, rel_pos, state: EnvState, ref_len: int) -> np.ndarray:
    progress = state.reward_state.best_k / max(ref_len, 1)
    return np.concatenate(
        [q, rel_pos.reshape(-1), state.object_pose.pos, state.object_pose.quat, [progress]]
    )


def step(
    scene: SceneConfig,
    state: EnvState,
    action,
    ref: ReferenceTrajectory,
    reward_cfg: RewardConfig,
) -> tuple[EnvState, np.ndarray, float, bool, dict]:
    """Advance one step: move joints by the clamped action, update contacts
    and attachment, move the object if attached, and score the reward.

    Returns (state', observation, reward, done, info). Raises if the episode
    is already done.
    """
    if state.done:
        raise RuntimeError("cannot step a finished episode; call reset first")
    action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    if action.shape != (scene.dof,):
        raise ValueError(f"action must have length {scene.dof}, got {action.shape}")

    na = scene.arm.dof
    q_arm = scene.arm.clamp(state.q_arm + scene.action_scale * action[:na])
    q_hand = scene.hand.clamp(state.q_hand + scene.action_scale * action[na:])
    q = np.concatenate([q_arm, q_hand])
    tips_pos, tips_quat, palm = _tip_palm_arrays(scene, q)

    # while attached the object follows the palm rigidly; otherwise it stays put
    if state.attached:
        object_pose = palm.compose(state.grasp_offset)
        grasp_offset = state.grasp_offset
    else:
        object_pose = state.object_pose
        grasp_offset = None

    inv_q = quat_conj(object_pose.quat)
    local_pts = quat_rotate_batch(inv_q, tips_pos - object_pose.pos)
    sdf = _sdf_local(local_pts, scene.obj)
    contacts = [bool(v) for v in sdf <= scene.contact_tol]
    contact_ok = contacts[0] and sum(contacts[1:]) >= 2
    streak = state.contact_streak + 1 if contact_ok else 0

    attached = state.attached
    if not attached and streak >= 2:  # debounce: two consecutive contact steps
        attached = True
        grasp_offset = palm.inverse().compose(object_pose)

    rel_quat = quat_mul_batch(inv_q, tips_quat)
    rel_quat /= np.linalg.norm(rel_quat, axis=1, keepdims=True)
    s = FingertipState(local_pts, rel_quat)
    reward, reward_state, terms = reward_terms(
        s, ref, state.reward_state, contacts, float(object_pose.pos[2]), reward_cfg
    )

    lift = float(object_pose.pos[2]) - float(scene.init_pose.pos[2])
    success = lift >= scene.target_height
    step_index = state.step_index + 1
    done = success or step_index >= scene.horizon

    new_state = EnvState(
        q_arm=q_arm,
        q_hand=q_hand,
        object_pose=object_pose,
        attached=attached,
        grasp_offset=grasp_offset,
        contact_streak=streak,
        step_index=step_index,
        reward_state=reward_state,
        done=done,
        success=success,
    )
    obs = _assemble_obs(q, local_pts, new_state, len(ref))
    info = {
        "success": success,
        "contacts": contacts,
        "k_max": terms["k_current"],
        "best_k": reward_state.best_k,
        "lift": lift,
        "attached": attached,
        **{k: terms[k] for k in ("r_follow", "r_contact", "r_height")},
    }
    return new_state, obs, reward, done, info


class GraspEnv:
    """Stateful wrapper around the functional core, one instance per
    parallel rollout stream."""

    def __init__(self, scene: SceneConfig, ref: ReferenceTrajectory,
                 reward_cfg: RewardConfig | None = None):
        self.scene = scene
        self.ref = ref
        self.reward_cfg = reward_cfg or scene.reward_config()
        self.state: EnvState | None = None

    @property
    def action_size(self) -> int:
        return self.scene.dof

    @property
    def observation_size(self) -> int:
        return self.scene.observation_size()

    def reset(self, curriculum_pose: Pose | None = None, seed=None) -> np.ndarray:
        self.state = reset(self.scene, curriculum_pose, seed)
        return observe(self.scene, self.state, len(self.ref))

    def step(self, action):
        self.state, obs, reward, done, info = step(
            self.scene, self.state, action, self.ref, self.reward_cfg
        )
        return obs, reward, done, info


def save_scene(path, scene: SceneConfig, arm_path: str, hand_path: str):
    """Write a scene file referring to already-saved chain files."""
    save_json(
        path,
        {
            "version": SCENE_FORMAT_VERSION,
            "name": scene.name,
            "chains": {"arm": arm_path, "hand": hand_path, "mount": scene.mount.to_dict()},
            "object": {
                "kind": scene.obj.kind,
                "dims": list(scene.obj.dims),
                "init_pose": scene.init_pose.to_dict(),
            },
            "table_height": scene.table_height,
            "table_bounds": [list(b) for b in scene.table_bounds],
            "H": scene.horizon,
            "action_scale": scene.action_scale,
            "delta": scene.contact_tol,
            "target_height": scene.target_height,
            "home": {
                "q_arm": [float(v) for v in scene.home_q_arm],
                "q_hand": [float(v) for v in scene.home_q_hand],
            },
        },
    )
