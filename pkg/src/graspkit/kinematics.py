"""Kinematic trees: forward kinematics, geometric Jacobians, damped-least-squares IK.

A chain is a tree of revolute/prismatic joints plus named fixed frames
(fingertips, palm, tool). Joints are stored in topological order: a
joint's parent always precedes it. Every joint also registers a frame
under its own name (the post-motion joint frame), so frame names cover
both joints and fixed frames.

All operations are pure functions over immutable chain data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .transforms import (
    Pose,
    compose_pq,
    pose_error,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

CHAIN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Joint:
    name: str
    jtype: str  # REVOLUTE or PRISMATIC
    axis: np.ndarray  # unit 3-vector in the joint's local frame
    origin: Pose  # transform from parent frame to this joint's zero pose
    lower: float
    upper: float
    parent: int  # index of parent joint, -1 for the chain root

    def __post_init__(self):
        if self.jtype not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint type {self.jtype!r}")
        if self.lower > self.upper:
            raise ValueError(f"joint {self.name!r}: lower {self.lower} > upper {self.upper}")
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError(f"joint {self.name!r}: zero axis")
        object.__setattr__(self, "axis", axis / n)


@dataclass(frozen=True)
class FixedFrame:
    name: str
    parent: int  # index of parent joint, -1 = chain root
    origin: Pose


class KinematicChain:
    """Immutable robot description: joints, fixed frames, fingertip/palm names."""

    def __init__(self, name, joints, frames=(), fingertips=(), palm=None):
        self.name = name
        self.joints = list(joints)
        self.frames = list(frames)
        self.fingertips = list(fingertips)
        self.palm = palm
        self.dof = len(self.joints)
        self.lower = np.array([j.lower for j in self.joints], dtype=float)
        self.upper = np.array([j.upper for j in self.joints], dtype=float)

        names = [j.name for j in self.joints] + [f.name for f in self.frames]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValueError(f"duplicate frame names: {sorted(dupes)}")
        for i, j in enumerate(self.joints):
            if not -1 <= j.parent < i:
                raise ValueError(
                    f"joint {j.name!r}: parent index {j.parent} must precede joint {i}"
                )
        for f in self.frames:
            if not -1 <= f.parent < self.dof:
                raise ValueError(f"frame {f.name!r}: invalid parent joint {f.parent}")

        # frame name -> parent joint index (joints are frames of themselves)
        self._frame_parent = {j.name: i for i, j in enumerate(self.joints)}
        self._frame_parent.update({f.name: f.parent for f in self.frames})
        self._fixed = {f.name: f for f in self.frames}

        for n in list(self.fingertips) + ([palm] if palm else []):
            if n not in self._frame_parent:
                raise KeyError(f"chain {name!r}: frame {n!r} not defined")

        # ancestor joint sets (used by the Jacobian); joint i is its own ancestor
        self._ancestors = []
        for i, j in enumerate(self.joints):
            anc = [] if j.parent < 0 else list(self._ancestors[j.parent])
            anc.append(i)
            self._ancestors.append(anc)

    # -- queries -------------------------------------------------------

    @property
    def frame_names(self):
        return list(self._frame_parent)

    def has_frame(self, name):
        return name in self._frame_parent

    def joint_path(self, frame):
        """Joint indices on the unique path from root to ``frame``."""
        if frame not in self._frame_parent:
            raise KeyError(f"unknown frame {frame!r}")
        p = self._frame_parent[frame]
        return [] if p < 0 else self._ancestors[p]

    def clamp(self, q):
        return np.clip(np.asarray(q, dtype=float), self.lower, self.upper)

    def mid_q(self):
        """Mid-range joint vector; always within limits."""
        return 0.5 * (self.lower + self.upper)

    def check_q(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint values, got shape {q.shape}")
        return q

    def within_limits(self, q, tol=0.0):
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    # -- serialization -------------------------------------------------

    def to_dict(self):
        return {
            "version": CHAIN_FORMAT_VERSION,
            "name": self.name,
            "joints": [
                {
                    "name": j.name,
                    "type": j.jtype,
                    "axis": [float(v) for v in j.axis],
                    "origin": j.origin.to_dict(),
                    "lower": j.lower,
                    "upper": j.upper,
                    "parent": self.joints[j.parent].name if j.parent >= 0 else None,
                }
                for j in self.joints
            ],
            "frames": [
                {
                    "name": f.name,
                    "parent": self.joints[f.parent].name if f.parent >= 0 else None,
                    "origin": f.origin.to_dict(),
                }
                for f in self.frames
            ],
            "fingertips": list(self.fingertips),
            "palm": self.palm,
        }

    @staticmethod
    def from_dict(d) -> "KinematicChain":
        major = int(d.get("version", 1))
        if major != CHAIN_FORMAT_VERSION:
            raise ValueError(f"unsupported chain file version {major}")
        index = {}
        joints = []
        for i, jd in enumerate(d["joints"]):
            parent_name = jd.get("parent")
            if parent_name is None and "parent" not in jd:
                parent = i - 1  # serial default: previous joint
            elif parent_name is None:
                parent = -1
            else:
                if parent_name not in index:
                    raise ValueError(f"joint {jd['name']!r}: unknown parent {parent_name!r}")
                parent = index[parent_name]
            joints.append(
                Joint(
                    name=jd["name"],
                    jtype=jd.get("type", REVOLUTE),
                    axis=np.asarray(jd["axis"], dtype=float),
                    origin=Pose.from_dict(jd["origin"]),
                    lower=float(jd["lower"]),
                    upper=float(jd["upper"]),
                    parent=parent,
                )
            )
            index[jd["name"]] = i
        frames = []
        for fd in d.get("frames", ()):
            pname = fd.get("parent")
            frames.append(
                FixedFrame(
                    name=fd["name"],
                    parent=index[pname] if pname is not None else -1,
                    origin=Pose.from_dict(fd["origin"]),
                )
            )
        return KinematicChain(
            name=d.get("name", "chain"),
            joints=joints,
            frames=frames,
            fingertips=d.get("fingertips", []),
            palm=d.get("palm"),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @staticmethod
    def load(path) -> "KinematicChain":
        with open(path) as f:
            return KinematicChain.from_dict(json.load(f))


_ZERO3 = np.zeros(3)
_IDENT4 = np.array([1.0, 0.0, 0.0, 0.0])


def _raw_joint_poses(chain: KinematicChain, q):
    """(pos, quat) pairs of every joint frame (post-motion), unnormalized.

    Hot path shared by FK, Jacobians and IK; Pose objects are only built at
    the public boundaries.
    """
    out = []
    for i, joint in enumerate(chain.joints):
        if joint.parent >= 0:
            bp, bq = out[joint.parent]
        else:
            bp, bq = _ZERO3, _IDENT4
        op, oq = compose_pq(bp, bq, joint.origin.pos, joint.origin.quat)
        if joint.jtype == REVOLUTE:
            out.append((op, quat_mul(oq, quat_from_axis_angle(joint.axis, q[i]))))
        else:
            out.append((op + quat_rotate(oq, joint.axis * q[i]), oq))
    return out


def _joint_poses(chain: KinematicChain, q) -> list[Pose]:
    """World pose of every joint frame (post-motion), in chain order."""
    return [Pose(p, qq) for p, qq in _raw_joint_poses(chain, q)]


def forward_kinematics(chain: KinematicChain, q) -> dict[str, Pose]:
    """World pose of every named frame at configuration ``q``.

    Pure and deterministic: identical inputs give bitwise-identical poses.
    """
    q = chain.check_q(q)
    raw = _raw_joint_poses(chain, q)
    out = {chain.joints[i].name: Pose(p, qq) for i, (p, qq) in enumerate(raw)}
    for f in chain.frames:
        bp, bq = raw[f.parent] if f.parent >= 0 else (_ZERO3, _IDENT4)
        out[f.name] = Pose(*compose_pq(bp, bq, f.origin.pos, f.origin.quat))
    return out


def frame_pose(chain: KinematicChain, q, frame: str) -> Pose:
    """World pose of a single frame (computes only the joints on its path)."""
    q = chain.check_q(q)
    p, qq = _ZERO3, _IDENT4
    for i in chain.joint_path(frame):
        joint = chain.joints[i]
        p, qq = compose_pq(p, qq, joint.origin.pos, joint.origin.quat)
        if joint.jtype == REVOLUTE:
            qq = quat_mul(qq, quat_from_axis_angle(joint.axis, q[i]))
        else:
            p = p + quat_rotate(qq, joint.axis * q[i])
    if frame in chain._fixed:
        f = chain._fixed[frame]
        p, qq = compose_pq(p, qq, f.origin.pos, f.origin.quat)
    return Pose(p, qq)


def _frame_from_poses(chain: KinematicChain, poses, frame: str) -> Pose:
    if frame in chain._fixed:
        f = chain._fixed[frame]
        base = poses[f.parent] if f.parent >= 0 else Pose.identity()
        return base.compose(f.origin)
    return poses[chain._frame_parent[frame]]


def _jacobian_from_poses(chain: KinematicChain, poses, frame: str) -> np.ndarray:
    p_frame = _frame_from_poses(chain, poses, frame).pos
    J = np.zeros((6, chain.dof))
    for i in chain.joint_path(frame):
        joint = chain.joints[i]
        z = quat_rotate(poses[i].quat, joint.axis)
        if joint.jtype == REVOLUTE:
            J[:3, i] = np.cross(z, p_frame - poses[i].pos)
            J[3:, i] = z
        else:
            J[:3, i] = z
    return J


def jacobian(chain: KinematicChain, q, frame: str) -> np.ndarray:
    """6 x dof geometric Jacobian of ``frame``: rows 0-2 linear (m/rad or
    m/m), rows 3-5 angular (rad/rad; zero for prismatic joints).
    """
    q = chain.check_q(q)
    if not chain.has_frame(frame):
        raise KeyError(f"unknown frame {frame!r}")
    return _jacobian_from_poses(chain, _joint_poses(chain, q), frame)


def point_positions(chain: KinematicChain, q, frames) -> np.ndarray:
    """World positions (n, 3) of several frames from one joint-pose sweep."""
    q = chain.check_q(q)
    poses = _joint_poses(chain, q)
    return np.stack([_frame_from_poses(chain, poses, f).pos for f in frames])


def frames_raw(chain: KinematicChain, q, frames) -> tuple[np.ndarray, np.ndarray]:
    """Positions (n, 3) and unit quaternions (n, 4) of several frames from a
    single sweep; the array-level FK used by the environment's hot path."""
    q = chain.check_q(q)
    raw = _raw_joint_poses(chain, q)
    pos = np.zeros((len(frames), 3))
    quat = np.zeros((len(frames), 4))
    for k, name in enumerate(frames):
        if name in chain._fixed:
            f = chain._fixed[name]
            bp, bq = raw[f.parent] if f.parent >= 0 else (_ZERO3, _IDENT4)
            p, qq = compose_pq(bp, bq, f.origin.pos, f.origin.quat)
        else:
            p, qq = raw[chain._frame_parent[name]]
        pos[k] = p
        quat[k] = qq
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    return pos, quat


def point_jacobians(chain: KinematicChain, q, frames) -> tuple[np.ndarray, np.ndarray]:
    """Positions (n,3) and position Jacobians (n,3,dof) for several frames,
    sharing one joint-pose sweep. Used by the fingertip-fitting optimizer.
    """
    q = chain.check_q(q)
    poses = _joint_poses(chain, q)
    n = len(frames)
    pts = np.zeros((n, 3))
    jacs = np.zeros((n, 3, chain.dof))
    for k, frame in enumerate(frames):
        if frame in chain._fixed:
            f = chain._fixed[frame]
            base = poses[f.parent] if f.parent >= 0 else Pose.identity()
            p = base.compose(f.origin).pos
        else:
            p = poses[chain._frame_parent[frame]].pos
        pts[k] = p
        for i in chain.joint_path(frame):
            joint = chain.joints[i]
            z = quat_rotate(poses[i].quat, joint.axis)
            if joint.jtype == REVOLUTE:
                jacs[k, :, i] = np.cross(z, p - poses[i].pos)
            else:
                jacs[k, :, i] = z
    return pts, jacs


@dataclass
class ClikParams:
    """Damped-least-squares IK settings. Defaults favor robustness over speed."""

    gain: float = 0.5
    damping: float = 1e-3
    max_iters: int = 500
    tol_pos: float = 1e-6  # m
    tol_rot: float = 1e-5  # rad
    max_step: float = 0.5  # rad cap on ||dq||_inf per iteration


@dataclass
class ClikResult:
    q: np.ndarray
    pos_err: float
    rot_err: float
    converged: bool
    iters: int = 0


def clik_solve(
    chain: KinematicChain,
    target: Pose,
    frame: str,
    q_init,
    params: ClikParams | None = None,
) -> ClikResult:
    """Closed-loop IK: iterate q <- clamp(q + gain * J_damped^+ * e).

    Never raises on unreachable targets; the result reports residual errors
    with ``converged=False``. The returned q is always within joint limits.
    """
    params = params or ClikParams()
    if not chain.has_frame(frame):
        raise KeyError(f"unknown frame {frame!r}")
    q = chain.clamp(chain.check_q(q_init))
    lam2 = params.damping * params.damping
    eye6 = np.eye(6)
    pos_err = rot_err = math.inf
    for it in range(params.max_iters + 1):
        poses = _joint_poses(chain, q)
        current = _frame_from_poses(chain, poses, frame)
        e = pose_error(target, current)
        pos_err = float(np.linalg.norm(e[:3]))
        rot_err = float(np.linalg.norm(e[3:]))
        if pos_err < params.tol_pos and rot_err < params.tol_rot:
            return ClikResult(q, pos_err, rot_err, True, it)
        if it == params.max_iters:
            break
        J = _jacobian_from_poses(chain, poses, frame)
        dq = params.gain * (J.T @ np.linalg.solve(J @ J.T + lam2 * eye6, e))
        biggest = float(np.max(np.abs(dq))) if dq.size else 0.0
        if biggest > params.max_step:  # keep the linearization honest far from goal
            dq *= params.max_step / biggest
        q = chain.clamp(q + dq)
    return ClikResult(q, pos_err, rot_err, False, params.max_iters)


def attach(
    arm: KinematicChain,
    hand: KinematicChain,
    mount: Pose,
    arm_frame: str | None = None,
) -> KinematicChain:
    """Mount ``hand`` onto ``arm`` at ``arm_frame`` (default: the arm's palm
    frame) through the fixed ``mount`` transform.

    The combined joint vector is [q_arm, q_hand]. Fingertips and palm come
    from the hand. Frame names must not collide between the two chains.
    """
    arm_frame = arm_frame or arm.palm
    if arm_frame is None:
        raise ValueError("arm chain has no palm/tool frame to mount on")
    if not arm.has_frame(arm_frame):
        raise KeyError(f"unknown arm frame {arm_frame!r}")
    shared = set(arm.frame_names) & set(hand.frame_names)
    if shared:
        raise ValueError(f"frame names collide between chains: {sorted(shared)}")

    if arm_frame in arm._fixed:
        f = arm._fixed[arm_frame]
        mount_parent, mount_origin = f.parent, f.origin.compose(mount)
    else:
        mount_parent = arm._frame_parent[arm_frame]
        mount_origin = mount

    n = arm.dof
    joints = list(arm.joints)
    for j in hand.joints:
        if j.parent < 0:
            joints.append(
                Joint(j.name, j.jtype, j.axis, mount_origin.compose(j.origin),
                      j.lower, j.upper, mount_parent)
            )
        else:
            joints.append(
                Joint(j.name, j.jtype, j.axis, j.origin, j.lower, j.upper, j.parent + n)
            )
    frames = list(arm.frames)
    for f in hand.frames:
        if f.parent < 0:
            frames.append(FixedFrame(f.name, mount_parent, mount_origin.compose(f.origin)))
        else:
            frames.append(FixedFrame(f.name, f.parent + n, f.origin))

    return KinematicChain(
        name=f"{arm.name}+{hand.name}",
        joints=joints,
        frames=frames,
        fingertips=hand.fingertips,
        palm=hand.palm,
    )
