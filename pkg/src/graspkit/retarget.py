"""Human-to-robot motion retargeting.

Per frame, hand joints minimize the summed squared fingertip position
error plus a temporal smoothness penalty, subject to joint limits; arm
joints come from damped-least-squares IK on the wrist target. A quintic
Savitzky-Golay pass smooths the resulting joint sequences.

Fingertip targets are expressed in the wrist frame before fitting, so the
hand solve is independent of where the arm puts the wrist.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import savgol_filter

from .kinematics import (
    ClikParams,
    KinematicChain,
    clik_solve,
    point_jacobians,
    point_positions,
)
from .serialize import check_version, load_json, save_json
from .transforms import Pose

log = logging.getLogger(__name__)

TRAJECTORY_FORMAT_VERSION = 1

N_FINGERS = 5  # thumb first


@dataclass
class HumanFrame:
    """One observed frame: world fingertip positions (thumb first), wrist
    pose, object pose, timestamp."""

    fingertips: np.ndarray  # (5, 3)
    wrist_pose: Pose
    object_pose: Pose
    time: float = 0.0

    def __post_init__(self):
        self.fingertips = np.asarray(self.fingertips, dtype=float)
        if self.fingertips.shape != (N_FINGERS, 3):
            raise ValueError(
                f"expected {N_FINGERS} fingertip positions, got shape {self.fingertips.shape}"
            )


@dataclass
class RetargetParams:
    beta_smooth: float = 0.05  # weight of ||q - q_prev||^2
    max_iters: int = 200
    step_tol: float = 1e-9
    fingertip_scale: float = 1.0  # scales fingertip vectors about the wrist
    restart_above: float = 1e-3  # tip-error (m^2) that triggers multi-start search

    def __post_init__(self):
        if self.beta_smooth < 0:
            raise ValueError("beta_smooth must be >= 0")
        if self.fingertip_scale <= 0:
            raise ValueError("fingertip_scale must be > 0")


@dataclass
class RobotFrame:
    q_hand: np.ndarray
    q_arm: np.ndarray
    object_pose: Pose


@dataclass
class RobotTrajectory:
    frames: list[RobotFrame]
    dt: float
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    def to_dict(self):
        return {
            "version": TRAJECTORY_FORMAT_VERSION,
            "dt": self.dt,
            "frames": [
                {
                    "q_hand": [float(v) for v in f.q_hand],
                    "q_arm": [float(v) for v in f.q_arm],
                    "object": f.object_pose.to_dict(),
                }
                for f in self.frames
            ],
            "metadata": self.metadata,
        }

    @staticmethod
    def from_dict(d) -> "RobotTrajectory":
        check_version(d, TRAJECTORY_FORMAT_VERSION, "robot trajectory")
        frames = [
            RobotFrame(
                q_hand=np.asarray(f["q_hand"], dtype=float),
                q_arm=np.asarray(f["q_arm"], dtype=float),
                object_pose=Pose.from_dict(f["object"]),
            )
            for f in d["frames"]
        ]
        return RobotTrajectory(frames, float(d["dt"]), d.get("metadata", {}))

    def save(self, path):
        save_json(path, self.to_dict())

    @staticmethod
    def load(path) -> "RobotTrajectory":
        return RobotTrajectory.from_dict(load_json(path))


def load_human_trajectory(path) -> tuple[list[HumanFrame], float]:
    """Read the human trajectory file: {version, dt, frames:[{fingertips,
    wrist, object}]}. Returns (frames, dt) with time = k * dt."""
    d = load_json(path)
    check_version(d, TRAJECTORY_FORMAT_VERSION, "human trajectory")
    dt = float(d["dt"])
    if dt <= 0:
        raise ValueError("dt must be > 0")
    frames = [
        HumanFrame(
            fingertips=np.asarray(f["fingertips"], dtype=float),
            wrist_pose=Pose.from_dict(f["wrist"]),
            object_pose=Pose.from_dict(f["object"]),
            time=k * dt,
        )
        for k, f in enumerate(d["frames"])
    ]
    return frames, dt


def save_human_trajectory(path, frames: list[HumanFrame], dt: float):
    save_json(
        path,
        {
            "version": TRAJECTORY_FORMAT_VERSION,
            "dt": dt,
            "frames": [
                {
                    "fingertips": [[float(v) for v in p] for p in f.fingertips],
                    "wrist": f.wrist_pose.to_dict(),
                    "object": f.object_pose.to_dict(),
                }
                for f in frames
            ],
        },
    )


# -- per-frame fingertip fit ----------------------------------------------


def _objective(chain, tips, targets, q, q_prev, beta):
    resid = point_positions(chain, q, tips) - targets
    dq = q - q_prev
    return float(np.sum(resid * resid)) + beta * float(dq @ dq)


def _objective_grad_gn(chain, tips, targets, q, q_prev, beta):
    """Objective value, half-gradient, and the Gauss-Newton normal matrix."""
    pts, jacs = point_jacobians(chain, q, tips)
    resid = pts - targets  # (n, 3)
    dq = q - q_prev
    value = float(np.sum(resid * resid)) + beta * float(dq @ dq)
    half_grad = np.einsum("nd,ndj->j", resid, jacs) + beta * dq
    jtj = np.einsum("ndi,ndj->ij", jacs, jacs)
    return value, half_grad, jtj


def _projected_descent(chain, tips, targets, q0, q_prev, params):
    """Projected Gauss-Newton with Levenberg damping and backtracking.

    Plain projected gradient descent crawls along the ill-conditioned
    valleys of fingertip objectives (curvature ~ link_length^2), so descent
    directions come from the damped normal equations instead; projection
    onto the joint box plus a backtracking line search keep every accepted
    step feasible and non-increasing.
    """
    beta = params.beta_smooth
    dof = chain.dof
    eye = np.eye(dof)
    q = chain.clamp(q0)
    value, half_grad, jtj = _objective_grad_gn(chain, tips, targets, q, q_prev, beta)
    lam = 1e-8
    for _ in range(params.max_iters):
        if value < 1e-18:
            break
        # first-order stationarity on the box: the projected gradient vanishes
        if float(np.linalg.norm(q - chain.clamp(q - half_grad))) < 1e-11:
            break
        direction = -np.linalg.solve(jtj + (beta + lam) * eye, half_grad)
        accepted = False
        step = 1.0
        while step > 1e-12:
            q_new = chain.clamp(q + step * direction)
            if not np.any(q_new != q):  # direction points out of the box
                break
            v_new = _objective(chain, tips, targets, q_new, q_prev, beta)
            if v_new < value and v_new <= value + 1e-6 * float(half_grad @ (q_new - q)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # damp harder; at large lambda this degenerates to a projected
            # gradient step, which always makes progress off stationarity
            lam *= 10.0
            if lam > 1e8:
                break
            continue
        moved = float(np.linalg.norm(q_new - q))
        q = q_new
        value, half_grad, jtj = _objective_grad_gn(chain, tips, targets, q, q_prev, beta)
        lam = max(lam * 0.3, 1e-10)
        if moved < params.step_tol:
            break
    return q, value


def retarget_frame(chain_hand: KinematicChain, targets, q_prev, params: RetargetParams):
    """Fit hand joints to fingertip targets (wrist-frame positions).

    Minimizes sum_i ||x_i - f_i(q)||^2 + beta * ||q - q_prev||^2 over the
    joint box. A small set of deterministic restarts (warm start, mid-range,
    both limit corners) guards against bad local minima; the warm start is
    always among the candidates so the result never scores worse than q_prev.

    Returns (q, residual) with residual the final objective value.
    """
    targets = np.asarray(targets, dtype=float)
    tips = chain_hand.fingertips
    if targets.shape != (len(tips), 3):
        raise ValueError(
            f"expected {len(tips)} fingertip targets (3-vectors), got shape {targets.shape}"
        )
    if not np.all(np.isfinite(targets)):
        raise ValueError("fingertip targets contain non-finite values")
    q_prev = chain_hand.clamp(chain_hand.check_q(q_prev))

    best_q, best_v = _projected_descent(chain_hand, tips, targets, q_prev, q_prev, params)
    tip_resid = _objective(chain_hand, tips, targets, best_q, best_q, 0.0)
    if tip_resid > params.restart_above:  # poor warm-start fit: try other basins
        for q0 in (chain_hand.mid_q(), chain_hand.lower.copy(), chain_hand.upper.copy()):
            q, v = _projected_descent(chain_hand, tips, targets, q0, q_prev, params)
            if v < best_v:
                best_q, best_v = q, v
    return best_q, best_v


def retarget_trajectory(
    chain_hand: KinematicChain,
    chain_arm: KinematicChain,
    human: list[HumanFrame],
    params: RetargetParams,
    mount: Pose | None = None,
    dt: float = 1.0 / 30.0,
    clik_params: ClikParams | None = None,
) -> RobotTrajectory:
    """Retarget a full human trajectory to hand + arm joint sequences.

    Hand targets are fingertip positions in the wrist frame (scaled by
    ``fingertip_scale``); the arm tracks the wrist pose mapped through the
    inverse of the hand ``mount`` transform (arm tool -> hand root). Frame 0
    is seeded at mid-range joints, later frames warm-start from the previous
    solution. Object poses are copied through.

    Result metadata reports IK health; more than 20% non-converged frames
    flags ``degraded=True``.
    """
    if not human:
        raise ValueError("empty human trajectory")
    mount = mount or Pose.identity()
    mount_inv = mount.inverse()
    clik_params = clik_params or ClikParams(tol_pos=1e-5, tol_rot=1e-4)

    q_hand = chain_hand.mid_q()
    q_arm = chain_arm.mid_q()
    # frame 0 has no predecessor: fit fingertips only, seeded at mid-range
    first_params = replace(params, beta_smooth=0.0)
    frames = []
    clik_failures = 0
    residuals = []
    for k, hf in enumerate(human):
        try:
            wrist_inv = hf.wrist_pose.inverse()
            local = np.stack([wrist_inv.transform_point(p) for p in hf.fingertips])
            local *= params.fingertip_scale
            q_hand, resid = retarget_frame(
                chain_hand, local, q_hand, params if k else first_params
            )
            residuals.append(resid)

            arm_target = hf.wrist_pose.compose(mount_inv)
            sol = clik_solve(chain_arm, arm_target, chain_arm.palm, q_arm, clik_params)
            q_arm = sol.q
            if not sol.converged:
                clik_failures += 1
        except ValueError as e:
            raise ValueError(f"frame {k}: {e}") from e
        frames.append(RobotFrame(q_hand=q_hand.copy(), q_arm=q_arm.copy(),
                                 object_pose=hf.object_pose.copy()))

    degraded = clik_failures > 0.2 * len(human)
    if degraded:
        log.warning("CLIK failed on %d/%d frames; trajectory quality degraded",
                    clik_failures, len(human))
    return RobotTrajectory(
        frames,
        dt,
        metadata={
            "clik_failures": clik_failures,
            "n_frames": len(human),
            "degraded": degraded,
            "mean_residual": float(np.mean(residuals)),
        },
    )


def min_jerk_smooth(
    traj: RobotTrajectory,
    window: int,
    chain_hand: KinematicChain | None = None,
    chain_arm: KinematicChain | None = None,
) -> RobotTrajectory:
    """Quintic Savitzky-Golay smoothing of both joint sequences.

    Fits a least-squares quintic per window and evaluates it at the sample
    position (edge samples use the fit of the nearest full window), so
    already-quintic data passes through unchanged. Windows of 3 or 5 samples
    are interpolated exactly by the quintic model and come back unmodified.
    Joint limits are re-clamped afterwards when chains are provided.
    """
    n = len(traj.frames)
    if window % 2 == 0 or window < 3 or window > n:
        raise ValueError(f"window must be odd, >= 3 and <= trajectory length {n}; got {window}")

    q_hand = np.stack([f.q_hand for f in traj.frames])
    q_arm = np.stack([f.q_arm for f in traj.frames])
    order = min(5, window - 1)

    def smooth(block):
        if block.shape[1] == 0:
            return block.copy()
        return savgol_filter(block, window, order, axis=0, mode="interp")

    sh = smooth(q_hand)
    sa = smooth(q_arm)
    if chain_hand is not None:
        sh = np.stack([chain_hand.clamp(row) for row in sh])
    if chain_arm is not None:
        sa = np.stack([chain_arm.clamp(row) for row in sa])

    frames = [
        RobotFrame(q_hand=sh[k], q_arm=sa[k], object_pose=traj.frames[k].object_pose.copy())
        for k in range(n)
    ]
    return RobotTrajectory(frames, traj.dt, dict(traj.metadata))
