"""Reference fixtures: test chains, grasp scenes, and scripted demonstrations.

Two robot setups ship with the package:

- a planar 3-DOF arm with a rigid five-point claw (the "toy" scene), small
  enough for desk-scale reinforcement learning;
- a 7-DOF arm carrying a 10-DOF five-finger hand (the "fixture" scene),
  loosely modeled on an xArm7 with a compact prosthetic-style hand.

``scripted_grasp_demo`` turns palm waypoints + a finger-closing schedule
into a joint trajectory whose per-frame deltas fit the environment's
action scale, then replays it in the environment to record consistent
object motion. The resulting trajectory is the source of reference
trajectories, synthetic "human" demonstrations, and replay checkpoints.

The hand is anchored to the arm by a fixed mount transform (arm tool
frame -> hand root), stored in the scene file; the same transform maps
recorded wrist poses to arm IK targets during retargeting.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .env import CYLINDER, ObjectSpec, SceneConfig, reset as env_reset, step as env_step
from .kinematics import (
    ClikParams,
    FixedFrame,
    Joint,
    KinematicChain,
    clik_solve,
    forward_kinematics,
)
from .retarget import HumanFrame, RobotFrame, RobotTrajectory
from .reward import ReferenceTrajectory, build_reference
from .transforms import Pose

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

# palm orientation used by both demos: palm z -> world x, palm y -> world z
PALM_FACING_X = np.array([0.5, 0.5, 0.5, 0.5])


def _pose(pos, quat=None):
    return Pose(np.asarray(pos, dtype=float), quat)


# -- chains -------------------------------------------------------------------


def planar2_chain() -> KinematicChain:
    """Two unit links rotating about z; end frame one meter past the elbow."""
    joints = [
        Joint("j1", "revolute", Z, Pose.identity(), -math.pi, math.pi, -1),
        Joint("j2", "revolute", Z, _pose([1, 0, 0]), -math.pi, math.pi, 0),
    ]
    frames = [FixedFrame("end", 1, _pose([1, 0, 0]))]
    return KinematicChain("planar2", joints, frames, fingertips=[], palm="end")


def finger2_chain() -> KinematicChain:
    """Small 2-DOF planar finger used by the grid-search retargeting tests.

    The elbow range excludes the negative branch so reachable targets have
    a unique inverse-kinematics solution.
    """
    joints = [
        Joint("f1", "revolute", Z, Pose.identity(), -1.2, 1.2, -1),
        Joint("f2", "revolute", Z, _pose([0.05, 0, 0]), 0.1, 2.1, 0),
    ]
    frames = [FixedFrame("tip", 1, _pose([0.04, 0, 0]))]
    return KinematicChain("finger2", joints, frames, fingertips=["tip"], palm=None)


def toy_arm_chain() -> KinematicChain:
    """Planar 3-DOF arm (all joints about +y, motion in the xz plane),
    shoulder 0.5 m above the table."""
    joints = [
        Joint("shoulder", "revolute", Y, _pose([0, 0, 0.5]), -3.0, 3.0, -1),
        Joint("elbow", "revolute", Y, _pose([0.35, 0, 0]), -3.0, 3.0, 0),
        Joint("wrist", "revolute", Y, _pose([0.35, 0, 0]), -3.0, 3.0, 1),
    ]
    frames = [FixedFrame("tool", 2, _pose([0.25, 0, 0]))]
    return KinematicChain("toy_arm", joints, frames, fingertips=[], palm="tool")


def toy_claw_chain() -> KinematicChain:
    """Rigid five-point claw (no actuated joints): thumb 5 cm ahead of the
    palm along +x, four fingers 5 cm behind, straddling a cylinder that
    sits on the palm origin."""
    offsets = {
        "tip_thumb": [0.05, 0.0, 0.0],
        "tip_index": [-0.05, 0.0, 0.012],
        "tip_middle": [-0.05, 0.0, -0.012],
        "tip_ring": [-0.05, 0.004, 0.024],
        "tip_pinky": [-0.05, -0.004, -0.024],
    }
    frames = [FixedFrame("palm", -1, Pose.identity())]
    frames += [FixedFrame(name, -1, _pose(off)) for name, off in offsets.items()]
    return KinematicChain(
        "toy_claw",
        joints=[],
        frames=frames,
        fingertips=["tip_thumb", "tip_index", "tip_middle", "tip_ring", "tip_pinky"],
        palm="palm",
    )


def arm7_chain() -> KinematicChain:
    """7-DOF serial arm with alternating z/y axes, roughly xArm7-sized."""
    spec = [
        ("a1", Z, [0, 0, 0.267], (-3.0, 3.0)),
        ("a2", Y, [0, 0, 0], (-2.0, 2.0)),
        ("a3", Z, [0, 0, 0.29], (-3.0, 3.0)),
        ("a4", Y, [0.05, 0, 0.05], (-2.2, 2.2)),
        ("a5", Z, [0, 0, 0.34], (-3.0, 3.0)),
        ("a6", Y, [0.08, 0, 0], (-1.8, 1.8)),
        ("a7", Z, [0, 0, 0.11], (-3.0, 3.0)),
    ]
    joints = [
        Joint(name, "revolute", axis, _pose(origin), lo, hi, i - 1)
        for i, (name, axis, origin, (lo, hi)) in enumerate(spec)
    ]
    frames = [FixedFrame("tool", 6, _pose([0, 0, 0.10]))]
    return KinematicChain("arm7", joints, frames, fingertips=[], palm="tool")


def hand10_chain() -> KinematicChain:
    """Compact 10-DOF hand: five 2-joint fingers on a palm facing +z.

    Fingers sit at local x = +0.05 and curl toward -x; the thumb sits at
    x = -0.05 and curls toward +x, so closing wraps both sides of an
    object held in front of the palm. Finger spread runs along local y.
    """
    l1, l2 = 0.035, 0.03
    tl1, tl2 = 0.03, 0.028
    joints = []
    frames = [FixedFrame("palm", -1, Pose.identity())]
    fingertips = ["tip_thumb"]

    joints.append(Joint("thumb_mcp", "revolute", Y, _pose([-0.05, 0.0, 0.03]), 0.0, 1.4, -1))
    joints.append(Joint("thumb_pip", "revolute", Y, _pose([0, 0, tl1]), 0.0, 1.4, 0))
    frames.append(FixedFrame("tip_thumb", 1, _pose([0, 0, tl2])))

    spread = [0.027, 0.009, -0.009, -0.027]
    for i, (fname, fy) in enumerate(zip(["index", "middle", "ring", "pinky"], spread)):
        base = 2 + 2 * i
        joints.append(
            Joint(f"{fname}_mcp", "revolute", -Y, _pose([0.05, fy, 0.03]), 0.0, 1.4, -1)
        )
        joints.append(Joint(f"{fname}_pip", "revolute", -Y, _pose([0, 0, l1]), 0.0, 1.4, base))
        frames.append(FixedFrame(f"tip_{fname}", base + 1, _pose([0, 0, l2])))
        fingertips.append(f"tip_{fname}")

    return KinematicChain("hand10", joints, frames, fingertips=fingertips, palm="palm")


# -- scenes -------------------------------------------------------------------

TOY_GRASP_CURL = None  # the claw has no joints

FIXTURE_OPEN_Q = np.full(10, 0.1)
FIXTURE_CLOSED_Q = np.full(10, 0.9)


def _base_toy_scene() -> SceneConfig:
    return SceneConfig(
        arm=toy_arm_chain(),
        hand=toy_claw_chain(),
        mount=Pose.identity(),
        obj=ObjectSpec(CYLINDER, (0.05, 0.16)),
        init_pose=_pose([0.45, 0, 0.08]),
        table_height=0.0,
        horizon=80,
        action_scale=0.05,
        contact_tol=0.015,
        target_height=0.20,
        table_bounds=((0.2, 0.7), (-0.2, 0.2)),
        name="toy_scene",
    )


def _base_fixture_scene() -> SceneConfig:
    return SceneConfig(
        arm=arm7_chain(),
        hand=hand10_chain(),
        mount=_pose([0, 0, 0.04]),
        obj=ObjectSpec(CYLINDER, (0.025, 0.22)),
        init_pose=_pose([0.65, 0, 0.11]),
        table_height=0.0,
        horizon=80,
        action_scale=0.05,
        contact_tol=0.015,
        target_height=0.20,
        table_bounds=((0.45, 0.85), (-0.2, 0.2)),
        name="fixture_scene",
    )


# -- scripted demonstration -----------------------------------------------


class DemoError(RuntimeError):
    pass


def _solve_arm(scene: SceneConfig, palm_pose: Pose, q_seed, params=None) -> np.ndarray:
    target = palm_pose.compose(scene.mount.inverse())
    params = params or ClikParams(max_iters=1000, tol_pos=1e-7, tol_rot=1e-6)
    sol = clik_solve(scene.arm, target, scene.arm.palm, q_seed, params)
    if sol.converged:
        return sol.q
    raise DemoError(
        f"IK failed for palm waypoint {palm_pose}: pos_err={sol.pos_err:.2e}"
    )


def _grasp_candidates(scene: SceneConfig, palm_pose: Pose, restarts=80):
    """Yield converged IK solutions for the grasp pose lazily: warm seed
    first, then deterministic random restarts. Different solutions are
    different branches to try for path continuation."""
    target = palm_pose.compose(scene.mount.inverse())
    params = ClikParams(max_iters=1000, tol_pos=1e-7, tol_rot=1e-6)
    seen = []

    def consider(q0):
        sol = clik_solve(scene.arm, target, scene.arm.palm, q0, params)
        if sol.converged and not any(np.allclose(sol.q, q, atol=1e-3) for q in seen):
            seen.append(sol.q)
            return sol.q
        return None

    q = consider(_demo_ik_seed(scene.arm))
    if q is not None:
        yield q
    rng = np.random.default_rng(7)
    for _ in range(restarts):
        q = consider(rng.uniform(scene.arm.lower, scene.arm.upper))
        if q is not None:
            yield q
    if not seen:
        raise DemoError(f"grasp palm pose {palm_pose} is unreachable for the arm")


def _continuation(scene, palm_from: Pose, palm_to: Pose, q_start, step, limit):
    """Warm-started IK continuation along a straight palm path.

    Returns the joint configurations after ``q_start`` (one per emitted
    frame), bisecting palm steps whenever the joint delta would exceed
    ``limit``. Staying on one IK branch is guaranteed by construction.
    """
    out = []
    q_prev = np.asarray(q_start, dtype=float)

    def emit(pose_from, pose_to, depth=0):
        nonlocal q_prev
        q_new = _solve_arm(scene, pose_to, q_prev)
        if np.max(np.abs(q_new - q_prev)) > limit:
            if depth >= 12:
                raise DemoError("cannot keep joint deltas under the action scale")
            mid = Pose(0.5 * (pose_from.pos + pose_to.pos), pose_to.quat)
            emit(pose_from, mid, depth + 1)
            emit(mid, pose_to, depth + 1)
            return
        q_prev = q_new
        out.append(q_new)

    total = float(np.linalg.norm(palm_to.pos - palm_from.pos))
    n = max(1, math.ceil(total / step))
    prev = palm_from
    for i in range(1, n + 1):
        alpha = i / n
        target = Pose((1 - alpha) * palm_from.pos + alpha * palm_to.pos, palm_to.quat)
        emit(prev, target)
        prev = target
    return out


def _replay_q_in_env(scene: SceneConfig, q_frames):
    """Drive the environment along exact joint targets; returns per-frame
    object poses and contact info, truncated at episode end."""
    dummy = ReferenceTrajectory(
        np.zeros((1, 5, 3)), np.broadcast_to([1.0, 0, 0, 0], (1, 5, 4)).copy()
    )
    reward_cfg = scene.reward_config()
    state = env_reset(scene)
    na = scene.arm.dof
    q0 = np.concatenate([q_frames[0][0], q_frames[0][1]])
    if not np.allclose(np.concatenate([state.q_arm, state.q_hand]), q0, atol=1e-9):
        raise DemoError("demo must start at the scene home configuration")

    object_poses = [state.object_pose.copy()]
    contact_ok = [False]
    attach_frame = None
    success_frame = None
    kept = 1
    for q_arm, q_hand in q_frames[1:]:
        q_target = np.concatenate([q_arm, q_hand])
        q_now = np.concatenate([state.q_arm, state.q_hand])
        action = (q_target - q_now) / scene.action_scale
        if np.max(np.abs(action)) > 1.0 + 1e-9:
            raise DemoError("frame-to-frame joint delta exceeds the action scale")
        state, _, _, done, info = env_step(scene, state, np.clip(action, -1, 1), dummy, reward_cfg)
        object_poses.append(state.object_pose.copy())
        contact_ok.append(bool(info["r_contact"] > 0))
        if attach_frame is None and info["attached"]:
            attach_frame = kept
        kept += 1
        if done:
            success_frame = kept - 1 if info["success"] else None
            break
    return object_poses, contact_ok, attach_frame, success_frame, kept


def scripted_grasp_demo(
    base_scene: SceneConfig,
    start_palm: Pose,
    grasp_palm: Pose,
    lift: float,
    open_q=None,
    closed_q=None,
    step: float = 0.012,
    hold: int = 3,
    dt: float = 1.0 / 30.0,
):
    """Build a grasp demonstration: approach, close, hold, lift.

    Returns (scene, trajectory, meta): the scene is ``base_scene`` with its
    home configuration pinned to the demo's first frame, and the trajectory
    carries environment-consistent object poses (the object starts moving
    at the attach frame). meta records grasp/attach/success frame indices.
    """
    scene = base_scene
    limit = 0.9 * scene.action_scale
    open_q = scene.hand.clamp(open_q if open_q is not None else scene.hand.mid_q())
    closed_q = scene.hand.clamp(closed_q if closed_q is not None else scene.hand.mid_q())

    # solve the grasp pose first (hardest), then walk outward to the start
    # and reverse: the approach stays on one IK branch by construction.
    # Several grasp solutions are tried until one branch covers the whole path.
    lifted = Pose(grasp_palm.pos + np.array([0, 0, lift]), grasp_palm.quat)
    last_err = None
    q_grasp = approach = lift_qs = None
    for candidate in _grasp_candidates(scene, grasp_palm):
        try:
            outward = _continuation(scene, grasp_palm, start_palm, candidate, step, limit)
            lift_try = _continuation(scene, grasp_palm, lifted, candidate, step, limit)
        except DemoError as e:
            last_err = e
            continue
        q_grasp = candidate
        approach = [candidate] + outward
        approach.reverse()  # start ... grasp
        lift_qs = lift_try
        break
    if q_grasp is None:
        raise DemoError(f"no IK branch covers the demo path: {last_err}")
    q0 = approach[0]

    frames = [(q, open_q.copy()) for q in approach]

    # close the hand in place
    dq = closed_q - open_q
    n_close = max(1, math.ceil(np.max(np.abs(dq)) / limit)) if scene.hand.dof else 0
    for i in range(1, n_close + 1):
        frames.append((frames[-1][0], open_q + dq * (i / n_close)))

    for _ in range(hold):
        frames.append((frames[-1][0], frames[-1][1].copy()))

    for q in lift_qs:
        frames.append((q, frames[-1][1].copy()))

    # pin the scene home to the demo start, then replay for object motion
    scene = SceneConfig(
        arm=scene.arm,
        hand=scene.hand,
        mount=scene.mount,
        obj=scene.obj,
        init_pose=scene.init_pose,
        table_height=scene.table_height,
        horizon=scene.horizon,
        action_scale=scene.action_scale,
        contact_tol=scene.contact_tol,
        target_height=scene.target_height,
        table_bounds=scene.table_bounds,
        home_q_arm=q0,
        home_q_hand=open_q,
        name=scene.name,
    )
    if len(frames) > scene.horizon:
        raise DemoError(f"demo needs {len(frames)} frames, horizon is {scene.horizon}")

    object_poses, contact_ok, attach_frame, success_frame, kept = _replay_q_in_env(
        scene, frames
    )
    if success_frame is None:
        raise DemoError("scripted demonstration failed to lift the object")

    robot_frames = [
        RobotFrame(q_hand=frames[k][1].copy(), q_arm=frames[k][0].copy(),
                   object_pose=object_poses[k])
        for k in range(kept)
    ]
    traj = RobotTrajectory(robot_frames, dt, metadata={"scripted": True})
    grasp_frame = contact_ok.index(True) if True in contact_ok else None
    meta = {
        "grasp_frame": grasp_frame,
        "attach_frame": attach_frame,
        "success_frame": success_frame,
        "n_frames": kept,
    }
    return scene, traj, meta


def _demo_ik_seed(arm: KinematicChain) -> np.ndarray:
    """A mildly bent elbow configuration; avoids starting IK at the
    straight-up singularity of mid-range zeros."""
    seed = arm.mid_q()
    bend = np.resize([0.3, 0.5, -0.4], arm.dof)
    return arm.clamp(seed + bend)


def synthetic_human_frames(scene: SceneConfig, traj: RobotTrajectory) -> list[HumanFrame]:
    """Forward-kinematics "human" demonstration: wrist = palm pose,
    fingertips = robot fingertip positions, per frame. Ground-truth joints
    therefore exist for every frame."""
    combined = scene.combined
    out = []
    for k, f in enumerate(traj.frames):
        fk = forward_kinematics(combined, np.concatenate([f.q_arm, f.q_hand]))
        tips = np.stack([fk[name].pos for name in combined.fingertips])
        out.append(
            HumanFrame(
                fingertips=tips,
                wrist_pose=fk[combined.palm],
                object_pose=f.object_pose.copy(),
                time=k * traj.dt,
            )
        )
    return out


# -- bundled demos ----------------------------------------------------------


@lru_cache(maxsize=1)
def toy_bundle():
    """(scene, demo trajectory, reference, meta) for the planar toy scene."""
    base = _base_toy_scene()
    start = Pose(np.array([0.20, 0.0, 0.08]))
    grasp = Pose(np.array([0.45, 0.0, 0.08]))
    scene, traj, meta = scripted_grasp_demo(base, start, grasp, lift=0.25)
    ref = build_reference(traj, scene.arm, scene.hand, scene.mount)
    return scene, traj, ref, meta


def toy_train_setup():
    """Training configuration used by the desk-scale benchmark: reward
    constants and curriculum tuned for the toy scene.

    The cylinder is rotation-symmetric, so the pose curriculum randomizes x
    only plus the z-rotation (which still perturbs the object frame the
    reference states live in).
    """
    from .reward import RewardConfig
    from .curriculum import CurriculumConfig
    from .trainer import TrainConfig

    scene, traj, ref, meta = toy_bundle()
    reward_cfg = scene.reward_config(RewardConfig(success_bonus=100.0, epsilon=0.05))
    curriculum = CurriculumConfig(zeta=0.8, sigma_step=0.02, p_max=(0.05, 0.0))
    cfg = TrainConfig(
        total_steps=200_000,
        pretrain_steps=60_000,
        n_envs=8,
        batch_episodes=16,
        hidden=64,
        lr=3e-4,
        gamma=0.98,
        reward_scale=0.02,
        log_std_init=-1.5,
        curriculum=curriculum,
    )
    return scene, ref, cfg, reward_cfg


def _fixture_demo(grasp_height: float):
    base = _base_fixture_scene()
    standoff = 0.0691  # palm-to-axis distance with tips on the surface at full curl
    axis_x = float(base.init_pose.pos[0])
    # approach straight down: fingertips straddle the cylinder in y and stay
    # clear of the surface until the closing phase
    start = Pose(np.array([axis_x - standoff, 0.0, 0.40]), PALM_FACING_X)
    grasp = Pose(np.array([axis_x - standoff, 0.0, grasp_height]), PALM_FACING_X)
    scene, traj, meta = scripted_grasp_demo(
        base, start, grasp, lift=0.25, open_q=FIXTURE_OPEN_Q, closed_q=FIXTURE_CLOSED_Q
    )
    ref = build_reference(traj, scene.arm, scene.hand, scene.mount)
    human = synthetic_human_frames(scene, traj)
    return scene, traj, ref, human, meta


@lru_cache(maxsize=1)
def fixture_bundle():
    """(scene, demo trajectory, reference, human frames, meta) for the
    7+10-DOF fixture scene: the canonical low ("bottom") grasp."""
    return _fixture_demo(grasp_height=0.08)


@lru_cache(maxsize=1)
def fixture_bundle_upper():
    """Same scene, grasping the upper middle of the bottle."""
    return _fixture_demo(grasp_height=0.15)


# -- shipped data -------------------------------------------------------------


def default_skills():
    """The three bleach-bottle-style skills. Checkpoint paths are relative
    to wherever the library file lives; build them with the demo scripts."""
    from .skills import Skill, SkillLibrary

    return SkillLibrary(
        [
            Skill(1, "Grasp the bottom of a standing bottle and lift it.",
                  "checkpoints/skill_1.json", "standing bottle"),
            Skill(2, "Grasp the upper middle of a standing bottle and lift it.",
                  "checkpoints/skill_2.json", "standing bottle"),
            Skill(3, "Grasp a lying bottle, rotate it upright, and lift it.",
                  "checkpoints/skill_3.json", "lying bottle"),
        ]
    )


def default_tasks():
    """Five selection tasks over object pose x preference, including the
    ambiguous "top" request and the infeasible "bottom of a lying bottle"."""
    from .skills import SceneContext, Task

    standing_pose = _base_fixture_scene().init_pose
    lying_pose = Pose(
        np.array([0.65, 0.0, 0.025]),
        np.array([math.cos(math.pi / 4), 0.0, math.sin(math.pi / 4), 0.0]),
    )

    def scene(orient, pose):
        return SceneContext(
            object_name="bleach bottle",
            orientation=orient,
            summary=f"a {orient} bleach bottle on the table",
            pose=pose,
        )

    return [
        Task("T1", scene("standing", standing_pose), ""),
        Task("T2", scene("standing", standing_pose), "grasp the bottom"),
        Task("T3", scene("standing", standing_pose), "grasp the top"),
        Task("T4", scene("lying", lying_pose), ""),
        Task("T5", scene("lying", lying_pose), "grasp the bottom"),
    ]


def write_package_data(out_dir):
    """Regenerate every JSON fixture shipped under graspkit/data."""
    import os

    from .retarget import save_human_trajectory
    from .env import save_scene
    from .serialize import save_json

    os.makedirs(out_dir, exist_ok=True)
    for chain in (planar2_chain(), finger2_chain(), toy_arm_chain(),
                  toy_claw_chain(), arm7_chain(), hand10_chain()):
        chain.save(os.path.join(out_dir, f"{chain.name}.json"))

    toy_scene, toy_traj, toy_ref, _ = toy_bundle()
    save_scene(os.path.join(out_dir, "toy_scene.json"), toy_scene,
               "toy_arm.json", "toy_claw.json")
    toy_traj.save(os.path.join(out_dir, "toy_demo_traj.json"))
    toy_ref.save(os.path.join(out_dir, "toy_ref.json"))

    fx_scene, fx_traj, fx_ref, fx_human, _ = fixture_bundle()
    save_scene(os.path.join(out_dir, "fixture_scene.json"), fx_scene,
               "arm7.json", "hand10.json")
    fx_traj.save(os.path.join(out_dir, "fixture_demo_traj.json"))
    fx_ref.save(os.path.join(out_dir, "fixture_ref.json"))
    save_human_trajectory(os.path.join(out_dir, "demo_human.json"), fx_human, fx_traj.dt)

    default_skills().save(os.path.join(out_dir, "library.json"))
    save_json(
        os.path.join(out_dir, "tasks.json"),
        {
            "version": 1,
            "tasks": [
                {
                    "name": t.name,
                    "instruction": t.instruction,
                    "scene": {
                        "object": t.scene.object_name,
                        "orientation": t.scene.orientation,
                        "summary": t.scene.summary,
                        "pose": t.scene.pose.to_dict() if t.scene.pose else None,
                    },
                }
                for t in default_tasks()
            ],
        },
    )
