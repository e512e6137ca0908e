"""Human demonstration -> robot joint trajectory -> reference trajectory.

The bundled "human" demonstration was produced by forward kinematics of a
scripted robot grasp, so ground-truth joints exist and the retargeting
quality is directly measurable. Writes its outputs into ./out/.

Run: python3 demos/02_retarget_pipeline.py
"""

import os

import numpy as np

from graspkit import RetargetParams, min_jerk_smooth, retarget_trajectory
from graspkit.data import data_path
from graspkit.env import SceneConfig
from graspkit.kinematics import forward_kinematics
from graspkit.retarget import load_human_trajectory
from graspkit.reward import build_reference

os.makedirs("out", exist_ok=True)

scene = SceneConfig.load(data_path("fixture_scene.json"))
human, dt = load_human_trajectory(data_path("demo_human.json"))
print(f"loaded {len(human)} human frames (dt={dt:.3f}s)")

traj = retarget_trajectory(
    scene.hand, scene.arm, human, RetargetParams(beta_smooth=0.02),
    mount=scene.mount, dt=dt,
)
print("retarget metadata:", traj.metadata)

errs = []
for hf, f in zip(human, traj.frames):
    fk = forward_kinematics(scene.combined, np.concatenate([f.q_arm, f.q_hand]))
    tips = np.stack([fk[n].pos for n in scene.combined.fingertips])
    errs.append(np.mean(np.linalg.norm(tips - hf.fingertips, axis=1)))
print(f"fingertip tracking error: median {np.median(errs)*1000:.2f} mm, "
      f"max {np.max(errs)*1000:.2f} mm")

smoothed = min_jerk_smooth(traj, 9, scene.hand, scene.arm)
smoothed.save("out/retargeted_traj.json")
print("wrote out/retargeted_traj.json (quintic-smoothed)")

ref = build_reference(smoothed, scene.arm, scene.hand, scene.mount)
ref.save("out/reference.json")
print(f"wrote out/reference.json with T={len(ref)} fingertip-in-object states")
