"""Forward kinematics, Jacobians, and closed-loop IK on the bundled chains.

Run: python3 demos/01_kinematics.py
"""

import numpy as np

from graspkit import ClikParams, clik_solve, forward_kinematics, jacobian
from graspkit.kinematics import frame_pose
from graspkit.fixtures import arm7_chain, planar2_chain

# A two-link planar arm: at zero angles the end sits two meters out.
planar = planar2_chain()
print("planar2 end @ q=(0,0):      ", forward_kinematics(planar, [0, 0])["end"].pos)
print("planar2 end @ q=(pi/2,0):   ", forward_kinematics(planar, [np.pi / 2, 0])["end"].pos)

# The 7-DOF arm: pick a reachable pose by forward kinematics, perturb the
# joints, and let damped-least-squares IK pull them back.
arm = arm7_chain()
rng = np.random.default_rng(3)
q_star = rng.uniform(arm.lower + 0.2, arm.upper - 0.2)
target = frame_pose(arm, q_star, "tool")
q_init = arm.clamp(q_star + rng.uniform(-0.2, 0.2, arm.dof))

result = clik_solve(arm, target, "tool", q_init, ClikParams())
print(f"\nCLIK from a 0.2 rad perturbation: converged={result.converged} "
      f"pos_err={result.pos_err:.2e} m rot_err={result.rot_err:.2e} rad "
      f"({result.iters} iterations)")

# The geometric Jacobian maps joint velocities to tool twists.
J = jacobian(arm, q_star, "tool")
print(f"Jacobian shape: {J.shape}; linear part column norms:",
      np.round(np.linalg.norm(J[:3], axis=0), 3))

# Unreachable targets do not raise; the residual tells the story.
from graspkit import Pose

bad = clik_solve(arm, Pose(np.array([5.0, 0, 0])), "tool", arm.mid_q(),
                 ClikParams(max_iters=150))
print(f"unreachable target: converged={bad.converged} residual={bad.pos_err:.2f} m")
