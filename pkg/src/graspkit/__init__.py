"""Grasp-skill learning toolkit: retargeting, trajectory-guided RL rewards,
a quasi-static grasp environment, curriculum randomization, PPO training,
and language-driven skill selection."""

__version__ = "0.1.0"

from .transforms import Pose
from .kinematics import (
    ClikParams,
    KinematicChain,
    attach,
    clik_solve,
    forward_kinematics,
    jacobian,
)
from .reward import (
    FingertipState,
    ReferenceTrajectory,
    RewardConfig,
    RewardState,
    build_reference,
)
from .retarget import (
    HumanFrame,
    RetargetParams,
    RobotTrajectory,
    min_jerk_smooth,
    retarget_frame,
    retarget_trajectory,
)
from .env import GraspEnv, ObjectSpec, SceneConfig, signed_distance
from .curriculum import CurriculumConfig, CurriculumState, sample_pose
from .policy import MlpPolicy, ReplayPolicy, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, collect_rollouts, compute_gae, evaluate, ppo_update, train
from .skills import (
    MockChatClient,
    RandomChatClient,
    SceneContext,
    Skill,
    SkillLibrary,
    build_prompt,
    parse_selection,
    run_task_suite,
    select_skill,
)
