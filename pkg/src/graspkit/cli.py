"""Command-line entry point.

Subcommands mirror the pipeline: ``retarget`` (human motion -> robot
trajectory), ``make-ref`` (robot trajectory -> reference states), ``train``
(PPO + curriculum), ``eval`` (checkpoint success rate), ``select``
(language-driven skill choice), ``demo`` (select + execute), ``validate``
(fixture file checking).

Exit codes: 0 success, 1 domain failure (failed episode, divergence),
2 usage or configuration errors. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .curriculum import CurriculumConfig
from .env import SceneConfig
from .kinematics import KinematicChain
from .policy import load_checkpoint
from .retarget import (
    RetargetParams,
    RobotTrajectory,
    load_human_trajectory,
    min_jerk_smooth,
    retarget_trajectory,
)
from .reward import ReferenceTrajectory, RewardConfig, build_reference
from .skills import (
    HttpChatClient,
    MockChatClient,
    RandomChatClient,
    SceneContext,
    SelectionOutOfRangeError,
    SelectionParseError,
    SkillLibrary,
    load_tasks,
    select_skill,
)
from .trainer import TrainConfig, evaluate, train, write_metrics_csv

API_KEY_ENV = "GRASPKIT_API_KEY"

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    """Carries every validation problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def _require_file(path, what):
    if not os.path.exists(path):
        raise ConfigError([f"{what} file not found: {path}"])
    return path


_CONFIG_SECTIONS = {
    "reward": RewardConfig,
    "curriculum": CurriculumConfig,
    "train": TrainConfig,
}


def load_project_config(path=None) -> dict:
    """Read the optional project config: JSON with reward / curriculum /
    train sections mirroring the module configs. Every violation is
    reported, not just the first."""
    sections = {"reward": None, "curriculum": None, "train": None}
    if path is None:
        return sections
    _require_file(path, "config")
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError([f"config {path}: invalid JSON ({e})"])
    problems = []
    for key in raw:
        if key not in _CONFIG_SECTIONS and key != "version":
            problems.append(f"config {path}: unknown section {key!r}")
    for name, cls in _CONFIG_SECTIONS.items():
        if name not in raw:
            continue
        body = dict(raw[name])
        if name == "train" and "curriculum" in body:
            body["curriculum"] = CurriculumConfig.from_dict(body["curriculum"])
        known = {f.name for f in dataclasses.fields(cls)}
        for key in body:
            if key not in known:
                problems.append(f"config section {name!r}: unknown field {key!r}")
        try:
            sections[name] = cls(**{k: v for k, v in body.items() if k in known})
        except (TypeError, ValueError) as e:
            problems.append(f"config section {name!r}: {e}")
    if problems:
        raise ConfigError(problems)
    return sections


def _scene_from_args(args) -> SceneConfig:
    return SceneConfig.load(_require_file(args.scene, "scene"))


# -- subcommands ---------------------------------------------------------


def cmd_retarget(args) -> int:
    scene = SceneConfig.load(_require_file(args.chain, "scene/chain"))
    human, dt = load_human_trajectory(_require_file(args.human, "human trajectory"))
    params = RetargetParams(beta_smooth=args.beta, fingertip_scale=args.scale)
    traj = retarget_trajectory(
        scene.hand, scene.arm, human, params, mount=scene.mount, dt=dt
    )
    if args.window > 1:
        traj = min_jerk_smooth(traj, args.window, scene.hand, scene.arm)
    traj.save(args.out)
    meta = traj.metadata
    print(
        f"retargeted {meta['n_frames']} frames; CLIK failures {meta['clik_failures']}"
        + (" (degraded)" if meta.get("degraded") else "")
    )
    print(f"wrote {args.out}")
    return EXIT_DOMAIN if meta.get("degraded") else EXIT_OK


def cmd_make_ref(args) -> int:
    scene = _scene_from_args(args)
    traj = RobotTrajectory.load(_require_file(args.traj, "robot trajectory"))
    ref = build_reference(traj, scene.arm, scene.hand, scene.mount)
    ref.save(args.out)
    print(f"wrote reference with T={len(ref)} states to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    sections = load_project_config(args.config)
    scene = _scene_from_args(args)
    ref = ReferenceTrajectory.load(_require_file(args.ref, "reference"))
    cfg = sections["train"] or TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.total_steps = args.steps
    if args.jobs is not None:
        cfg.n_envs = args.jobs
    reward_cfg = scene.reward_config(sections["reward"])
    if sections["curriculum"] is not None:
        cfg.curriculum = sections["curriculum"]
    os.makedirs(args.out, exist_ok=True)
    result = train(scene, ref, cfg, reward_cfg=reward_cfg, out_dir=args.out)
    last = result.metrics[-1] if result.metrics else {}
    print(
        f"trained {last.get('step', 0)} steps; final success rate "
        f"{last.get('success_rate', 0.0):.2f}; sigma {result.curriculum_state.sigma:.2f}"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    if result.diverged:
        print("training diverged: last good parameters checkpointed", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_eval(args) -> int:
    sections = load_project_config(args.config)
    scene = _scene_from_args(args)
    ref = ReferenceTrajectory.load(_require_file(args.ref, "reference"))
    policy, payload = load_checkpoint(_require_file(args.ckpt, "checkpoint"))
    reward_cfg = scene.reward_config(
        sections["reward"]
        or (RewardConfig.from_dict(payload["reward_config"]) if "reward_config" in payload else None)
    )
    result = evaluate(
        policy, scene, ref, args.episodes, sigma=args.sigma,
        reward_cfg=reward_cfg, curriculum_cfg=sections["curriculum"], seed=args.seed,
    )
    print(f"SR {result['success_rate']:.3f}  mean_return {result['mean_return']:.2f}")
    if args.out:
        rows = [
            {"episode": i, **rec} for i, rec in enumerate(result["episodes"])
        ]
        write_metrics_csv(args.out, rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def _make_client(args):
    if args.mock:
        return MockChatClient()
    if args.random:
        return RandomChatClient(seed=args.seed or 0)
    key = os.environ.get(API_KEY_ENV, "")
    if not args.endpoint or not key:
        raise ConfigError(
            [
                "live client needs --endpoint and the API key in "
                f"${API_KEY_ENV}; or pass --mock for the offline client"
            ]
        )
    return HttpChatClient(args.endpoint, args.model, key)


def _scene_context(args) -> SceneContext:
    if args.context:
        with open(_require_file(args.context, "scene context")) as f:
            return SceneContext.from_dict(json.load(f))
    return SceneContext(
        object_name=args.object, orientation=args.orientation,
        summary=f"a {args.orientation} {args.object} on the table",
    )


def cmd_select(args) -> int:
    library = SkillLibrary.load(_require_file(args.library, "skill library"))
    scene = _scene_context(args)
    client = _make_client(args)
    try:
        result = select_skill(client, scene, args.instruction, library, retries=args.retries)
    except (SelectionParseError, SelectionOutOfRangeError) as e:
        print(f"selection failed: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"skill {result.skill_id}")
    print(result.rationale)
    return EXIT_OK


def cmd_demo(args) -> int:
    library = SkillLibrary.load(_require_file(args.library, "skill library"))
    scene_ctx = _scene_context(args)
    client = _make_client(args)
    try:
        result = select_skill(client, scene_ctx, args.instruction, library, retries=args.retries)
    except (SelectionParseError, SelectionOutOfRangeError) as e:
        print(f"selection failed: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    skill = library.get(result.skill_id)
    print(f"selected skill {skill.id}: {skill.description}")
    print(f"rationale: {result.rationale}")
    if args.dry_run:
        return EXIT_OK

    ckpt_path = skill.checkpoint_ref
    if not os.path.isabs(ckpt_path):
        ckpt_path = os.path.join(os.path.dirname(os.path.abspath(args.library)), ckpt_path)
    if not os.path.exists(ckpt_path):
        print(
            f"checkpoint for skill {skill.id} not found: {ckpt_path}\n"
            "train one with `graspkit train` or build a replay checkpoint "
            "from a retargeted demonstration (see demos/).",
            file=sys.stderr,
        )
        return EXIT_USAGE
    policy, _ = load_checkpoint(ckpt_path)
    scene = _scene_from_args(args)
    ref = ReferenceTrajectory.load(_require_file(args.ref, "reference"))
    result_eval = evaluate(policy, scene, ref, args.episodes, sigma=args.sigma, seed=args.seed or 0)
    sr = result_eval["success_rate"]
    print(f"executed {args.episodes} episode(s): SR {sr:.2f}")
    return EXIT_OK if sr > 0 else EXIT_DOMAIN


_VALIDATORS = {
    "chain": KinematicChain.load,
    "scene": SceneConfig.load,
    "robot-trajectory": RobotTrajectory.load,
    "human-trajectory": load_human_trajectory,
    "reference": ReferenceTrajectory.load,
    "library": SkillLibrary.load,
    "tasks": load_tasks,
    "checkpoint": load_checkpoint,
}


def _sniff_kind(payload) -> str | None:
    if isinstance(payload, list):
        return "library"
    keys = set(payload)
    if "joints" in keys:
        return "chain"
    if "object" in keys and "chains" in keys:
        return "scene"
    if "states" in keys:
        return "reference"
    if "skills" in keys:
        return "library"
    if "tasks" in keys:
        return "tasks"
    if "kind" in keys and "policy" in keys:
        return "checkpoint"
    if "frames" in keys:
        first = payload["frames"][0] if payload["frames"] else {}
        return "human-trajectory" if "fingertips" in first else "robot-trajectory"
    return None


def cmd_validate(args) -> int:
    failures = 0
    for path in args.files:
        try:
            with open(path) as f:
                payload = json.load(f)
            kind = args.kind or _sniff_kind(payload)
            if kind is None:
                raise ValueError("unrecognized file layout")
            _VALIDATORS[kind](path)
            print(f"{path}: OK ({kind})")
        except FileNotFoundError:
            print(f"{path}: missing file", file=sys.stderr)
            failures += 1
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            print(f"{path}: INVALID ({e})", file=sys.stderr)
            failures += 1
    return EXIT_USAGE if failures else EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graspkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("retarget", help="human trajectory -> robot joint trajectory")
    r.add_argument("--chain", required=True,
                   help="scene fixture bundling the arm/hand chains and mount")
    r.add_argument("--human", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--beta", type=float, default=0.05, help="temporal smoothness weight")
    r.add_argument("--window", type=int, default=9,
                   help="quintic smoothing window (odd; 1 disables)")
    r.add_argument("--scale", type=float, default=1.0, help="fingertip scale about the wrist")
    r.set_defaults(func=cmd_retarget)

    m = sub.add_parser("make-ref", help="robot trajectory -> reference trajectory")
    m.add_argument("--scene", required=True)
    m.add_argument("--traj", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_make_ref)

    t = sub.add_parser("train", help="PPO training with pose curriculum")
    t.add_argument("--scene", required=True)
    t.add_argument("--ref", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--jobs", type=int, default=None, help="parallel environment instances")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--scene", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--sigma", type=float, default=0.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--config", default=None)
    e.add_argument("--out", default=None, help="per-episode CSV")
    e.set_defaults(func=cmd_eval)

    def add_selection_args(sp, with_exec):
        sp.add_argument("--library", required=True)
        sp.add_argument("--instruction", default="")
        sp.add_argument("--context", default=None, help="scene context JSON file")
        sp.add_argument("--object", default="bottle")
        sp.add_argument("--orientation", default="standing", choices=["standing", "lying"])
        sp.add_argument("--mock", action="store_true", help="offline rule-based client")
        sp.add_argument("--random", action="store_true", help="random-selection baseline")
        sp.add_argument("--endpoint", default=None, help="live chat-completions URL")
        sp.add_argument("--model", default="gpt-4")
        sp.add_argument("--retries", type=int, default=2)
        sp.add_argument("--seed", type=int, default=None)
        if with_exec:
            sp.add_argument("--scene", required=True)
            sp.add_argument("--ref", required=True)
            sp.add_argument("--episodes", type=int, default=1)
            sp.add_argument("--sigma", type=float, default=0.0)
            sp.add_argument("--dry-run", action="store_true")

    s = sub.add_parser("select", help="pick a skill for an instruction")
    add_selection_args(s, with_exec=False)
    s.set_defaults(func=cmd_select)

    d = sub.add_parser("demo", help="select a skill and execute it")
    add_selection_args(d, with_exec=True)
    d.set_defaults(func=cmd_demo)

    v = sub.add_parser("validate", help="check fixture files against their schemas")
    v.add_argument("files", nargs="+")
    v.add_argument("--kind", choices=sorted(_VALIDATORS), default=None)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        for line in e.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
