import json

import numpy as np
import pytest

from conftest import demo_q_matrix
from graspkit.cli import main
from graspkit.data import data_path
from graspkit.policy import ReplayPolicy, save_checkpoint
from graspkit.retarget import RobotTrajectory


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_unknown_subcommand_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_input_file_names_path(capsys):
    code, out, err = run(
        capsys, "retarget", "--chain", "/nope/scene.json",
        "--human", "x.json", "--out", "y.json",
    )
    assert code == 2
    assert "/nope/scene.json" in err


def test_retarget_make_ref_pipeline(tmp_path, capsys):
    out_traj = tmp_path / "robot.json"
    code, out, err = run(
        capsys, "retarget",
        "--chain", data_path("fixture_scene.json"),
        "--human", data_path("demo_human.json"),
        "--out", str(out_traj),
        "--beta", "0.02", "--window", "9",
    )
    assert code == 0, err
    assert out_traj.exists()
    traj = RobotTrajectory.load(out_traj)  # validates against the schema
    assert len(traj) > 10

    out_ref = tmp_path / "ref.json"
    code, out, err = run(
        capsys, "make-ref",
        "--scene", data_path("fixture_scene.json"),
        "--traj", str(out_traj),
        "--out", str(out_ref),
    )
    assert code == 0, err
    code, out, err = run(capsys, "validate", str(out_ref))
    assert code == 0
    assert "OK (reference)" in out


def test_validate_reports_invalid(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 99, "joints": []}))
    code, out, err = run(capsys, "validate", str(bad), data_path("planar2.json"))
    assert code == 2
    assert "INVALID" in err
    assert "OK (chain)" in out


def test_select_mock_prints_skill(capsys):
    code, out, err = run(
        capsys, "select", "--library", data_path("library.json"),
        "--instruction", "grasp the bottom", "--orientation", "standing", "--mock",
    )
    assert code == 0
    assert out.splitlines()[0].strip() == "skill 1"
    assert len(out.splitlines()) >= 2  # rationale follows


def test_select_live_without_key_is_config_error(capsys, monkeypatch):
    monkeypatch.delenv("GRASPKIT_API_KEY", raising=False)
    code, out, err = run(
        capsys, "select", "--library", data_path("library.json"),
        "--instruction", "x",
    )
    assert code == 2
    assert "GRASPKIT_API_KEY" in err


def test_config_errors_enumerated(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "reward": {"epsilon": -1.0, "bogus_field": 3},
        "train": {"gamma": 2.0},
        "mystery": {},
    }))
    code, out, err = run(
        capsys, "train", "--scene", data_path("toy_scene.json"),
        "--ref", data_path("toy_ref.json"), "--config", str(cfg),
        "--out", str(tmp_path / "run"),
    )
    assert code == 2
    assert "bogus_field" in err
    assert "gamma" in err
    assert "mystery" in err  # all violations reported at once


def test_eval_checkpoint_and_csv_idempotent(tmp_path, capsys):
    traj = RobotTrajectory.load(data_path("toy_demo_traj.json"))
    ckpt = tmp_path / "replay.json"
    save_checkpoint(ckpt, ReplayPolicy(demo_q_matrix(traj), 0.05))
    csv1 = tmp_path / "a.csv"
    csv2 = tmp_path / "b.csv"
    for csv_path in (csv1, csv2):
        code, out, err = run(
            capsys, "eval", "--scene", data_path("toy_scene.json"),
            "--ref", data_path("toy_ref.json"), "--ckpt", str(ckpt),
            "--episodes", "3", "--sigma", "0.0", "--seed", "7",
            "--out", str(csv_path),
        )
        assert code == 0, err
        assert "SR 1.000" in out
    assert csv1.read_bytes() == csv2.read_bytes()


def _demo_library(tmp_path):
    """Library whose skill 1 checkpoint replays the toy demonstration."""
    traj = RobotTrajectory.load(data_path("toy_demo_traj.json"))
    ckpt_dir = tmp_path / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    save_checkpoint(ckpt_dir / "skill_1.json",
                    ReplayPolicy(demo_q_matrix(traj), 0.05))
    lib = tmp_path / "library.json"
    payload = json.load(open(data_path("library.json")))
    lib.write_text(json.dumps(payload))
    return lib


def test_demo_dry_run_selects_without_checkpoint(tmp_path, capsys):
    code, out, err = run(
        capsys, "demo", "--library", data_path("library.json"),
        "--scene", data_path("toy_scene.json"), "--ref", data_path("toy_ref.json"),
        "--orientation", "lying", "--mock", "--dry-run",
    )
    assert code == 0
    assert "selected skill 3" in out


def test_demo_runs_episode(tmp_path, capsys):
    lib = _demo_library(tmp_path)
    code, out, err = run(
        capsys, "demo", "--library", str(lib),
        "--scene", data_path("toy_scene.json"), "--ref", data_path("toy_ref.json"),
        "--instruction", "grasp the bottom", "--orientation", "standing", "--mock",
    )
    assert code == 0, err
    assert "selected skill 1" in out
    assert "SR 1.00" in out


def test_demo_missing_checkpoint_actionable(tmp_path, capsys):
    code, out, err = run(
        capsys, "demo", "--library", data_path("library.json"),
        "--scene", data_path("toy_scene.json"), "--ref", data_path("toy_ref.json"),
        "--instruction", "grasp the bottom", "--orientation", "standing", "--mock",
    )
    assert code == 2
    assert "checkpoint" in err
    assert "skill_1.json" in err


def test_train_smoke_and_seed_repeat(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "train": {"total_steps": 1500, "pretrain_steps": 800, "n_envs": 2,
                   "batch_episodes": 2, "hidden": 16,
                   "curriculum": {"eval_window": 20}},
    }))
    outs = []
    for name in ("runA", "runB"):
        code, out, err = run(
            capsys, "train", "--scene", data_path("toy_scene.json"),
            "--ref", data_path("toy_ref.json"), "--config", str(cfg),
            "--seed", "7", "--out", str(tmp_path / name),
        )
        assert code == 0, err
        outs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]  # identical metrics CSV for identical seeds
