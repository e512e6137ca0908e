"""PPO on the planar toy grasp scene (the desk-scale benchmark run).

Phase 1 trains at a fixed object pose; phase 2 opens the pose-randomization
curriculum whenever the rolling success rate clears the threshold. Takes
about two minutes of CPU. Checkpoints and CSVs land in ./out/toy_run/.

Run: python3 demos/05_train_toy.py
"""

from dataclasses import replace

from graspkit.fixtures import toy_train_setup
from graspkit.trainer import evaluate, train

scene, ref, cfg, reward_cfg = toy_train_setup()
cfg = replace(cfg, seed=1)

print(f"training {cfg.total_steps} steps ({cfg.pretrain_steps} at fixed pose) ...")
result = train(scene, ref, cfg, reward_cfg=reward_cfg, out_dir="out/toy_run")

for row in result.metrics[:: max(1, len(result.metrics) // 12)]:
    print(f"step {row['step']:>7}  return {row['return']:>7.1f}  "
          f"success {row['success_rate']:.2f}  sigma {row['sigma']:.2f}")

for sigma in (0.0, 1.0):
    ev = evaluate(result.policy, scene, ref, 50, sigma=sigma, reward_cfg=reward_cfg,
                  curriculum_cfg=cfg.curriculum, seed=9)
    print(f"deterministic evaluation at sigma={sigma:.0f}: SR {ev['success_rate']:.2f}")
print(f"checkpoint: {result.checkpoint_path}")
print("equivalent CLI: graspkit train --scene <scene> --ref <ref> --out out/toy_run")
