#!/usr/bin/env python3
"""Train MAPPO with greedy and proportional allocation, compare against the
round-robin baseline on paired evaluation episodes, and print a summary table.

Example (contended uplink, five vehicles):

    python scripts/run_trend_experiment.py --n-ues 5 --tau 15 \
        --episodes 150 --seed 101 --out runs/trend_n5
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from tdsched.env import CompressionConfig, EnvConfig
from tdsched.harness import RunConfig, run_eval, run_training, summarize


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-ues", type=int, default=5)
    ap.add_argument("--tau", type=float, default=15.0,
                    help="latency budget in ms")
    ap.add_argument("--q", type=int, default=8, choices=(8, 9, 10))
    ap.add_argument("--c", type=int, default=0, choices=(0, 5, 10))
    ap.add_argument("--episodes", type=int, default=150)
    ap.add_argument("--eval-episodes", type=int, default=20)
    ap.add_argument("--mode", default="mappo", choices=("mappo", "ippo"))
    ap.add_argument("--seed", type=int, default=101)
    ap.add_argument("--out", default="runs/trend")
    args = ap.parse_args()

    env = EnvConfig(n_ues=args.n_ues, latency_threshold=args.tau,
                    compression=CompressionConfig(q=args.q, c=args.c))
    out = Path(args.out)
    rows = []
    for scheduler in ("ga", "pa"):
        tag = f"{args.mode}_{scheduler}"
        train = RunConfig(env=env, mode=args.mode, scheduler=scheduler,
                          n_episodes=args.episodes,
                          eval_episodes=args.eval_episodes,
                          output_dir=str(out / f"{tag}_train"), seed=args.seed)
        t0 = time.perf_counter()
        run_training(train)
        train_s = time.perf_counter() - t0
        ev = replace(train, output_dir=str(out / f"{tag}_eval"))
        summary = summarize(run_eval(ev, checkpoint_dir=train.output_dir))
        rows.append((tag, summary, train_s))
        print(f"trained {tag} in {train_s:.0f}s")

    baseline = RunConfig(env=env, mode="rr-baseline", scheduler="rr",
                         eval_episodes=args.eval_episodes,
                         output_dir=str(out / "rr_eval"), seed=args.seed)
    rows.append(("rr-baseline", summarize(run_eval(baseline)), 0.0))

    print(f"\nN={args.n_ues}  tau={args.tau} ms  (q,c)=({args.q},{args.c})  "
          f"seed={args.seed}")
    print(f"{'policy':<14} {'reward':>8} {'success':>8} {'latency':>9} "
          f"{'p95 viol':>9}")
    for tag, s, _ in rows:
        print(f"{tag:<14} {s.mean_reward:>8.3f} {s.mean_success_prob:>8.3f} "
              f"{s.mean_latency_ms:>8.2f}m {s.p95_violation_fraction:>9.3f}")


if __name__ == "__main__":
    main()
