"""Command-line entry point: train, eval, baseline, summarize.

Any config-file key can also be passed as a flag (``--env.n_ues 5`` or
``--ppo.gamma=0.9``); flags override file values.
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import (load_run_config, read_metrics_csv, run_eval,
                      run_training, summarize, write_summary_csv)


def _base_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--seed", type=int, help="run seed (64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=("ippo", "mappo"), help="training mode")
    p.add_argument("--scheduler", choices=("pa", "ga", "rr"),
                   help="per-slot symbol allocator")
    p.add_argument("--episodes", type=int, help="episode count")
    return p


def _parse_overrides(extras) -> dict:
    """Turn leftover ``--dotted.key value`` / ``--dotted.key=value`` flags
    into config-mapping entries."""
    overrides = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise ValueError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ValueError(f"flag {token!r} is missing a value")
            key, value = body, extras[i + 1]
            i += 2
        overrides[key] = value
    return overrides


def _named_overrides(args, episodes_key: str) -> dict:
    mapping = {}
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.out is not None:
        mapping["output_dir"] = args.out
    if getattr(args, "mode", None) is not None:
        mapping["mode"] = args.mode
    if args.scheduler is not None:
        mapping["scheduler"] = args.scheduler
    if args.episodes is not None:
        mapping[episodes_key] = str(args.episodes)
    return mapping


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tdsched",
        description="Teleoperated-driving uplink scheduling simulator with "
                    "multi-agent PPO priority learning")
    sub = parser.add_subparsers(dest="command", required=True)
    _base_parser(sub, "train", "train a policy and write metrics + checkpoints")
    p_eval = _base_parser(sub, "eval", "evaluate a trained policy (argmax)")
    p_eval.add_argument("--checkpoint", help="directory holding checkpoint files")
    _base_parser(sub, "baseline", "run the round-robin baseline (no policy)")
    p_sum = sub.add_parser("summarize", help="aggregate a metrics.csv")
    p_sum.add_argument("--metrics", required=True, help="metrics.csv to aggregate")
    p_sum.add_argument("--out", help="directory for summary.csv "
                                     "(default: alongside the input)")

    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "summarize":
            if extras:
                raise ValueError(f"unexpected argument {extras[0]!r}")
            summary = summarize(read_metrics_csv(args.metrics))
            out_dir = args.out or os.path.dirname(os.path.abspath(args.metrics))
            os.makedirs(out_dir, exist_ok=True)
            write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
            print(f"episodes={summary.n_episodes} "
                  f"mean_reward={summary.mean_reward:.4f} "
                  f"mean_latency_ms={summary.mean_latency_ms:.3f} "
                  f"success_prob={summary.mean_success_prob:.4f} "
                  f"p95_violation={summary.p95_violation_fraction:.4f}")
            return 0

        overrides = _parse_overrides(extras)
        episodes_key = "n_episodes" if args.command == "train" else "eval_episodes"
        overrides.update(_named_overrides(args, episodes_key))
        if args.command == "baseline":
            overrides.setdefault("scheduler", "rr")
            overrides["mode"] = "rr-baseline"
        run = load_run_config(args.config, overrides)

        if args.command == "train":
            metrics, _pool = run_training(run)
        elif args.command == "eval":
            metrics = run_eval(run, checkpoint_dir=getattr(args, "checkpoint", None))
        else:
            metrics = run_eval(run)
        print(f"wrote {len(metrics)} episode rows to "
              f"{os.path.join(run.output_dir, 'metrics.csv')}")
        if metrics:
            s = summarize(metrics)
            print(f"mean_reward={s.mean_reward:.4f} "
                  f"success_prob={s.mean_success_prob:.4f} "
                  f"mean_latency_ms={s.mean_latency_ms:.3f}")
        return 0
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
