"""Run orchestration: configuration, episode loops, metrics, CSV outputs.

A run is fully determined by (RunConfig, seed): network initialization,
per-episode environments, action sampling, and minibatch shuffling all derive
from the run seed through fixed named streams, so identical configurations
produce byte-identical outputs.

Config files are flat UTF-8 ``key=value`` lines with dotted section prefixes
(``env.n_ues=5``, ``ppo.gamma=0.95``, ``env.channel.sinr_mean=15``); ``#``
starts a comment. CLI flags override file values.
"""

from __future__ import annotations

import math
import os
import types
import typing
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import marl
from .env import ChannelConfig, CompressionConfig, EnvConfig, OBS_DIM, UplinkEnv
from .ppo import PpoConfig

# named sub-streams of the run seed
_STREAM_POOL = 0
_STREAM_TRAIN = 1
_STREAM_EVAL = 2

MODES = ("ippo", "mappo", "rr-baseline")
SCHEDULERS = ("pa", "ga", "rr")

METRIC_COLUMNS = ("episode", "mean_reward", "mean_latency_ms",
                  "median_latency_ms", "p95_latency_ms", "success_prob")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    mode: str = "mappo"
    scheduler: str = "pa"
    n_episodes: int = 250
    eval_episodes: int = 20
    output_dir: str = "runs/out"
    seed: int = 0
    hidden_dim: int = 64
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES} (got {self.mode!r})")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(
                f"scheduler must be one of {SCHEDULERS} (got {self.scheduler!r})")
        if self.n_episodes < 0 or self.eval_episodes < 0:
            raise ValueError("episode counts must be >= 0")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    ue_mean_rewards: tuple
    mean_reward: float
    mean_latency_ms: float
    median_latency_ms: float
    p95_latency_ms: float
    success_prob: float
    violation_fractions: tuple


@dataclass(frozen=True)
class Summary:
    n_episodes: int
    mean_reward: float
    mean_latency_ms: float
    median_latency_ms: float
    mean_success_prob: float
    p95_violation_fraction: float


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------


def parse_config_file(path) -> dict:
    """Flat key=value mapping; later duplicates win."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = text.split("=", 1)
            mapping[key.strip()] = raw.strip()
    return mapping


def _coerce(raw: str, annotation, key: str):
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        members = [a for a in typing.get_args(annotation) if a is not type(None)]
        if raw.lower() in ("none", ""):
            return None
        for member in members:
            try:
                return _coerce(raw, member, key)
            except ValueError:
                continue
        raise ValueError(f"config key {key!r}: cannot parse {raw!r}")
    if annotation is bool:
        low = raw.lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if annotation is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: expected an integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: expected a number, got {raw!r}") from exc
    if annotation is str:
        return raw
    if origin is tuple:
        elem = typing.get_args(annotation)[0]
        parts = [p for p in raw.split(",") if p.strip()]
        return tuple(_coerce(p.strip(), elem, key) for p in parts)
    raise ValueError(f"config key {key!r} cannot be set from text")


def _build_section(cls, values: dict, prefix: str, extra=None):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = dict(extra or {})
    for name, raw in values.items():
        if name not in known or name in kwargs:
            raise ValueError(f"unknown config key {prefix + name!r}")
        kwargs[name] = _coerce(raw, hints[name], prefix + name)
    return cls(**kwargs)


def run_config_from_mapping(mapping: dict) -> RunConfig:
    """Build a validated RunConfig from flat dotted keys."""
    groups = {"env": {}, "channel": {}, "compression": {}, "ppo": {}, "run": {}}
    for key, raw in mapping.items():
        if key.startswith("env.channel."):
            groups["channel"][key[len("env.channel."):]] = raw
        elif key.startswith("env.compression."):
            groups["compression"][key[len("env.compression."):]] = raw
        elif key.startswith("env."):
            name = key[len("env."):]
            if name in ("channel", "compression", "mcs_table"):
                raise ValueError(f"config key {key!r} needs a dotted sub-key")
            groups["env"][name] = raw
        elif key.startswith("ppo."):
            groups["ppo"][key[len("ppo."):]] = raw
        elif "." in key:
            raise ValueError(f"unknown config key {key!r}")
        else:
            groups["run"][key] = raw
    channel = _build_section(ChannelConfig, groups["channel"], "env.channel.")
    compression = _build_section(CompressionConfig, groups["compression"],
                                 "env.compression.")
    env = _build_section(EnvConfig, groups["env"], "env.",
                         extra={"channel": channel, "compression": compression})
    ppo = _build_section(PpoConfig, groups["ppo"], "ppo.")
    return _build_section(RunConfig, groups["run"], "",
                          extra={"env": env, "ppo": ppo})


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    mapping = parse_config_file(path) if path else {}
    mapping.update(overrides or {})
    return run_config_from_mapping(mapping)


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------


def derive_seed(*keys) -> int:
    """Deterministic 64-bit seed from a tuple of integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys])
               .generate_state(1, np.uint64)[0])


def _episode_env(run: RunConfig, stream: int, episode: int,
                 env_seed: int | None = None) -> UplinkEnv:
    seed = derive_seed(run.seed, stream, episode) if env_seed is None else env_seed
    cfg = replace(run.env, rng_seed=seed)
    return UplinkEnv(cfg, scheduler=run.scheduler)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def nearest_rank_percentile(values, fraction: float) -> float:
    """Ordinal-rank percentile: the (floor(fraction*n)+1)-th smallest value."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("percentile of an empty collection")
    idx = min(int(math.floor(fraction * arr.size)), arr.size - 1)
    return float(arr[idx])


def _episode_metrics(episode: int, ue_mean_rewards: np.ndarray,
                     ue_latencies: list, threshold_ms: float) -> EpisodeMetrics:
    pooled = [lat for lats in ue_latencies for lat in lats]
    if pooled:
        pooled_arr = np.asarray(pooled)
        mean_lat = float(pooled_arr.mean())
        median_lat = float(np.median(pooled_arr))
        p95_lat = nearest_rank_percentile(pooled_arr, 0.95)
        success = float(np.mean(pooled_arr <= threshold_ms))
    else:
        mean_lat = median_lat = p95_lat = 0.0
        success = 1.0
    violations = tuple(
        float(np.mean(np.asarray(lats) > threshold_ms)) if lats else 0.0
        for lats in ue_latencies
    )
    return EpisodeMetrics(
        episode=episode,
        ue_mean_rewards=tuple(float(r) for r in ue_mean_rewards),
        mean_reward=float(np.mean(ue_mean_rewards)),
        mean_latency_ms=mean_lat,
        median_latency_ms=median_lat,
        p95_latency_ms=p95_lat,
        success_prob=success,
        violation_fractions=violations,
    )


def summarize(metrics: list) -> Summary:
    """Aggregate a metrics series across episodes."""
    if not metrics:
        raise ValueError("cannot summarize an empty metrics series")
    violations = [v for m in metrics for v in m.violation_fractions]
    return Summary(
        n_episodes=len(metrics),
        mean_reward=float(np.mean([m.mean_reward for m in metrics])),
        mean_latency_ms=float(np.mean([m.mean_latency_ms for m in metrics])),
        median_latency_ms=float(np.median([m.median_latency_ms for m in metrics])),
        mean_success_prob=float(np.mean([m.success_prob for m in metrics])),
        p95_violation_fraction=nearest_rank_percentile(violations, 0.95),
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_metrics_csv(path, metrics: list, n_ues: int) -> None:
    header = ",".join(METRIC_COLUMNS + tuple(f"viol_ue{i}" for i in range(n_ues)))
    lines = [header]
    for m in metrics:
        cells = [str(m.episode), str(m.mean_reward), str(m.mean_latency_ms),
                 str(m.median_latency_ms), str(m.p95_latency_ms),
                 str(m.success_prob)]
        cells += [str(v) for v in m.violation_fractions]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty metrics file")
    header = rows[0].split(",")
    if tuple(header[:len(METRIC_COLUMNS)]) != METRIC_COLUMNS:
        raise ValueError(f"{path}: unexpected metrics header")
    metrics = []
    for row in rows[1:]:
        cells = row.split(",")
        metrics.append(EpisodeMetrics(
            episode=int(cells[0]),
            ue_mean_rewards=(),
            mean_reward=float(cells[1]),
            mean_latency_ms=float(cells[2]),
            median_latency_ms=float(cells[3]),
            p95_latency_ms=float(cells[4]),
            success_prob=float(cells[5]),
            violation_fractions=tuple(float(c) for c in cells[6:]),
        ))
    return metrics


def write_summary_csv(path, summary: Summary) -> None:
    names = [f.name for f in fields(Summary)]
    values = [str(getattr(summary, name)) for name in names]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n" + ",".join(values) + "\n")


# ---------------------------------------------------------------------------
# episode loops
# ---------------------------------------------------------------------------


def _fixed_priority_select(n_ues: int):
    ones = np.ones(n_ues, dtype=np.int64)

    def select(_obs):
        return ones, None, None

    return select


def _policy_select(pool, explore: bool):
    def select(obs):
        return marl.act(pool, obs, explore)

    return select


def _rollout_episode(env: UplinkEnv, select, pool=None):
    """Run one full episode; returns (per-UE mean reward, per-UE latencies).

    With ``pool`` given, transitions are stored and a learning round fires
    whenever the trajectory buffers fill (they persist across episodes).
    """
    cfg = env.config
    n = cfg.n_ues
    obs = env.reset()
    reward_sum = np.zeros(n)
    latencies = [[] for _ in range(n)]
    for _ in range(cfg.steps_per_episode):
        priorities, log_probs, values = select(obs)
        next_obs, rewards, diag = env.step(priorities)
        reward_sum += rewards
        for i in range(n):
            latencies[i].extend(diag.delivered_latencies_ms[i])
        if pool is not None:
            marl.store(pool, obs, priorities, log_probs, rewards, values,
                       next_obs)
            if marl.ready(pool):
                marl.learn(pool)
        obs = next_obs
    for i, bounds in enumerate(env.pending_latency_lower_bounds()):
        latencies[i].extend(bounds)
    steps = max(cfg.steps_per_episode, 1)
    return reward_sum / steps, latencies


def _write_outputs(run: RunConfig, metrics: list) -> None:
    os.makedirs(run.output_dir, exist_ok=True)
    write_metrics_csv(os.path.join(run.output_dir, "metrics.csv"), metrics,
                      run.env.n_ues)
    if metrics:
        write_summary_csv(os.path.join(run.output_dir, "summary.csv"),
                          summarize(metrics))


def run_training(run: RunConfig):
    """Train over n_episodes fresh episodes; returns (metrics, pool).

    Writes metrics.csv, summary.csv, and final checkpoints to output_dir.
    """
    if run.mode == "rr-baseline":
        raise ValueError("rr-baseline has no trainable policy; use run_eval")
    pool = marl.make_pool(run.mode, run.env.n_ues, run.ppo, obs_dim=OBS_DIM,
                          n_actions=run.env.n_priority_levels,
                          hidden_dim=run.hidden_dim,
                          seed=derive_seed(run.seed, _STREAM_POOL))
    select = _policy_select(pool, explore=True)
    metrics = []
    for episode in range(run.n_episodes):
        env = _episode_env(run, _STREAM_TRAIN, episode)
        mean_rewards, latencies = _rollout_episode(env, select, pool=pool)
        metrics.append(_episode_metrics(episode, mean_rewards, latencies,
                                        run.env.latency_threshold))
    _write_outputs(run, metrics)
    marl.save_pool(pool, run.output_dir)
    return metrics, pool


def run_eval(run: RunConfig, checkpoint_dir: str | None = None,
             episode_seeds: list | None = None):
    """Frozen-policy evaluation (argmax actions) over fresh episodes.

    rr-baseline mode needs no checkpoint and ignores priorities entirely.
    ``episode_seeds`` optionally pins the per-episode environment seeds.
    """
    if run.mode == "rr-baseline":
        select = _fixed_priority_select(run.env.n_ues)
    else:
        ckpt = checkpoint_dir or run.checkpoint_dir
        if ckpt is None:
            raise ValueError("eval of a learned policy requires a checkpoint dir")
        pool = marl.make_pool(run.mode, run.env.n_ues, run.ppo, obs_dim=OBS_DIM,
                              n_actions=run.env.n_priority_levels,
                              hidden_dim=run.hidden_dim,
                              seed=derive_seed(run.seed, _STREAM_POOL))
        marl.load_pool(pool, ckpt)
        select = _policy_select(pool, explore=False)
    if episode_seeds is None:
        episode_seeds = [None] * run.eval_episodes
    metrics = []
    for episode, env_seed in enumerate(episode_seeds):
        env = _episode_env(run, _STREAM_EVAL, episode, env_seed=env_seed)
        mean_rewards, latencies = _rollout_episode(env, select)
        metrics.append(_episode_metrics(episode, mean_rewards, latencies,
                                        run.env.latency_threshold))
    _write_outputs(run, metrics)
    return metrics
