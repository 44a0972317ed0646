"""Single-policy PPO machinery.

Fixed-length trajectories, generalized advantage estimation by backward
recursion, lambda-return value targets, the clipped surrogate objective with
value and entropy terms, and shuffled minibatch epochs applied through Adam.

Sign convention: ``ppo_loss`` returns the quantity that is *minimized*
(negative surrogate + value_coef * value MSE - entropy_coef * entropy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import DenseNet, adam_update, backward, forward_policy, forward_value


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    trajectory_len: int = 512
    minibatch_size: int = 64
    epochs_per_update: int = 4
    learning_rate: float = 1e-4

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ValueError("loss coefficients must be >= 0")
        if self.trajectory_len < 1 or self.minibatch_size < 1:
            raise ValueError("trajectory_len and minibatch_size must be >= 1")
        if self.trajectory_len % self.minibatch_size != 0:
            raise ValueError("trajectory_len must be a multiple of minibatch_size")
        if self.epochs_per_update < 1:
            raise ValueError("epochs_per_update must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class Trajectory:
    """One agent's fixed-length rollout plus derived learning targets."""

    observations: np.ndarray  # (T, obs_dim)
    actions: np.ndarray  # (T,) 0-based action indices
    log_probs_old: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    bootstrap_value: float  # critic value at the truncation point
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class Minibatch:
    observations: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        n = len(self.observations)
        for name in ("actions", "log_probs_old", "advantages", "returns"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"minibatch field {name} has mismatched length")


def compute_gae(trajectory: Trajectory, config: PpoConfig) -> np.ndarray:
    """Advantage estimates: discounted lambda-weighted sums of TD errors,
    truncated at the trajectory end with the critic bootstrap."""
    rewards = trajectory.rewards
    values = trajectory.values
    n = len(rewards)
    advantages = np.empty(n)
    decay = config.gamma * config.gae_lambda
    next_value = trajectory.bootstrap_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + config.gamma * next_value - values[t]
        running = delta + decay * running
        advantages[t] = running
        next_value = values[t]
    return advantages


def compute_returns(trajectory: Trajectory, advantages: np.ndarray) -> np.ndarray:
    """Value targets in lambda-return form: advantage plus value estimate."""
    return advantages + trajectory.values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Shift to mean zero; scale to unit std unless the batch is constant."""
    centered = advantages - advantages.mean()
    std = centered.std()
    if std > 1e-12:
        centered = centered / std
    return centered


def _loss_and_grads(actor: DenseNet, critic: DenseNet, batch: Minibatch,
                    config: PpoConfig, want_grads: bool):
    n = len(batch.observations)
    probs, actor_cache = forward_policy(actor, batch.observations)
    log_probs = actor_cache.log_probs
    rows = np.arange(n)
    actions = np.asarray(batch.actions, dtype=np.int64)
    if actions.min() < 0 or actions.max() >= probs.shape[1]:
        raise ValueError("action index outside the policy's action space")
    log_new = log_probs[rows, actions]
    ratio = np.exp(log_new - batch.log_probs_old)
    eps = config.clip_epsilon
    adv = batch.advantages
    surr_raw = ratio * adv
    surr_clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(surr_raw, surr_clipped)
    entropy = -np.where(probs > 0, probs * log_probs, 0.0).sum(axis=1)
    values, critic_cache = forward_value(critic, batch.observations)
    value_err = values - batch.returns
    value_mse = float(np.mean(value_err ** 2))
    loss = float(-surrogate.mean() + config.value_coef * value_mse
                 - config.entropy_coef * entropy.mean())
    diag = {
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "entropy": float(entropy.mean()),
        "value_error": value_mse,
        "surrogate": float(surrogate.mean()),
    }
    if not want_grads:
        return loss, diag, None, None
    # surrogate term: gradient flows only where the unclipped branch is active
    unclipped = surr_raw <= surr_clipped
    coef = np.where(unclipped, ratio * adv, 0.0) / n
    grad_probs = np.zeros_like(probs)
    grad_probs[rows, actions] = -coef / probs[rows, actions]
    # entropy bonus: d(-c2 * mean S)/dp = c2 (log p + 1) / n
    grad_probs += config.entropy_coef * (log_probs + 1.0) / n
    actor_grads = backward(actor, actor_cache, grad_probs)
    critic_grads = backward(critic, critic_cache,
                            config.value_coef * 2.0 * value_err / n)
    return loss, diag, actor_grads, critic_grads


def ppo_loss(actor: DenseNet, critic: DenseNet, batch: Minibatch,
             config: PpoConfig) -> tuple[float, dict]:
    loss, diag, _, _ = _loss_and_grads(actor, critic, batch, config, want_grads=False)
    return loss, diag


def ppo_loss_and_grads(actor: DenseNet, critic: DenseNet, batch: Minibatch,
                       config: PpoConfig) -> tuple[float, dict, list, list]:
    return _loss_and_grads(actor, critic, batch, config, want_grads=True)


def update(actor: DenseNet, critic: DenseNet, actor_adam, critic_adam,
           trajectories: list, config: PpoConfig, rng: np.random.Generator,
           normalize: bool = True) -> dict:
    """Shuffled minibatch epochs over the pooled trajectory steps.

    Missing advantages/returns are derived first (raw advantages feed the
    value targets; normalization only affects the policy term). Set
    ``normalize=False`` when the caller already normalized per trajectory.
    """
    if not trajectories:
        raise ValueError("update requires at least one trajectory")
    for traj in trajectories:
        if traj.advantages is None:
            raw = compute_gae(traj, config)
            traj.returns = compute_returns(traj, raw)
            traj.advantages = raw
        elif traj.returns is None:
            raise ValueError("trajectory has advantages but no returns")
    obs = np.concatenate([t.observations for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    log_old = np.concatenate([t.log_probs_old for t in trajectories])
    adv = np.concatenate([t.advantages for t in trajectories])
    returns = np.concatenate([t.returns for t in trajectories])
    total = len(obs)
    m = config.minibatch_size
    if total % m != 0:
        raise ValueError(f"pooled step count {total} is not a multiple of "
                         f"minibatch_size {m}")
    if normalize:
        adv = normalize_advantages(adv)
    losses = []
    clip_fracs = []
    entropies = []
    value_errs = []
    for _ in range(config.epochs_per_update):
        perm = rng.permutation(total)
        for start in range(0, total, m):
            sel = perm[start:start + m]
            batch = Minibatch(observations=obs[sel], actions=actions[sel],
                              log_probs_old=log_old[sel], advantages=adv[sel],
                              returns=returns[sel])
            loss, diag, a_grads, c_grads = ppo_loss_and_grads(actor, critic,
                                                              batch, config)
            adam_update(actor, actor_adam, a_grads)
            adam_update(critic, critic_adam, c_grads)
            losses.append(loss)
            clip_fracs.append(diag["clip_fraction"])
            entropies.append(diag["entropy"])
            value_errs.append(diag["value_error"])
    return {
        "loss_first": losses[0],
        "loss_last": losses[-1],
        "loss_mean": float(np.mean(losses)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "entropy": float(np.mean(entropies)),
        "value_error": float(np.mean(value_errs)),
        "n_minibatches": len(losses),
    }
