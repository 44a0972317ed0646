"""Multi-agent orchestration over the single-policy PPO core.

Two training modes:

* ``ippo``  - every agent owns an actor-critic pair trained only on its own
  local rollouts (independent learners).
* ``mappo`` - one shared actor-critic pair; every agent acts through it and
  the update consumes the pooled rollouts of all agents, with advantages
  computed and normalized per agent before pooling.

Action indices are 0-based inside the learning stack; ``act`` maps them to
priority levels 1..K for the environment. Checkpoints: one file per parameter
set (``policy_agent{i:03d}.bin`` for ippo, ``policy_shared.bin`` for mappo),
each holding the actor record followed by the critic record.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .nn import (HEAD_IDENTITY, HEAD_SOFTMAX, DenseNet, forward_policy,
                 forward_value, init_adam, init_dense, read_net_record,
                 write_net_record)
from .ppo import (PpoConfig, Trajectory, compute_gae, compute_returns,
                  normalize_advantages, update)

MODE_IPPO = "ippo"
MODE_MAPPO = "mappo"


@dataclass
class TrajectoryBuffer:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    next_observation: np.ndarray | None = None

    def push(self, obs, action, log_prob, reward, value, next_obs):
        self.observations.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.next_observation = np.asarray(next_obs, dtype=np.float64)

    def __len__(self):
        return len(self.rewards)

    def clear(self):
        self.observations.clear()
        self.actions.clear()
        self.log_probs.clear()
        self.rewards.clear()
        self.values.clear()
        self.next_observation = None

    def to_trajectory(self, bootstrap_value: float) -> Trajectory:
        return Trajectory(
            observations=np.stack(self.observations),
            actions=np.asarray(self.actions, dtype=np.int64),
            log_probs_old=np.asarray(self.log_probs),
            rewards=np.asarray(self.rewards),
            values=np.asarray(self.values),
            bootstrap_value=float(bootstrap_value),
        )


@dataclass
class AgentPool:
    mode: str
    n_agents: int
    n_actions: int
    config: PpoConfig
    actors: list
    critics: list
    actor_adams: list
    critic_adams: list
    buffers: list
    rng: np.random.Generator

    def actor_for(self, agent: int) -> DenseNet:
        return self.actors[agent if self.mode == MODE_IPPO else 0]

    def critic_for(self, agent: int) -> DenseNet:
        return self.critics[agent if self.mode == MODE_IPPO else 0]


def make_pool(mode: str, n_agents: int, config: PpoConfig, *, obs_dim: int = 6,
              n_actions: int = 3, hidden_dim: int = 64, seed: int = 0) -> AgentPool:
    mode = mode.lower()
    if mode not in (MODE_IPPO, MODE_MAPPO):
        raise ValueError(f"unknown mode {mode!r}")
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    rng = np.random.default_rng(seed)
    actor_dims = (obs_dim, hidden_dim, hidden_dim, n_actions)
    critic_dims = (obs_dim, hidden_dim, hidden_dim, 1)
    n_sets = n_agents if mode == MODE_IPPO else 1
    actors, critics, a_adams, c_adams = [], [], [], []
    for _ in range(n_sets):
        actor = init_dense(actor_dims, HEAD_SOFTMAX, rng)
        critic = init_dense(critic_dims, HEAD_IDENTITY, rng)
        actors.append(actor)
        critics.append(critic)
        a_adams.append(init_adam(actor, config.learning_rate))
        c_adams.append(init_adam(critic, config.learning_rate))
    buffers = [TrajectoryBuffer() for _ in range(n_agents)]
    return AgentPool(mode=mode, n_agents=n_agents, n_actions=n_actions,
                     config=config, actors=actors, critics=critics,
                     actor_adams=a_adams, critic_adams=c_adams,
                     buffers=buffers, rng=rng)


def act(pool: AgentPool, observations, explore: bool):
    """Choose one priority level per agent.

    Returns ``(priorities, log_probs, values)`` with priorities in 1..K.
    ``explore=True`` samples from each policy (one uniform draw per agent);
    otherwise the argmax is taken with lowest-index tie-breaking.
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if obs.shape[0] != pool.n_agents:
        raise ValueError(f"expected {pool.n_agents} observations, got {obs.shape[0]}")
    if pool.mode == MODE_MAPPO:
        probs, cache = forward_policy(pool.actors[0], obs)
        log_probs = cache.log_probs
        values, _ = forward_value(pool.critics[0], obs)
    else:
        rows, lrows, vals = [], [], []
        for i in range(pool.n_agents):
            p, cache = forward_policy(pool.actors[i], obs[i])
            rows.append(p)
            lrows.append(cache.log_probs[0])
            v, _ = forward_value(pool.critics[i], obs[i])
            vals.append(v)
        probs = np.stack(rows)
        log_probs = np.stack(lrows)
        values = np.asarray(vals)
    if explore:
        draws = pool.rng.random(pool.n_agents)
        cum = np.cumsum(probs, axis=1)
        idx = np.empty(pool.n_agents, dtype=np.int64)
        for i in range(pool.n_agents):
            idx[i] = min(int(np.searchsorted(cum[i], draws[i], side="right")),
                         pool.n_actions - 1)
    else:
        idx = np.argmax(probs, axis=1)
    chosen_log_probs = log_probs[np.arange(pool.n_agents), idx]
    return idx + 1, chosen_log_probs, values


def store(pool: AgentPool, observations, priorities, log_probs, rewards,
          values, next_observations) -> None:
    """Record one environment step into every agent's buffer."""
    for i in range(pool.n_agents):
        pool.buffers[i].push(observations[i], int(priorities[i]) - 1,
                             log_probs[i], rewards[i], values[i],
                             next_observations[i])


def ready(pool: AgentPool) -> bool:
    return all(len(buf) >= pool.config.trajectory_len for buf in pool.buffers)


def learn(pool: AgentPool) -> dict:
    """One PPO update round; clears the buffers afterwards."""
    t_len = pool.config.trajectory_len
    for i, buf in enumerate(pool.buffers):
        if len(buf) < t_len:
            raise ValueError(f"agent {i} buffer holds {len(buf)} steps, "
                             f"needs {t_len}")
    if pool.mode == MODE_IPPO:
        diags = []
        for i in range(pool.n_agents):
            buf = pool.buffers[i]
            bootstrap, _ = forward_value(pool.critics[i], buf.next_observation)
            traj = buf.to_trajectory(bootstrap)
            diags.append(update(pool.actors[i], pool.critics[i],
                                pool.actor_adams[i], pool.critic_adams[i],
                                [traj], pool.config, pool.rng))
        diag = {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}
    else:
        trajectories = []
        for buf in pool.buffers:
            bootstrap, _ = forward_value(pool.critics[0], buf.next_observation)
            traj = buf.to_trajectory(bootstrap)
            raw = compute_gae(traj, pool.config)
            traj.returns = compute_returns(traj, raw)
            traj.advantages = normalize_advantages(raw)
            trajectories.append(traj)
        diag = update(pool.actors[0], pool.critics[0], pool.actor_adams[0],
                      pool.critic_adams[0], trajectories, pool.config,
                      pool.rng, normalize=False)
    for buf in pool.buffers:
        buf.clear()
    return diag


# ---------------------------------------------------------------------------
# checkpoints: one file per parameter set
# ---------------------------------------------------------------------------


def checkpoint_names(pool: AgentPool) -> list[str]:
    if pool.mode == MODE_MAPPO:
        return ["policy_shared.bin"]
    return [f"policy_agent{i:03d}.bin" for i in range(pool.n_agents)]


def save_pool(pool: AgentPool, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, actor, critic in zip(checkpoint_names(pool), pool.actors,
                                   pool.critics):
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            write_net_record(fh, actor)
            write_net_record(fh, critic)
        paths.append(path)
    return paths


def load_pool(pool: AgentPool, ckpt_dir: str) -> None:
    """Load parameters into an existing pool; dims must match exactly."""
    for name, actor, critic in zip(checkpoint_names(pool), pool.actors,
                                   pool.critics):
        path = os.path.join(ckpt_dir, name)
        with open(path, "rb") as fh:
            new_actor = read_net_record(fh, HEAD_SOFTMAX)
            new_critic = read_net_record(fh, HEAD_IDENTITY)
        if new_actor.layer_dims != actor.layer_dims \
                or new_critic.layer_dims != critic.layer_dims:
            raise ValueError(
                f"checkpoint {path} architecture {new_actor.layer_dims}/"
                f"{new_critic.layer_dims} does not match pool "
                f"{actor.layer_dims}/{critic.layer_dims}")
        actor.weights = new_actor.weights
        actor.biases = new_actor.biases
        critic.weights = new_critic.weights
        critic.biases = new_critic.biases
