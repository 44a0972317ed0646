"""Slot-level uplink scheduling simulator for teleoperated driving with a
multi-agent PPO stack that learns per-UE scheduling priorities."""

from .env import (ChannelConfig, CompressionConfig, EnvConfig, Frame,
                  ObsScales, UeState, UplinkEnv, drain_buffer, generate_frames,
                  latency_reward, observe, sinr_step)
from .harness import (EpisodeMetrics, RunConfig, Summary, load_run_config,
                      run_eval, run_training, summarize)
from .link import DEFAULT_MCS_TABLE, McsTable, mcs_from_sinr, symbols_required
from .marl import AgentPool, act, learn, load_pool, make_pool, save_pool
from .nn import AdamState, DenseNet, adam_update, backward, forward_policy, \
    forward_value, init_adam, init_dense
from .ppo import (Minibatch, PpoConfig, Trajectory, compute_gae,
                  compute_returns, ppo_loss, update)
from .sched import (INFINITE_DEMAND, Allocation, AllocationRequest, RrState,
                    greedy_allocate, proportional_allocate,
                    round_robin_allocate)

__version__ = "0.1.0"
