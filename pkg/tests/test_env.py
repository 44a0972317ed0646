import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdsched.env import (ChannelConfig, CompressionConfig, EnvConfig, Frame,
                         UeState, UplinkEnv, drain_buffer, generate_frames,
                         latency_reward, observe, sinr_step)
from tdsched.link import McsTable

FLAT_800 = McsTable(sinr_thresholds_db=(-100.0,), spectral_efficiencies=(1.0,),
                    resource_elements_per_symbol=800)


def quiet_channel(n_ues):
    return ChannelConfig(sinr_noise_std=0.0, per_ue_mean_offsets=(0.0,) * n_ues)


class TestFrameGeneration:
    def test_fixed_size_without_jitter(self):
        comp = CompressionConfig(q=10, c=10, mean_frame_bytes=34480.0,
                                 frame_size_jitter=0.0)
        frames = generate_frames(8, 0, comp, np.random.default_rng(0))
        assert [f.size_bits for f in frames] == [275840] * 8

    def test_jitter_bounds_and_whole_bytes(self):
        comp = CompressionConfig(q=8, c=0, mean_frame_bytes=1000.0,
                                 frame_size_jitter=0.1)
        rng = np.random.default_rng(42)
        sizes = [f.size_bits for _ in range(200)
                 for f in generate_frames(4, 0, comp, rng)]
        assert all(7200 <= s <= 8800 for s in sizes)
        assert all(s % 8 == 0 for s in sizes)

    def test_same_seed_same_sizes(self):
        comp = CompressionConfig(mean_frame_bytes=5000.0, frame_size_jitter=0.2)
        a = generate_frames(5, 7, comp, np.random.default_rng(123))
        b = generate_frames(5, 7, comp, np.random.default_rng(123))
        assert [f.size_bits for f in a] == [f.size_bits for f in b]
        assert all(f.generated_at == 7 for f in a)

    def test_grid_law_anchors_and_midpoint(self):
        assert CompressionConfig(q=8, c=0).resolved_mean_bytes == pytest.approx(17240.0)
        assert CompressionConfig(q=10, c=10).resolved_mean_bytes == pytest.approx(34480.0)
        mid = CompressionConfig(q=9, c=5).resolved_mean_bytes
        assert mid == pytest.approx(math.sqrt(17240.0 * 34480.0))

    def test_invalid_compression_rejected(self):
        with pytest.raises(ValueError):
            CompressionConfig(q=7)
        with pytest.raises(ValueError):
            CompressionConfig(c=3)
        with pytest.raises(ValueError):
            CompressionConfig(frame_size_jitter=1.0)
        with pytest.raises(ValueError):
            CompressionConfig(mean_frame_bytes=0.0)


class TestChannel:
    def test_degenerate_process_pins_to_mean(self):
        cfg = ChannelConfig(sinr_mean=12.0, sinr_ar_coefficient=0.0,
                            sinr_noise_std=0.0)
        rng = np.random.default_rng(0)
        assert sinr_step(25.0, 12.0, cfg, rng) == 12.0

    def test_memory_pulls_toward_mean(self):
        cfg = ChannelConfig(sinr_mean=12.0, sinr_ar_coefficient=0.9,
                            sinr_noise_std=0.0)
        rng = np.random.default_rng(0)
        assert sinr_step(22.0, 12.0, cfg, rng) == pytest.approx(21.0)

    def test_iid_long_run_mean(self):
        cfg = ChannelConfig(sinr_mean=15.0, sinr_ar_coefficient=0.0,
                            sinr_noise_std=1.0)
        rng = np.random.default_rng(11)
        n = 100_000
        total = 0.0
        s = 15.0
        for _ in range(n):
            s = sinr_step(s, 15.0, cfg, rng)
            total += s
        assert abs(total / n - 15.0) <= 3.0 / math.sqrt(n)

    def test_correlated_long_run_mean(self):
        rho, sigma, n = 0.9, 1.0, 100_000
        cfg = ChannelConfig(sinr_mean=15.0, sinr_ar_coefficient=rho,
                            sinr_noise_std=sigma)
        rng = np.random.default_rng(5)
        total = 0.0
        s = 15.0
        for _ in range(n):
            s = sinr_step(s, 15.0, cfg, rng)
            total += s
        # AR(1) sample-mean std: sigma_x * sqrt((1+rho)/(1-rho)) / sqrt(n)
        sigma_x = sigma / math.sqrt(1.0 - rho * rho)
        bound = 4.0 * sigma_x * math.sqrt((1.0 + rho) / (1.0 - rho) / n)
        assert abs(total / n - 15.0) <= bound

    def test_invalid_channel_rejected(self):
        with pytest.raises(ValueError):
            ChannelConfig(sinr_ar_coefficient=1.0)
        with pytest.raises(ValueError):
            ChannelConfig(sinr_noise_std=-0.1)


class TestDrainBuffer:
    @staticmethod
    def one_frame_state(bits):
        state = UeState()
        state.buffer.append(Frame(ue_id=0, size_bits=bits, remaining_bits=bits,
                                  generated_at=0))
        state.buffer_bits = bits
        return state

    def test_full_slot_allocation_takes_four_slots(self):
        state = self.one_frame_state(38400)
        delivered = []
        for slot in range(10):
            delivered += drain_buffer(state, 12, 800, slot + 1)
            if delivered:
                break
        assert delivered[0].delivered_at == 4
        assert state.buffer_bits == 0

    def test_zero_allocation_leaves_buffer_alone(self):
        state = self.one_frame_state(1000)
        assert drain_buffer(state, 0, 800, 1) == []
        assert state.buffer_bits == 1000
        assert state.buffer[0].remaining_bits == 1000

    def test_fifo_split_across_frames(self):
        state = UeState()
        for _ in range(2):
            state.buffer.append(Frame(ue_id=0, size_bits=1000,
                                      remaining_bits=1000, generated_at=0))
        state.buffer_bits = 2000
        delivered = drain_buffer(state, 3, 500, 5)
        assert len(delivered) == 1
        assert delivered[0].delivered_at == 5
        assert state.buffer[0].remaining_bits == 500
        assert state.buffer_bits == 500

    @given(st.lists(st.integers(1, 5000), min_size=1, max_size=6),
           st.lists(st.integers(0, 6), min_size=1, max_size=30),
           st.lists(st.integers(0, 6), min_size=30, max_size=30))
    def test_more_symbols_never_delay_delivery(self, sizes, base, extra):
        def run(allocs):
            state = UeState()
            for j, bits in enumerate(sizes):
                state.buffer.append(Frame(ue_id=0, size_bits=bits,
                                          remaining_bits=bits, generated_at=0))
            state.buffer_bits = sum(sizes)
            times = {}
            done = 0
            for slot, a in enumerate(allocs):
                for f in drain_buffer(state, a, 300, slot + 1):
                    times[done] = f.delivered_at
                    done += 1
            return times

        base = base + [0] * (30 - len(base))
        lo = run(base)
        hi = run([b + e for b, e in zip(base, extra)])
        for idx, t_lo in lo.items():
            assert idx in hi
            assert hi[idx] <= t_lo


class TestReward:
    def test_within_budget(self):
        assert latency_reward(20.0, 25.0) == 1.0

    def test_boundary_inclusive(self):
        assert latency_reward(25.0, 25.0) == 1.0

    def test_violation_scales(self):
        assert latency_reward(125.0, 25.0) == -1.0

    def test_negative_latency_rejected(self):
        with pytest.raises(ValueError):
            latency_reward(-1.0, 25.0)

    @given(st.floats(0, 500), st.floats(0.1, 100), st.floats(0, 500))
    def test_non_increasing(self, l1, tau, l2):
        lo, hi = sorted((l1, l2))
        assert latency_reward(hi, tau) <= latency_reward(lo, tau)

    @given(st.floats(0.1, 100))
    def test_unit_reward_on_budget_and_minus_one_at_plus_100(self, tau):
        assert latency_reward(0.0, tau) == 1.0
        assert latency_reward(tau, tau) == 1.0
        assert latency_reward(tau + 100.0, tau) == pytest.approx(-1.0, rel=1e-12)


class TestObserve:
    def test_idle_state_is_all_zero(self):
        obs = observe(UeState())
        assert obs.shape == (6,)
        assert np.array_equal(obs, np.zeros(6))

    def test_constant_sinr_average(self):
        state = UeState(sinr_sum=4 * 17.5, sinr_count=4)
        assert observe(state)[0] == pytest.approx(17.5 / 30.0)

    def test_single_latency_sample(self):
        state = UeState(latency_sum_ms=12.0, latency_count=1)
        assert observe(state)[4] == pytest.approx(0.12)

    def test_observe_resets_running_stats(self):
        state = UeState(sinr_sum=30.0, sinr_count=2, latency_sum_ms=5.0,
                        latency_count=1, app_bytes_tx=100)
        observe(state)
        assert np.array_equal(observe(state), np.zeros(6))

    def test_outage_demand_is_clamped_finite(self):
        state = UeState(buffer_bits=10**9, bits_per_symbol=0)
        obs = observe(state)
        assert obs[2] == pytest.approx(10.0)
        assert np.all(np.isfinite(obs))

    def test_backlog_features(self):
        state = UeState(buffer_bits=250_000, bits_per_symbol=500)
        obs = observe(state)
        assert obs[1] == pytest.approx(0.25)
        assert obs[2] == pytest.approx(0.5)


def single_ue_config(mean_bytes, **overrides):
    defaults = dict(
        n_ues=1,
        compression=CompressionConfig(mean_frame_bytes=mean_bytes,
                                      frame_size_jitter=0.0),
        channel=quiet_channel(1),
        mcs_table=FLAT_800,
        rng_seed=1,
    )
    defaults.update(overrides)
    return EnvConfig(**defaults)


class TestEnvStep:
    def test_single_slot_delivery_latency(self):
        env = UplinkEnv(single_ue_config(1200.0), scheduler="pa")
        obs, rewards, diag = env.step([1])
        assert diag.delivered_latencies_ms[0] == [10.125]
        assert rewards[0] == 1.0
        assert obs[0, 4] == pytest.approx(0.10125)

    def test_four_slot_delivery_latency_exact(self):
        env = UplinkEnv(single_ue_config(4800.0), scheduler="ga")
        for _ in range(3):
            obs, rewards, diag = env.step([1])
            assert diag.delivered_latencies_ms[0] == [10.5]
            assert rewards[0] == 1.0

    def test_zero_size_frames_cost_only_the_wired_delay(self):
        env = UplinkEnv(single_ue_config(0.1), scheduler="pa")
        obs, rewards, diag = env.step([1])
        assert rewards[0] == 1.0
        assert diag.delivered_latencies_ms[0] == [10.0]
        assert obs[0, 4] == pytest.approx(0.1)
        assert obs[0, 1] == 0.0

    def test_symmetric_ues_get_identical_rewards(self):
        cfg = EnvConfig(n_ues=2, channel=quiet_channel(2),
                        compression=CompressionConfig(mean_frame_bytes=30000.0,
                                                      frame_size_jitter=0.0),
                        rng_seed=5)
        env = UplinkEnv(cfg, scheduler="pa")
        for _ in range(4):
            obs, rewards, _ = env.step([2, 2])
            assert rewards[0] == rewards[1]
            assert np.array_equal(obs[0], obs[1])

    def test_action_validation(self):
        env = UplinkEnv(EnvConfig(n_ues=2, rng_seed=0), scheduler="pa")
        with pytest.raises(ValueError):
            env.step([0, 1])
        with pytest.raises(ValueError):
            env.step([1, 4])
        with pytest.raises(ValueError):
            env.step([1.5, 1])
        with pytest.raises(ValueError):
            env.step([1])

    def test_deterministic_streams(self):
        cfg = EnvConfig(n_ues=3, rng_seed=99)
        env_a = UplinkEnv(cfg, scheduler="ga")
        env_b = UplinkEnv(cfg, scheduler="ga")
        actions = np.random.default_rng(0).integers(1, 4, (6, 3))
        for row in actions:
            obs_a, rew_a, _ = env_a.step(row)
            obs_b, rew_b, _ = env_b.step(row)
            assert np.array_equal(obs_a, obs_b)
            assert np.array_equal(rew_a, rew_b)

    def test_bit_conservation(self):
        cfg = EnvConfig(n_ues=3, rng_seed=21,
                        compression=CompressionConfig(q=10, c=10))
        env = UplinkEnv(cfg, scheduler="rr")
        rng = np.random.default_rng(1)
        for _ in range(25):
            env.step(rng.integers(1, 4, 3))
        remaining = np.array([ue.buffer_bits for ue in env.ues])
        assert np.all(env.total_drained_bits <= env.total_generated_bits)
        assert np.array_equal(env.total_generated_bits - env.total_drained_bits,
                              remaining)
        drained_all = np.all(remaining == 0)
        equal = np.array_equal(env.total_drained_bits, env.total_generated_bits)
        assert drained_all == equal

    def test_per_slot_feasibility(self):
        cfg = EnvConfig(n_ues=4, rng_seed=3,
                        compression=CompressionConfig(q=10, c=10))
        env = UplinkEnv(cfg, scheduler="pa", record_allocations=True)
        rng = np.random.default_rng(2)
        for _ in range(5):
            _, _, diag = env.step(rng.integers(1, 4, 4))
            assert diag.allocations
            for _slot, demands, symbols in diag.allocations:
                assert symbols.sum() <= cfg.symbols_per_slot
                assert np.all(symbols <= demands)
                assert np.all(symbols >= 0)

    def test_more_capacity_never_hurts_latency(self):
        lat = {}
        for u in (6, 12):
            env = UplinkEnv(single_ue_config(9000.0, symbols_per_slot=u),
                            scheduler="ga")
            collected = []
            for _ in range(5):
                _, _, diag = env.step([1])
                collected += diag.delivered_latencies_ms[0]
            lat[u] = collected
        assert len(lat[6]) == len(lat[12]) == 5
        assert all(b <= a for a, b in zip(lat[6], lat[12]))

    def test_pending_bounds_for_stuck_frames(self):
        cfg = single_ue_config(10_000_000.0)  # cannot drain in one period
        env = UplinkEnv(cfg, scheduler="pa")
        env.step([1])
        bounds = env.pending_latency_lower_bounds()
        expected = cfg.slots_per_frame * cfg.slot_ms + cfg.wired_delay
        assert bounds[0] == [pytest.approx(expected)]

    def test_observations_always_finite_six_wide(self):
        cfg = EnvConfig(n_ues=3, rng_seed=17,
                        compression=CompressionConfig(q=10, c=10))
        env = UplinkEnv(cfg, scheduler="ga")
        rng = np.random.default_rng(5)
        for _ in range(10):
            obs, rewards, _ = env.step(rng.integers(1, 4, 3))
            assert obs.shape == (3, 6)
            assert np.all(np.isfinite(obs))
            assert np.all(np.isfinite(rewards))

    def test_reward_uses_head_of_line_age_when_nothing_delivered(self):
        cfg = single_ue_config(10_000_000.0, latency_threshold=25.0)
        env = UplinkEnv(cfg, scheduler="pa")
        _, rewards, diag = env.step([1])
        age_ms = cfg.slots_per_frame * cfg.slot_ms + cfg.wired_delay
        assert diag.reward_latency_ms[0] == pytest.approx(age_ms)
        assert rewards[0] == pytest.approx(latency_reward(age_ms, 25.0))


class TestEnvConfig:
    def test_frame_period_rounded_to_whole_slots(self):
        assert EnvConfig().slots_per_frame == 267
        assert EnvConfig(frame_rate=32.0).slots_per_frame == 250

    def test_slot_ms_exact(self):
        assert EnvConfig().slot_ms == 0.125

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            EnvConfig(n_ues=0)
        with pytest.raises(ValueError):
            EnvConfig(latency_threshold=0.0)
        with pytest.raises(ValueError):
            EnvConfig(frame_rate=100000.0)  # frame period shorter than a slot
        with pytest.raises(ValueError):
            EnvConfig(n_ues=2, channel=ChannelConfig(per_ue_mean_offsets=(1.0,)))

    def test_unknown_scheduler_rejected(self):
        with pytest.raises(ValueError):
            UplinkEnv(EnvConfig(), scheduler="edf")

    def test_offsets_drawn_once_per_reset(self):
        cfg = EnvConfig(n_ues=4, rng_seed=13)
        env = UplinkEnv(cfg)
        first = env._mu.copy()
        env.reset()
        assert np.array_equal(env._mu, first)  # same seed, same draw
        assert np.all(np.abs(first - cfg.channel.sinr_mean)
                      <= cfg.channel.offset_spread)
