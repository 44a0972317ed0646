"""Uplink traffic/channel simulator with a per-frame decision interface.

Each UE (a teleoperated vehicle) generates one sensor frame per application
frame period and queues it in its uplink buffer. Time advances in OFDM slots;
every slot the per-UE SINR evolves, link adaptation picks an MCS, and the
configured allocator splits the slot's symbols across UEs according to the
priority levels chosen by the learning agents. A decision step spans one full
frame period, so priorities are held fixed for all slots in between.

End-to-end latency of a frame is generation-to-delivery air time plus the
fixed wired segment between gNB and remote operator. Rewards are computed per
UE from the step's latency statistic: 1 when the latency budget holds, a
penalty proportional to the violation otherwise.

Time is tracked in integer slot counts so latency arithmetic stays exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .link import DEFAULT_MCS_TABLE, McsTable, mcs_from_sinr, symbols_required
from .sched import INFINITE_DEMAND, RrState, _ga_fill, _pa_fill, _rr_fill

OBS_DIM = 6

# Frame size anchors (bytes) for the compression grid: the most aggressive
# setting (q=8, c=0) produces roughly half the payload of the most
# conservative one (q=10, c=10); intermediate settings are log-linear.
_SIZE_ANCHOR_SMALL = 17_240.0
_SIZE_ANCHOR_LARGE = 34_480.0

# Outage UEs report unbounded symbol demand; the observation feature is
# clamped so every entry stays finite.
_SYMBOL_DEMAND_CAP = 10_000


@dataclass(frozen=True)
class CompressionConfig:
    """Point-cloud compression setting and the frame-size law it induces."""

    q: int = 10  # quantization bits
    c: int = 10  # compression level
    mean_frame_bytes: float | None = None  # explicit override of the grid law
    frame_size_jitter: float = 0.05  # uniform half-width as fraction of mean

    def __post_init__(self):
        if self.q not in (8, 9, 10):
            raise ValueError(f"quantization bits must be one of 8, 9, 10 (got {self.q})")
        if self.c not in (0, 5, 10):
            raise ValueError(f"compression level must be one of 0, 5, 10 (got {self.c})")
        if self.mean_frame_bytes is not None and self.mean_frame_bytes <= 0:
            raise ValueError("mean_frame_bytes must be > 0")
        if not 0.0 <= self.frame_size_jitter < 1.0:
            raise ValueError("frame_size_jitter must lie in [0, 1)")

    @property
    def resolved_mean_bytes(self) -> float:
        if self.mean_frame_bytes is not None:
            return self.mean_frame_bytes
        t = ((self.q - 8) / 2.0 + self.c / 10.0) / 2.0
        return _SIZE_ANCHOR_SMALL * (_SIZE_ANCHOR_LARGE / _SIZE_ANCHOR_SMALL) ** t


@dataclass(frozen=True)
class ChannelConfig:
    """Per-slot AR(1) SINR process in dB around a per-UE mean."""

    sinr_mean: float = 15.0  # dB
    sinr_ar_coefficient: float = 0.98  # per-slot memory
    sinr_noise_std: float = 0.5  # dB
    per_ue_mean_offsets: tuple[float, ...] | None = None  # None: drawn per reset
    offset_spread: float = 5.0  # half-range of the uniform offset draw, dB

    def __post_init__(self):
        if not 0.0 <= self.sinr_ar_coefficient < 1.0:
            raise ValueError("sinr_ar_coefficient must lie in [0, 1)")
        if self.sinr_noise_std < 0:
            raise ValueError("sinr_noise_std must be >= 0")
        if self.offset_spread < 0:
            raise ValueError("offset_spread must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    n_ues: int = 3
    symbols_per_slot: int = 12
    slot_duration: float = 0.125e-3  # seconds
    frame_rate: float = 30.0  # application frames per second
    latency_threshold: float = 25.0  # ms
    n_priority_levels: int = 3
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    wired_delay: float = 10.0  # ms, fixed gNB <-> operator segment
    steps_per_episode: int = 400
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    rng_seed: int = 0
    mcs_table: McsTable = field(default_factory=lambda: DEFAULT_MCS_TABLE)

    def __post_init__(self):
        if self.n_ues < 1:
            raise ValueError("n_ues must be >= 1")
        if self.symbols_per_slot < 1:
            raise ValueError("symbols_per_slot must be >= 1")
        if self.n_priority_levels < 1:
            raise ValueError("n_priority_levels must be >= 1")
        if self.latency_threshold <= 0:
            raise ValueError("latency_threshold must be > 0")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be > 0")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be > 0")
        if self.wired_delay < 0:
            raise ValueError("wired_delay must be >= 0")
        if self.steps_per_episode < 0:
            raise ValueError("steps_per_episode must be >= 0")
        if self.slots_per_frame < 1:
            raise ValueError("frame period must cover at least one slot")
        offs = self.channel.per_ue_mean_offsets
        if offs is not None and len(offs) != self.n_ues:
            raise ValueError(
                f"per_ue_mean_offsets has length {len(offs)}, expected n_ues={self.n_ues}"
            )

    @property
    def slots_per_frame(self) -> int:
        """Slots per decision step; the frame period rounded to whole slots."""
        return round(1.0 / (self.frame_rate * self.slot_duration))

    @property
    def slot_ms(self) -> float:
        return self.slot_duration * 1e3


@dataclass
class Frame:
    """One queued sensor frame; timestamps are integer slot boundaries."""

    ue_id: int
    size_bits: int
    remaining_bits: int
    generated_at: int
    delivered_at: int | None = None


@dataclass
class UeState:
    """Transmit buffer, link state, and running decision-step statistics."""

    buffer: deque = field(default_factory=deque)
    buffer_bits: int = 0
    sinr_db: float = 0.0
    mcs_index: int = 0
    bits_per_symbol: int = 0
    sinr_sum: float = 0.0
    sinr_count: int = 0
    mcs_sum: float = 0.0
    mcs_count: int = 0
    latency_sum_ms: float = 0.0
    latency_count: int = 0
    app_bytes_tx: int = 0

    def reset_step_stats(self):
        self.sinr_sum = 0.0
        self.sinr_count = 0
        self.mcs_sum = 0.0
        self.mcs_count = 0
        self.latency_sum_ms = 0.0
        self.latency_count = 0
        self.app_bytes_tx = 0


@dataclass(frozen=True)
class ObsScales:
    """Fixed normalization constants for the 6 observation features."""

    sinr_db: float = 30.0
    buffer_bits: float = 1e6
    symbols: float = 1e3
    mcs_index: float = 15.0
    latency_ms: float = 100.0
    app_bytes: float = 1e5


@dataclass
class StepDiagnostics:
    delivered_latencies_ms: list  # per UE: list of E2E latencies delivered this step
    reward_latency_ms: list  # per UE: latency statistic fed to the reward, or None
    allocations: list | None = None  # (slot, demands, symbols) when recording


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------


def latency_reward(latency_ms: float, threshold_ms: float) -> float:
    """1 within the latency budget, else a penalty proportional to the excess."""
    if latency_ms < 0:
        raise ValueError("latency_ms must be >= 0")
    if latency_ms <= threshold_ms:
        return 1.0
    return -(latency_ms - threshold_ms) / 100.0


def generate_frames(n_ues: int, clock: int, compression: CompressionConfig,
                    rng: np.random.Generator) -> list[Frame]:
    """One new frame per UE; sizes uniform in mean +/- jitter, whole bytes."""
    mean = compression.resolved_mean_bytes
    half = compression.frame_size_jitter * mean
    size_bytes = np.rint(rng.uniform(mean - half, mean + half, n_ues)).astype(np.int64)
    return [
        Frame(ue_id=i, size_bits=int(b) * 8, remaining_bits=int(b) * 8, generated_at=clock)
        for i, b in enumerate(size_bytes)
    ]


def sinr_step(sinr_db: float, ue_mean_db: float, config: ChannelConfig,
              rng: np.random.Generator) -> float:
    """One AR(1) update of the dB-domain SINR around the UE's mean."""
    noise = rng.normal(0.0, config.sinr_noise_std) if config.sinr_noise_std > 0 else 0.0
    return ue_mean_db + config.sinr_ar_coefficient * (sinr_db - ue_mean_db) + noise


def drain_buffer(state: UeState, allocated_symbols: int, bits_per_symbol: int,
                 slot_end: int) -> list[Frame]:
    """Remove allocated_symbols * bits_per_symbol bits FIFO from the buffer.

    Frames whose remaining bits reach zero are stamped delivered at the end
    of the current slot and returned.
    """
    budget = allocated_symbols * bits_per_symbol
    delivered = []
    buf = state.buffer
    while budget > 0 and buf:
        frame = buf[0]
        take = budget if budget < frame.remaining_bits else frame.remaining_bits
        frame.remaining_bits -= take
        state.buffer_bits -= take
        budget -= take
        if frame.remaining_bits == 0:
            frame.delivered_at = slot_end
            delivered.append(frame)
            buf.popleft()
    return delivered


def observe(state: UeState, scales: ObsScales = ObsScales()) -> np.ndarray:
    """The 6 normalized features for one UE; resets the step statistics."""
    avg_sinr = state.sinr_sum / state.sinr_count if state.sinr_count else 0.0
    avg_mcs = state.mcs_sum / state.mcs_count if state.mcs_count else 0.0
    avg_lat = state.latency_sum_ms / state.latency_count if state.latency_count else 0.0
    need = symbols_required(state.buffer_bits, state.bits_per_symbol)
    if need > _SYMBOL_DEMAND_CAP:
        need = _SYMBOL_DEMAND_CAP
    features = np.array([
        avg_sinr / scales.sinr_db,
        state.buffer_bits / scales.buffer_bits,
        need / scales.symbols,
        avg_mcs / scales.mcs_index,
        avg_lat / scales.latency_ms,
        state.app_bytes_tx / scales.app_bytes,
    ])
    state.reset_step_stats()
    return features


@njit(cache=True)
def _ar1_scan(state, mean, rho, noise, out):
    """Advance every UE's SINR over a step's worth of slots; updates state."""
    n_slots, n_ues = noise.shape
    for j in range(n_ues):
        s = state[j]
        m = mean[j]
        for t in range(n_slots):
            s = m + rho * (s - m) + noise[t, j]
            out[t, j] = s
        state[j] = s


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


class UplinkEnv:
    """Slot-level uplink scheduling environment, one instance per episode.

    Deterministic given (config.rng_seed, action sequence). The allocator is
    fixed at construction: "pa", "ga", or "rr" (priority-blind benchmark).
    """

    def __init__(self, config: EnvConfig, scheduler: str = "pa",
                 record_allocations: bool = False):
        if scheduler not in ("pa", "ga", "rr"):
            raise ValueError(f"unknown scheduler {scheduler!r}")
        self.config = config
        self.scheduler = scheduler
        self.record_allocations = record_allocations
        self.obs_scales = ObsScales()
        self.reset()

    def reset(self) -> np.ndarray:
        cfg = self.config
        n = cfg.n_ues
        self._rng = np.random.default_rng(cfg.rng_seed)
        if cfg.channel.per_ue_mean_offsets is None:
            spread = cfg.channel.offset_spread
            offsets = self._rng.uniform(-spread, spread, n)
        else:
            offsets = np.asarray(cfg.channel.per_ue_mean_offsets, dtype=np.float64)
        self._mu = cfg.channel.sinr_mean + offsets
        self._sinr = self._mu.copy()
        self.ues = []
        for j in range(n):
            idx, bps = mcs_from_sinr(cfg.mcs_table, self._sinr[j])
            self.ues.append(UeState(sinr_db=float(self._sinr[j]), mcs_index=idx,
                                    bits_per_symbol=bps))
        self._rr = RrState(0)
        self._slot = 0
        self.total_generated_bits = np.zeros(n, dtype=np.int64)
        self.total_drained_bits = np.zeros(n, dtype=np.int64)
        # hot-loop buffers
        s = cfg.slots_per_frame
        self._pri = np.ones(n, dtype=np.int64)
        self._dem = np.zeros(n, dtype=np.int64)
        self._alloc = np.zeros(n, dtype=np.int64)
        self._path = np.empty((s, n), dtype=np.float64)
        self._thr = cfg.mcs_table.thresholds()
        self._bits_lut = cfg.mcs_table.bits_by_index()
        return np.zeros((n, OBS_DIM))

    def step(self, priorities) -> tuple[np.ndarray, np.ndarray, StepDiagnostics]:
        cfg = self.config
        n = cfg.n_ues
        n_slots = cfg.slots_per_frame
        k_max = cfg.n_priority_levels
        if len(priorities) != n:
            raise ValueError(f"expected {n} priorities, got {len(priorities)}")
        for k in priorities:
            if int(k) != k or not 1 <= int(k) <= k_max:
                raise ValueError(f"priority {k!r} outside 1..{k_max}")
        self._pri[:] = [int(k) for k in priorities]

        slot_ms = cfg.slot_ms
        step_start = self._slot
        delivered: list[list[float]] = [[] for _ in range(n)]
        alloc_log = [] if self.record_allocations else None

        # traffic: one frame per UE at the start of the period
        for frame in generate_frames(n, step_start, cfg.compression, self._rng):
            ue = self.ues[frame.ue_id]
            self.total_generated_bits[frame.ue_id] += frame.size_bits
            if frame.size_bits == 0:
                frame.delivered_at = frame.generated_at
                self._record_delivery(ue, frame, delivered)
            else:
                ue.buffer.append(frame)
                ue.buffer_bits += frame.size_bits

        # channel: evolve all slots of the period at once
        sigma = cfg.channel.sinr_noise_std
        if sigma > 0:
            noise = self._rng.standard_normal((n_slots, n)) * sigma
        else:
            noise = np.zeros((n_slots, n))
        _ar1_scan(self._sinr, self._mu, cfg.channel.sinr_ar_coefficient, noise, self._path)
        idx_path = np.searchsorted(self._thr, self._path, side="right")
        bps_path = self._bits_lut[idx_path]
        sinr_sums = self._path.sum(axis=0)
        mcs_sums = idx_path.sum(axis=0)
        for j, ue in enumerate(self.ues):
            ue.sinr_sum += sinr_sums[j]
            ue.sinr_count += n_slots
            ue.mcs_sum += mcs_sums[j]
            ue.mcs_count += n_slots
            ue.sinr_db = float(self._path[-1, j])
            ue.mcs_index = int(idx_path[-1, j])
            ue.bits_per_symbol = int(bps_path[-1, j])

        # transmission: per-slot demand -> allocation -> FIFO drain
        backlog = sum(ue.buffer_bits for ue in self.ues)
        if backlog > 0:
            bps_rows = bps_path.tolist()
            dem = self._dem
            alloc = self._alloc
            u_total = cfg.symbols_per_slot
            for s in range(n_slots):
                bps_row = bps_rows[s]
                for j in range(n):
                    bb = self.ues[j].buffer_bits
                    if bb == 0:
                        dem[j] = 0
                    else:
                        bps = bps_row[j]
                        dem[j] = INFINITE_DEMAND if bps == 0 else -(-bb // bps)
                if self.scheduler == "pa":
                    _pa_fill(self._pri, dem, u_total, alloc)
                elif self.scheduler == "ga":
                    _ga_fill(self._pri, dem, u_total, alloc)
                else:
                    self._rr.next_ue = int(_rr_fill(dem, u_total, self._rr.next_ue, alloc))
                if alloc_log is not None:
                    alloc_log.append((step_start + s, dem.copy(), alloc.copy()))
                slot_end = step_start + s + 1
                for j in range(n):
                    a = alloc[j]
                    if a > 0:
                        ue = self.ues[j]
                        bps = bps_row[j]
                        if bps == 0 or ue.buffer_bits == 0:
                            continue
                        before = ue.buffer_bits
                        for frame in drain_buffer(ue, int(a), bps, slot_end):
                            self._record_delivery(ue, frame, delivered)
                        drained = before - ue.buffer_bits
                        self.total_drained_bits[j] += drained
                        backlog -= drained
                if backlog == 0:
                    break

        self._slot = step_start + n_slots

        # rewards from the step's latency statistic
        rewards = np.empty(n)
        reward_lat: list[float | None] = [None] * n
        for j, ue in enumerate(self.ues):
            if delivered[j]:
                stat = sum(delivered[j]) / len(delivered[j])
            elif ue.buffer:
                stat = (self._slot - ue.buffer[0].generated_at) * slot_ms + cfg.wired_delay
            else:
                rewards[j] = 1.0
                continue
            reward_lat[j] = stat
            rewards[j] = latency_reward(stat, cfg.latency_threshold)

        obs = np.stack([observe(ue, self.obs_scales) for ue in self.ues])
        diag = StepDiagnostics(delivered_latencies_ms=delivered,
                               reward_latency_ms=reward_lat,
                               allocations=alloc_log)
        return obs, rewards, diag

    def _record_delivery(self, ue: UeState, frame: Frame, delivered: list):
        lat = (frame.delivered_at - frame.generated_at) * self.config.slot_ms \
            + self.config.wired_delay
        ue.latency_sum_ms += lat
        ue.latency_count += 1
        ue.app_bytes_tx += frame.size_bits // 8
        delivered[frame.ue_id].append(lat)

    def pending_latency_lower_bounds(self) -> list[list[float]]:
        """Per UE: lower-bound E2E latency of every frame still queued."""
        slot_ms = self.config.slot_ms
        wired = self.config.wired_delay
        return [
            [(self._slot - f.generated_at) * slot_ms + wired for f in ue.buffer]
            for ue in self.ues
        ]
