"""Per-slot OFDM-symbol allocators.

Three strategies share one contract: given per-UE priority levels and per-UE
symbol demands, split the ``total_symbols`` of a slot so that no UE receives
more than its demand and the slot is never oversubscribed.

* proportional: priority-weighted floor shares, leftover granted one UE at a
  time by descending priority (UEs in outage, i.e. with unbounded demand, are
  served after every UE with a finite backlog so they cannot soak up symbols
  they cannot drain).
* greedy: strict priority order, each UE takes as much as it needs.
* round robin: equal shares regardless of priority, remainder rotated.

A UE whose link is in outage cannot express its backlog as a finite symbol
count; its demand is the sentinel ``INFINITE_DEMAND`` (a large int64 so the
kernels stay in integer arithmetic). Granted symbol counts are always ints.

The kernels are numba-compiled and allocation-free: they are also the hot
path of the simulator's slot loop, and the equivalence test sweeps them over
tens of millions of cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# Demand sentinel for zero-rate (outage) UEs. Large enough to exceed any real
# backlog, small enough that int64 arithmetic (demand - grant) cannot wrap.
INFINITE_DEMAND = 1 << 62


@dataclass
class AllocationRequest:
    """One slot's allocation problem: same-length priority/demand vectors."""

    priorities: list[int]
    demands: list[int]
    total_symbols: int


@dataclass
class Allocation:
    symbols: np.ndarray  # int64, one entry per UE


@dataclass
class RrState:
    """Rotation pointer for the round-robin benchmark, owned by one env."""

    next_ue: int = 0


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(inline="always", error_model="numpy", cache=True)
def _pa_fill(priorities, demands, total, out):
    """Floor shares u_i = floor(total * k_i / sum k), capped at demand, then
    leftover granted one UE at a time: finite-demand UEs before outage UEs,
    by descending priority, ties broken by ascending index."""
    n = priorities.shape[0]
    ksum = 0
    for i in range(n):
        ksum += priorities[i]
    used = 0
    for i in range(n):
        base = (total * priorities[i]) // ksum
        if base > demands[i]:
            base = demands[i]
        out[i] = base
        used += base
    rem = total - used
    while rem > 0:
        best = -1
        best_key = -1
        for i in range(n):
            if demands[i] > out[i]:
                # finite backlog outranks outage regardless of priority
                key = priorities[i] + (256 if demands[i] != INFINITE_DEMAND else 0)
                if key > best_key:
                    best = i
                    best_key = key
        if best == -1:
            break
        unmet = demands[best] - out[best]
        grant = rem if rem < unmet else unmet
        out[best] += grant
        rem -= grant


@njit(inline="always", error_model="numpy", cache=True)
def _ga_fill(priorities, demands, total, out):
    """Strict priority service: highest priority (ties by ascending index)
    takes min(remaining, demand); repeat until slot or demands exhaust."""
    n = priorities.shape[0]
    for i in range(n):
        out[i] = 0
    rem = total
    while rem > 0:
        best = -1
        best_k = -1
        for i in range(n):
            if demands[i] > out[i] and priorities[i] > best_k:
                best = i
                best_k = priorities[i]
        if best == -1:
            break
        unmet = demands[best] - out[best]
        grant = rem if rem < unmet else unmet
        out[best] += grant
        rem -= grant


@njit(inline="always", error_model="numpy", cache=True)
def _rr_fill(demands, total, pointer, out):
    """Equal floor shares capped at demand; the remainder (slot modulo plus
    symbols freed by demand caps) is handed out one symbol at a time in
    rotation starting at ``pointer``. Returns the advanced pointer."""
    n = demands.shape[0]
    base = total // n
    used = 0
    active = 0
    for i in range(n):
        share = base
        if share > demands[i]:
            share = demands[i]
        out[i] = share
        used += share
        if demands[i] > share:
            active += 1
    rem = total - used
    idx = pointer
    while rem > 0 and active > 0:
        if demands[idx] > out[idx]:
            out[idx] += 1
            rem -= 1
            if demands[idx] == out[idx]:
                active -= 1
        idx += 1
        if idx == n:
            idx = 0
    return (pointer + total % n) % n


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _check(request: AllocationRequest) -> tuple[np.ndarray, np.ndarray]:
    n = len(request.priorities)
    if n == 0:
        raise ValueError("allocation request must contain at least one UE")
    if len(request.demands) != n:
        raise ValueError(
            f"priorities ({n}) and demands ({len(request.demands)}) differ in length"
        )
    if request.total_symbols < 0:
        raise ValueError("total_symbols must be >= 0")
    pri = np.asarray(request.priorities, dtype=np.int64)
    if pri.sum() <= 0:
        raise ValueError("priority levels must sum to a positive value")
    dem = np.empty(n, dtype=np.int64)
    for i, d in enumerate(request.demands):
        if isinstance(d, float) and math.isinf(d):
            dem[i] = INFINITE_DEMAND
        else:
            dem[i] = int(d)
        if dem[i] < 0:
            raise ValueError("demands must be >= 0")
    return pri, dem


def proportional_allocate(request: AllocationRequest) -> Allocation:
    pri, dem = _check(request)
    out = np.empty(pri.shape[0], dtype=np.int64)
    _pa_fill(pri, dem, request.total_symbols, out)
    return Allocation(symbols=out)


def greedy_allocate(request: AllocationRequest) -> Allocation:
    pri, dem = _check(request)
    out = np.empty(pri.shape[0], dtype=np.int64)
    _ga_fill(pri, dem, request.total_symbols, out)
    return Allocation(symbols=out)


def round_robin_allocate(request: AllocationRequest, rr_state: RrState) -> Allocation:
    pri, dem = _check(request)
    if not 0 <= rr_state.next_ue < pri.shape[0]:
        raise ValueError("round-robin pointer out of range")
    out = np.empty(pri.shape[0], dtype=np.int64)
    rr_state.next_ue = int(_rr_fill(dem, request.total_symbols, rr_state.next_ue, out))
    return Allocation(symbols=out)
