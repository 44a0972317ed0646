"""SINR-to-MCS link adaptation and symbol demand computation.

The MCS table maps SINR thresholds (dB) to spectral efficiencies (bits per
resource element). MCS index 0 is reserved for outage (SINR below the lowest
threshold, zero rate); table entry ``j`` corresponds to MCS index ``j + 1``,
so a 15-entry table yields indices 0..15.

The default table is a CQI-style ladder for a 50 MHz carrier at 120 kHz
subcarrier spacing: 32 PRBs x 12 subcarriers = 384 resource elements per
OFDM symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sched import INFINITE_DEMAND


@dataclass(frozen=True)
class McsTable:
    sinr_thresholds_db: tuple[float, ...]
    spectral_efficiencies: tuple[float, ...]  # bits per resource element
    resource_elements_per_symbol: int = 384

    def __post_init__(self):
        thr = self.sinr_thresholds_db
        eff = self.spectral_efficiencies
        if len(thr) == 0 or len(thr) != len(eff):
            raise ValueError("thresholds and efficiencies must be equal-length, non-empty")
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError("SINR thresholds must be strictly increasing")
        if any(b <= a for a, b in zip(eff, eff[1:])) or eff[0] <= 0:
            raise ValueError("spectral efficiencies must be positive and strictly increasing")
        if self.resource_elements_per_symbol <= 0:
            raise ValueError("resource_elements_per_symbol must be > 0")

    @property
    def n_indices(self) -> int:
        """Number of MCS indices including the outage index 0."""
        return len(self.sinr_thresholds_db) + 1

    def bits_per_symbol(self, entry: int) -> int:
        """Bits carried by one OFDM symbol at table entry ``entry`` (0-based)."""
        return int(
            math.floor(self.resource_elements_per_symbol * self.spectral_efficiencies[entry])
        )

    def bits_by_index(self) -> np.ndarray:
        """int64 lookup vector indexed by MCS index; index 0 (outage) is 0."""
        bits = [0] + [self.bits_per_symbol(j) for j in range(len(self.spectral_efficiencies))]
        return np.asarray(bits, dtype=np.int64)

    def thresholds(self) -> np.ndarray:
        return np.asarray(self.sinr_thresholds_db, dtype=np.float64)


DEFAULT_MCS_TABLE = McsTable(
    sinr_thresholds_db=(-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0,
                        10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0),
    spectral_efficiencies=(0.15, 0.23, 0.38, 0.60, 0.88, 1.18, 1.48, 1.91,
                           2.41, 2.73, 3.32, 3.90, 4.52, 5.12, 5.55),
    resource_elements_per_symbol=384,
)


def mcs_from_sinr(table: McsTable, sinr_db: float) -> tuple[int, int]:
    """Highest MCS index whose threshold does not exceed ``sinr_db``.

    Returns ``(mcs_index, bits_per_symbol)``; ``(0, 0)`` below the lowest
    threshold (outage). A SINR exactly at a threshold selects that index.
    """
    idx = int(np.searchsorted(table.thresholds(), sinr_db, side="right"))
    if idx == 0:
        return 0, 0
    return idx, table.bits_per_symbol(idx - 1)


def mcs_lookup(table: McsTable, sinr_db: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``mcs_from_sinr`` over an array of SINR samples."""
    idx = np.searchsorted(table.thresholds(), sinr_db, side="right")
    return idx, table.bits_by_index()[idx]


def symbols_required(buffer_bits: int, bits_per_symbol: int) -> int:
    """OFDM symbols needed to drain ``buffer_bits`` at the given rate.

    Zero-rate links with a non-empty buffer cannot state a finite demand and
    report ``INFINITE_DEMAND``.
    """
    if buffer_bits < 0:
        raise ValueError("buffer_bits must be >= 0")
    if buffer_bits == 0:
        return 0
    if bits_per_symbol == 0:
        return INFINITE_DEMAND
    return -(-buffer_bits // bits_per_symbol)
