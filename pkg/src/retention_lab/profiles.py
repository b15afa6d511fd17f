"""Retention profiles for the L1 data cache (SRAM and relaxed-retention STT-RAM)."""

from __future__ import annotations

import math
from dataclasses import dataclass

SRAM = "sram"
STTRAM = "sttram"


@dataclass(frozen=True)
class RetentionProfile:
    name: str
    retention_time_ns: float
    hit_latency_ns: float
    write_latency_ns: float
    read_energy_nj: float
    write_energy_nj: float
    leakage_mw: float
    technology: str = STTRAM

    def __post_init__(self):
        for field in ("hit_latency_ns", "write_latency_ns", "read_energy_nj",
                      "write_energy_nj", "leakage_mw"):
            v = getattr(self, field)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{self.name}: {field} must be finite and > 0, got {v}")
        if not self.retention_time_ns > 0:
            raise ValueError(f"{self.name}: retention time must be > 0 or inf")
        if self.technology not in (SRAM, STTRAM):
            raise ValueError(f"{self.name}: unknown technology {self.technology!r}")

    @property
    def volatile_retention(self) -> bool:
        return math.isfinite(self.retention_time_ns)

    def validate_physical(self):
        """STT-RAM units need a finite retention; SRAM must not expire."""
        if self.technology == STTRAM and not self.volatile_retention:
            raise ValueError(
                f"{self.name}: STT-RAM energy constants with infinite retention; "
                "use the SRAM profile for a non-expiring cache")
        if self.technology == SRAM and self.volatile_retention:
            raise ValueError(f"{self.name}: SRAM profile cannot have a finite retention time")


_STT_LEAK = 4.659

SRAM_PROFILE = RetentionProfile("sram", math.inf, 0.486, 0.350, 0.0076, 0.0066, 34.265, SRAM)
STT_10US = RetentionProfile("10us", 10_000.0, 0.464, 0.601, 0.003, 0.026, _STT_LEAK)
STT_26_5US = RetentionProfile("26.5us", 26_500.0, 0.454, 0.769, 0.003, 0.030, _STT_LEAK)
STT_50US = RetentionProfile("50us", 50_000.0, 0.448, 0.894, 0.003, 0.033, _STT_LEAK)
STT_75US = RetentionProfile("75us", 75_000.0, 0.445, 0.981, 0.003, 0.035, _STT_LEAK)
STT_100US = RetentionProfile("100us", 100_000.0, 0.443, 1.045, 0.003, 0.036, _STT_LEAK)
STT_1MS = RetentionProfile("1ms", 1_000_000.0, 0.438, 1.647, 0.003, 0.051, _STT_LEAK)

# Ordered shortest to longest; the index into this tuple is the class label.
RETENTION_SET = (STT_10US, STT_26_5US, STT_50US, STT_75US, STT_100US, STT_1MS)
BASE_PROFILE = STT_1MS

ALL_PROFILES = {p.name: p for p in (SRAM_PROFILE,) + RETENTION_SET}


def profile_by_name(name: str, table=None) -> RetentionProfile:
    table = ALL_PROFILES if table is None else table
    try:
        return table[name]
    except KeyError:
        raise KeyError(f"unknown retention profile {name!r}; known: {', '.join(table)}") from None
