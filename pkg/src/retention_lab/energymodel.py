"""Latency and energy accounting for an L1 data cache run.

The timing model is additive and in-order::

    cycles = instructions * base_cpi
           + l1_misses * l2_hit_penalty_cycles
           + l2_misses * memory_penalty_cycles
           + l1_writes * write_stall_cycles

which is exactly how the simulator advances its clock, so
``compute_latency(stats, ...)`` reproduces ``stats.sim_time_ns``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

# Placeholder L2 constants: the source tables only characterise the L1.
DEFAULT_L2_HIT_PENALTY = 20
DEFAULT_MEMORY_PENALTY = 200
DEFAULT_L2_ACCESS_NJ = 0.05


@dataclass(frozen=True)
class TimingParams:
    frequency_hz: float = 2e9
    base_cpi: float = 1.0
    l2_hit_penalty_cycles: float = DEFAULT_L2_HIT_PENALTY
    memory_penalty_cycles: float = DEFAULT_MEMORY_PENALTY
    hit_cycles: int = 1
    l2_access_energy_nj: float = DEFAULT_L2_ACCESS_NJ

    def __post_init__(self):
        if self.frequency_hz <= 0 or self.base_cpi <= 0 or self.hit_cycles <= 0:
            raise ValueError("frequency, base CPI and hit cycles must be positive")
        if self.l2_hit_penalty_cycles < 0 or self.memory_penalty_cycles < 0:
            raise ValueError("penalties must be non-negative")
        if self.l2_access_energy_nj < 0:
            raise ValueError("L2 access energy must be non-negative")

    @property
    def frequency_ghz(self) -> float:
        return self.frequency_hz / 1e9

    @property
    def cycle_ns(self) -> float:
        return 1e9 / self.frequency_hz

    @classmethod
    def stall_free(cls, **kw) -> "TimingParams":
        """Zero miss penalties; used by properties that must not depend on L2."""
        kw.setdefault("l2_hit_penalty_cycles", 0)
        kw.setdefault("memory_penalty_cycles", 0)
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EnergyReport:
    dynamic_read_nj: float
    dynamic_write_nj: float
    leakage_nj: float
    l2_charge_nj: float
    total_nj: float
    latency_ns: float

    def to_dict(self):
        return asdict(self)


def write_stall_cycles(profile, timing: TimingParams) -> int:
    """Extra cycles a store spends beyond the single hit cycle."""
    # round first so 0.5ns * 2GHz lands on 1, not 1.0000000000000002
    cycles = math.ceil(round(profile.write_latency_ns * timing.frequency_ghz, 9))
    return max(0, cycles - timing.hit_cycles)


def compute_cycles(stats, profile, timing: TimingParams) -> float:
    misses = stats.l1_read_misses + stats.l1_write_misses
    return (
        stats.instructions * timing.base_cpi
        + misses * timing.l2_hit_penalty_cycles
        + stats.l2_misses * timing.memory_penalty_cycles
        + stats.l1_writes * write_stall_cycles(profile, timing)
    )


def compute_latency(stats, profile, timing: TimingParams) -> float:
    return compute_cycles(stats, profile, timing) / timing.frequency_ghz


def leakage_energy_nj(profile, duration_ns: float) -> float:
    # mW * ns = pJ
    return profile.leakage_mw * duration_ns * 1e-3


def compute_energy(stats, profile, timing: TimingParams, latency_ns: float | None = None) -> EnergyReport:
    """Break a run's L1 energy into components.

    Fills write the array, so they are charged at the write energy.
    ``l2_accesses`` already includes the writebacks caused by expiry, so they
    are charged once.
    """
    if latency_ns is None:
        latency_ns = compute_latency(stats, profile, timing)
    fills = stats.l1_read_misses + stats.l1_write_misses
    dyn_read = stats.l1_reads * profile.read_energy_nj
    dyn_write = (stats.l1_writes + fills) * profile.write_energy_nj
    leak = leakage_energy_nj(profile, latency_ns)
    l2 = stats.l2_accesses * timing.l2_access_energy_nj
    total = dyn_read + dyn_write + leak + l2
    return EnergyReport(dyn_read, dyn_write, leak, l2, total, latency_ns)
