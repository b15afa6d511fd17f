"""Trace-driven L1 data cache simulator with retention expiry, backed by an SRAM L2.

A per-block monitor counter with ``N`` states ages every block from its last
write. Once the age reaches ``(N-1)/N`` of the retention time the block is
invalidated (and written back if dirty) before it can serve another hit.
Expiry is checked lazily on the accessed set and by a full sweep at every
monitor quantum ``T/N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _kernels as K
from .energymodel import TimingParams, write_stall_cycles
from .profiles import RetentionProfile

SIMULATED_TIME = "simulated"
NOMINAL_TIME = "nominal"


@dataclass(frozen=True)
class CacheGeometry:
    capacity_bytes: int = 32 * 1024
    line_bytes: int = 64
    associativity: int = 4

    def __post_init__(self):
        if self.line_bytes < 1 or self.line_bytes & (self.line_bytes - 1):
            raise ValueError("line_bytes must be a power of two")
        if self.associativity < 1:
            raise ValueError("associativity must be >= 1")
        if self.capacity_bytes <= 0 or self.capacity_bytes % (self.line_bytes * self.associativity):
            raise ValueError("capacity must be a positive multiple of line_bytes * associativity")

    @property
    def n_lines(self):
        return self.capacity_bytes // self.line_bytes

    @property
    def n_sets(self):
        return self.n_lines // self.associativity

    @property
    def offset_bits(self):
        return self.line_bytes.bit_length() - 1

    @classmethod
    def sets_ways(cls, sets, ways, line_bytes=64):
        return cls(sets * ways * line_bytes, line_bytes, ways)


L1_GEOMETRY = CacheGeometry()
L2_GEOMETRY = CacheGeometry(1024 * 1024, 64, 16)


@dataclass(frozen=True)
class MonitorConfig:
    n_states: int = 4
    aging_clock: str = SIMULATED_TIME

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError("monitor counter needs at least 2 states")
        if self.aging_clock not in (SIMULATED_TIME, NOMINAL_TIME):
            raise ValueError(f"aging_clock must be {SIMULATED_TIME!r} or {NOMINAL_TIME!r}")

    @property
    def flag_state(self):
        return self.n_states - 1

    @property
    def bits_per_block(self):
        return math.ceil(math.log2(self.n_states))

    def quantum_ns(self, profile: RetentionProfile):
        return profile.retention_time_ns / self.n_states

    def threshold_ns(self, profile: RetentionProfile):
        """Age at which the flag is raised and the block must leave the cache."""
        return self.flag_state * profile.retention_time_ns / self.n_states


@dataclass
class SimStats:
    instructions: int = 0
    l1_reads: int = 0
    l1_writes: int = 0
    l1_read_misses: int = 0
    l1_write_misses: int = 0
    l1_writebacks: int = 0
    expiry_evictions: int = 0
    expiry_writebacks: int = 0
    l2_accesses: int = 0
    l2_misses: int = 0
    l2_writebacks: int = 0
    unique_lines: int = 0
    cycles: float = 0.0
    sim_time_ns: float = 0.0
    l1_evictions: int = 0
    write_after_write: int = 0
    hit_runs: int = 0
    write_gap_count: int = 0
    write_gap_sum_ns: float = 0.0
    read_gap_count: int = 0
    read_gap_sum_ns: float = 0.0
    max_hit_age_ns: float = 0.0
    single_touch_lines: int = 0
    stall_cycles: int = 0
    write_gap_hist: np.ndarray = field(default_factory=lambda: np.zeros(K.NBINS, dtype=np.int64),
                                       repr=False, compare=False)
    per_phase: list = field(default_factory=list, repr=False, compare=False)

    @property
    def l1_misses(self):
        return self.l1_read_misses + self.l1_write_misses

    @property
    def l1_accesses(self):
        return self.l1_reads + self.l1_writes

    @property
    def l1_hits(self):
        return self.l1_accesses - self.l1_misses

    @property
    def fills(self):
        return self.l1_misses

    def write_gap_percentile(self, q: float) -> float:
        """Approximate percentile (ns) of observed write-to-write gaps from the log histogram."""
        total = int(self.write_gap_hist.sum())
        if total == 0:
            return 0.0
        target = q * total
        cum = np.cumsum(self.write_gap_hist)
        b = int(np.searchsorted(cum, target, side="left"))
        # geometric midpoint of the bin, inverted from floor(4*log2(g+1))
        lo = 2.0 ** (b / K.BIN_SCALE) - 1.0
        hi = 2.0 ** ((b + 1) / K.BIN_SCALE) - 1.0
        return math.sqrt(max(lo, 0.0) * hi) if lo > 0 else hi / 2.0

    def __add__(self, other: "SimStats") -> "SimStats":
        out = SimStats()
        for f in fields(SimStats):
            if f.name in ("write_gap_hist", "per_phase"):
                continue
            if f.name == "max_hit_age_ns":
                out.max_hit_age_ns = max(self.max_hit_age_ns, other.max_hit_age_ns)
            else:
                setattr(out, f.name, getattr(self, f.name) + getattr(other, f.name))
        out.write_gap_hist = self.write_gap_hist + other.write_gap_hist
        return out

    def __sub__(self, other: "SimStats") -> "SimStats":
        """Counter difference between two snapshots of one run."""
        out = SimStats()
        for f in fields(SimStats):
            if f.name in ("write_gap_hist", "per_phase", "max_hit_age_ns", "unique_lines",
                          "single_touch_lines"):
                continue
            setattr(out, f.name, getattr(self, f.name) - getattr(other, f.name))
        out.max_hit_age_ns = self.max_hit_age_ns
        out.write_gap_hist = self.write_gap_hist - other.write_gap_hist
        return out

    def to_dict(self, include_phases=True):
        d = {}
        for f in fields(SimStats):
            if f.name == "per_phase":
                continue
            v = getattr(self, f.name)
            if f.name == "write_gap_hist":
                nz = np.nonzero(v)[0]
                v = [[int(i), int(v[i])] for i in nz]
            d[f.name] = v
        if include_phases and self.per_phase:
            d["per_phase"] = {pid: s.to_dict(False) for pid, s in self.per_phase}
        return d

    @classmethod
    def from_dict(cls, d):
        s = cls()
        for f in fields(SimStats):
            if f.name in ("per_phase", "write_gap_hist") or f.name not in d:
                continue
            setattr(s, f.name, type(getattr(s, f.name))(d[f.name]))
        for b, c in d.get("write_gap_hist", []):
            s.write_gap_hist[b] = c
        s.per_phase = [(pid, cls.from_dict(v)) for pid, v in d.get("per_phase", {}).items()]
        return s


@dataclass(frozen=True)
class AccessOutcome:
    hit: bool
    expiry_triggered: bool
    writeback_issued: bool
    stall_cycles: float


def _line_numbers(addresses: np.ndarray, geometry: CacheGeometry) -> np.ndarray:
    return (addresses >> np.uint64(geometry.offset_bits)).astype(np.int64)


def line_footprint(lines: np.ndarray):
    """(unique lines, lines touched exactly once)."""
    if len(lines) == 0:
        return 0, 0
    _, counts = np.unique(lines, return_counts=True)
    return int(len(counts)), int((counts == 1).sum())


class CacheState:
    """Private L1s (one per core) sharing one L2, plus per-core clocks and counters."""

    def __init__(self, profiles, geometry: CacheGeometry = L1_GEOMETRY,
                 monitor: MonitorConfig = MonitorConfig(), timing: TimingParams = TimingParams(),
                 l2_geometry: CacheGeometry = L2_GEOMETRY):
        if isinstance(profiles, RetentionProfile):
            profiles = [profiles]
        profiles = list(profiles)
        if geometry.line_bytes != l2_geometry.line_bytes:
            raise ValueError("L1 and L2 must share a line size")
        self.geometry = geometry
        self.l2_geometry = l2_geometry
        self.monitor = monitor
        self.timing = timing
        n = len(profiles)
        self.n_cores = n
        g = geometry
        self.l1m = np.zeros((n, g.n_sets, g.associativity, 4), dtype=np.int64)
        self.l1t = np.zeros((n, g.n_sets, g.associativity, 2), dtype=np.float64)
        self.l2m = np.zeros((l2_geometry.n_sets, l2_geometry.associativity, 4), dtype=np.int64)
        self.par = np.zeros((n, K.NPAR), dtype=np.float64)
        self.clk = np.zeros((n, K.NCLK), dtype=np.float64)
        self.st = np.zeros((n, K.NSTAT), dtype=np.int64)
        self.fs = np.zeros((n, K.NFS), dtype=np.float64)
        self.hist = np.zeros((n, K.NBINS), dtype=np.int64)
        self.tick = np.zeros(1, dtype=np.int64)
        self.profiles = [None] * n
        for c, p in enumerate(profiles):
            self._load_profile(c, p)
            self.clk[c, K.C_NEXT_SWEEP] = self.par[c, K.P_QUANTUM]

    def _load_profile(self, core, profile: RetentionProfile):
        t = self.timing
        self.profiles[core] = profile
        par = self.par[core]
        par[K.P_THRESHOLD] = self.monitor.threshold_ns(profile)
        par[K.P_QUANTUM] = self.monitor.quantum_ns(profile)
        par[K.P_WSTALL] = write_stall_cycles(profile, t)
        par[K.P_CPI] = t.base_cpi
        par[K.P_L2PEN] = t.l2_hit_penalty_cycles
        par[K.P_MEMPEN] = t.memory_penalty_cycles
        par[K.P_FREQ_GHZ] = t.frequency_ghz
        par[K.P_NOMINAL] = 1.0 if self.monitor.aging_clock == NOMINAL_TIME else 0.0

    def now_ns(self, core=0) -> float:
        return float(K.current_time(core, self.clk, self.par, self.st))

    def switch_profile(self, core, profile: RetentionProfile):
        """Move ``core`` onto another retention unit, carrying its L1 contents over."""
        now = self.now_ns(core)
        K.retarget(core, now, self.l1m, self.l1t)
        self._load_profile(core, profile)
        q = self.par[core, K.P_QUANTUM]
        self.clk[core, K.C_NEXT_SWEEP] = (math.floor(now / q) + 1.0) * q if math.isfinite(q) else math.inf

    def access(self, event, now_ns: float) -> AccessOutcome:
        """Apply one reference at an explicit time; counters are updated, clocks are not."""
        c = event.core
        line = int(event.address) >> self.geometry.offset_bits
        out, stall = K.access(c, line, int(event.kind) == 1, float(now_ns), self.l1m, self.l1t,
                              self.l2m, self.par, self.clk, self.st, self.fs, self.hist, self.tick)
        return AccessOutcome(bool(out & K.O_HIT), bool(out & K.O_EXPIRY),
                             bool(out & K.O_WRITEBACK), float(stall))

    def sweep_expired(self, now_ns: float, core=None) -> int:
        cores = range(self.n_cores) if core is None else [core]
        return sum(int(K.sweep_core(c, float(now_ns), self.l1m, self.l1t, self.l2m, self.par,
                                    self.st, self.tick)) for c in cores)

    def run(self, lines, kinds, gaps, cores, start=0, stop=None, core_stop=None, outcomes=None):
        """Advance through events ``start..stop``; see ``_kernels.run_events``."""
        stop = len(lines) if stop is None else stop
        if core_stop is None:
            core_stop = np.full(self.n_cores, np.iinfo(np.int64).max, dtype=np.int64)
        if outcomes is None:
            outcomes = np.empty(0, dtype=np.int8)
        nxt, c = K.run_events(lines, kinds, gaps, cores, start, stop, core_stop,
                              self.l1m, self.l1t, self.l2m, self.par, self.clk, self.st,
                              self.fs, self.hist, self.tick, outcomes)
        return int(nxt), int(c)

    def retire(self, core, instructions: int):
        """Account for instructions that follow the last reference."""
        self.st[core, K.S_INSTR] += instructions
        self.clk[core, K.C_CYCLES] += instructions * self.par[core, K.P_CPI]

    def finish(self, core=None):
        """Final sweep at each core's current time so expiry counts are complete."""
        cores = range(self.n_cores) if core is None else [core]
        for c in cores:
            self.sweep_expired(self.now_ns(c), c)

    def stats(self, core=0, lines=None) -> SimStats:
        st = self.st[core]
        s = SimStats(
            instructions=int(st[K.S_INSTR]),
            l1_reads=int(st[K.S_READS]),
            l1_writes=int(st[K.S_WRITES]),
            l1_read_misses=int(st[K.S_READ_MISSES]),
            l1_write_misses=int(st[K.S_WRITE_MISSES]),
            l1_writebacks=int(st[K.S_WRITEBACKS]),
            expiry_evictions=int(st[K.S_EXPIRY_EVICT]),
            expiry_writebacks=int(st[K.S_EXPIRY_WB]),
            l2_accesses=int(st[K.S_L2_ACCESSES]),
            l2_misses=int(st[K.S_L2_MISSES]),
            l2_writebacks=int(st[K.S_L2_WRITEBACKS]),
            cycles=float(self.clk[core, K.C_CYCLES]),
            sim_time_ns=float(self.clk[core, K.C_CYCLES] / self.par[core, K.P_FREQ_GHZ]),
            l1_evictions=int(st[K.S_EVICTIONS]),
            write_after_write=int(st[K.S_WRITE_AFTER_WRITE]),
            hit_runs=int(st[K.S_HIT_RUNS]),
            write_gap_count=int(st[K.S_WGAP_COUNT]),
            write_gap_sum_ns=float(self.fs[core, K.F_WGAP_SUM]),
            read_gap_count=int(st[K.S_RGAP_COUNT]),
            read_gap_sum_ns=float(self.fs[core, K.F_RGAP_SUM]),
            max_hit_age_ns=float(self.fs[core, K.F_MAX_HIT_AGE]),
            stall_cycles=int(st[K.S_STALL_CYCLES]),
            write_gap_hist=self.hist[core].copy(),
        )
        if lines is not None:
            s.unique_lines, s.single_touch_lines = line_footprint(lines)
        return s


def phase_arrays(phase, geometry: CacheGeometry = L1_GEOMETRY):
    """Kernel-ready arrays (lines, kinds, gaps, cores) for one phase."""
    return (_line_numbers(phase.addresses, geometry), phase.kinds, phase.gaps, phase.cores)


def simulate_phase(phase, geometry=L1_GEOMETRY, profile=None, monitor=MonitorConfig(),
                   timing=TimingParams(), l2_geometry=L2_GEOMETRY, outcomes=None) -> SimStats:
    if phase.n_cores > 1:
        raise ValueError("simulate() takes single-core traces; use the policy module for multi-core")
    state = CacheState(profile, geometry, monitor, timing, l2_geometry)
    lines, kinds, gaps, cores = phase_arrays(phase, geometry)
    state.run(lines, kinds, gaps, cores, outcomes=outcomes)
    state.retire(0, phase.trailing_instructions)
    state.finish()
    return state.stats(0, lines)


def simulate(workload, geometry: CacheGeometry = L1_GEOMETRY, profile: RetentionProfile = None,
             monitor: MonitorConfig = MonitorConfig(), timing: TimingParams = TimingParams(),
             l2_geometry: CacheGeometry = L2_GEOMETRY, record_outcomes: bool = False):
    """Simulate every phase from a cold cache and sum the counters.

    With ``record_outcomes`` returns ``(stats, outcomes)`` where outcomes holds
    per-event outcome bits (hit=1, expiry=2, writeback=4) for all phases in order.
    """
    if profile is None:
        raise ValueError("a retention profile is required")
    total = SimStats()
    per_phase = []
    outs = []
    for phase in workload.phases:
        o = np.zeros(len(phase), dtype=np.int8) if record_outcomes else None
        s = simulate_phase(phase, geometry, profile, monitor, timing, l2_geometry, o)
        per_phase.append((phase.phase_id, s))
        total = total + s
        if record_outcomes:
            outs.append(o)
    total.unique_lines = sum(s.unique_lines for _, s in per_phase)
    total.single_touch_lines = sum(s.single_touch_lines for _, s in per_phase)
    total.per_phase = per_phase
    if record_outcomes:
        return total, (np.concatenate(outs) if outs else np.empty(0, np.int8))
    return total
