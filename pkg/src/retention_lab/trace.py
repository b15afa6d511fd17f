"""Phase-annotated memory traces: parsing, serialization and synthetic generation.

Text format (UTF-8, one record per line)::

    #workload <name>            optional, once
    #phase <id> <weight>        starts a phase
    #core <n>                   following events belong to core n
    #tail <n>                   instructions retired after the phase's last event
    <instr_gap> <R|W> 0x<addr>  one memory reference
    # anything else             comment

``instr_gap`` counts the non-memory instructions retired since the previous
reference; the reference itself retires one more instruction.
"""

from __future__ import annotations

import io
import math
import os
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

WEIGHT_TOLERANCE = 1e-9


class AccessKind(IntEnum):
    READ = 0
    WRITE = 1

    @property
    def letter(self):
        return "W" if self is AccessKind.WRITE else "R"


class TraceParseError(ValueError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyWorkloadError(TraceParseError):
    pass


@dataclass(frozen=True)
class AccessEvent:
    instr_gap: int
    kind: AccessKind
    address: int
    core: int = 0

    def __post_init__(self):
        if self.instr_gap < 0:
            raise ValueError("instr_gap must be >= 0")
        if not 0 <= self.address < 2**64:
            raise ValueError("address must fit in 64 bits")
        if self.core < 0:
            raise ValueError("core must be >= 0")


@dataclass(eq=False)
class PhaseTrace:
    phase_id: str
    weight: float
    gaps: np.ndarray
    kinds: np.ndarray
    addresses: np.ndarray
    cores: np.ndarray = None
    trailing_instructions: int = 0

    def __post_init__(self):
        self.gaps = np.ascontiguousarray(self.gaps, dtype=np.int64)
        self.kinds = np.ascontiguousarray(self.kinds, dtype=np.uint8)
        self.addresses = np.ascontiguousarray(self.addresses, dtype=np.uint64)
        if self.cores is None:
            self.cores = np.zeros(len(self.gaps), dtype=np.int64)
        self.cores = np.ascontiguousarray(self.cores, dtype=np.int64)
        n = len(self.gaps)
        if not (len(self.kinds) == len(self.addresses) == len(self.cores) == n):
            raise ValueError("event arrays must have equal length")
        if n and (self.gaps.min() < 0 or self.cores.min() < 0):
            raise ValueError("gaps and cores must be non-negative")
        if n and self.kinds.max() > 1:
            raise ValueError("kinds must be 0 (read) or 1 (write)")
        if self.trailing_instructions < 0:
            raise ValueError("trailing_instructions must be >= 0")

    def __len__(self):
        return len(self.gaps)

    def __eq__(self, other):
        if not isinstance(other, PhaseTrace):
            return NotImplemented
        return (self.phase_id == other.phase_id
                and self.weight == other.weight
                and self.trailing_instructions == other.trailing_instructions
                and np.array_equal(self.gaps, other.gaps)
                and np.array_equal(self.kinds, other.kinds)
                and np.array_equal(self.addresses, other.addresses)
                and np.array_equal(self.cores, other.cores))

    @property
    def instruction_count(self) -> int:
        return int(self.gaps.sum()) + len(self.gaps) + self.trailing_instructions

    @property
    def n_cores(self) -> int:
        return int(self.cores.max()) + 1 if len(self.cores) else 1

    def events(self) -> Iterator[AccessEvent]:
        for g, k, a, c in zip(self.gaps.tolist(), self.kinds.tolist(),
                              self.addresses.tolist(), self.cores.tolist()):
            yield AccessEvent(g, AccessKind(k), a, c)

    @classmethod
    def from_events(cls, phase_id, weight, events: Iterable[AccessEvent], trailing_instructions=0):
        events = list(events)
        return cls(
            phase_id, weight,
            np.array([e.instr_gap for e in events], dtype=np.int64),
            np.array([int(e.kind) for e in events], dtype=np.uint8),
            np.array([e.address for e in events], dtype=np.uint64),
            np.array([e.core for e in events], dtype=np.int64),
            trailing_instructions,
        )

    def core_projection(self, core: int) -> "PhaseTrace":
        m = self.cores == core
        return PhaseTrace(self.phase_id, self.weight, self.gaps[m], self.kinds[m],
                          self.addresses[m], np.zeros(int(m.sum()), dtype=np.int64))


@dataclass(eq=False)
class Workload:
    name: str
    phases: list = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, Workload):
            return NotImplemented
        return self.name == other.name and self.phases == other.phases

    @property
    def instruction_count(self):
        return sum(p.instruction_count for p in self.phases)

    @property
    def n_cores(self):
        return max((p.n_cores for p in self.phases), default=1)

    @property
    def event_count(self):
        return sum(len(p) for p in self.phases)

    def phase(self, phase_id):
        for p in self.phases:
            if p.phase_id == phase_id:
                return p
        raise KeyError(phase_id)


def normalize_weights(phases: Sequence[PhaseTrace], where="workload"):
    weights = [p.weight for p in phases]
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ValueError(f"{where}: phase weights must be finite and non-negative")
    total = math.fsum(weights)
    if total <= 0:
        raise ValueError(f"{where}: phase weights sum to zero")
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        warnings.warn(f"{where}: phase weights sum to {total!r}; normalizing", stacklevel=3)
        for p in phases:
            p.weight = p.weight / total


# -- text format ------------------------------------------------------------

def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data


def parse_trace(source, name: str = "workload") -> Workload:
    """Parse the text trace format from bytes, str, a path or a file object."""
    text = _read_text(source)
    phases: list[PhaseTrace] = []
    cur = None  # [id, weight, gaps, kinds, addrs, cores, tail]
    core = 0

    def close():
        if cur is not None:
            phases.append(PhaseTrace(cur[0], cur[1], np.array(cur[2], dtype=np.int64),
                                     np.array(cur[3], dtype=np.uint8),
                                     np.array(cur[4], dtype=np.uint64),
                                     np.array(cur[5], dtype=np.int64), cur[6]))

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            directive = parts[0] if parts else ""
            if directive == "phase":
                if len(parts) != 3:
                    raise TraceParseError("expected '#phase <id> <weight>'", lineno)
                try:
                    weight = float(parts[2])
                except ValueError:
                    raise TraceParseError(f"bad phase weight {parts[2]!r}", lineno) from None
                if weight < 0 or not math.isfinite(weight):
                    raise TraceParseError(f"phase weight must be non-negative, got {parts[2]}", lineno)
                close()
                cur = [parts[1], weight, [], [], [], [], 0]
                core = 0
            elif directive == "core":
                if len(parts) != 2 or not parts[1].isdigit():
                    raise TraceParseError("expected '#core <n>'", lineno)
                core = int(parts[1])
            elif directive == "tail":
                if cur is None:
                    raise TraceParseError("'#tail' before any '#phase'", lineno)
                if len(parts) != 2 or not parts[1].isdigit():
                    raise TraceParseError("expected '#tail <n>'", lineno)
                cur[6] = int(parts[1])
            elif directive == "workload":
                if len(parts) != 2:
                    raise TraceParseError("expected '#workload <name>'", lineno)
                name = parts[1]
            continue
        body = line.split("#", 1)[0].split()
        if len(body) != 3:
            raise TraceParseError(f"expected '<instr_gap> <R|W> 0x<addr>', got {line!r}", lineno)
        gap_s, kind_s, addr_s = body
        if cur is None:
            raise TraceParseError("event before any '#phase' header", lineno)
        if not gap_s.isdigit():
            raise TraceParseError(f"instr_gap must be a non-negative integer, got {gap_s!r}", lineno)
        if kind_s not in ("R", "W"):
            raise TraceParseError(f"kind must be R or W, got {kind_s!r}", lineno)
        if not addr_s.lower().startswith("0x"):
            raise TraceParseError(f"address must be hex with 0x prefix, got {addr_s!r}", lineno)
        try:
            addr = int(addr_s, 16)
        except ValueError:
            raise TraceParseError(f"bad hex address {addr_s!r}", lineno) from None
        if addr >= 2**64:
            raise TraceParseError(f"address {addr_s} exceeds 64 bits", lineno)
        cur[2].append(int(gap_s))
        cur[3].append(1 if kind_s == "W" else 0)
        cur[4].append(addr)
        cur[5].append(core)
    close()
    if not phases:
        raise EmptyWorkloadError("no phases")
    normalize_weights(phases, name)
    return Workload(name, phases)


def serialize_trace(workload: Workload) -> str:
    out = io.StringIO()
    out.write(f"#workload {workload.name}\n")
    for p in workload.phases:
        out.write(f"#phase {p.phase_id} {p.weight!r}\n")
        multi = p.n_cores > 1 or (len(p.cores) and p.cores.max() > 0)
        core = 0
        kinds = "RW"
        for g, k, a, c in zip(p.gaps.tolist(), p.kinds.tolist(),
                              p.addresses.tolist(), p.cores.tolist()):
            if multi and c != core:
                out.write(f"#core {c}\n")
                core = c
            out.write(f"{g} {kinds[k]} 0x{a:x}\n")
        if p.trailing_instructions:
            out.write(f"#tail {p.trailing_instructions}\n")
    return out.getvalue()


def load_trace(path) -> Workload:
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    with open(path, "rb") as fh:
        return parse_trace(fh, name=name)


def save_trace(workload: Workload, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_trace(workload))


# -- synthetic generation ---------------------------------------------------

@dataclass(frozen=True)
class SyntheticParams:
    """Knobs for one synthetic phase.

    Writes to the working set follow per-line renewal processes whose gaps are
    a two-component exponential mixture: ``hot_fraction`` of gaps come from a
    short component and the rest from a tail ``cold_tail_ratio`` times longer,
    scaled so the overall mean is ``reuse_gap_mean_ns``. Reads hit uniformly
    random working-set lines. Streaming references touch fresh lines once.
    """
    working_set_lines: int
    write_fraction: float
    reuse_gap_mean_ns: float
    streaming_fraction: float
    event_count: int
    instr_per_event_mean: float
    seed: int
    hot_fraction: float = 0.75
    cold_tail_ratio: float = 8.0
    instr_per_ns: float = 2.0
    line_bytes: int = 64
    base_address: int = 0x1000_0000
    phase_id: str = "p0"

    def __post_init__(self):
        for f in ("write_fraction", "streaming_fraction", "hot_fraction"):
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f} must lie in [0, 1], got {v}")
        if self.working_set_lines < 1 or self.event_count < 1:
            raise ValueError("working_set_lines and event_count must be >= 1")
        if self.instr_per_event_mean < 1:
            raise ValueError("instr_per_event_mean must be >= 1 (the reference itself retires)")
        if not self.reuse_gap_mean_ns > 0 or not self.cold_tail_ratio >= 1:
            raise ValueError("reuse_gap_mean_ns must be > 0 and cold_tail_ratio >= 1")
        if self.line_bytes < 1 or self.line_bytes & (self.line_bytes - 1):
            raise ValueError("line_bytes must be a power of two")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _positions_to_gaps(times: np.ndarray):
    """Map sorted real instruction times to integer positions, one reference per slot."""
    n = len(times)
    base = np.floor(times).astype(np.int64)
    idx = np.arange(n, dtype=np.int64)
    pos = idx + np.maximum.accumulate(base - idx)
    pos = np.maximum(pos, idx)
    prev = np.concatenate(([-1], pos[:-1]))
    return pos - prev - 1, pos


def generate_synthetic(params: SyntheticParams, name: str | None = None) -> Workload:
    """Deterministic single-phase workload for ``params``."""
    rng = np.random.default_rng(params.seed)
    n = params.event_count
    span = n * params.instr_per_event_mean
    wf, sf = params.write_fraction, params.streaming_fraction
    n_stream = int(round(n * sf))
    n_writes = min(int(round(n * (1.0 - sf) * wf)), n - n_stream)
    n_reads = n - n_stream - n_writes
    mean_gap = params.reuse_gap_mean_ns * params.instr_per_ns

    times, lines, kinds = [], [], []
    if n_writes > 0:
        # enough lines that every line's writes fit inside the phase at the target spacing
        per_line_max = int(span // mean_gap) + 1
        n_lines = max(int(round(n_writes * mean_gap / span)), -(-n_writes // per_line_max), 1)
        n_lines = min(n_lines, n_writes)
        if n_lines > params.working_set_lines:
            n_lines = params.working_set_lines
            mean_gap = span / -(-n_writes // n_lines)
            warnings.warn(
                f"working set of {params.working_set_lines} lines cannot sustain a "
                f"{params.reuse_gap_mean_ns}ns write reuse gap at this write rate; "
                f"effective mean is {mean_gap / params.instr_per_ns:.1f}ns", stacklevel=2)
        h = params.hot_fraction
        counts = np.full(n_lines, n_writes // n_lines)
        counts[: n_writes % n_lines] += 1
        for j, c in enumerate(counts.tolist()):
            if c > 1:
                comp = rng.random(c - 1) < h
                g = rng.exponential(1.0, c - 1) * np.where(comp, 1.0, params.cold_tail_ratio)
                # rescale so this line's gaps average exactly the target
                g *= mean_gap / g.mean()
                off = np.concatenate(([0.0], np.cumsum(g)))
                wt = rng.uniform(0.0, max(span - off[-1], 0.0)) + off
            else:
                wt = rng.uniform(0.0, span, 1)
            times.append(wt)
            lines.append(np.full(c, j, dtype=np.int64))
            kinds.append(np.ones(c, dtype=np.uint8))
    if n_reads:
        times.append(rng.uniform(0.0, span, n_reads))
        lines.append(rng.integers(0, params.working_set_lines, n_reads))
        kinds.append(np.zeros(n_reads, dtype=np.uint8))
    stream_t = np.sort(rng.uniform(0.0, span, n_stream))
    stream_k = (rng.random(n_stream) < wf).astype(np.uint8)
    times.append(stream_t)
    lines.append(np.full(n_stream, -1, dtype=np.int64))
    kinds.append(stream_k)

    t_all = np.concatenate(times)
    l_all = np.concatenate(lines)
    k_all = np.concatenate(kinds)
    order = np.lexsort((l_all, t_all))
    t_all, l_all, k_all = t_all[order], l_all[order], k_all[order]
    # streaming references get fresh lines in time order
    s_mask = l_all < 0
    l_all[s_mask] = params.working_set_lines + np.arange(int(s_mask.sum()), dtype=np.int64)
    gaps, _ = _positions_to_gaps(t_all)
    addrs = (np.uint64(params.base_address)
             + l_all.astype(np.uint64) * np.uint64(params.line_bytes))
    phase = PhaseTrace(params.phase_id, 1.0, gaps, k_all, addrs)
    return Workload(name or f"synth-{params.seed}", [phase])


def generate_periodic(n_lines: int, period_ns: float, duration_ns: float, reads_per_period: int = 1,
                      instr_per_ns: float = 2.0, line_bytes: int = 64,
                      base_address: int = 0x2000_0000, name: str = "periodic") -> Workload:
    """Every line is rewritten exactly every ``period_ns`` and read in between.

    Line start offsets are staggered evenly across one period.
    """
    period = period_ns * instr_per_ns
    n_periods = int(duration_ns // period_ns)
    j = np.arange(n_lines)
    offsets = (j + 0.5) * period / n_lines
    times, lines, kinds = [], [], []
    for p in range(n_periods):
        base = p * period + offsets
        times.append(base)
        lines.append(j)
        kinds.append(np.ones(n_lines, dtype=np.uint8))
        for r in range(1, reads_per_period + 1):
            times.append(base + r * period / (reads_per_period + 1))
            lines.append(j)
            kinds.append(np.zeros(n_lines, dtype=np.uint8))
    t = np.concatenate(times)
    ln = np.concatenate(lines)
    k = np.concatenate(kinds)
    order = np.lexsort((ln, t))
    gaps, _ = _positions_to_gaps(t[order])
    addrs = np.uint64(base_address) + ln[order].astype(np.uint64) * np.uint64(line_bytes)
    return Workload(name, [PhaseTrace("p0", 1.0, gaps, k[order], addrs)])


# -- multi-core ---------------------------------------------------------------

def flatten(workload: Workload):
    """Concatenate a workload's phases into one event stream (gaps, kinds, addresses)."""
    if not workload.phases:
        return (np.empty(0, np.int64), np.empty(0, np.uint8), np.empty(0, np.uint64))
    return (np.concatenate([p.gaps for p in workload.phases]),
            np.concatenate([p.kinds for p in workload.phases]),
            np.concatenate([p.addresses for p in workload.phases]))


def interleave(workloads: Sequence[Workload], policy: str = "round_robin", name: str | None = None) -> Workload:
    """Merge single-core workloads into one multi-core stream, core i <- workloads[i].

    Round-robin takes one event from each core in turn, skipping cores that
    have run out. Phases of each input are concatenated first.
    """
    if not workloads:
        raise ValueError("interleave needs at least one workload")
    if len(workloads) > 8:
        raise ValueError("at most 8 workloads can be interleaved")
    if policy not in ("round_robin", "RoundRobin"):
        raise ValueError(f"unknown interleave policy {policy!r}")
    for w in workloads:
        if w.n_cores != 1 or any(len(p) and p.cores.max() > 0 for p in w.phases):
            raise ValueError(f"{w.name}: interleave inputs must be single-core")
    streams = [flatten(w) for w in workloads]
    lengths = np.array([len(s[0]) for s in streams], dtype=np.int64)
    # event j of core i lands at sort key (j, i)
    rank = np.concatenate([np.arange(m, dtype=np.int64) for m in lengths])
    core = np.concatenate([np.full(m, i, dtype=np.int64) for i, m in enumerate(lengths)])
    order = np.lexsort((core, rank))
    gaps = np.concatenate([s[0] for s in streams])[order]
    kinds = np.concatenate([s[1] for s in streams])[order]
    addrs = np.concatenate([s[2] for s in streams])[order]
    if len(workloads) == 1:
        name = name or workloads[0].name
        if len(workloads[0].phases) == 1:
            return Workload(name, [workloads[0].phases[0]])
    phase = PhaseTrace("mix", 1.0, gaps, kinds, addrs, core[order])
    return Workload(name or "+".join(w.name for w in workloads), [phase])
