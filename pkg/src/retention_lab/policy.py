"""Retention selection strategies replayed over workloads.

Every phase starts from cold caches. Strategies that change unit mid-phase
carry the L1 contents across (``CacheState.switch_profile``) and account each
stretch of execution against the profile it ran on. Migration and prediction
costs are added as overhead; they do not advance the simulated clock.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .cachesim import (L1_GEOMETRY, L2_GEOMETRY, CacheGeometry, CacheState, MonitorConfig,
                       SimStats, phase_arrays, simulate, simulate_phase)
from .energymodel import TimingParams, compute_energy, leakage_energy_nj
from .features import DEFAULT_CATALOG, CatalogMismatchError, FeatureCatalog, extract
from .learn import ENERGY, LATENCY, OBJECTIVES, Dataset, check_catalog, predict_label
from .profiles import BASE_PROFILE, RETENTION_SET, RetentionProfile
from .trace import Workload, flatten, interleave

STATIC = "static"
EXHAUSTIVE = "exhaustive"
LARS = "lars"
SCART = "scart"
MODES = (STATIC, EXHAUSTIVE, LARS, SCART)

NO_STOP = np.iinfo(np.int64).max
MIGRATION_CYCLES = 4608


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    retention_set: tuple = RETENTION_SET
    base: RetentionProfile = BASE_PROFILE
    objective: str = LATENCY
    profiling_window: int = 1_000_000
    feedback_window: int = 1_000_000
    migration_cost_ns: float = MIGRATION_CYCLES / 2.0  # 4608 cycles at 2 GHz
    prediction_time_ns: float = 4250.0
    feedback_epsilon: float = 0.01
    transfer_energy_nj: float = 0.0
    geometry: CacheGeometry = L1_GEOMETRY
    l2_geometry: CacheGeometry = L2_GEOMETRY
    monitor: MonitorConfig = MonitorConfig()
    timing: TimingParams = TimingParams()
    catalog: FeatureCatalog = DEFAULT_CATALOG

    def __post_init__(self):
        if not self.retention_set:
            raise PolicyError("retention set is empty")
        if self.base not in self.retention_set:
            raise PolicyError(f"base profile {self.base.name} is not in the retention set")
        if self.objective not in OBJECTIVES:
            raise PolicyError(f"objective must be one of {OBJECTIVES}")
        if self.feedback_epsilon < 0:
            raise PolicyError("feedback_epsilon must be >= 0")
        if self.profiling_window < 1 or self.feedback_window < 1:
            raise PolicyError("windows must be at least one instruction")
        if self.migration_cost_ns < 0 or self.prediction_time_ns < 0 or self.transfer_energy_nj < 0:
            raise PolicyError("costs must be non-negative")

    @property
    def base_index(self) -> int:
        return self.retention_set.index(self.base)

    def with_objective(self, objective) -> "PolicyConfig":
        return replace(self, objective=objective)


def objective_of(latency_ns: float, energy_nj: float, objective: str) -> float:
    return latency_ns if objective == LATENCY else energy_nj


def segment_energy(stats: SimStats, profile: RetentionProfile, timing: TimingParams) -> float:
    return compute_energy(stats, profile, timing, stats.sim_time_ns).total_nj


def _per_instruction(stats: SimStats, profile, cfg: PolicyConfig) -> float:
    if stats.instructions <= 0:
        return 0.0
    value = objective_of(stats.sim_time_ns, segment_energy(stats, profile, cfg.timing), cfg.objective)
    return value / stats.instructions


@dataclass
class PhaseOutcome:
    phase_id: str
    weight: float
    instructions: int
    profiles: tuple  # units visited, in order
    migrations: int = 0
    reverts: int = 0
    decisions: int = 0
    latency_ns: float = 0.0  # simulated execution only
    energy_nj: float = 0.0
    overhead_ns: float = 0.0
    overhead_energy_nj: float = 0.0
    predicted: str | None = None
    stats: SimStats | None = field(default=None, repr=False)
    feedback_span: tuple | None = None  # (first, last) instruction count of the feedback window
    feedback_objective: float | None = None

    @property
    def final_profile(self) -> str:
        return self.profiles[-1]

    @property
    def total_latency_ns(self):
        return self.latency_ns + self.overhead_ns

    @property
    def total_energy_nj(self):
        return self.energy_nj + self.overhead_energy_nj

    def objective(self, objective: str) -> float:
        return objective_of(self.total_latency_ns, self.total_energy_nj, objective)

    def to_dict(self):
        return {"phase": self.phase_id, "weight": self.weight, "instructions": self.instructions,
                "profiles": list(self.profiles), "final_profile": self.final_profile,
                "predicted": self.predicted, "migrations": self.migrations, "reverts": self.reverts,
                "decisions": self.decisions, "latency_ns": self.latency_ns,
                "energy_nj": self.energy_nj, "overhead_ns": self.overhead_ns,
                "overhead_energy_nj": self.overhead_energy_nj}


@dataclass
class PolicyResult:
    workload: str
    mode: str
    objective: str
    phases: list
    catalog_version: str = DEFAULT_CATALOG.version

    @property
    def migrations(self):
        return sum(p.migrations for p in self.phases)

    @property
    def reverts(self):
        return sum(p.reverts for p in self.phases)

    @property
    def decisions(self):
        return sum(p.decisions for p in self.phases)

    @property
    def overhead_ns(self):
        return sum(p.overhead_ns for p in self.phases)

    @property
    def latency_total(self):
        return sum(p.weight * p.total_latency_ns for p in self.phases)

    @property
    def energy_total(self):
        return sum(p.weight * p.total_energy_nj for p in self.phases)

    @property
    def objective_total(self):
        return objective_of(self.latency_total, self.energy_total, self.objective)

    def chosen(self):
        return [p.final_profile for p in self.phases]

    def to_dict(self):
        return {"version": __version__, "catalog_version": self.catalog_version,
                "workload": self.workload, "mode": self.mode, "objective": self.objective,
                "objective_total": self.objective_total, "latency_total_ns": self.latency_total,
                "energy_total_nj": self.energy_total, "migrations": self.migrations,
                "reverts": self.reverts, "decisions": self.decisions,
                "overhead_ns": self.overhead_ns, "phases": [p.to_dict() for p in self.phases]}

    @classmethod
    def from_dict(cls, d):
        phases = [PhaseOutcome(p["phase"], p["weight"], p["instructions"], tuple(p["profiles"]),
                               p["migrations"], p["reverts"], p["decisions"], p["latency_ns"],
                               p["energy_nj"], p["overhead_ns"], p["overhead_energy_nj"],
                               p.get("predicted"))
                  for p in d["phases"]]
        return cls(d["workload"], d["mode"], d["objective"], phases,
                   d.get("catalog_version", DEFAULT_CATALOG.version))


# -- segmented single-core execution ---------------------------------------------

class _Segments:
    """Counter snapshots taken whenever a core changes unit."""

    def __init__(self, state: CacheState, core: int):
        self.state = state
        self.core = core
        self.marks = [(state.profiles[core], SimStats())]
        self.switches = 0

    def switch(self, profile):
        self.marks.append((profile, self.state.stats(self.core)))
        self.state.switch_profile(self.core, profile)
        self.switches += 1

    def totals(self, final: SimStats, timing):
        latency = energy = 0.0
        bounds = self.marks + [(None, final)]
        for (prof, a), (_, b) in zip(bounds, bounds[1:]):
            d = b - a
            latency += d.sim_time_ns
            energy += segment_energy(d, prof, timing)
        return latency, energy

    def visited(self):
        return tuple(p.name for p, _ in self.marks)


def _core_lines(lines, cores, core, start, stop):
    seg = lines[start:stop]
    return seg[cores[start:stop] == core]


class _ScartCore:
    """Per-core controller: profile on base, predict, then check one feedback window."""

    def __init__(self, cfg, model, segs):
        self.cfg, self.model, self.segs = cfg, model, segs
        self.stage = 0
        self.window = None
        self.predicted = None
        self.reverts = 0
        self.decisions = 0
        self.feedback_span = None
        self.feedback_objective = None

    def first_stop(self):
        return self.cfg.profiling_window

    def on_stop(self, lines, cores, idx):
        cfg, state, c = self.cfg, self.segs.state, self.segs.core
        if self.stage == 0:
            w = state.stats(c, _core_lines(lines, cores, c, 0, idx))
            self.window = w
            label = predict_label(self.model, extract(w, cfg.catalog))
            if not 0 <= label < len(cfg.retention_set):
                raise PolicyError(f"model predicted label {label} outside the retention set")
            self.predicted = cfg.retention_set[label]
            self.decisions = 1
            if self.predicted == cfg.base:
                self.stage = 2
                return NO_STOP
            self.segs.switch(self.predicted)
            self.stage = 1
            return w.instructions + cfg.feedback_window
        if self.stage == 1:
            fb = state.stats(c) - self.window
            self.feedback_span = (self.window.instructions, self.window.instructions + fb.instructions)
            self.feedback_objective = _per_instruction(fb, self.predicted, cfg) * fb.instructions
            base_rate = _per_instruction(self.window, cfg.base, cfg)
            if _per_instruction(fb, self.predicted, cfg) > base_rate * (1.0 + cfg.feedback_epsilon):
                self.segs.switch(cfg.base)
                self.reverts = 1
            self.stage = 2
        return NO_STOP


class _LarsCore:
    """Per-core controller: one window on each unit in turn, then settle on the best."""

    def __init__(self, cfg, segs):
        self.cfg, self.segs = cfg, segs
        self.k = 0
        self.start = SimStats()
        self.rates = []
        self.decisions = 0
        self.reverts = 0
        self.predicted = None

    def first_stop(self):
        return self.cfg.profiling_window

    def on_stop(self, lines, cores, idx):
        cfg, state, c = self.cfg, self.segs.state, self.segs.core
        now = state.stats(c)
        self.rates.append(_per_instruction(now - self.start, cfg.retention_set[self.k], cfg))
        self.start = now
        self.k += 1
        if self.k < len(cfg.retention_set):
            self.segs.switch(cfg.retention_set[self.k])
            return now.instructions + cfg.profiling_window
        best = int(np.argmin(self.rates))  # first minimum = lower retention index
        self.predicted = cfg.retention_set[best]
        self.decisions = 1
        if best != self.k - 1:
            self.segs.switch(self.predicted)
        return NO_STOP


def _drive(state: CacheState, arrays, controllers, trailing):
    lines, kinds, gaps, cores = arrays
    n = len(lines)
    stops = np.array([ctl.first_stop() if ctl else NO_STOP for ctl in controllers], dtype=np.int64)
    idx = 0
    while idx < n:
        idx, c = state.run(lines, kinds, gaps, cores, idx, n, stops)
        if c < 0:
            break
        stops[c] = controllers[c].on_stop(lines, cores, idx)
    for c, extra in enumerate(trailing):
        state.retire(c, extra)
    state.finish()


def _overheads(cfg: PolicyConfig, decisions: int, migrations: int, leak_pairs):
    ns = decisions * cfg.prediction_time_ns + migrations * cfg.migration_cost_ns
    nj = leakage_energy_nj(cfg.base, decisions * cfg.prediction_time_ns)
    for a, b in leak_pairs:
        nj += (leakage_energy_nj(a, cfg.migration_cost_ns) + leakage_energy_nj(b, cfg.migration_cost_ns)
               + cfg.transfer_energy_nj)
    return ns, nj


def _outcome(phase_id, weight, segs: _Segments, ctl, cfg, lines, charged_migrations=None):
    state, c = segs.state, segs.core
    final = state.stats(c, lines)
    latency, energy = segs.totals(final, cfg.timing)
    visited = [p for p, _ in segs.marks]
    pairs = list(zip(visited, visited[1:]))
    migrations = segs.switches if charged_migrations is None else charged_migrations
    if charged_migrations is not None and charged_migrations > len(pairs):
        # charged but not physically performed: cost them as base-to-base moves
        pairs += [(cfg.base, cfg.base)] * (charged_migrations - len(pairs))
    decisions = ctl.decisions if ctl else 0
    ns, nj = _overheads(cfg, decisions if isinstance(ctl, _ScartCore) else 0, migrations, pairs)
    out = PhaseOutcome(phase_id, weight, final.instructions, segs.visited(), migrations,
                       ctl.reverts if ctl else 0, decisions, latency, energy, ns, nj,
                       ctl.predicted.name if ctl and ctl.predicted else None, final)
    out.feedback_span = getattr(ctl, "feedback_span", None)
    out.feedback_objective = getattr(ctl, "feedback_objective", None)
    return out


def _lars_charge(cfg, ctl):
    """The sampling accounting charges one migration per unit once sampling completes."""
    if ctl.decisions and len(cfg.retention_set) > 1:
        return len(cfg.retention_set)
    return ctl.segs.switches


def _run_single(workload: Workload, cfg: PolicyConfig, make_ctl, mode, start_profile=None):
    if workload.n_cores != 1:
        raise PolicyError(f"{workload.name}: single-core workload expected")
    phases = []
    for phase in workload.phases:
        state = CacheState(start_profile or cfg.base, cfg.geometry, cfg.monitor, cfg.timing,
                           cfg.l2_geometry)
        segs = _Segments(state, 0)
        ctl = make_ctl(segs)
        arrays = phase_arrays(phase, cfg.geometry)
        _drive(state, arrays, [ctl], [phase.trailing_instructions])
        charged = _lars_charge(cfg, ctl) if isinstance(ctl, _LarsCore) else None
        phases.append(_outcome(phase.phase_id, phase.weight, segs, ctl, cfg, arrays[0], charged))
    return PolicyResult(workload.name, mode, cfg.objective, phases, cfg.catalog.version)


# -- strategies -------------------------------------------------------------------

def run_static(workload: Workload, profile: RetentionProfile, cfg: PolicyConfig = PolicyConfig()) -> PolicyResult:
    """Whole workload on one unit: the simulate + energy model composition."""
    profile.validate_physical()
    stats = simulate(workload, cfg.geometry, profile, cfg.monitor, cfg.timing, cfg.l2_geometry)
    phases = []
    for phase, (pid, s) in zip(workload.phases, stats.per_phase):
        e = compute_energy(s, profile, cfg.timing)
        phases.append(PhaseOutcome(pid, phase.weight, s.instructions, (profile.name,),
                                   latency_ns=s.sim_time_ns, energy_nj=e.total_nj, stats=s))
    return PolicyResult(workload.name, STATIC, cfg.objective, phases, cfg.catalog.version)


def span_objective(phase, profile: RetentionProfile, first: int, last: int,
                   cfg: PolicyConfig = PolicyConfig()) -> float:
    """Objective of the events between two instruction counts when the whole phase runs on ``profile``."""
    state = CacheState(profile, cfg.geometry, cfg.monitor, cfg.timing, cfg.l2_geometry)
    lines, kinds, gaps, cores = phase_arrays(phase, cfg.geometry)
    stops = np.array([first], dtype=np.int64)
    idx, _ = state.run(lines, kinds, gaps, cores, 0, len(lines), stops)
    a = state.stats(0)
    stops[0] = last
    state.run(lines, kinds, gaps, cores, idx, len(lines), stops)
    d = state.stats(0) - a
    return _per_instruction(d, profile, cfg) * d.instructions


def run_scart(workload: Workload, model, cfg: PolicyConfig = PolicyConfig()) -> PolicyResult:
    """One-shot prediction per phase with a revert-to-base feedback check."""
    check_catalog(model, cfg.catalog)
    return _run_single(workload, cfg, lambda segs: _ScartCore(cfg, model, segs), SCART)


def run_lars_sampling(workload: Workload, cfg: PolicyConfig = PolicyConfig()) -> PolicyResult:
    """Sample every unit for one profiling window, then finish on the best sampled unit."""
    if len(cfg.retention_set) == 1:
        return _run_single(workload, cfg, lambda segs: None, LARS, cfg.retention_set[0])
    return _run_single(workload, cfg, lambda segs: _LarsCore(cfg, segs), LARS, cfg.retention_set[0])


@dataclass
class PhaseTable:
    phase_id: str
    weight: float
    instructions: int
    latency: np.ndarray  # per retention index
    energy: np.ndarray

    def best(self, objective: str) -> int:
        v = self.latency if objective == LATENCY else self.energy
        return int(np.argmin(v))  # first minimum = lower retention index

    def best_value(self, objective: str) -> float:
        v = self.latency if objective == LATENCY else self.energy
        return float(v.min())


@dataclass
class ExhaustiveTable:
    workload: str
    profiles: tuple
    phases: list

    def best_total(self, objective: str) -> float:
        return sum(p.weight * p.best_value(objective) for p in self.phases)

    def labels(self, objective: str):
        return [p.best(objective) for p in self.phases]


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def label_exhaustive(workload: Workload, cfg: PolicyConfig = PolicyConfig(), jobs: int = 1) -> ExhaustiveTable:
    """Simulate every (phase, profile) pair; each pair owns its own cache state."""
    if workload.n_cores != 1:
        raise PolicyError(f"{workload.name}: single-core workload expected")
    pairs = [(pi, ri) for pi in range(len(workload.phases)) for ri in range(len(cfg.retention_set))]

    def one(pair):
        phase, prof = workload.phases[pair[0]], cfg.retention_set[pair[1]]
        s = simulate_phase(phase, cfg.geometry, prof, cfg.monitor, cfg.timing, cfg.l2_geometry)
        return s.instructions, s.sim_time_ns, compute_energy(s, prof, cfg.timing).total_nj

    res = dict(zip(pairs, _map(one, pairs, jobs)))
    n = len(cfg.retention_set)
    tables = []
    for pi, phase in enumerate(workload.phases):
        lat = np.array([res[(pi, r)][1] for r in range(n)])
        en = np.array([res[(pi, r)][2] for r in range(n)])
        tables.append(PhaseTable(phase.phase_id, phase.weight, res[(pi, 0)][0], lat, en))
    return ExhaustiveTable(workload.name, tuple(p.name for p in cfg.retention_set), tables)


def run_exhaustive(workload: Workload, cfg: PolicyConfig = PolicyConfig(), table=None, jobs=1) -> PolicyResult:
    """Oracle: every phase on its exhaustively best unit, free of overheads."""
    table = table or label_exhaustive(workload, cfg, jobs)
    phases = []
    for t in table.phases:
        b = t.best(cfg.objective)
        phases.append(PhaseOutcome(t.phase_id, t.weight, t.instructions, (table.profiles[b],),
                                   latency_ns=float(t.latency[b]), energy_nj=float(t.energy[b])))
    return PolicyResult(workload.name, EXHAUSTIVE, cfg.objective, phases, cfg.catalog.version)


def run_multiprogrammed(workloads, model, cfg: PolicyConfig = PolicyConfig(), shared_l2: bool = True):
    """Per-core SCART (or static base when ``model`` is None) on private L1s.

    With ``shared_l2`` the cores' events are interleaved round-robin into one
    L2; otherwise each workload runs alone. Phases of each input are
    concatenated into one stream per core.
    """
    if model is not None:
        check_catalog(model, cfg.catalog)
    if not shared_l2:
        out = []
        for w in workloads:
            single = interleave([w])
            out.append(run_scart(single, model, cfg) if model is not None
                       else run_static(single, cfg.base, cfg))
        return out
    mix = interleave(workloads)
    phase = mix.phases[0]
    n = len(workloads)
    state = CacheState([cfg.base] * n, cfg.geometry, cfg.monitor, cfg.timing, cfg.l2_geometry)
    segs = [_Segments(state, c) for c in range(n)]
    ctls = [_ScartCore(cfg, model, s) if model is not None else None for s in segs]
    arrays = phase_arrays(phase, cfg.geometry)
    trailing = [sum(p.trailing_instructions for p in w.phases) for w in workloads]
    _drive(state, arrays, ctls, trailing)
    mode = SCART if model is not None else STATIC
    results = []
    for c, w in enumerate(workloads):
        lines = arrays[0][arrays[3] == c]
        results.append(PolicyResult(w.name, mode, cfg.objective,
                                    [_outcome("mix", 1.0, segs[c], ctls[c], cfg, lines)],
                                    cfg.catalog.version))
    return results


def run_policy(workload, mode, cfg=PolicyConfig(), model=None, profile=None, jobs=1) -> PolicyResult:
    if mode == STATIC:
        return run_static(workload, profile or cfg.base, cfg)
    if mode == EXHAUSTIVE:
        return run_exhaustive(workload, cfg, jobs=jobs)
    if mode == LARS:
        return run_lars_sampling(workload, cfg)
    if mode == SCART:
        if model is None:
            raise PolicyError("scart mode needs a trained model")
        return run_scart(workload, model, cfg)
    raise PolicyError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


# -- savings -----------------------------------------------------------------------

@dataclass
class SavingsReport:
    rows: list  # (workload, latency saving, energy saving, objective saving)
    geomean_latency: float
    geomean_energy: float
    geomean_objective: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["workload", "latency_savings", "energy_savings", "objective_savings"])
        for r in self.rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
        w.writerow(["geomean", repr(self.geomean_latency), repr(self.geomean_energy),
                    repr(self.geomean_objective)])
        return buf.getvalue()


def geomean_savings(ratios) -> float:
    r = np.asarray(ratios, dtype=np.float64)
    if len(r) == 0:
        return 0.0
    if (r <= 0).any():
        raise PolicyError("ratios must be positive for a geometric mean")
    return float(1.0 - math.exp(np.log(r).mean()))


def savings_report(results, baseline) -> SavingsReport:
    """Savings ``(base - policy) / base`` per workload; aggregates are geometric means of ratios."""
    pol = {r.workload: r for r in results}
    base = {r.workload: r for r in baseline}
    if len(pol) != len(results) or len(base) != len(baseline) or set(pol) != set(base):
        raise PolicyError("result sets cover different workloads")
    versions = {r.catalog_version for r in list(results) + list(baseline)}
    if len(versions) > 1:
        raise CatalogMismatchError(f"results come from different catalog versions: {sorted(versions)}")
    rows, lat_r, en_r, obj_r = [], [], [], []
    for name in sorted(pol):
        p, b = pol[name], base[name]
        rl = p.latency_total / b.latency_total
        re_ = p.energy_total / b.energy_total
        ro = p.objective_total / b.objective_total
        rows.append((name, 1.0 - rl, 1.0 - re_, 1.0 - ro))
        lat_r.append(rl)
        en_r.append(re_)
        obj_r.append(ro)
    return SavingsReport(rows, geomean_savings(lat_r), geomean_savings(en_r), geomean_savings(obj_r))


# -- dataset -----------------------------------------------------------------------

@dataclass
class DatasetRow:
    workload: str
    phase: str
    weight: float
    instructions: int
    features: np.ndarray
    latency: np.ndarray
    energy: np.ndarray

    def best(self, objective):
        return int(np.argmin(self.latency if objective == LATENCY else self.energy))


def window_features(phase, cfg: PolicyConfig = PolicyConfig()) -> np.ndarray:
    """Features of the first profiling window of ``phase`` on the base unit, as SCART sees them."""
    state = CacheState(cfg.base, cfg.geometry, cfg.monitor, cfg.timing, cfg.l2_geometry)
    lines, kinds, gaps, cores = phase_arrays(phase, cfg.geometry)
    stops = np.array([cfg.profiling_window], dtype=np.int64)
    idx, _ = state.run(lines, kinds, gaps, cores, 0, len(lines), stops)
    return extract(state.stats(0, lines[:idx]), cfg.catalog)


def build_dataset(workloads, cfg: PolicyConfig = PolicyConfig(), jobs: int = 1):
    rows = []
    for w in workloads:
        table = label_exhaustive(w, cfg, jobs)
        for phase, t in zip(w.phases, table.phases):
            rows.append(DatasetRow(w.name, phase.phase_id, phase.weight, t.instructions,
                                   window_features(phase, cfg), t.latency, t.energy))
    return rows


def dataset_columns(cfg: PolicyConfig = PolicyConfig()):
    names = [p.name for p in cfg.retention_set]
    return (["workload", "phase", "weight", "instructions"]
            + [f"f_{n}" for n in cfg.catalog.names]
            + [f"latency_{n}" for n in names] + [f"energy_{n}" for n in names]
            + ["best_latency", "best_energy"])


def dataset_to_csv(rows, cfg: PolicyConfig = PolicyConfig()) -> str:
    buf = io.StringIO()
    buf.write(f"# retention-lab dataset version={__version__} catalog={cfg.catalog.version}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dataset_columns(cfg))
    names = [p.name for p in cfg.retention_set]
    for r in rows:
        w.writerow([r.workload, r.phase, repr(float(r.weight)), r.instructions]
                   + [repr(float(x)) for x in r.features]
                   + [repr(float(x)) for x in r.latency] + [repr(float(x)) for x in r.energy]
                   + [names[r.best(LATENCY)], names[r.best(ENERGY)]])
    return buf.getvalue()


def dataset_from_csv(text: str, cfg: PolicyConfig = PolicyConfig()):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# retention-lab dataset"):
        raise PolicyError("not a retention-lab dataset file")
    meta = dict(kv.split("=", 1) for kv in lines[0].split()[3:] if "=" in kv)
    if meta.get("catalog") != cfg.catalog.version:
        raise CatalogMismatchError(
            f"dataset built with catalog {meta.get('catalog')}, expected {cfg.catalog.version}")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header != dataset_columns(cfg):
        raise PolicyError("dataset header does not match the expected columns")
    nf, nr = len(cfg.catalog), len(cfg.retention_set)
    rows = []
    for rec in reader:
        if not rec:
            continue
        if len(rec) != len(header):
            raise PolicyError(f"dataset row has {len(rec)} fields, expected {len(header)}")
        vals = rec[4:]
        rows.append(DatasetRow(rec[0], rec[1], float(rec[2]), int(rec[3]),
                               np.array(vals[:nf], dtype=np.float64),
                               np.array(vals[nf:nf + nr], dtype=np.float64),
                               np.array(vals[nf + nr:nf + 2 * nr], dtype=np.float64)))
    return rows


def rows_to_dataset(rows, objective: str, cfg: PolicyConfig = PolicyConfig()) -> Dataset:
    X = np.array([r.features for r in rows]).reshape(len(rows), len(cfg.catalog))
    y = np.array([r.best(objective) for r in rows], dtype=np.int64)
    return Dataset(X, y, [f"{r.workload}/{r.phase}" for r in rows], objective, cfg.catalog)


# -- end-to-end study --------------------------------------------------------------

@dataclass
class StudyRow:
    workload: str
    scart: float
    best: float
    static_base: float
    reverts: int

    @property
    def gap(self) -> float:
        """Relative excess of SCART over the exhaustive optimum."""
        return self.scart / self.best - 1.0


def oracle_study(train_rows, test_workloads, objective: str, cfg: PolicyConfig = PolicyConfig(),
                 k: int = 3, selected=None, tables=None, jobs: int = 1):
    """Train on ``train_rows`` and replay SCART on each test workload against the oracle."""
    from .learn import train
    cfg = cfg.with_objective(objective)
    model = train(rows_to_dataset(train_rows, objective, cfg), k, selected)
    out = []
    for w in test_workloads:
        table = (tables or {}).get(w.name) or label_exhaustive(w, cfg, jobs)
        s = run_scart(w, model, cfg)
        base = run_static(w, cfg.base, cfg)
        out.append(StudyRow(w.name, s.objective_total, table.best_total(objective),
                            base.objective_total, s.reverts))
    return out
