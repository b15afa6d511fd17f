"""INI experiment configuration with unit-suffixed durations and energies.

``dump(load(text))`` is canonical: loading a dumped config and dumping it
again gives the same bytes. Unknown sections and keys are errors.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field, replace

from .cachesim import L1_GEOMETRY, L2_GEOMETRY, CacheGeometry, MonitorConfig
from .energymodel import TimingParams
from .profiles import ALL_PROFILES, BASE_PROFILE, RETENTION_SET, RetentionProfile
from .policy import PolicyConfig

SEED_ENV = "RETENTION_LAB_SEED"

_DURATION = {"ns": 1.0, "us": 1e3, "ms": 1e6, "s": 1e9}
_ENERGY = {"nj": 1.0, "uj": 1e3, "mj": 1e6}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf)\s*([a-zA-Z]*)\s*$")


class ConfigError(ValueError):
    pass


def _parse_unit(text: str, units: dict, what: str) -> float:
    m = _NUM.match(text)
    if not m:
        raise ConfigError(f"cannot parse {what} {text!r}")
    value, unit = m.groups()
    unit = unit.lower() or next(iter(units))
    if unit not in units:
        raise ConfigError(f"unknown {what} unit {unit!r} in {text!r}; use one of {', '.join(units)}")
    return float(value) * units[unit]


def parse_duration_ns(text: str) -> float:
    return _parse_unit(text, _DURATION, "duration")


def parse_energy_nj(text: str) -> float:
    return _parse_unit(text, _ENERGY, "energy")


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: CacheGeometry = L1_GEOMETRY
    l2_geometry: CacheGeometry = L2_GEOMETRY
    timing: TimingParams = TimingParams()
    monitor: MonitorConfig = MonitorConfig()
    profiles: tuple = (ALL_PROFILES["sram"],) + RETENTION_SET
    retention_set: tuple = tuple(p.name for p in RETENTION_SET)
    base: str = BASE_PROFILE.name
    objective: str = "latency"
    profiling_window: int = 1_000_000
    feedback_window: int = 1_000_000
    migration_cost_ns: float = 2304.0
    prediction_time_ns: float = 4250.0
    feedback_epsilon: float = 0.01
    transfer_energy_nj: float = 0.0
    workloads: tuple = ()
    seed: int | None = None
    k: int = 3

    def profile_table(self):
        return {p.name: p for p in self.profiles}

    def profile(self, name) -> RetentionProfile:
        table = self.profile_table()
        if name not in table:
            raise ConfigError(f"unknown profile {name!r}; known: {', '.join(table)}")
        return table[name]

    def effective_seed(self, override=None) -> int:
        if override is not None:
            return int(override)
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV)
        if env not in (None, ""):
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        return 0

    def policy(self, objective=None) -> PolicyConfig:
        rset = tuple(self.profile(n) for n in self.retention_set)
        return PolicyConfig(
            retention_set=rset, base=self.profile(self.base), objective=objective or self.objective,
            profiling_window=self.profiling_window, feedback_window=self.feedback_window,
            migration_cost_ns=self.migration_cost_ns, prediction_time_ns=self.prediction_time_ns,
            feedback_epsilon=self.feedback_epsilon, transfer_energy_nj=self.transfer_energy_nj,
            geometry=self.geometry, l2_geometry=self.l2_geometry, monitor=self.monitor,
            timing=self.timing)


_SECTIONS = {
    "cache": ("capacity_bytes", "line_bytes", "associativity"),
    "l2": ("capacity_bytes", "line_bytes", "associativity"),
    "timing": ("frequency_hz", "base_cpi", "l2_hit_penalty_cycles", "memory_penalty_cycles",
               "hit_cycles", "l2_access_energy"),
    "monitor": ("n_states", "aging_clock"),
    "policy": ("objective", "base", "retention_set", "profiling_window", "feedback_window",
               "migration_cost", "prediction_time", "feedback_epsilon", "transfer_energy", "k"),
    "experiment": ("seed", "workloads"),
}
_PROFILE_KEYS = ("technology", "retention", "hit_latency", "write_latency", "read_energy",
                 "write_energy", "leakage_mw")


def _geometry(sec, name):
    return CacheGeometry(_int(sec["capacity_bytes"], f"{name}.capacity_bytes"),
                         _int(sec["line_bytes"], f"{name}.line_bytes"),
                         _int(sec["associativity"], f"{name}.associativity"))


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0]) from None
    cfg = ExperimentConfig()
    kw = {}
    profiles = []
    for name in cp.sections():
        sec = cp[name]
        if name.startswith("profile."):
            allowed = _PROFILE_KEYS
        elif name in _SECTIONS:
            allowed = _SECTIONS[name]
        else:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(sec) - set(allowed)
        if extra:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(extra))}")
        if name.startswith("profile."):
            missing = set(_PROFILE_KEYS) - set(sec)
            if missing:
                raise ConfigError(f"[{name}] missing key(s): {', '.join(sorted(missing))}")
            try:
                profiles.append(RetentionProfile(
                    name[len("profile."):], parse_duration_ns(sec["retention"]),
                    parse_duration_ns(sec["hit_latency"]), parse_duration_ns(sec["write_latency"]),
                    parse_energy_nj(sec["read_energy"]), parse_energy_nj(sec["write_energy"]),
                    _float(sec["leakage_mw"], f"{name}.leakage_mw"), sec["technology"]))
            except ValueError as e:
                raise ConfigError(str(e)) from None
            continue
        if name in ("cache", "l2"):
            base = cfg.geometry if name == "cache" else cfg.l2_geometry
            merged = {k: str(getattr(base, k)) for k in _SECTIONS[name]} | dict(sec)
            try:
                kw["geometry" if name == "cache" else "l2_geometry"] = _geometry(merged, name)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        elif name == "timing":
            t = cfg.timing
            vals = {
                "frequency_hz": _float(sec.get("frequency_hz", _num(t.frequency_hz)), "frequency_hz"),
                "base_cpi": _float(sec.get("base_cpi", _num(t.base_cpi)), "base_cpi"),
                "l2_hit_penalty_cycles": _float(sec.get("l2_hit_penalty_cycles", _num(t.l2_hit_penalty_cycles)),
                                                "l2_hit_penalty_cycles"),
                "memory_penalty_cycles": _float(sec.get("memory_penalty_cycles", _num(t.memory_penalty_cycles)),
                                                "memory_penalty_cycles"),
                "hit_cycles": _int(sec.get("hit_cycles", str(t.hit_cycles)), "hit_cycles"),
                "l2_access_energy_nj": parse_energy_nj(sec.get("l2_access_energy", f"{t.l2_access_energy_nj}nj")),
            }
            try:
                kw["timing"] = TimingParams(**vals)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        elif name == "monitor":
            try:
                kw["monitor"] = MonitorConfig(_int(sec.get("n_states", "4"), "n_states"),
                                              sec.get("aging_clock", "simulated"))
            except ValueError as e:
                raise ConfigError(str(e)) from None
        elif name == "policy":
            if "objective" in sec:
                kw["objective"] = sec["objective"]
            if "base" in sec:
                kw["base"] = sec["base"]
            if "retention_set" in sec:
                kw["retention_set"] = tuple(x.strip() for x in sec["retention_set"].split(",") if x.strip())
            for key, conv in (("profiling_window", _int), ("feedback_window", _int), ("k", _int)):
                if key in sec:
                    kw[key] = conv(sec[key], key)
            if "migration_cost" in sec:
                kw["migration_cost_ns"] = parse_duration_ns(sec["migration_cost"])
            if "prediction_time" in sec:
                kw["prediction_time_ns"] = parse_duration_ns(sec["prediction_time"])
            if "feedback_epsilon" in sec:
                kw["feedback_epsilon"] = _float(sec["feedback_epsilon"], "feedback_epsilon")
            if "transfer_energy" in sec:
                kw["transfer_energy_nj"] = parse_energy_nj(sec["transfer_energy"])
        elif name == "experiment":
            if "seed" in sec and sec["seed"].strip():
                kw["seed"] = _int(sec["seed"], "seed")
            if "workloads" in sec:
                kw["workloads"] = tuple(x.strip() for x in sec["workloads"].split(",") if x.strip())
    if profiles:
        kw["profiles"] = tuple(profiles)
    cfg = replace(cfg, **kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    if cfg.objective not in ("latency", "energy"):
        raise ConfigError(f"objective must be latency or energy, got {cfg.objective!r}")
    names = [p.name for p in cfg.profiles]
    if len(set(names)) != len(names):
        raise ConfigError("profile names must be unique")
    for n in cfg.retention_set + (cfg.base,):
        cfg.profile(n)
    for n in cfg.retention_set:
        try:
            cfg.profile(n).validate_physical()
        except ValueError as e:
            raise ConfigError(str(e)) from None
    try:
        cfg.policy()
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _duration(ns):
    return "inf" if math.isinf(ns) else f"{_num(ns)}ns"


def dumps(cfg: ExperimentConfig) -> str:
    t = cfg.timing
    out = []

    def section(name, items):
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}".rstrip() for k, v in items)
        out.append("")

    for name, g in (("cache", cfg.geometry), ("l2", cfg.l2_geometry)):
        section(name, [("capacity_bytes", g.capacity_bytes), ("line_bytes", g.line_bytes),
                       ("associativity", g.associativity)])
    section("timing", [("frequency_hz", _num(t.frequency_hz)), ("base_cpi", _num(t.base_cpi)),
                       ("l2_hit_penalty_cycles", _num(t.l2_hit_penalty_cycles)),
                       ("memory_penalty_cycles", _num(t.memory_penalty_cycles)),
                       ("hit_cycles", t.hit_cycles),
                       ("l2_access_energy", f"{_num(t.l2_access_energy_nj)}nj")])
    section("monitor", [("n_states", cfg.monitor.n_states), ("aging_clock", cfg.monitor.aging_clock)])
    section("policy", [("objective", cfg.objective), ("base", cfg.base),
                       ("retention_set", ", ".join(cfg.retention_set)),
                       ("profiling_window", cfg.profiling_window),
                       ("feedback_window", cfg.feedback_window),
                       ("migration_cost", f"{_num(cfg.migration_cost_ns)}ns"),
                       ("prediction_time", f"{_num(cfg.prediction_time_ns)}ns"),
                       ("feedback_epsilon", _num(cfg.feedback_epsilon)),
                       ("transfer_energy", f"{_num(cfg.transfer_energy_nj)}nj"),
                       ("k", cfg.k)])
    section("experiment", [("seed", "" if cfg.seed is None else cfg.seed),
                           ("workloads", ", ".join(cfg.workloads))])
    for p in cfg.profiles:
        section(f"profile.{p.name}", [
            ("technology", p.technology), ("retention", _duration(p.retention_time_ns)),
            ("hit_latency", f"{_num(p.hit_latency_ns)}ns"),
            ("write_latency", f"{_num(p.write_latency_ns)}ns"),
            ("read_energy", f"{_num(p.read_energy_nj)}nj"),
            ("write_energy", f"{_num(p.write_energy_nj)}nj"),
            ("leakage_mw", _num(p.leakage_mw))])
    return "\n".join(out)
