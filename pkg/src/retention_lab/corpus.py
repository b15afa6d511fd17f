"""The bundled synthetic workload corpus.

Each phase is parameterised by a target write-reuse gap drawn log-uniformly
from 5us to 2ms. The write rate is derived from the gap and the number of
rewritten lines so the generator does not have to clamp, which keeps the
gap actually present in the trace close to the target.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .trace import SyntheticParams, Workload, generate_synthetic

MIN_GAP_NS = 5_000.0
MAX_GAP_NS = 2_000_000.0


@dataclass(frozen=True)
class CorpusSpec:
    n_workloads: int = 40
    seed: int = 2024
    phase_instructions: int = 3_000_000
    max_phases: int = 2
    min_gap_ns: float = MIN_GAP_NS
    max_gap_ns: float = MAX_GAP_NS
    instr_per_ns: float = 2.0
    short_gap_ns: float = 20_000.0
    short_share: float = 0.75


def phase_params(rng: np.random.Generator, spec: CorpusSpec, seed: int, phase_id: str) -> SyntheticParams:
    # most phases rewrite their lines quickly; the rest cover the long tail of the range
    split = min(max(spec.short_gap_ns, spec.min_gap_ns), spec.max_gap_ns)
    lo, hi = (spec.min_gap_ns, split) if rng.random() < spec.short_share else (split, spec.max_gap_ns)
    gap = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    hot = float(rng.uniform(0.8, 0.95))
    tail = float(rng.uniform(2.0, 4.0))
    write_lines = int(rng.integers(96, 449))
    ws = write_lines + int(write_lines * rng.uniform(0.0, 0.1))
    ipe = float(rng.uniform(3.0, 6.0))
    stream = float(rng.uniform(0.0, 0.004))
    writes_per_instr = write_lines / (gap * spec.instr_per_ns)
    wf = float(np.clip(writes_per_instr * ipe / (1.0 - stream), 0.002, 0.6))
    return SyntheticParams(
        working_set_lines=ws, write_fraction=wf, reuse_gap_mean_ns=gap,
        streaming_fraction=stream, event_count=int(spec.phase_instructions / ipe),
        instr_per_event_mean=ipe, seed=seed, hot_fraction=hot, cold_tail_ratio=tail, instr_per_ns=spec.instr_per_ns, phase_id=phase_id)


def corpus_params(spec: CorpusSpec = CorpusSpec()):
    """Per-workload lists of phase parameters and weights."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for i in range(spec.n_workloads):
        n_phases = int(rng.integers(1, spec.max_phases + 1))
        phases = [phase_params(rng, spec, int(rng.integers(0, 2**63)), f"p{j}") for j in range(n_phases)]
        w = rng.uniform(0.3, 1.0, n_phases)
        out.append((f"w{i:02d}", phases, (w / w.sum()).tolist()))
    return out


def build_workload(name, phases, weights) -> Workload:
    built = []
    for p, wt in zip(phases, weights):
        # the write-rate floor makes very long gaps unreachable in short phases; that is expected here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            ph = generate_synthetic(p).phases[0]
        ph.weight = float(wt)
        built.append(ph)
    return Workload(name, built)


def standard_corpus(spec: CorpusSpec = CorpusSpec()):
    return [build_workload(*entry) for entry in corpus_params(spec)]


def split_workloads(workloads, train_fraction: float = 0.7, seed: int = 0):
    """Seeded workload-level split so no phase of a test workload is seen in training."""
    idx = np.random.default_rng(seed).permutation(len(workloads))
    cut = int(round(train_fraction * len(workloads)))
    return [workloads[i] for i in sorted(idx[:cut])], [workloads[i] for i in sorted(idx[cut:])]
