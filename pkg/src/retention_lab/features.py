"""Counter-derived feature vectors for the retention classifier.

The catalog is plain data: an ordered tuple of feature names, each resolved
to an extraction function in ``EXTRACTORS``. Ratios whose denominator is zero
are defined as 0; ``read_write_ratio`` divides by ``max(writes, 1)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

DEFAULT_WINDOW_INSTRUCTIONS = 1_000_000


class FeatureError(ValueError):
    pass


class CatalogMismatchError(FeatureError):
    pass


def _ratio(num, den):
    return num / den if den else 0.0


def _per_ki(count, stats):
    return 1000.0 * count / stats.instructions


def _p90_write_gap(s):
    return s.write_gap_percentile(0.9)


EXTRACTORS = {
    "l1_read_per_ki": lambda s: _per_ki(s.l1_reads, s),
    "l1_write_per_ki": lambda s: _per_ki(s.l1_writes, s),
    "l1_read_miss_rate": lambda s: _ratio(s.l1_read_misses, s.l1_reads),
    "l1_write_miss_rate": lambda s: _ratio(s.l1_write_misses, s.l1_writes),
    "l1_total_miss_rate": lambda s: _ratio(s.l1_misses, s.l1_accesses),
    "writeback_per_ki": lambda s: _per_ki(s.l1_writebacks + s.expiry_writebacks, s),
    "l2_access_per_ki": lambda s: _per_ki(s.l2_accesses, s),
    "l2_miss_rate": lambda s: _ratio(s.l2_misses, s.l1_misses),
    "l2_miss_per_ki": lambda s: _per_ki(s.l2_misses, s),
    "unique_lines_per_ki": lambda s: _per_ki(s.unique_lines, s),
    "read_write_ratio": lambda s: s.l1_reads / max(s.l1_writes, 1),
    "dirty_eviction_ratio": lambda s: _ratio(s.l1_writebacks + s.expiry_writebacks,
                                             s.l1_evictions + s.expiry_evictions),
    "mean_write_reuse_gap_ns": lambda s: _ratio(s.write_gap_sum_ns, s.write_gap_count),
    "p90_write_reuse_gap_ns": _p90_write_gap,
    "mean_read_reuse_gap_ns": lambda s: _ratio(s.read_gap_sum_ns, s.read_gap_count),
    "set_conflict_ratio": lambda s: _ratio(s.l1_evictions, s.l1_misses),
    "streaming_ratio": lambda s: _ratio(s.single_touch_lines, s.unique_lines),
    "store_burstiness": lambda s: _ratio(s.write_after_write, s.l1_writes),
    "hit_run_length_mean": lambda s: _ratio(s.l1_hits, s.hit_runs),
    "instructions_per_event": lambda s: _ratio(s.instructions, s.l1_accesses),
}

# features that are fractions and must stay inside [0, 1]
RATE_FEATURES = frozenset({
    "l1_read_miss_rate", "l1_write_miss_rate", "l1_total_miss_rate", "l2_miss_rate",
    "dirty_eviction_ratio", "set_conflict_ratio", "streaming_ratio", "store_burstiness",
})


@dataclass(frozen=True)
class FeatureCatalog:
    names: tuple
    revision: int = 1

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise FeatureError("feature names must be unique")
        unknown = [n for n in self.names if n not in EXTRACTORS]
        if unknown:
            raise FeatureError(f"no extractor for: {', '.join(unknown)}")

    def __len__(self):
        return len(self.names)

    @property
    def version(self) -> str:
        digest = hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:12]
        return f"r{self.revision}-{digest}"

    def index(self, name):
        return self.names.index(name)

    def manifest(self) -> str:
        lines = ["# retention-lab feature catalog", f"version = {self.version}",
                 f"revision = {self.revision}", f"count = {len(self.names)}"]
        lines += [f"feature = {n}" for n in self.names]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "FeatureCatalog":
        names, version, revision = [], None, 1
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = (x.strip() for x in line.partition("="))
            if key == "feature":
                names.append(value)
            elif key == "version":
                version = value
            elif key == "revision":
                revision = int(value)
        cat = cls(tuple(names), revision)
        if version is not None and version != cat.version:
            raise CatalogMismatchError(f"manifest version {version} does not match its features ({cat.version})")
        return cat


DEFAULT_CATALOG = FeatureCatalog(tuple(EXTRACTORS))


def extract(stats, catalog: FeatureCatalog = DEFAULT_CATALOG) -> np.ndarray:
    if stats.instructions <= 0:
        raise FeatureError("cannot extract features from a zero-instruction window")
    return np.array([float(EXTRACTORS[n](stats)) for n in catalog.names], dtype=np.float64)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (x - self.mean) / safe, 0.0)


def fit_standardizer(vectors) -> Standardizer:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise FeatureError("fitting a standardizer needs at least two vectors")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # a column of identical values can still produce a tiny nonzero std
    const = np.all(x == x[0], axis=0)
    std = np.where(const, 0.0, std)
    return Standardizer(mean, std)


def apply(standardizer: Standardizer, vector) -> np.ndarray:
    return standardizer.apply(vector)
