"""k-nearest-neighbour retention classifier and its evaluation tooling."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import __version__
from . import _kernels as K
from .features import (DEFAULT_CATALOG, CatalogMismatchError, FeatureCatalog, Standardizer,
                       fit_standardizer)

LATENCY = "latency"
ENERGY = "energy"
OBJECTIVES = (LATENCY, ENERGY)
N_CLASSES = 6
MODEL_FORMAT = "retention-lab-knn"
MODEL_FORMAT_VERSION = 1


class LearnError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    features: np.ndarray
    label: int
    objective: str


@dataclass
class Dataset:
    """Raw (unstandardized) feature rows with one label per row for one objective."""
    X: np.ndarray
    y: np.ndarray
    ids: list | None = None
    objective: str = LATENCY
    catalog: FeatureCatalog = DEFAULT_CATALOG

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.y))]
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y) or len(self.ids) != len(self.y):
            raise LearnError("dataset arrays disagree in length")
        if self.X.shape[1] != len(self.catalog):
            raise LearnError(f"dataset has {self.X.shape[1]} columns, catalog has {len(self.catalog)}")
        if self.objective not in OBJECTIVES:
            raise LearnError(f"unknown objective {self.objective!r}")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], [self.ids[i] for i in idx], self.objective, self.catalog)

    def samples(self):
        return [LabeledSample(i, x, int(l), self.objective) for i, x, l in zip(self.ids, self.X, self.y)]


@dataclass(frozen=True, eq=False)
class KnnModel:
    k: int
    train_matrix: np.ndarray  # standardized, selected columns only
    labels: np.ndarray
    standardizer: Standardizer
    selected: tuple
    catalog_version: str
    n_features_total: int
    objective: str = LATENCY
    weighting: str = "uniform"

    @property
    def query_cost(self) -> int:
        """Scalar difference-square-accumulate steps per query."""
        return self.train_matrix.shape[0] * len(self.selected)

    def __eq__(self, other):
        if not isinstance(other, KnnModel):
            return NotImplemented
        return (self.k == other.k and self.selected == other.selected
                and self.catalog_version == other.catalog_version
                and np.array_equal(self.train_matrix, other.train_matrix)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.standardizer.mean, other.standardizer.mean)
                and np.array_equal(self.standardizer.std, other.standardizer.std))


@dataclass(frozen=True)
class ConstantModel:
    """Always answers ``label``; a stand-in predictor for policy experiments."""
    label: int
    catalog_version: str = DEFAULT_CATALOG.version
    objective: str = LATENCY

    def predict_one(self, vector) -> int:
        return self.label


class OpCounter:
    def __init__(self):
        self.count = 0


def train(dataset: Dataset, k: int = 3, selected_features: Sequence[int] | None = None) -> KnnModel:
    if len(dataset) == 0:
        raise LearnError("cannot train on an empty dataset")
    if k < 1 or k > len(dataset):
        raise LearnError(f"k={k} needs 1 <= k <= training size ({len(dataset)})")
    n_total = dataset.X.shape[1]
    sel = tuple(range(n_total)) if selected_features is None else tuple(int(i) for i in selected_features)
    if not sel or len(set(sel)) != len(sel) or min(sel) < 0 or max(sel) >= n_total:
        raise LearnError(f"invalid selected features {sel}")
    raw = dataset.X[:, sel]
    if len(dataset) >= 2:
        std = fit_standardizer(raw)
    else:
        std = Standardizer(raw[0].copy(), np.zeros(len(sel)))
    return KnnModel(k, np.ascontiguousarray(std.apply(raw)), dataset.y.copy(), std, sel,
                    dataset.catalog.version, n_total, dataset.objective)


def _vote(labels_sorted: np.ndarray, k: int) -> int:
    nn = labels_sorted[:k]
    counts = np.bincount(nn)
    top = counts.max()
    # vote ties go to the label of the nearest tied neighbour
    for lab in nn:
        if counts[lab] == top:
            return int(lab)
    raise AssertionError("unreachable")


def predict(model: KnnModel, vector, ops: OpCounter | None = None) -> int:
    """Majority vote of the k nearest training rows.

    Equal distances are ordered by lower retention index; vote ties go to the
    nearest neighbour among the tied labels.
    """
    x = np.asarray(vector, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features_total:
        raise LearnError(f"expected a vector of {model.n_features_total} features, got shape {x.shape}")
    q = np.ascontiguousarray(model.standardizer.apply(x[list(model.selected)]))
    d = np.empty(model.train_matrix.shape[0])
    K.squared_distances(model.train_matrix, q, d)
    if ops is not None:
        ops.count += model.query_cost
    order = np.lexsort((model.labels, d))
    return _vote(model.labels[order], model.k)


def predict_many(model: KnnModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([predict(model, x) for x in X], dtype=np.int64)


def predict_label(model, vector) -> int:
    """Dispatch to ``predict`` for KNN models and to ``predict_one`` otherwise."""
    if isinstance(model, KnnModel):
        return predict(model, vector)
    return int(model.predict_one(vector))


def check_catalog(model, catalog: FeatureCatalog):
    if model.catalog_version != catalog.version:
        raise CatalogMismatchError(
            f"model was trained on catalog {model.catalog_version}, got {catalog.version}")


# -- scoring -------------------------------------------------------------------

def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return m


def precision_recall(confusion):
    c = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    p = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    r = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    return p, r


def f_score(confusion) -> float:
    """Macro-averaged F1 over classes that occur as a truth or a prediction."""
    c = np.asarray(confusion)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise LearnError("confusion matrix must be square")
    active = (c.sum(axis=0) + c.sum(axis=1)) > 0
    if not active.any():
        return 0.0
    p, r = precision_recall(c)
    denom = p + r
    f = np.divide(2 * p * r, denom, out=np.zeros_like(p), where=denom > 0)
    return float(f[active].mean())


@dataclass
class EvalReport:
    f_score: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    mean_prediction_ns: float
    seed: int
    folds: int
    fold_of: np.ndarray = field(repr=False)

    def to_dict(self, include_timing=True):
        d = {"f_score": self.f_score, "confusion": self.confusion.tolist(),
             "precision": self.precision.tolist(), "recall": self.recall.tolist(),
             "seed": self.seed, "folds": self.folds, "fold_of": self.fold_of.tolist()}
        if include_timing:
            d["timing"] = {"mean_prediction_ns": self.mean_prediction_ns}
        return d


class Classifier(Protocol):
    def fit(self, dataset: Dataset) -> "Classifier": ...
    def predict(self, X) -> np.ndarray: ...


class KnnClassifier:
    """Adapter giving the KNN functions the pluggable classifier shape."""

    def __init__(self, k: int = 3, selected=None):
        self.k = k
        self.selected = selected
        self.model = None

    def fit(self, dataset: Dataset):
        self.model = train(dataset, min(self.k, len(dataset)), self.selected)
        return self

    def predict(self, X):
        return predict_many(self.model, X)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    if folds < 2:
        raise LearnError("need at least 2 folds")
    if folds > n:
        raise LearnError(f"{folds} folds requested for {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, folds)):
        fold_of[part] = f
    return fold_of


def cross_validate(dataset: Dataset, folds: int = 5, seed: int = 0, k: int = 3,
                   selected_features=None, classifier_factory=None) -> EvalReport:
    """Shuffled k-fold evaluation; every sample is tested exactly once."""
    fold_of = fold_assignment(len(dataset), folds, seed)
    make = classifier_factory or (lambda: KnnClassifier(k, selected_features))
    y_pred = np.empty(len(dataset), dtype=np.int64)
    elapsed = 0
    for f in range(folds):
        test = np.nonzero(fold_of == f)[0]
        clf = make().fit(dataset.subset(np.nonzero(fold_of != f)[0]))
        if f == 0:
            clf.predict(dataset.X[test[:1]])  # keep one-off compilation out of the timing
        t0 = time.perf_counter_ns()
        y_pred[test] = clf.predict(dataset.X[test])
        elapsed += time.perf_counter_ns() - t0
    conf = confusion_matrix(dataset.y, y_pred)
    p, r = precision_recall(conf)
    return EvalReport(f_score(conf), conf, p, r, elapsed / len(dataset), seed, folds, fold_of)


def permutation_importance(dataset: Dataset, model: KnnModel, seed: int = 0, repeats: int = 5):
    """Mean drop in macro-F on ``dataset`` when each selected column is shuffled.

    Returns ``[(feature name, importance), ...]`` sorted by decreasing importance.
    """
    if repeats < 1:
        raise LearnError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    base = f_score(confusion_matrix(dataset.y, predict_many(model, dataset.X)))
    names = dataset.catalog.names
    out = []
    for j in model.selected:
        drops = []
        for _ in range(repeats):
            Xp = dataset.X.copy()
            Xp[:, j] = Xp[rng.permutation(len(dataset)), j]
            drops.append(base - f_score(confusion_matrix(dataset.y, predict_many(model, Xp))))
        out.append((names[j], float(np.mean(drops))))
    order = sorted(range(len(out)), key=lambda i: -out[i][1])
    return [out[i] for i in order]


@dataclass
class EliminationResult:
    selected: tuple
    curve: list  # (n_features, f_score, mean_prediction_ns, feature indices)

    @property
    def selected_names(self):
        return self.selected


def iterative_elimination(dataset: Dataset, seed: int = 0, folds: int = 5, k: int = 3,
                          repeats: int = 5) -> EliminationResult:
    """Drop the least important feature one at a time, cross-validating each set.

    Importance is averaged over the CV folds (train on the fold's training
    part, permute on its held-out part). The result keeps the fewest features
    among the sets that reached the best F-score.
    """
    current = list(range(dataset.X.shape[1]))
    curve = []
    fold_of = fold_assignment(len(dataset), folds, seed)
    while current:
        rep = cross_validate(dataset, folds, seed, k, current)
        curve.append((len(current), rep.f_score, rep.mean_prediction_ns, tuple(current)))
        if len(current) == 1:
            break
        totals = dict.fromkeys(current, 0.0)
        for f in range(folds):
            tr = dataset.subset(np.nonzero(fold_of != f)[0])
            te = dataset.subset(np.nonzero(fold_of == f)[0])
            model = train(tr, min(k, len(tr)), current)
            for name, imp in permutation_importance(te, model, seed + f, repeats):
                totals[dataset.catalog.index(name)] += imp / folds
        # lowest importance goes; ties drop the later catalog entry
        drop = min(current, key=lambda i: (totals[i], -i))
        current.remove(drop)
    best = max(c[1] for c in curve)
    chosen = min((c for c in curve if c[1] == best), key=lambda c: c[0])
    return EliminationResult(chosen[3], curve)


# -- persistence -------------------------------------------------------------------

def model_to_json(model: KnnModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "version": __version__,
        "catalog_version": model.catalog_version,
        "objective": model.objective,
        "k": model.k,
        "weighting": model.weighting,
        "n_features_total": model.n_features_total,
        "selected": list(model.selected),
        "mean": model.standardizer.mean.tolist(),
        "std": model.standardizer.std.tolist(),
        "labels": model.labels.tolist(),
        "train_matrix": model.train_matrix.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def model_from_json(text: str, catalog: FeatureCatalog | None = None) -> KnnModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise LearnError("not a retention-lab KNN model file")
    model = KnnModel(
        k=int(doc["k"]),
        train_matrix=np.array(doc["train_matrix"], dtype=np.float64).reshape(len(doc["labels"]), -1),
        labels=np.array(doc["labels"], dtype=np.int64),
        standardizer=Standardizer(np.array(doc["mean"]), np.array(doc["std"])),
        selected=tuple(doc["selected"]),
        catalog_version=doc["catalog_version"],
        n_features_total=int(doc["n_features_total"]),
        objective=doc.get("objective", LATENCY),
        weighting=doc.get("weighting", "uniform"),
    )
    if catalog is not None:
        check_catalog(model, catalog)
    return model
