"""Feature encoding, random forests, a logistic classifier and ranking metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import rankdata

from . import _tree
from .cohort import MARITAL_STATUSES, RACES, SEXES, CohortRecord, HYPERTENSION_MEDICATIONS
from .stats import SeparationError, fit_logistic

PREDICTION_FEATURES = "prediction"
CONFOUNDER_FEATURES = "confounders"

CATEGORICAL_LEVELS = {"sex": SEXES, "race": RACES, "marital": MARITAL_STATUSES}
CONFOUNDER_CONTINUOUS = (
    "age", "eci_count", "cci_count", "htn_duration_years", "primary_visits_prior_year",
)
PREDICTION_CONTINUOUS = CONFOUNDER_CONTINUOUS + ("first_systolic", "first_diastolic")


class EncodingError(ValueError):
    pass


class UnseenCategoryError(EncodingError):
    pass


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingMetadata:
    feature_set: str
    categorical: dict[str, tuple[str, ...]]  # first level is the reference
    medications: tuple[str, ...]  # multi-hot; first is the reference
    continuous: tuple[str, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]

    @property
    def columns(self) -> list[str]:
        cols = list(self.continuous)
        for name, levels in self.categorical.items():
            cols += [f"{name}={lv}" for lv in levels[1:]]
        cols += [f"medication={m}" for m in self.medications[1:]]
        return cols

    def to_dict(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "categorical": {k: list(v) for k, v in self.categorical.items()},
            "medications": list(self.medications),
            "continuous": list(self.continuous),
            "means": list(self.means),
            "sds": list(self.sds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingMetadata":
        return cls(
            d["feature_set"],
            {k: tuple(v) for k, v in d["categorical"].items()},
            tuple(d["medications"]),
            tuple(d["continuous"]),
            tuple(d["means"]),
            tuple(d["sds"]),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    values: NDArray[np.float64]
    columns: tuple[str, ...]
    metadata: EncodingMetadata

    def __len__(self) -> int:
        return self.values.shape[0]


def _continuous_value(r: CohortRecord, name: str) -> float:
    if name == "first_systolic":
        v = r.pair.first.systolic
    elif name == "first_diastolic":
        v = r.pair.first.diastolic
    else:
        v = getattr(r, name)
    if v is None:
        raise EncodingError(f"record {r.pair_id} has no {name}")
    return float(v)


def _record_medications(r: CohortRecord) -> list[str]:
    return r.pair.first.medications(HYPERTENSION_MEDICATIONS)


def encode(
    records: Sequence[CohortRecord],
    metadata: EncodingMetadata | None = None,
    feature_set: str = PREDICTION_FEATURES,
) -> FeatureMatrix:
    """One-hot categoricals (reference level dropped), multi-hot medications,
    standardized continuous features. Visit interval is never encoded.

    Without ``metadata`` the levels and scaling are learned from ``records``;
    pass the training metadata to encode test rows identically.
    """
    if not records:
        raise EncodingError("no records to encode")
    if metadata is None:
        if feature_set == PREDICTION_FEATURES:
            continuous = PREDICTION_CONTINUOUS
            meds_seen = {m for r in records for m in _record_medications(r)}
            medications = tuple(m for m in HYPERTENSION_MEDICATIONS if m in meds_seen)
        elif feature_set == CONFOUNDER_FEATURES:
            continuous = CONFOUNDER_CONTINUOUS
            medications = ()
        else:
            raise EncodingError(f"unknown feature set {feature_set!r}")
        categorical = {}
        for name, levels in CATEGORICAL_LEVELS.items():
            seen = {getattr(r, name) for r in records}
            categorical[name] = tuple(lv for lv in levels if lv in seen)
        raw = np.array([[_continuous_value(r, c) for c in continuous] for r in records])
        sds = raw.std(axis=0)
        metadata = EncodingMetadata(
            feature_set,
            categorical,
            medications,
            continuous,
            tuple(float(m) for m in raw.mean(axis=0)),
            tuple(float(s) if s > 0 else 1.0 for s in sds),
        )
    cols = metadata.columns
    out = np.zeros((len(records), len(cols)))
    means = np.asarray(metadata.means)
    sds = np.asarray(metadata.sds)
    nc = len(metadata.continuous)
    offsets = {}
    j = nc
    for name, levels in metadata.categorical.items():
        offsets[name] = j
        j += len(levels) - 1
    med_offset = j
    med_index = {m: i for i, m in enumerate(metadata.medications)}
    for i, r in enumerate(records):
        out[i, :nc] = ([_continuous_value(r, c) for c in metadata.continuous] - means) / sds
        for name, levels in metadata.categorical.items():
            v = getattr(r, name)
            if v not in levels:
                raise UnseenCategoryError(f"{name}={v!r} was not seen when the encoding was fit")
            k = levels.index(v)
            if k > 0:
                out[i, offsets[name] + k - 1] = 1.0
        for m in _record_medications(r) if metadata.medications else ():
            if m not in med_index:
                raise UnseenCategoryError(f"medication {m!r} was not seen when the encoding was fit")
            if med_index[m] > 0:
                out[i, med_offset + med_index[m] - 1] = 1.0
    return FeatureMatrix(out, tuple(cols), metadata)


def _as_2d(X) -> NDArray[np.float64]:
    if isinstance(X, FeatureMatrix):
        X = X.values
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    return X


# ---------------------------------------------------------------------------
# forests


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    min_leaf: int = 2
    max_features: int | None = None  # None -> ceil(sqrt(p))
    bootstrap: bool = True
    task: str = "classification"

    def candidates(self, p: int) -> int:
        if self.max_features is None:
            return max(1, math.ceil(math.sqrt(p)))
        return max(1, min(p, self.max_features))


@dataclass
class ForestModel:
    config: ForestConfig
    seed: int
    n_features: int
    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    left: NDArray[np.int64]
    right: NDArray[np.int64]
    value: NDArray[np.float64]
    node_counts: NDArray[np.int64]
    columns: tuple[str, ...] = field(default=())

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def to_dict(self) -> dict:
        trees = []
        for t in range(self.n_trees):
            k = int(self.node_counts[t])
            trees.append({
                "feature": self.feature[t, :k].tolist(),
                "threshold": self.threshold[t, :k].tolist(),
                "left": self.left[t, :k].tolist(),
                "right": self.right[t, :k].tolist(),
                "value": self.value[t, :k].tolist(),
            })
        return {
            "kind": "forest",
            "config": self.config.__dict__,
            "seed": self.seed,
            "n_features": self.n_features,
            "columns": list(self.columns),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        trees = d["trees"]
        cap = max(len(t["feature"]) for t in trees)
        n = len(trees)
        feature = np.full((n, cap), _tree.LEAF, dtype=np.int64)
        left = np.full((n, cap), _tree.LEAF, dtype=np.int64)
        right = np.full((n, cap), _tree.LEAF, dtype=np.int64)
        threshold = np.zeros((n, cap))
        value = np.zeros((n, cap))
        counts = np.zeros(n, dtype=np.int64)
        for i, t in enumerate(trees):
            k = len(t["feature"])
            counts[i] = k
            feature[i, :k] = t["feature"]
            left[i, :k] = t["left"]
            right[i, :k] = t["right"]
            threshold[i, :k] = t["threshold"]
            value[i, :k] = t["value"]
        return cls(ForestConfig(**d["config"]), d["seed"], d["n_features"], feature, threshold,
                   left, right, value, counts, tuple(d.get("columns", ())))

    def predict(self, X) -> NDArray[np.float64]:
        X = _as_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _tree.predict_trees(X, self.feature, self.threshold, self.left, self.right, self.value)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = np.column_stack([X, y]).T[::-1]
    return np.lexsort(keys)


def fit_forest(X, y: ArrayLike, config: ForestConfig = ForestConfig(), seed: int = 0) -> ForestModel:
    """Bootstrap forest; deterministic in ``seed`` and independent of row order."""
    X = _as_2d(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one entry per row")
    if config.task == "classification":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("classification forest needs binary labels")
        if y.min() == y.max():
            raise SingleClassError("training labels contain a single class")
    order = _canonical_order(X, y)
    Xc = np.ascontiguousarray(X[order])
    yc = np.ascontiguousarray(y[order])
    seed32 = int(seed) % (2**32 - config.n_trees - 1)
    codes, n_unique, uniq = _tree.value_codes(Xc)
    feature, threshold, left, right, value, counts = _tree.fit_trees(
        Xc, codes, n_unique, uniq, yc, config.n_trees, config.min_leaf, config.candidates(X.shape[1]), seed32,
        config.bootstrap,
    )
    cap = int(counts.max())
    return ForestModel(config, int(seed), X.shape[1], feature[:, :cap].copy(),
                       threshold[:, :cap].copy(), left[:, :cap].copy(), right[:, :cap].copy(),
                       value[:, :cap].copy(), counts)


def predict_proba(model, X) -> NDArray[np.float64]:
    return model.predict(X)


@dataclass
class LogisticClassifier:
    coefficients: NDArray[np.float64]
    columns: tuple[str, ...] = ()

    @classmethod
    def fit(cls, X, y: ArrayLike) -> "LogisticClassifier":
        X = _as_2d(X)
        y = np.asarray(y, dtype=float)
        if y.min() == y.max():
            raise SingleClassError("training labels contain a single class")
        keep = X.std(axis=0) > 0
        try:
            fitted = fit_logistic(np.column_stack([np.ones(len(X)), X[:, keep]]), y).coefficients
        except SeparationError as err:
            # no finite MLE; the last iterate already points along a separating direction,
            # which is all a ranking classifier needs
            fitted = err.coefficients
        coef = np.zeros(X.shape[1] + 1)
        coef[0] = fitted[0]
        coef[1:][keep] = fitted[1:]
        return cls(coef)

    def predict(self, X) -> NDArray[np.float64]:
        X = _as_2d(X)
        eta = self.coefficients[0] + X @ self.coefficients[1:]
        return 1.0 / (1.0 + np.exp(-eta))

    def to_dict(self) -> dict:
        return {"kind": "logistic", "coefficients": self.coefficients.tolist(),
                "columns": list(self.columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticClassifier":
        return cls(np.asarray(d["coefficients"], dtype=float), tuple(d.get("columns", ())))


def save_model(model, metadata: EncodingMetadata | None, path: str | Path) -> None:
    d = model.to_dict()
    if metadata is not None:
        d["encoding"] = metadata.to_dict()
    with open(path, "w") as fh:
        json.dump(d, fh)
        fh.write("\n")


def load_model(path: str | Path):
    with open(path) as fh:
        d = json.load(fh)
    meta = EncodingMetadata.from_dict(d["encoding"]) if "encoding" in d else None
    if d["kind"] == "forest":
        return ForestModel.from_dict(d), meta
    if d["kind"] == "logistic":
        return LogisticClassifier.from_dict(d), meta
    raise ValueError(f"unknown model kind {d['kind']!r}")


# ---------------------------------------------------------------------------
# metrics


def auroc(scores: ArrayLike, labels: ArrayLike) -> float:
    """Mann-Whitney AUROC; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise SingleClassError("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def classify(scores: ArrayLike, threshold: float = 0.5) -> NDArray[np.int64]:
    return (np.asarray(scores, dtype=float) >= threshold).astype(np.int64)


# ---------------------------------------------------------------------------
# regressors used as meta-learner bases


class LinearRegressor:
    """Ordinary least squares with an intercept."""

    min_rows = 2

    def fit(self, X, y) -> "LinearRegressor":
        X = _as_2d(X)
        A = np.column_stack([np.ones(len(X)), X])
        self.coef_, *_ = np.linalg.lstsq(A, np.asarray(y, dtype=float), rcond=None)
        return self

    def predict(self, X) -> NDArray[np.float64]:
        X = _as_2d(X)
        return self.coef_[0] + X @ self.coef_[1:]


class ForestRegressor:
    min_rows = 10

    def __init__(self, n_trees: int = 100, min_leaf: int = 5, seed: int = 0):
        self.config = ForestConfig(n_trees=n_trees, min_leaf=min_leaf, task="regression")
        self.seed = seed

    def fit(self, X, y) -> "ForestRegressor":
        self.model_ = fit_forest(X, y, self.config, self.seed)
        return self

    def predict(self, X) -> NDArray[np.float64]:
        return self.model_.predict(X)
