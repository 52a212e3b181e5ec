"""Average treatment effect of amlodipine vs lisinopril on blood-pressure reduction.

Treated (t = 1) is amlodipine, control (t = 0) is lisinopril. Estimators:
Hajek IPW with a logistic propensity and S-, T- and X-learners over a
regression base learner (random forest by default, OLS for closed-form checks).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import special

from .cohort import CohortRecord, MissingLabelError
from .learners import CONFOUNDER_FEATURES, ForestRegressor, LinearRegressor, encode
from .stats import SeparationError, fit_logistic

TREATED = "amlodipine"
CONTROL = "lisinopril"
ESTIMATORS = ("ipw", "s_learner", "t_learner", "x_learner")
OUTCOMES = ("diastolic", "systolic")
DATASETS = ("full", "adherent_only")
PROPENSITY_CLIP = (0.01, 0.99)


class EmptyArmError(ValueError):
    pass


class ArmTooSmallError(ValueError):
    pass


@dataclass
class CausalDataset:
    X: NDArray[np.float64]
    t: NDArray[np.int64]
    y: NDArray[np.float64]
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.t = np.asarray(self.t).astype(np.int64)
        self.y = np.asarray(self.y, dtype=float)
        n = self.X.shape[0]
        if self.t.shape != (n,) or self.y.shape != (n,):
            raise ValueError("X, t and y must have the same number of rows")
        if not np.all((self.t == 0) | (self.t == 1)):
            raise ValueError("treatment must be 0/1")
        if self.n_treated == 0 or self.n_control == 0:
            raise EmptyArmError(
                f"both arms must be nonempty (treated={self.n_treated}, control={self.n_control})")

    @property
    def n_treated(self) -> int:
        return int(self.t.sum())

    @property
    def n_control(self) -> int:
        return int(len(self.t) - self.t.sum())


def treatment_records(records: Sequence[CohortRecord]) -> list[CohortRecord]:
    """Records on amlodipine or lisinopril with both reductions available."""
    return [
        r for r in records
        if r.medication in (TREATED, CONTROL)
        and r.systolic_reduction is not None and r.diastolic_reduction is not None
    ]


def causal_dataset(records: Sequence[CohortRecord], outcome: str) -> CausalDataset:
    if outcome not in OUTCOMES:
        raise ValueError(f"outcome must be one of {OUTCOMES}")
    records = treatment_records(records)
    if not records:
        raise EmptyArmError("no amlodipine or lisinopril records with both pressures")
    t = np.array([1 if r.medication == TREATED else 0 for r in records])
    if t.min() == t.max():
        raise EmptyArmError("only one treatment arm present")
    fm = encode(records, feature_set=CONFOUNDER_FEATURES)
    y = np.array([getattr(r, f"{outcome}_reduction") for r in records], dtype=float)
    return CausalDataset(fm.values, t, y, fm.columns)


# ---------------------------------------------------------------------------
# propensity and IPW


def fit_propensity(X, t, clip: tuple[float, float] = PROPENSITY_CLIP,
                   allow_separation: bool = False) -> NDArray[np.float64]:
    """Logistic propensity e(x) = P(t = 1 | x), clipped to ``clip``.

    Constant columns are dropped before fitting. Separation raises unless
    ``allow_separation``, in which case the diverging iterate is used and the
    clip bounds absorb the 0/1 scores.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    keep = X.std(axis=0) > 0
    design = np.column_stack([np.ones(len(X)), X[:, keep]])
    try:
        coef = fit_logistic(design, t).coefficients
    except SeparationError as exc:
        if not allow_separation or exc.coefficients is None:
            raise
        coef = exc.coefficients
    e = special.expit(design @ coef)
    return np.clip(e, clip[0], clip[1])


def ipw_ate(data: CausalDataset, propensity: NDArray[np.float64] | None = None) -> float:
    """Hajek (self-normalized) inverse probability weighting estimate."""
    e = fit_propensity(data.X, data.t) if propensity is None else np.asarray(propensity, float)
    t, y = data.t, data.y
    w1 = t / e
    w0 = (1 - t) / (1 - e)
    return float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))


def naive_ate(data: CausalDataset) -> float:
    """Unadjusted difference of arm means."""
    return float(data.y[data.t == 1].mean() - data.y[data.t == 0].mean())


# ---------------------------------------------------------------------------
# meta-learners

BaseFactory = Callable[[int], object]


def base_factory(base: str | BaseFactory = "forest") -> BaseFactory:
    if callable(base):
        return base
    if base == "forest":
        return lambda seed: ForestRegressor(seed=seed)
    if base == "linear":
        return lambda seed: LinearRegressor()
    raise ValueError(f"unknown base learner {base!r}")


def _min_rows(model) -> int:
    return int(getattr(model, "min_rows", 1))


def _fit(factory: BaseFactory, seed: int, X, y):
    model = factory(seed)
    if len(y) < _min_rows(model):
        raise ArmTooSmallError(f"{len(y)} rows is below the base learner minimum {_min_rows(model)}")
    return model.fit(X, y)


def s_learner(data: CausalDataset, base: str | BaseFactory = "forest", seed: int = 0) -> float:
    factory = base_factory(base)
    Z = np.column_stack([data.X, data.t])
    model = _fit(factory, seed, Z, data.y)
    n = len(data.y)
    z1 = np.column_stack([data.X, np.ones(n)])
    z0 = np.column_stack([data.X, np.zeros(n)])
    return float(np.mean(model.predict(z1) - model.predict(z0)))


def _arm_models(data: CausalDataset, factory: BaseFactory, seed: int):
    m1 = data.t == 1
    mu1 = _fit(factory, seed, data.X[m1], data.y[m1])
    mu0 = _fit(factory, seed + 1, data.X[~m1], data.y[~m1])
    return mu0, mu1


def t_learner(data: CausalDataset, base: str | BaseFactory = "forest", seed: int = 0) -> float:
    mu0, mu1 = _arm_models(data, base_factory(base), seed)
    return float(np.mean(mu1.predict(data.X) - mu0.predict(data.X)))


def x_learner(data: CausalDataset, base: str | BaseFactory = "forest", seed: int = 0,
              propensity: NDArray[np.float64] | None = None) -> float:
    factory = base_factory(base)
    mu0, mu1 = _arm_models(data, factory, seed)
    m1 = data.t == 1
    X1, X0 = data.X[m1], data.X[~m1]
    d1 = data.y[m1] - mu0.predict(X1)
    d0 = mu1.predict(X0) - data.y[~m1]
    tau1 = _fit(factory, seed + 2, X1, d1)
    tau0 = _fit(factory, seed + 3, X0, d0)
    e = fit_propensity(data.X, data.t) if propensity is None else np.asarray(propensity, float)
    tau = e * tau0.predict(data.X) + (1 - e) * tau1.predict(data.X)
    return float(np.mean(tau))


def estimate(name: str, data: CausalDataset, base: str | BaseFactory = "forest", seed: int = 0) -> float:
    if name == "ipw":
        return ipw_ate(data)
    if name == "s_learner":
        return s_learner(data, base, seed)
    if name == "t_learner":
        return t_learner(data, base, seed)
    if name == "x_learner":
        return x_learner(data, base, seed)
    raise ValueError(f"unknown estimator {name!r}")


# ---------------------------------------------------------------------------
# full vs adherent-only comparison


@dataclass
class AteReport:
    """ATE cells keyed by (estimator, outcome, dataset)."""

    cells: dict[tuple[str, str, str], float] = field(default_factory=dict)
    n_full: int = 0
    n_adherent: int = 0

    def value(self, estimator: str, outcome: str, dataset: str) -> float:
        return self.cells[(estimator, outcome, dataset)]

    def is_complete(self) -> bool:
        return all((e, o, d) in self.cells for e in ESTIMATORS for o in OUTCOMES for d in DATASETS)

    def rows(self) -> list[dict]:
        return [
            {"estimator": e, "outcome": o, "dataset": d, "ate_mmhg": v}
            for (e, o, d), v in sorted(self.cells.items(),
                                       key=lambda kv: (ESTIMATORS.index(kv[0][0]),
                                                       OUTCOMES.index(kv[0][1]),
                                                       DATASETS.index(kv[0][2])))
        ]

    def to_dict(self) -> dict:
        return {"n_full": self.n_full, "n_adherent": self.n_adherent, "cells": self.rows()}

    @classmethod
    def from_dict(cls, d: dict) -> "AteReport":
        cells = {(c["estimator"], c["outcome"], c["dataset"]): float(c["ate_mmhg"]) for c in d["cells"]}
        return cls(cells, int(d.get("n_full", 0)), int(d.get("n_adherent", 0)))


# Reference estimates from a private cohort; used only as a rendering fixture.
REPORTED_TABLE = AteReport({
    ("ipw", "diastolic", "full"): 1.75, ("s_learner", "diastolic", "full"): 0.77,
    ("t_learner", "diastolic", "full"): 1.44, ("x_learner", "diastolic", "full"): 1.51,
    ("ipw", "systolic", "full"): -0.06, ("s_learner", "systolic", "full"): -0.05,
    ("t_learner", "systolic", "full"): -0.12, ("x_learner", "systolic", "full"): -0.14,
    ("ipw", "diastolic", "adherent_only"): 1.40, ("s_learner", "diastolic", "adherent_only"): 0.57,
    ("t_learner", "diastolic", "adherent_only"): 0.97, ("x_learner", "diastolic", "adherent_only"): 0.92,
    ("ipw", "systolic", "adherent_only"): 0.11, ("s_learner", "systolic", "adherent_only"): 0.08,
    ("t_learner", "systolic", "adherent_only"): 0.06, ("x_learner", "systolic", "adherent_only"): 0.07,
})


def adherent_subset(records: Sequence[CohortRecord],
                    labels: dict[str, bool] | None = None) -> list[CohortRecord]:
    """Records labeled adherent. ``labels`` maps pair_id to non_adherent and
    overrides the records' own labels."""
    out = []
    for r in records:
        if labels is not None:
            if r.pair_id not in labels:
                raise MissingLabelError(f"no adherence label for {r.pair_id}")
            na = labels[r.pair_id]
        else:
            if r.adherence is None:
                raise MissingLabelError(f"no adherence label for {r.pair_id}")
            na = r.adherence.non_adherent
        if not na:
            out.append(r)
    return out


def ate_comparison(
    records: Sequence[CohortRecord],
    labels: dict[str, bool] | None = None,
    base: str | BaseFactory = "forest",
    seed: int = 0,
    estimators: Sequence[str] = ESTIMATORS,
    outcomes: Sequence[str] = OUTCOMES,
    datasets: Sequence[str] = DATASETS,
    min_adherent: int = 20,
) -> AteReport:
    """Every requested estimator x outcome on the full data and the adherent-only subset."""
    for name in estimators:
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}")
    full = treatment_records(records)
    adherent = adherent_subset(full, labels)
    if "adherent_only" in datasets and len(adherent) < min_adherent:
        raise ArmTooSmallError(f"adherent subset has {len(adherent)} records, need {min_adherent}")
    report = AteReport(n_full=len(full), n_adherent=len(adherent))
    subsets = {"full": full, "adherent_only": adherent}
    for d in datasets:
        for o in outcomes:
            data = causal_dataset(subsets[d], o)
            for name in estimators:
                report.cells[(name, o, d)] = estimate(name, data, base, seed)
    return report
