"""Seeded experiments: factor analysis, outcome t-tests, contamination sweep and
non-adherent-data ablation for the normal-blood-pressure prediction task."""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fairness, learners
from .cohort import (
    MARITAL_STATUSES,
    RACES,
    SEXES,
    CohortRecord,
    MissingLabelError,
    load_notes,
    outcome_cohort_records,
    read_cohort,
)
from .stats import InferenceRow, TTestResult, fit_logistic, odds_ratio_2x2, wald_inference, welch_t_test
from .synthcohort import SynthConfig, default_config, generate_cohort

VARY_RATIO = "vary_ratio"
ABLATION = "ablation"
MODELS = ("logistic", "forest")


class InfeasibleSamplingError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = VARY_RATIO
    synth: dict | None = None  # SynthConfig fields; None means the calibrated default
    cohort_path: str | None = None  # ingested cohort file instead of a synthetic one
    notes_path: str | None = None  # notes JSON for cohort_path; the outcome filter reads note text
    train_size: int = 300
    na_ratios: list = field(default_factory=lambda: [0.0, 0.1, 0.3, 0.5, 0.7, 0.9])
    full_sizes: list = field(default_factory=lambda: [600, 800, 1000, 1200])
    ablation_ratio: float = 0.25
    n_seeds: int = 100
    base_seed: int = 0
    test_size: int = 500
    models: list = field(default_factory=lambda: ["logistic", "forest"])
    fairness_groups: list = field(default_factory=lambda: ["black"])
    threshold: float = 0.5
    n_trees: int = 100
    workers: int = 1
    resample_cohort: bool = True  # synthetic only: draw a fresh cohort for every seed

    def validate(self) -> None:
        if self.experiment not in (VARY_RATIO, ABLATION):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        for r in list(self.na_ratios) + [self.ablation_ratio]:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"ratio {r} outside [0, 1]")
        for m in self.models:
            if m not in MODELS:
                raise ValueError(f"unknown model {m!r}")
        for g in self.fairness_groups:
            if g not in RACES:
                raise ValueError(f"unknown fairness group {g!r}")
        if self.train_size < 2 or self.test_size < 1 or any(s < 2 for s in self.full_sizes):
            raise ValueError("sizes must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _seed_stream(base_seed: int, seed_index: int, tag: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, seed_index, zlib.crc32(tag.encode())])


def _stream_int(base_seed: int, seed_index: int, tag: str) -> int:
    return int(_seed_stream(base_seed, seed_index, tag).generate_state(1, np.uint32)[0])


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    """One row per (condition, model, seed) with a value per metric."""

    experiment: str
    conditions: list[str]
    models: list[str]
    metrics: list[str]
    rows: list[dict]
    n_seeds: int
    condition_info: dict[str, dict] = field(default_factory=dict)

    def values(self, condition: str, model: str, metric: str) -> np.ndarray:
        return np.array([
            np.nan if r[metric] is None else r[metric]
            for r in self.rows if r["condition"] == condition and r["model"] == model
        ], dtype=float)

    def mean(self, condition: str, model: str, metric: str) -> float:
        v = self.values(condition, model, metric)
        v = v[~np.isnan(v)]
        return float(v.mean()) if v.size else math.nan

    def sem(self, condition: str, model: str, metric: str) -> float:
        """Sample SD / sqrt(count) over seeds with a defined value."""
        v = self.values(condition, model, metric)
        v = v[~np.isnan(v)]
        if v.size < 2:
            return math.nan
        return float(v.std(ddof=1) / math.sqrt(v.size))

    def summary(self) -> list[dict]:
        out = []
        for c in self.conditions:
            for m in self.models:
                for k in self.metrics:
                    v = self.values(c, m, k)
                    out.append({"condition": c, "model": m, "metric": k, "mean": self.mean(c, m, k),
                                "sem": self.sem(c, m, k), "n": int(np.sum(~np.isnan(v)))})
        return out

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "conditions": list(self.conditions),
            "condition_info": self.condition_info,
            "models": list(self.models),
            "metrics": list(self.metrics),
            "n_seeds": self.n_seeds,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["experiment"], list(d["conditions"]), list(d["models"]), list(d["metrics"]),
                   [dict(r) for r in d["rows"]], int(d["n_seeds"]), dict(d.get("condition_info", {})))


def metric_names(groups: Sequence[str]) -> list[str]:
    names = ["auroc"]
    for g in groups:
        names += [f"dp_{g}", f"tpr_{g}", f"fpr_{g}"]
    return names


# ---------------------------------------------------------------------------
# experiment pool


@dataclass
class Pool:
    """Outcome-cohort arrays shared by every seed of an experiment."""

    X: np.ndarray
    y: np.ndarray
    non_adherent: np.ndarray
    race: np.ndarray
    record_ids: list[str]

    @property
    def adherent_index(self) -> np.ndarray:
        return np.flatnonzero(~self.non_adherent)

    @property
    def non_adherent_index(self) -> np.ndarray:
        return np.flatnonzero(self.non_adherent)


def build_pool(records: Sequence[CohortRecord]) -> Pool:
    records = outcome_cohort_records(records)
    if not records:
        raise InfeasibleSamplingError("no records pass the outcome-cohort filter "
                                      "(are second-visit pressures and note texts loaded?)")
    for r in records:
        if r.adherence is None:
            raise MissingLabelError(f"record {r.pair_id} has no adherence label")
    fm = learners.encode(records)
    return Pool(
        X=fm.values,
        y=np.array([r.outcome_normal_bp for r in records], dtype=float),
        non_adherent=np.array([r.adherence.non_adherent for r in records]),
        race=np.array([r.race for r in records]),
        record_ids=[r.pair_id for r in records],
    )


def _synth_config(config: ExperimentConfig) -> SynthConfig:
    return default_config() if config.synth is None else SynthConfig.from_dict(config.synth)


def load_pool(config: ExperimentConfig) -> Pool:
    if config.cohort_path is not None:
        notes = load_notes(config.notes_path) if config.notes_path else None
        return build_pool(read_cohort(config.cohort_path, notes))
    records, _ = generate_cohort(_synth_config(config))
    return build_pool(records)


def resamples_cohort(config: ExperimentConfig) -> bool:
    return config.cohort_path is None and config.resample_cohort


def seed_pool(config: ExperimentConfig, seed_index: int) -> Pool:
    """The synthetic cohort replicate used by one seed.

    A single fixed cohort makes every seed reuse the same few hundred
    non-adherent records, so per-seed spread understates the run-to-run error.
    """
    synth = _synth_config(config)
    synth = synth.replace(seed=_stream_int(config.base_seed, seed_index, "cohort"))
    records, _ = generate_cohort(synth)
    return build_pool(records)


def _conditions(config: ExperimentConfig) -> list[tuple[str, dict]]:
    if config.experiment == VARY_RATIO:
        return [(f"ratio={r:.2f}", {"na_ratio": float(r), "train_size": config.train_size,
                                   "subset": "full"}) for r in config.na_ratios]
    out = []
    for s in config.full_sizes:
        k = int(round(config.ablation_ratio * s))
        out.append((f"full@{s}", {"na_ratio": config.ablation_ratio, "train_size": s, "subset": "full"}))
        out.append((f"adherent_only@{s}", {"na_ratio": 0.0, "train_size": s - k,
                                           "subset": "adherent_only", "full_size": s}))
    return out


def _requirements(config: ExperimentConfig) -> tuple[int, int]:
    """(adherent training records, non-adherent records) needed per seed."""
    if config.experiment == VARY_RATIO:
        ks = [int(round(r * config.train_size)) for r in config.na_ratios]
        return max(config.train_size - k for k in ks), max(ks)
    ks = [(s, int(round(config.ablation_ratio * s))) for s in config.full_sizes]
    return max(s - k for s, k in ks), max(k for _, k in ks)


def check_feasible(config: ExperimentConfig, pool: Pool) -> None:
    need_a, need_n = _requirements(config)
    have_a, have_n = pool.adherent_index.size, pool.non_adherent_index.size
    short = []
    if have_a < config.test_size + need_a:
        short.append(f"{config.test_size + need_a - have_a} adherent records "
                     f"(need {config.test_size} test + {need_a} train, have {have_a})")
    if have_n < need_n:
        short.append(f"{need_n - have_n} non-adherent records (need {need_n}, have {have_n})")
    if short:
        raise InfeasibleSamplingError("cohort too small: short by " + " and ".join(short))


def _split(config: ExperimentConfig, pool: Pool, seed_index: int):
    """Per-seed test set and nested training draws for every condition."""
    rng = np.random.default_rng(_seed_stream(config.base_seed, seed_index, "split"))
    adherent = rng.permutation(pool.adherent_index)
    non_adherent = rng.permutation(pool.non_adherent_index)
    test = np.sort(adherent[: config.test_size])
    train_a = adherent[config.test_size:]
    out = []
    for name, info in _conditions(config):
        if config.experiment == VARY_RATIO:
            k = int(round(info["na_ratio"] * info["train_size"]))
            idx = np.concatenate([train_a[: info["train_size"] - k], non_adherent[:k]])
        elif info["subset"] == "full":
            k = int(round(config.ablation_ratio * info["train_size"]))
            idx = np.concatenate([train_a[: info["train_size"] - k], non_adherent[:k]])
        else:
            idx = train_a[: info["train_size"]]
        out.append((name, np.sort(idx)))
    return test, out


def _fit_predict(model: str, X_train, y_train, X_test, seed: int, n_trees: int) -> np.ndarray:
    if model == "forest":
        m = learners.fit_forest(X_train, y_train, learners.ForestConfig(n_trees=n_trees), seed)
        return m.predict(X_test)
    return learners.LogisticClassifier.fit(X_train, y_train).predict(X_test)


def _evaluate(config: ExperimentConfig, pool: Pool, scores: np.ndarray, test: np.ndarray) -> dict:
    y_true = pool.y[test]
    y_pred = learners.classify(scores, config.threshold)
    out = {"auroc": learners.auroc(scores, y_true)}
    fair = fairness.fairness_summary(pool.race[test], y_true, y_pred, tuple(config.fairness_groups))
    for g in config.fairness_groups:
        for k in ("dp", "tpr", "fpr"):
            out[f"{k}_{g}"] = fair[g][k]
    return out


def run_seed(config: ExperimentConfig, pool: Pool | None, seed_index: int) -> list[dict]:
    if pool is None:
        pool = seed_pool(config, seed_index)
        check_feasible(config, pool)
    test, conditions = _split(config, pool, seed_index)
    rows = []
    for name, idx in conditions:
        if np.intersect1d(idx, test).size:
            raise AssertionError("training and test sets overlap")
        for model in config.models:
            model_seed = _stream_int(config.base_seed, seed_index, f"model:{model}")
            scores = _fit_predict(model, pool.X[idx], pool.y[idx], pool.X[test], model_seed,
                                  config.n_trees)
            row = {"condition": name, "model": model, "seed": seed_index}
            row.update(_evaluate(config, pool, scores, test))
            rows.append(row)
    return rows


_WORKER: dict = {}


def _init_worker(config: ExperimentConfig, pool: Pool | None) -> None:
    _WORKER["config"] = config
    _WORKER["pool"] = pool


def _worker_seed(seed_index: int) -> list[dict]:
    return run_seed(_WORKER["config"], _WORKER["pool"], seed_index)


def run_experiment(config: ExperimentConfig, pool: Pool | None = None) -> ExperimentReport:
    """Run every seed. An explicit ``pool`` is shared by all seeds; otherwise a
    synthetic experiment draws one cohort per seed (see ``resample_cohort``)."""
    config.validate()
    if pool is None and not resamples_cohort(config):
        pool = load_pool(config)
    if pool is not None:
        check_feasible(config, pool)
    else:
        check_feasible(config, seed_pool(config, 0))
    seeds = range(config.n_seeds)
    if config.workers == 1:
        per_seed = [run_seed(config, pool, s) for s in seeds]
    else:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker,
                                 initargs=(config, pool)) as ex:
            per_seed = list(ex.map(_worker_seed, seeds))
    rows = [r for chunk in per_seed for r in chunk]
    order = {c: i for i, (c, _) in enumerate(_conditions(config))}
    rows.sort(key=lambda r: (order[r["condition"]], config.models.index(r["model"]), r["seed"]))
    conds = _conditions(config)
    return ExperimentReport(
        experiment=config.experiment,
        conditions=[c for c, _ in conds],
        models=list(config.models),
        metrics=metric_names(config.fairness_groups),
        rows=rows,
        n_seeds=config.n_seeds,
        condition_info={c: info for c, info in conds},
    )


def run_vary_ratio(config: ExperimentConfig, pool: Pool | None = None) -> ExperimentReport:
    config = ExperimentConfig.from_dict({**config.to_dict(), "experiment": VARY_RATIO})
    return run_experiment(config, pool)


def run_ablation(config: ExperimentConfig, pool: Pool | None = None) -> ExperimentReport:
    config = ExperimentConfig.from_dict({**config.to_dict(), "experiment": ABLATION})
    return run_experiment(config, pool)


# ---------------------------------------------------------------------------
# factor analysis and outcome t-tests

CONTINUOUS_FACTORS = {
    # name: (record attribute, divisor, label)
    "age_per_decade": ("age", 10.0, "Age (per 10 years)"),
    "interval_days": ("interval", 1.0, "Time between visits (days)"),
    "eci_count": ("eci_count", 1.0, "Number of comorbidities (ECI)"),
    "htn_duration_years": ("htn_duration_years", 1.0, "Duration of hypertension (years)"),
    "primary_visits_prior_year": ("primary_visits_prior_year", 1.0, "Primary care visits, prior year"),
}
CATEGORICAL_FACTORS = {"sex": SEXES, "race": RACES, "marital": MARITAL_STATUSES}
FACTOR_ORDER = ("sex", "age_per_decade", "race", "marital", "interval_days", "eci_count",
                "htn_duration_years", "primary_visits_prior_year")


def _factor_value(r: CohortRecord, name: str) -> float:
    attr, div, _ = CONTINUOUS_FACTORS[name]
    v = r.pair.interval_days if attr == "interval" else getattr(r, attr)
    return float(v) / div


@dataclass
class FactorRow:
    factor: str
    level: str | None
    n_total: int
    n_non_adherent: int
    reference: bool = False
    inference: InferenceRow | None = None
    mean_non_adherent: float | None = None
    mean_adherent: float | None = None

    def to_dict(self) -> dict:
        d = {"factor": self.factor, "level": self.level, "n_total": self.n_total,
             "n_non_adherent": self.n_non_adherent, "reference": self.reference,
             "mean_non_adherent": self.mean_non_adherent, "mean_adherent": self.mean_adherent}
        inf = self.inference
        d.update({"odds_ratio": inf.odds_ratio if inf else None, "ci_low": inf.ci_low if inf else None,
                  "ci_high": inf.ci_high if inf else None, "p_value": inf.p_value if inf else None})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FactorRow":
        inf = None
        if d.get("odds_ratio") is not None:
            name = d["factor"] if d["level"] is None else f"{d['factor']}={d['level']}"
            inf = InferenceRow(name, d["odds_ratio"], d["ci_low"], d["ci_high"], d["p_value"])
        return cls(d["factor"], d["level"], d["n_total"], d["n_non_adherent"], d["reference"], inf,
                   d.get("mean_non_adherent"), d.get("mean_adherent"))


@dataclass
class FactorReport:
    n: int
    n_non_adherent: int
    bivariate: list[FactorRow]
    significant_factors: list[str]
    multivariate: list[InferenceRow]
    alpha: float = 0.05

    def bivariate_row(self, factor: str, level: str | None = None) -> FactorRow:
        for r in self.bivariate:
            if r.factor == factor and r.level == level:
                return r
        raise KeyError((factor, level))

    def to_dict(self) -> dict:
        return {
            "n": self.n, "n_non_adherent": self.n_non_adherent, "alpha": self.alpha,
            "bivariate": [r.to_dict() for r in self.bivariate],
            "significant_factors": list(self.significant_factors),
            "multivariate": [asdict(r) for r in self.multivariate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactorReport":
        return cls(d["n"], d["n_non_adherent"], [FactorRow.from_dict(r) for r in d["bivariate"]],
                   list(d["significant_factors"]), [InferenceRow(**r) for r in d["multivariate"]],
                   d.get("alpha", 0.05))


def _labels(records: Sequence[CohortRecord]) -> np.ndarray:
    out = []
    for r in records:
        if r.adherence is None:
            raise MissingLabelError(f"record {r.pair_id} has no adherence label")
        out.append(r.adherence.non_adherent)
    return np.array(out, dtype=float)


def run_factor_analysis(records: Sequence[CohortRecord], alpha: float = 0.05,
                        factors: Sequence[str] = FACTOR_ORDER) -> FactorReport:
    """Bivariate rows (2x2 per categorical level vs reference, one-covariate logistic
    for continuous factors), then a multivariate fit on the significant factors.

    A categorical factor enters the multivariate model with all its levels when
    any level is significant.
    """
    y = _labels(records)
    rows: list[FactorRow] = []
    significant: list[str] = []
    for factor in factors:
        if factor in CATEGORICAL_FACTORS:
            values = np.array([getattr(r, factor) for r in records])
            levels = [lv for lv in CATEGORICAL_FACTORS[factor] if np.any(values == lv)]
            ref = levels[0]
            ref_mask = values == ref
            ref_counts = (int(y[ref_mask].sum()), int((1 - y[ref_mask]).sum()))
            rows.append(FactorRow(factor, ref, int(ref_mask.sum()), ref_counts[0], reference=True))
            hit = False
            for lv in levels[1:]:
                m = values == lv
                counts = (int(y[m].sum()), int((1 - y[m]).sum()))
                inf = odds_ratio_2x2(counts, ref_counts, name=f"{factor}={lv}")
                rows.append(FactorRow(factor, lv, int(m.sum()), counts[0], inference=inf))
                hit |= inf.p_value < alpha
            if hit:
                significant.append(factor)
        else:
            x = np.array([_factor_value(r, factor) for r in records])
            fit = fit_logistic(np.column_stack([np.ones(len(x)), x]), y, names=("intercept", factor))
            inf = wald_inference(fit, 1, factor)
            na = y == 1
            rows.append(FactorRow(factor, None, len(x), int(na.sum()), inference=inf,
                                  mean_non_adherent=float(x[na].mean()) if na.any() else None,
                                  mean_adherent=float(x[~na].mean()) if (~na).any() else None))
            if inf.p_value < alpha:
                significant.append(factor)
    multivariate: list[InferenceRow] = []
    if significant:
        cols, names = [np.ones(len(records))], ["intercept"]
        for factor in significant:
            if factor in CATEGORICAL_FACTORS:
                values = np.array([getattr(r, factor) for r in records])
                levels = [lv for lv in CATEGORICAL_FACTORS[factor] if np.any(values == lv)]
                for lv in levels[1:]:
                    cols.append((values == lv).astype(float))
                    names.append(f"{factor}={lv}")
            else:
                cols.append(np.array([_factor_value(r, factor) for r in records]))
                names.append(factor)
        fit = fit_logistic(np.column_stack(cols), y, names=tuple(names))
        multivariate = [wald_inference(fit, j, names[j]) for j in range(1, len(names))]
    return FactorReport(len(records), int(y.sum()), rows, significant, multivariate, alpha)


@dataclass
class OutcomeTTestReport:
    n_adherent: int
    n_non_adherent: int
    systolic: TTestResult
    diastolic: TTestResult

    def to_dict(self) -> dict:
        return {"n_adherent": self.n_adherent, "n_non_adherent": self.n_non_adherent,
                "systolic": asdict(self.systolic), "diastolic": asdict(self.diastolic)}

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeTTestReport":
        return cls(d["n_adherent"], d["n_non_adherent"], TTestResult(**d["systolic"]),
                   TTestResult(**d["diastolic"]))


def run_outcome_ttest(records: Sequence[CohortRecord], apply_filter: bool = True) -> OutcomeTTestReport:
    """Welch t-tests of reductions, non-adherent minus adherent."""
    if apply_filter:
        records = outcome_cohort_records(records)
    y = _labels(records).astype(bool)
    out = {}
    for kind in ("systolic", "diastolic"):
        v = np.array([getattr(r, f"{kind}_reduction") for r in records], dtype=float)
        out[kind] = welch_t_test(v[y], v[~y])
    return OutcomeTTestReport(int((~y).sum()), int(y.sum()), out["systolic"], out["diastolic"])
