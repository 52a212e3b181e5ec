"""Synthetic hypertension cohorts with a known causal structure and non-adherence.

Each record draws covariates, a top-five medication (amlodipine vs lisinopril
assignment is confounded through a logistic model), first-visit pressures,
a non-adherence flag (logistic in covariates) with one primary type, and
blood-pressure reductions

    reduction = baseline(x) + m * (response(x) * drug_effect[med] + [amlodipine] * tau(x)) + noise

where ``m`` is 1 for adherent records and the type's attenuation multiplier
otherwise. Lisinopril and amlodipine share ``drug_effect``, so ``tau(x)`` is the
adherent-conditional amlodipine-vs-lisinopril effect. Records only carry the
prescription; ``m`` is kept in the ground truth.
"""

from __future__ import annotations

import copy
import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .cohort import (
    MARITAL_STATUSES,
    RACES,
    TOP_FIVE_MEDICATIONS,
    CohortRecord,
    Encounter,
    VisitPair,
)
from .labels import NONADHERENCE_TYPES, AdherenceLabel


class SynthConfigError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass
class CovariateSpec:
    male_prob: float = 1480 / 3623
    age_mean: float = 62.03
    age_sd: float = 14.2
    age_min: float = 18.0
    age_max: float = 100.0
    race_probs: dict = field(default_factory=lambda: {
        "asian": 1125 / 3623, "black": 419 / 3623, "white": 1646 / 3623, "other": 433 / 3623})
    marital_probs: dict = field(default_factory=lambda: {
        "divorced": 329 / 3623, "married": 1861 / 3623, "single": 878 / 3623,
        "widowed": 358 / 3623, "other": 197 / 3623})
    eci_mean: float = 3.13
    eci_sd: float = 2.4
    cci_fraction: float = 0.55
    htn_mean: float = 5.94
    htn_sd: float = 6.5
    visits_mean: float = 15.75
    visits_sd: float = 11.6
    interval_min: int = 30
    interval_max: int = 182


@dataclass
class PressureSpec:
    """First-visit pressure: mean + linear terms + Gaussian spread, rounded to mmHg."""

    systolic_mean: float = 130.0
    diastolic_mean: float = 80.0
    systolic_terms: dict = field(default_factory=lambda: {"age_centered": 0.25})
    diastolic_terms: dict = field(default_factory=lambda: {"age_centered": -0.15})
    systolic_sd: float = 14.0
    diastolic_sd: float = 9.0


@dataclass
class SynthConfig:
    n: int = 3623
    seed: int = 0
    covariates: CovariateSpec = field(default_factory=CovariateSpec)
    pressures: PressureSpec = field(default_factory=PressureSpec)
    # logistic model for P(non-adherent); keys are feature names (see FEATURES)
    adherence_intercept: float = -0.80078125
    adherence_coefficients: dict = field(default_factory=lambda: {
        "age_decades": math.log(0.94),
        "male": math.log(0.95),
        "black": math.log(1.35),
        "white": math.log(0.90),
        "race_other": math.log(1.10),
        "married": math.log(0.94),
        "single": math.log(1.26),
        "widowed": math.log(1.03),
        "marital_other": math.log(1.28),
        "eci_count": math.log(0.96),
    })
    # log-odds shift of non-adherence for amlodipine (vs every other drug)
    adherence_amlodipine_offset: float = 0.0
    # reported type shares overlap (multi-label); rescaled to one primary type
    type_mix: dict = field(default_factory=lambda: {
        k: v / 1.092 for k, v in {
            "missed": 0.644, "different_dose": 0.302,
            "different_medication": 0.067, "different_timing": 0.079}.items()})
    attenuation: dict = field(default_factory=lambda: {
        "missed": 0.0, "different_dose": 0.5,
        "different_medication": 0.3, "different_timing": 0.8})
    medication_probs: dict = field(default_factory=lambda: {
        "amlodipine": 0.28, "lisinopril": 0.26, "losartan": 0.18,
        "hydrochlorothiazide": 0.16, "metoprolol": 0.12})
    # logistic model for amlodipine among amlodipine/lisinopril patients
    treatment_intercept: float = 0.0
    treatment_coefficients: dict = field(default_factory=lambda: {
        "age_decades_centered": 0.5, "black": 0.8, "eci_count_centered": -0.25})
    effect_diastolic: float = 1.4
    effect_systolic: float = 0.1
    effect_modifiers: dict = field(default_factory=dict)
    drug_effect_systolic: dict = field(default_factory=lambda: {
        "amlodipine": 14.0, "lisinopril": 14.0, "losartan": 12.0,
        "hydrochlorothiazide": 20.0, "metoprolol": 5.0})
    drug_effect_diastolic: dict = field(default_factory=lambda: {
        "amlodipine": 7.0, "lisinopril": 7.0, "losartan": 6.0,
        "hydrochlorothiazide": 9.0, "metoprolol": 2.5})
    # response(x) = max(0, 1 + terms); the black baseline terms below offset the
    # larger black response so adherent outcomes are roughly race-neutral
    response_modifiers: dict = field(default_factory=lambda: {
        "black": 2.5, "age_decades_centered": -0.15})
    baseline_systolic: dict = field(default_factory=lambda: {
        "intercept": 11.0, "black": -35.0, "first_systolic_centered": 0.3,
        "age_decades_centered": 0.5, "eci_count_centered": 0.3})
    baseline_diastolic: dict = field(default_factory=lambda: {
        "intercept": 5.5, "black": -17.5, "first_diastolic_centered": 0.3,
        "age_decades_centered": 0.4, "eci_count_centered": 0.2})
    noise_sd_systolic: float = 12.0
    noise_sd_diastolic: float = 8.0
    start_date: str = "2019-01-01"

    def validate(self) -> None:
        if self.n < 1:
            raise SynthConfigError("n must be positive")
        if not 0 <= self.seed < 2**64:
            raise SynthConfigError("seed must be an unsigned 64-bit integer")
        for name, probs, keys in (
            ("race_probs", self.covariates.race_probs, RACES),
            ("marital_probs", self.covariates.marital_probs, MARITAL_STATUSES),
            ("medication_probs", self.medication_probs, TOP_FIVE_MEDICATIONS),
            ("type_mix", self.type_mix, NONADHERENCE_TYPES),
        ):
            _check_distribution(name, probs, keys)
        if not 0 <= self.covariates.male_prob <= 1:
            raise SynthConfigError("male_prob must be a probability")
        if set(self.attenuation) != set(NONADHERENCE_TYPES):
            raise SynthConfigError("attenuation needs one multiplier per non-adherence type")
        if any(not 0 <= v <= 1 for v in self.attenuation.values()):
            raise SynthConfigError("attenuation multipliers must lie in [0, 1]")
        if self.noise_sd_systolic <= 0 or self.noise_sd_diastolic <= 0:
            raise SynthConfigError("noise_sd must be positive")
        c = self.covariates
        if c.interval_min > c.interval_max or c.interval_min < 0:
            raise SynthConfigError("invalid visit interval range")
        for name in ("eci_sd", "htn_sd", "visits_sd", "age_sd"):
            if getattr(c, name) <= 0:
                raise SynthConfigError(f"{name} must be positive")
        for d in (self.adherence_coefficients, self.treatment_coefficients, self.effect_modifiers,
                  self.response_modifiers):
            unknown = set(d) - set(FEATURES)
            if unknown:
                raise SynthConfigError(f"unknown feature names {sorted(unknown)}")
        for d in (self.baseline_systolic, self.baseline_diastolic):
            unknown = set(d) - set(FEATURES) - {"intercept", "first_systolic_centered",
                                                "first_diastolic_centered"}
            if unknown:
                raise SynthConfigError(f"unknown baseline terms {sorted(unknown)}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = copy.deepcopy(d)
        cov = CovariateSpec(**d.pop("covariates", {}))
        pr = PressureSpec(**d.pop("pressures", {}))
        return cls(covariates=cov, pressures=pr, **d)

    def replace(self, **changes) -> "SynthConfig":
        return dataclasses.replace(copy.deepcopy(self), **changes)


def _check_distribution(name, probs, keys):
    if set(probs) != set(keys):
        raise SynthConfigError(f"{name} must cover exactly {list(keys)}")
    vals = np.array([probs[k] for k in keys], dtype=float)
    if np.any(vals < 0) or np.any(vals > 1) or abs(vals.sum() - 1.0) > 1e-6:
        raise SynthConfigError(f"{name} must be probabilities summing to 1")


FEATURES = (
    "age", "age_decades", "age_centered", "age_decades_centered", "male",
    "black", "white", "race_other", "married", "single", "widowed", "marital_other",
    "eci_count", "eci_count_centered", "cci_count", "htn_duration", "prior_visits",
)


def save_config(config: SynthConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str | Path) -> SynthConfig:
    with open(path) as fh:
        return SynthConfig.from_dict(json.load(fh))


@dataclass
class GroundTruth:
    true_ate_diastolic: float
    true_ate_systolic: float
    pair_ids: list[str]
    treatment: np.ndarray  # 1 amlodipine, 0 lisinopril, -1 other drug
    non_adherent: np.ndarray
    attenuation: np.ndarray
    # reductions under full adherence to lisinopril (0) / amlodipine (1), same noise draw
    y0_diastolic: np.ndarray
    y1_diastolic: np.ndarray
    y0_systolic: np.ndarray
    y1_systolic: np.ndarray


def _nb_counts(rng, mean, sd, size, upper=None):
    """Negative-binomial counts with the given mean and sd (sd^2 > mean)."""
    var = max(sd * sd, mean + 1e-6)
    p = mean / var
    r = mean * p / (1 - p)
    out = rng.negative_binomial(r, p, size=size)
    if upper is not None:
        out = np.minimum(out, upper)
    return out


def _draw_covariates(cfg: SynthConfig, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    c = cfg.covariates
    male = (rng.random(n) < c.male_prob).astype(float)
    age = np.round(np.clip(rng.normal(c.age_mean, c.age_sd, n), c.age_min, c.age_max))
    race = rng.choice(len(RACES), size=n, p=[c.race_probs[r] for r in RACES])
    marital = rng.choice(len(MARITAL_STATUSES), size=n,
                         p=[c.marital_probs[m] for m in MARITAL_STATUSES])
    eci = _nb_counts(rng, c.eci_mean, c.eci_sd, n, upper=31)
    cci = np.minimum(rng.binomial(eci, c.cci_fraction), 17)
    shape = (c.htn_mean / c.htn_sd) ** 2
    htn = np.round(rng.gamma(shape, c.htn_sd**2 / c.htn_mean, n), 1)
    visits = _nb_counts(rng, c.visits_mean, c.visits_sd, n)
    interval = rng.integers(c.interval_min, c.interval_max + 1, n)
    x = {
        "age": age,
        "age_decades": age / 10.0,
        "age_centered": age - c.age_mean,
        "age_decades_centered": (age - c.age_mean) / 10.0,
        "male": male,
        "black": (race == 1).astype(float),
        "white": (race == 2).astype(float),
        "race_other": (race == 3).astype(float),
        "married": (marital == 1).astype(float),
        "single": (marital == 2).astype(float),
        "widowed": (marital == 3).astype(float),
        "marital_other": (marital == 4).astype(float),
        "eci_count": eci.astype(float),
        "eci_count_centered": eci - c.eci_mean,
        "cci_count": cci.astype(float),
        "htn_duration": htn,
        "prior_visits": visits.astype(float),
    }
    x["_race"] = race
    x["_marital"] = marital
    x["_interval"] = interval
    return x


def _linear(terms: dict, x: dict, n: int) -> np.ndarray:
    out = np.full(n, float(terms.get("intercept", 0.0)))
    for k, v in terms.items():
        if k != "intercept":
            out = out + v * x[k]
    return out


def nonadherence_logit(cfg: SynthConfig, x: dict, amlodipine: np.ndarray) -> np.ndarray:
    n = len(amlodipine)
    return (cfg.adherence_intercept + _linear(cfg.adherence_coefficients, x, n)
            + cfg.adherence_amlodipine_offset * amlodipine)


@dataclass
class SynthSample:
    """Column arrays of one simulated cohort (internal representation)."""

    x: dict
    medication: np.ndarray  # index into TOP_FIVE_MEDICATIONS
    first_systolic: np.ndarray
    first_diastolic: np.ndarray
    non_adherent: np.ndarray
    primary_type: np.ndarray  # index into NONADHERENCE_TYPES, -1 when adherent
    attenuation: np.ndarray
    tau_diastolic: np.ndarray
    tau_systolic: np.ndarray
    reduction_diastolic: np.ndarray
    reduction_systolic: np.ndarray
    y0_diastolic: np.ndarray
    y1_diastolic: np.ndarray
    y0_systolic: np.ndarray
    y1_systolic: np.ndarray
    first_day: np.ndarray

    @property
    def n(self) -> int:
        return len(self.medication)


def simulate(cfg: SynthConfig) -> SynthSample:
    """Draw a cohort as column arrays. Draw order is fixed so ``seed`` fixes everything."""
    cfg.validate()
    n = cfg.n
    rng = np.random.default_rng(cfg.seed)
    x = _draw_covariates(cfg, rng, n)

    probs = np.array([cfg.medication_probs[m] for m in TOP_FIVE_MEDICATIONS])
    aml, lis = TOP_FIVE_MEDICATIONS.index("amlodipine"), TOP_FIVE_MEDICATIONS.index("lisinopril")
    p_al = probs[aml] + probs[lis]
    other_idx = [i for i in range(5) if i not in (aml, lis)]
    other_p = probs[other_idx] / max(probs[other_idx].sum(), 1e-300)
    in_al = rng.random(n) < p_al
    p_treat = special.expit(cfg.treatment_intercept + _linear(cfg.treatment_coefficients, x, n))
    treat = rng.random(n) < p_treat
    other_draw = rng.choice(len(other_idx), size=n, p=other_p) if other_p.sum() > 0 else np.zeros(n, int)
    medication = np.where(in_al, np.where(treat, aml, lis), np.asarray(other_idx)[other_draw])
    is_aml = (medication == aml).astype(float)

    ps = cfg.pressures
    fs = np.round(ps.systolic_mean + _linear(ps.systolic_terms, x, n) + rng.normal(0, ps.systolic_sd, n))
    fd = np.round(ps.diastolic_mean + _linear(ps.diastolic_terms, x, n) + rng.normal(0, ps.diastolic_sd, n))
    fs = np.clip(fs, 90, 220)
    fd = np.clip(fd, 50, 130)

    u_adh = rng.random(n)
    non_adherent = u_adh < special.expit(nonadherence_logit(cfg, x, is_aml))
    mix = np.array([cfg.type_mix[t] for t in NONADHERENCE_TYPES])
    types = rng.choice(len(NONADHERENCE_TYPES), size=n, p=mix / mix.sum())
    primary_type = np.where(non_adherent, types, -1)
    att_table = np.array([cfg.attenuation[t] for t in NONADHERENCE_TYPES])
    m = np.where(non_adherent, att_table[np.maximum(primary_type, 0)], 1.0)

    eps_s = rng.normal(0, cfg.noise_sd_systolic, n)
    eps_d = rng.normal(0, cfg.noise_sd_diastolic, n)
    first_day = rng.integers(0, 1000, n)

    xb = dict(x)
    xb["first_systolic_centered"] = fs - ps.systolic_mean
    xb["first_diastolic_centered"] = fd - ps.diastolic_mean
    resp = np.maximum(0.0, 1.0 + _linear(cfg.response_modifiers, x, n))
    modifier = _linear(cfg.effect_modifiers, x, n)
    out = {}
    for kind, base_terms, drug, tau0, eps in (
        ("systolic", cfg.baseline_systolic, cfg.drug_effect_systolic, cfg.effect_systolic, eps_s),
        ("diastolic", cfg.baseline_diastolic, cfg.drug_effect_diastolic, cfg.effect_diastolic, eps_d),
    ):
        base = _linear(base_terms, xb, n)
        effects = np.array([drug[mname] for mname in TOP_FIVE_MEDICATIONS])
        common = resp * effects[medication]
        tau = tau0 + modifier
        drug_part = common + is_aml * tau
        out[f"reduction_{kind}"] = base + m * drug_part + eps
        shared = resp * drug["lisinopril"]
        out[f"y0_{kind}"] = base + shared + eps
        out[f"y1_{kind}"] = base + shared + tau + eps
        out[f"tau_{kind}"] = tau
    return SynthSample(
        x=x, medication=medication, first_systolic=fs, first_diastolic=fd,
        non_adherent=non_adherent, primary_type=primary_type, attenuation=m,
        first_day=first_day, **out,
    )


NOTE_TEMPLATES = {
    None: "Patient reports taking {med} as prescribed. Blood pressure reviewed today.",
    "missed": "Patient ran out of {med} last month and did not refill it. Discussed adherence.",
    "different_dose": "Patient took half of the prescribed {med} dose because of dizziness.",
    "different_medication": "Patient switched to a different pill from a relative instead of {med}.",
    "different_timing": "Patient takes it at night instead of the morning as instructed.",
}


def _records_from_sample(cfg: SynthConfig, s: SynthSample) -> list[CohortRecord]:
    start = dt.date.fromisoformat(cfg.start_date)
    x = s.x
    records = []
    for i in range(s.n):
        pid = f"S{i:07d}"
        med = TOP_FIVE_MEDICATIONS[s.medication[i]]
        d1 = start + dt.timedelta(days=int(s.first_day[i]))
        d2 = d1 + dt.timedelta(days=int(x["_interval"][i]))
        kind = None if s.primary_type[i] < 0 else NONADHERENCE_TYPES[s.primary_type[i]]
        note = NOTE_TEMPLATES[kind].format(med=med)
        second_sys = float(s.first_systolic[i] - s.reduction_systolic[i])
        second_dia = float(s.first_diastolic[i] - s.reduction_diastolic[i])
        pair = VisitPair(
            pid,
            Encounter(pid, d1, (med,), None, float(s.first_systolic[i]), float(s.first_diastolic[i]),
                      note_id=f"{pid}-1"),
            Encounter(pid, d2, (), note, min(max(second_sys, 31.0), 349.0),
                      min(max(second_dia, 31.0), 349.0), note_id=f"{pid}-2"),
        )
        if kind is None:
            label = AdherenceLabel(False, source="synthetic")
        else:
            excerpt = note.split(". ")[0].rstrip(".") if kind != "different_timing" else note.rstrip(".")
            label = AdherenceLabel(True, (kind,), (excerpt,), source="synthetic")
            label.check_evidence(note)
        records.append(
            CohortRecord(
                pair=pair,
                sex="male" if x["male"][i] else "female",
                age=float(x["age"][i]),
                race=RACES[x["_race"][i]],
                marital=MARITAL_STATUSES[x["_marital"][i]],
                eci_count=int(x["eci_count"][i]),
                cci_count=int(x["cci_count"][i]),
                htn_duration_years=float(x["htn_duration"][i]),
                primary_visits_prior_year=int(x["prior_visits"][i]),
                adherence=label,
            )
        )
    return records


def generate_cohort(config: SynthConfig) -> tuple[list[CohortRecord], GroundTruth]:
    s = simulate(config)
    records = _records_from_sample(config, s)
    aml = TOP_FIVE_MEDICATIONS.index("amlodipine")
    lis = TOP_FIVE_MEDICATIONS.index("lisinopril")
    treatment = np.where(s.medication == aml, 1, np.where(s.medication == lis, 0, -1))
    truth = GroundTruth(
        true_ate_diastolic=float(np.mean(s.y1_diastolic - s.y0_diastolic)),
        true_ate_systolic=float(np.mean(s.y1_systolic - s.y0_systolic)),
        pair_ids=[r.pair_id for r in records],
        treatment=treatment,
        non_adherent=s.non_adherent.copy(),
        attenuation=s.attenuation.copy(),
        y0_diastolic=s.y0_diastolic, y1_diastolic=s.y1_diastolic,
        y0_systolic=s.y0_systolic, y1_systolic=s.y1_systolic,
    )
    return records, truth


def true_ate(truth: GroundTruth) -> tuple[float, float]:
    """(diastolic, systolic) mean potential-outcome difference under full adherence."""
    return truth.true_ate_diastolic, truth.true_ate_systolic


def write_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    """CSV sidecar: one row per record plus a header comment-free summary JSON next to it."""
    import csv

    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "treatment", "non_adherent", "attenuation",
                    "y0_diastolic", "y1_diastolic", "y0_systolic", "y1_systolic"])
        for i, pid in enumerate(truth.pair_ids):
            w.writerow([pid, int(truth.treatment[i]), int(truth.non_adherent[i]),
                        repr(float(truth.attenuation[i])),
                        repr(float(truth.y0_diastolic[i])), repr(float(truth.y1_diastolic[i])),
                        repr(float(truth.y0_systolic[i])), repr(float(truth.y1_systolic[i]))])
    summary = {"true_ate_diastolic": truth.true_ate_diastolic,
               "true_ate_systolic": truth.true_ate_systolic, "n": len(truth.pair_ids)}
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


CALIBRATION_N = 200_000
CALIBRATION_SEED = 20240513


def _simulated_rate(cfg: SynthConfig, x: dict, is_aml: np.ndarray, u: np.ndarray, intercept: float) -> float:
    c = cfg.replace(adherence_intercept=intercept)
    return float(np.mean(u < special.expit(nonadherence_logit(c, x, is_aml))))



def calibrate_prevalence(
    config: SynthConfig,
    target_rate: float,
    bracket: tuple[float, float] = (-10.0, 10.0),
    tol: float = 0.005,
    n: int = CALIBRATION_N,
    seed: int = CALIBRATION_SEED,
    medications: Sequence[str] | None = None,
) -> SynthConfig:
    """Bisect the non-adherence intercept until the simulated rate is within ``tol``.

    Covariates and uniforms are drawn once (common random numbers), which makes
    the simulated rate monotone in the intercept. ``medications`` restricts the
    rate to records prescribed one of them.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target_rate must lie in (0, 1)")
    config.validate()
    sample = simulate(config.replace(n=n, seed=seed))
    x = sample.x
    aml = TOP_FIVE_MEDICATIONS.index("amlodipine")
    is_aml = (sample.medication == aml).astype(float)
    u = np.random.default_rng([seed, 1]).random(n)
    if medications is not None:
        keep = np.isin(sample.medication, [TOP_FIVE_MEDICATIONS.index(m) for m in medications])
        x = {k: v[keep] for k, v in x.items()}
        is_aml, u = is_aml[keep], u[keep]
    lo, hi = bracket
    r_lo = _simulated_rate(config, x, is_aml, u, lo)
    r_hi = _simulated_rate(config, x, is_aml, u, hi)
    if not r_lo <= target_rate <= r_hi:
        raise CalibrationError(
            f"bracket {bracket} gives rates ({r_lo:.4f}, {r_hi:.4f}) that do not contain {target_rate}")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = _simulated_rate(config, x, is_aml, u, mid)
        if abs(r - target_rate) <= tol / 4:
            break
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    return config.replace(adherence_intercept=mid)


# Intercept frozen from calibrate_prevalence(SynthConfig(), 0.217); a test re-derives it.
DEFAULT_ADHERENCE_INTERCEPT = -0.80078125


def default_config(**changes) -> SynthConfig:
    """Default cohort calibrated to a 21.7% non-adherence rate."""
    return SynthConfig(adherence_intercept=DEFAULT_ADHERENCE_INTERCEPT).replace(**changes)


def null_mechanism(config: SynthConfig) -> SynthConfig:
    """Same cohort law with non-adherence having no effect on outcomes."""
    return config.replace(attenuation={t: 1.0 for t in NONADHERENCE_TYPES})


def linear_benchmark_config(seed: int = 0, n: int = 5000) -> SynthConfig:
    """All-adherent cohort whose outcomes are linear in the confounder encoding,
    with a linearly heterogeneous amlodipine effect."""
    return default_config(
        n=n, seed=seed, adherence_intercept=-40.0,
        effect_modifiers={"age_decades_centered": 0.3, "eci_count_centered": 0.1},
        baseline_systolic={"intercept": 11.0, "black": -35.0, "age_decades_centered": 0.5,
                           "eci_count_centered": 0.3},
        baseline_diastolic={"intercept": 5.5, "black": -17.5, "age_decades_centered": 0.4,
                            "eci_count_centered": 0.2},
        noise_sd_systolic=1.0, noise_sd_diastolic=1.0,
    )


REVERSAL_CONTAMINATION = 0.175
# frozen from calibrate_prevalence(reversal_config(), 0.175, medications=(amlodipine, lisinopril))
REVERSAL_ADHERENCE_INTERCEPT = -2.041015625


def reversal_config(seed: int = 0, n: int = 3623) -> SynthConfig:
    """Small systolic effect (+0.1 mmHg), amlodipine patients far less adherent and
    17.5% contamination among amlodipine/lisinopril records; low noise."""
    return default_config(
        n=n, seed=seed, adherence_intercept=REVERSAL_ADHERENCE_INTERCEPT,
        adherence_amlodipine_offset=1.5,
        effect_systolic=0.1, effect_diastolic=1.4,
        response_modifiers={},
        baseline_systolic={"intercept": 11.0, "age_decades_centered": 0.5, "eci_count_centered": 0.3},
        baseline_diastolic={"intercept": 5.5, "age_decades_centered": 0.4, "eci_count_centered": 0.2},
        noise_sd_systolic=0.5, noise_sd_diastolic=0.5,
    )
