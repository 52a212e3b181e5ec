from __future__ import annotations

import numpy as np
import pytest

from nonadherence import causal as C
from nonadherence import synthcohort as sc
from nonadherence.learners import LinearRegressor
from nonadherence.stats import SeparationError


def dataset(n=400, seed=0, c=5.0, confounded=False, f=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    if confounded:
        t = (rng.random(n) < 1 / (1 + np.exp(-1.5 * X[:, 0]))).astype(int)
    else:
        t = rng.integers(0, 2, n)
    fx = (2 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2]) if f is None else f(X)
    return C.CausalDataset(X, t, c * t + fx)


# --- dataset ------------------------------------------------------------------

def test_dataset_requires_both_arms_and_equal_lengths():
    with pytest.raises(C.EmptyArmError):
        C.CausalDataset(np.zeros((3, 1)), [1, 1, 1], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        C.CausalDataset(np.zeros((3, 1)), [1, 0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        C.CausalDataset(np.zeros((2, 1)), [2, 0], [1.0, 2.0])


def test_causal_dataset_from_records_uses_treated_and_control_only():
    records, _ = sc.generate_cohort(sc.default_config(n=600, seed=1))
    d = C.causal_dataset(records, "systolic")
    meds = [r.medication for r in C.treatment_records(records)]
    assert len(d.y) == len(meds) < len(records)
    assert d.n_treated == meds.count("amlodipine")
    assert "interval" not in " ".join(d.columns)
    with pytest.raises(ValueError):
        C.causal_dataset(records, "pulse")


# --- propensity / IPW ---------------------------------------------------------

def test_null_propensity_near_half():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(20000, 2))
    t = rng.integers(0, 2, 20000)
    e = C.fit_propensity(X, t)
    assert np.all(np.abs(e - 0.5) < 0.05)


def test_separation_clips_to_bounds():
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
    t = x.astype(int)
    with pytest.raises(SeparationError):
        C.fit_propensity(x, t)
    e = C.fit_propensity(x, t, allow_separation=True)
    np.testing.assert_array_equal(e, np.where(x == 1, 0.99, 0.01))


def test_propensity_always_within_clip():
    d = dataset(confounded=True, seed=4)
    e = C.fit_propensity(d.X * 5, d.t)
    assert e.min() >= 0.01 and e.max() <= 0.99


def test_ipw_known_half_propensity():
    d = dataset(f=lambda X: 0 * X[:, 0], c=3.0)
    assert C.ipw_ate(d, np.full(len(d.y), 0.5)) == pytest.approx(3.0, abs=1e-12)


def test_ipw_constant_propensity_is_difference_of_means():
    d = dataset(seed=5)
    for p in (0.2, 0.5, 0.9):
        assert C.ipw_ate(d, np.full(len(d.y), p)) == pytest.approx(C.naive_ate(d), abs=1e-12)


def test_ipw_hajek_formula_by_hand():
    d = C.CausalDataset(np.zeros((4, 1)), [1, 1, 0, 0], [4.0, 2.0, 1.0, 3.0])
    e = np.array([0.8, 0.4, 0.5, 0.25])
    treated = (4 / 0.8 + 2 / 0.4) / (1 / 0.8 + 1 / 0.4)
    control = (1 / 0.5 + 3 / 0.75) / (1 / 0.5 + 1 / 0.75)
    assert C.ipw_ate(d, e) == pytest.approx(treated - control, abs=1e-12)


def test_ipw_removes_confounding_bias():
    d = dataset(n=20000, seed=6, c=2.0, confounded=True)
    assert abs(C.naive_ate(d) - 2.0) > 0.5
    assert abs(C.ipw_ate(d) - 2.0) < 0.1


# --- meta-learners ------------------------------------------------------------

@pytest.mark.parametrize("learner", [C.s_learner, C.t_learner, C.x_learner])
@pytest.mark.parametrize("c", [5.0, -1.25])
def test_linear_base_exact_on_additive_effect(learner, c):
    d = dataset(c=c, confounded=True, seed=7)
    assert learner(d, "linear") == pytest.approx(c, abs=1e-6)


@pytest.mark.parametrize("learner", [C.t_learner, C.x_learner])
def test_forest_base_recovers_constant_effect(learner):
    # each arm is fit separately, so every leaf of a constant outcome is exact
    d = dataset(n=600, c=5.0, f=lambda X: 0 * X[:, 0], seed=8)
    assert learner(d, "forest", seed=1) == pytest.approx(5.0, abs=1e-9)


def test_s_learner_forest_shrinks_toward_zero():
    # with feature subsampling some trees never split on the treatment column, and
    # leaves that mix arms pull the contrast toward zero
    d = dataset(n=600, c=5.0, f=lambda X: 0 * X[:, 0], seed=8)
    est = C.s_learner(d, "forest", seed=1)
    assert 4.7 < est < 5.0


@pytest.mark.parametrize("learner", [C.s_learner, C.t_learner, C.x_learner])
def test_forest_learners_deterministic(learner):
    d = dataset(n=300, seed=9)
    assert learner(d, "forest", seed=4) == learner(d, "forest", seed=4)


def test_null_effect_near_zero():
    d = dataset(n=2000, c=0.0, seed=10)
    for learner in (C.s_learner, C.t_learner, C.x_learner):
        assert abs(learner(d, "linear")) < 0.05


def test_x_learner_even_propensity_averages_stage_two():
    d = dataset(n=500, c=1.5, seed=11)
    half = np.full(len(d.y), 0.5)
    assert C.x_learner(d, "linear", propensity=half) == pytest.approx(C.t_learner(d, "linear"), abs=1e-9)


def test_arm_too_small_for_forest():
    X = np.arange(12, dtype=float)[:, None]
    t = np.r_[np.ones(10, int), np.zeros(2, int)]
    d = C.CausalDataset(X, t, X[:, 0])
    with pytest.raises(C.ArmTooSmallError):
        C.t_learner(d, "forest")


def test_unknown_names_rejected():
    d = dataset(n=50)
    with pytest.raises(ValueError):
        C.estimate("dr_learner", d)
    with pytest.raises(ValueError):
        C.base_factory("svm")


def test_custom_base_factory():
    d = dataset(c=2.0, seed=12)
    assert C.s_learner(d, lambda seed: LinearRegressor()) == pytest.approx(2.0, abs=1e-6)


# --- comparison report --------------------------------------------------------

def test_comparison_grid_complete():
    records, _ = sc.generate_cohort(sc.default_config(n=1500, seed=2))
    rep = C.ate_comparison(records, base="linear")
    assert rep.is_complete() and len(rep.cells) == 16
    assert rep.n_adherent < rep.n_full
    assert C.AteReport.from_dict(rep.to_dict()) == rep


def test_all_adherent_cohort_gives_identical_columns():
    records, _ = sc.generate_cohort(sc.default_config(n=1200, seed=3, adherence_intercept=-60.0))
    rep = C.ate_comparison(records, base="forest", seed=2)
    for e in C.ESTIMATORS:
        for o in C.OUTCOMES:
            assert rep.value(e, o, "full") == rep.value(e, o, "adherent_only")


def test_label_override_and_missing_labels():
    records, _ = sc.generate_cohort(sc.default_config(n=800, seed=4))
    full = C.treatment_records(records)
    labels = {r.pair_id: False for r in full}
    assert len(C.adherent_subset(full, labels)) == len(full)
    labels.pop(full[0].pair_id)
    with pytest.raises(C.MissingLabelError):
        C.adherent_subset(full, labels)


def test_small_adherent_subset_rejected():
    records, _ = sc.generate_cohort(sc.default_config(n=800, seed=5))
    with pytest.raises(C.ArmTooSmallError):
        C.ate_comparison(records, base="linear", min_adherent=10_000)


def test_reported_table_fixture():
    t = C.REPORTED_TABLE
    assert t.is_complete()
    assert t.value("ipw", "diastolic", "full") == 1.75
    assert t.value("ipw", "diastolic", "adherent_only") == 1.40
    # the systolic sign flips between datasets for every estimator
    for e in C.ESTIMATORS:
        assert t.value(e, "systolic", "full") < 0 < t.value(e, "systolic", "adherent_only")
