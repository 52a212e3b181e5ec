from __future__ import annotations

import json

import numpy as np
import pytest

from nonadherence import synthcohort as sc
from nonadherence.cohort import write_cohort
from nonadherence.labels import NONADHERENCE_TYPES


def small(**kw):
    return sc.default_config(**{"n": 2000, **kw})


def test_generation_is_deterministic(tmp_path):
    a, ta = sc.generate_cohort(small(seed=5))
    b, tb = sc.generate_cohort(small(seed=5))
    write_cohort(a, tmp_path / "a.csv", tmp_path / "a.json")
    write_cohort(b, tmp_path / "b.csv", tmp_path / "b.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    np.testing.assert_array_equal(ta.y1_diastolic, tb.y1_diastolic)
    c, _ = sc.generate_cohort(small(seed=6))
    assert [r.pair.second.systolic for r in a] != [r.pair.second.systolic for r in c]


def test_forced_adherence_gives_all_adherent():
    records, truth = sc.generate_cohort(small(adherence_intercept=-60.0))
    assert not any(r.adherence.non_adherent for r in records)
    assert not truth.non_adherent.any()
    assert np.all(truth.attenuation == 1.0)


def test_records_are_consistent_with_truth():
    records, truth = sc.generate_cohort(small(seed=2))
    for r, na, t in zip(records, truth.non_adherent, truth.treatment):
        assert r.adherence.non_adherent == bool(na)
        assert r.adherence.source == "synthetic"
        r.adherence.check_evidence(r.pair.second.note_text)
        assert t == {"amlodipine": 1, "lisinopril": 0}.get(r.medication, -1)
        assert 30 <= r.pair.interval_days <= 182
    # observed reduction equals the full-adherence potential outcome for adherent records
    adherent = ~truth.non_adherent & (truth.treatment >= 0)
    obs = np.array([r.diastolic_reduction for r in records])
    pot = np.where(truth.treatment == 1, truth.y1_diastolic, truth.y0_diastolic)
    keep = adherent & (np.abs(obs) < 60)  # clipping of extreme second-visit values aside
    np.testing.assert_allclose(obs[keep], pot[keep], atol=1e-9)


def test_labels_follow_mock_rules():
    from nonadherence.extraction import mock_label

    records, _ = sc.generate_cohort(small(seed=3))
    for r in records[:300]:
        assert mock_label(r.pair.second.note_text).types == r.adherence.types


def test_true_ate_constant_effect():
    _, truth = sc.generate_cohort(small(effect_diastolic=2.0, effect_systolic=0.0))
    d, s = sc.true_ate(truth)
    assert d == pytest.approx(2.0, abs=1e-12)
    assert s == pytest.approx(0.0, abs=1e-12)


def test_true_ate_heterogeneous_effect():
    cfg = small(effect_diastolic=0.0, effect_modifiers={"age": 1 / 50})
    records, truth = sc.generate_cohort(cfg)
    expected = np.mean([r.age / 50 for r in records])
    assert sc.true_ate(truth)[0] == pytest.approx(expected, abs=1e-12)


def test_null_mechanism_removes_attenuation():
    _, truth = sc.generate_cohort(sc.null_mechanism(small(seed=4)))
    assert truth.non_adherent.any()
    assert np.all(truth.attenuation == 1.0)


def test_non_adherent_reduce_less_among_treated():
    records, truth = sc.generate_cohort(sc.default_config(n=60000, seed=9))
    red = np.array([r.diastolic_reduction for r in records])
    treated = truth.treatment == 1
    na = truth.non_adherent
    diff = red[treated & ~na].mean() - red[treated & na].mean()
    se = np.sqrt(red[treated & ~na].var() / (treated & ~na).sum() + red[treated & na].var() / (treated & na).sum())
    assert diff > 3 * se


def test_default_rate_near_target():
    s = sc.simulate(sc.default_config(n=100_000, seed=11))
    assert abs(s.non_adherent.mean() - 0.217) <= 0.01


def test_type_mix_is_distribution_over_primary_types():
    s = sc.simulate(sc.default_config(n=50_000, seed=12))
    counts = np.bincount(s.primary_type[s.non_adherent], minlength=4) / s.non_adherent.sum()
    cfg = sc.default_config()
    for i, t in enumerate(NONADHERENCE_TYPES):
        assert counts[i] == pytest.approx(cfg.type_mix[t], abs=0.015)


# --- calibration --------------------------------------------------------------

def test_calibration_rederives_frozen_default_intercept():
    cfg = sc.calibrate_prevalence(sc.SynthConfig(), 0.217)
    assert cfg.adherence_intercept == sc.DEFAULT_ADHERENCE_INTERCEPT


def test_calibration_rederives_reversal_intercept():
    base = sc.reversal_config()
    cfg = sc.calibrate_prevalence(base, sc.REVERSAL_CONTAMINATION, medications=("amlodipine", "lisinopril"))
    assert cfg.adherence_intercept == sc.REVERSAL_ADHERENCE_INTERCEPT


def test_calibration_symmetric_target_half():
    base = sc.SynthConfig(adherence_coefficients={"age_decades_centered": 0.5})
    cfg = sc.calibrate_prevalence(base, 0.5, n=50_000)
    assert abs(cfg.adherence_intercept) < 0.05


def test_calibration_monotone_in_target():
    cfgs = [sc.calibrate_prevalence(sc.SynthConfig(), t, n=20_000) for t in (0.1, 0.2, 0.4, 0.6)]
    intercepts = [c.adherence_intercept for c in cfgs]
    assert intercepts == sorted(intercepts) and len(set(intercepts)) == 4


def test_calibration_errors():
    with pytest.raises(ValueError):
        sc.calibrate_prevalence(sc.SynthConfig(), 1.0)
    with pytest.raises(sc.CalibrationError):
        sc.calibrate_prevalence(sc.SynthConfig(), 0.217, bracket=(1.0, 2.0), n=5000)


# --- config -------------------------------------------------------------------

@pytest.mark.parametrize("change", [
    {"attenuation": {"missed": 1.5, "different_dose": 0.5, "different_medication": 0.3, "different_timing": 0.8}},
    {"noise_sd_systolic": 0.0},
    {"type_mix": {"missed": 0.5, "different_dose": 0.5, "different_medication": 0.5, "different_timing": 0.0}},
    {"n": 0},
    {"adherence_coefficients": {"not_a_feature": 1.0}},
])
def test_invalid_config_rejected(change):
    with pytest.raises(sc.SynthConfigError):
        sc.generate_cohort(sc.default_config(**change))


def test_config_round_trip(tmp_path):
    cfg = sc.reversal_config(seed=3)
    sc.save_config(cfg, tmp_path / "c.json")
    assert sc.load_config(tmp_path / "c.json") == cfg
    assert sc.SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_ground_truth_sidecar(tmp_path):
    _, truth = sc.generate_cohort(small(n=50))
    sc.write_ground_truth(truth, tmp_path / "gt.csv")
    lines = (tmp_path / "gt.csv").read_text().splitlines()
    assert len(lines) == 51 and lines[0].startswith("pair_id,treatment")
    summary = json.loads((tmp_path / "gt.json").read_text())
    assert summary["n"] == 50 and summary["true_ate_diastolic"] == truth.true_ate_diastolic
