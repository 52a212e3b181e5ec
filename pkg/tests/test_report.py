from __future__ import annotations

import pytest

from nonadherence import causal as C
from nonadherence import harness as H
from nonadherence import report as R
from nonadherence import synthcohort as sc
from nonadherence.topics import ClusteredCorpus, topic_table


@pytest.fixture(scope="module")
def records():
    recs, _ = sc.generate_cohort(sc.default_config(n=4000, seed=21))
    return recs


@pytest.fixture(scope="module")
def vary():
    return H.run_vary_ratio(H.ExperimentConfig(n_seeds=2, models=["logistic", "forest"], n_trees=10,
                                               train_size=100, na_ratios=[0.0, 0.5, 0.9]))


@pytest.fixture(scope="module")
def ablation():
    return H.run_ablation(H.ExperimentConfig(n_seeds=2, models=["logistic"], full_sizes=[200, 400]))


@pytest.fixture(scope="module")
def all_reports(records, vary, ablation):
    corpus = ClusteredCorpus(("side effects dizzy", "forgot refill", "dizzy again", "noise"), (0, 1, 0, -1))
    return {
        "experiment": vary,
        "ablation": ablation,
        "ate": C.ate_comparison(records, base="linear"),
        "factors": H.run_factor_analysis(records),
        "outcome_ttest": H.run_outcome_ttest(records),
        "topics": topic_table(corpus, 3),
    }


def eq(a, b):
    return (a.to_dict() == b.to_dict()) if hasattr(a, "to_dict") else a == b


@pytest.mark.parametrize("fmt", R.FORMATS)
@pytest.mark.parametrize("kind", ["experiment", "ablation", "ate", "factors", "outcome_ttest", "topics"])
def test_render_parse_round_trip(all_reports, kind, fmt):
    rep = all_reports[kind]
    text = R.render(rep, fmt)
    back = R.parse(text, fmt)
    assert eq(back, rep)
    assert R.render(back, fmt) == text


@pytest.mark.parametrize("fmt", R.FORMATS)
def test_emit_then_read(tmp_path, all_reports, fmt):
    paths = R.emit_report(all_reports["ate"], tmp_path, "ate", fmt)
    assert paths[0].suffix == R.SUFFIX[fmt]
    assert eq(R.read_report(paths[0]), all_reports["ate"])


def test_columnar_experiment_writes_summary(tmp_path, vary):
    paths = R.emit_report(vary, tmp_path, "vr", R.COLUMNAR)
    lines = paths[1].read_text().splitlines()
    assert lines[0] == "condition,model,metric,mean,sem,n"
    assert len(lines) == 1 + 3 * 2 * 4


def test_unwritable_path(tmp_path, vary):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        R.emit_report(vary, blocker / "sub", "x")


def test_parse_rejects_unknown_input():
    with pytest.raises(ValueError):
        R.parse("pair,x\n", R.COLUMNAR)
    with pytest.raises(ValueError):
        R.render([], "xml")
    with pytest.raises(TypeError):
        R.render(object())


# --- charts -------------------------------------------------------------------

def test_chart_has_one_series_per_metric_per_model(vary, ablation):
    s = R.chart_series(vary)
    assert len(s) == len(vary.metrics) * len(vary.models)
    assert {(x["metric"], x["model"]) for x in s} == {(m, k) for m in vary.metrics for k in vary.models}
    assert s[0]["x"] == [0.0, 0.5, 0.9]
    # the ablation chart has a full and an adherent-only curve per metric and model
    a = R.chart_series(ablation)
    assert len(a) == 2 * len(ablation.metrics)
    assert a[0]["x"] == [200, 400] and a[1]["x"] == [200, 400]


def test_svg_chart_deterministic(tmp_path, vary):
    a = R.write_chart(vary, tmp_path / "a.svg").read_bytes()
    b = R.write_chart(vary, tmp_path / "b.svg").read_bytes()
    assert a == b and a.lstrip().startswith(b"<?xml")
    # one panel per metric, legend on the first
    for m in vary.metrics:
        assert f">{m}<".encode() in a
    assert b">logistic<" in a and b">forest<" in a


# --- fixtures -----------------------------------------------------------------

def test_reported_ate_grid_renders_sixteen_cells():
    text = R.ate_table(C.REPORTED_TABLE)
    rows = [line.split(" | ") for line in text.splitlines()]
    assert len(rows) == 3 and all(len(r) == 9 for r in rows)
    cells = [c for r in rows[1:] for c in r[1:]]
    assert len(cells) == 16 and all(cells)
    assert rows[1][0] == "full" and rows[1][1] == "1.75"
    assert rows[2][0] == "adherent_only" and rows[2][1] == "1.40"


def test_fpr_doubling_fixture():
    rows = [{"condition": c, "model": "forest", "seed": i, "fpr_black": v}
            for c, vals in (("ratio=0.00", [0.1, 0.15]), ("ratio=0.90", [0.2, 0.3])) for i, v in enumerate(vals)]
    rep = H.ExperimentReport("vary_ratio", ["ratio=0.00", "ratio=0.90"], ["forest"], ["fpr_black"], rows, 2)
    lines = R.change_table(rep, "fpr_black", "forest").splitlines()
    assert lines[1].startswith("ratio=0.00 | 0.125 |") and lines[1].endswith("x1.00")
    assert lines[2].startswith("ratio=0.90 | 0.250 |") and lines[2].endswith("x2.00")


def test_ttest_table_shape(all_reports):
    lines = R.ttest_table(all_reports["outcome_ttest"]).splitlines()
    assert [line.split(" | ")[0] for line in lines[1:]] == ["Systolic reduction", "Diastolic reduction"]
