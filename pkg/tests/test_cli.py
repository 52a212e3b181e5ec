from __future__ import annotations

import json

import pytest

from cli_flow import run_all
from nonadherence import report as R
from nonadherence.cli import main


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    return run_all(tmp_path_factory.mktemp("a"))


def test_every_command_writes_its_outputs(first_run):
    expected = [
        "gen/cohort.csv", "gen/notes.json", "gen/ground_truth.csv", "gen/ground_truth.json",
        "gen/synth_config.json", "ext/extraction.jsonl", "ext/labeled_cohort.csv",
        "ext/extraction_summary.json", "an/factors.csv", "an/factors.json", "an/outcome_ttest.csv",
        "an/outcome_ttest.json", "ate/ate.json", "exp/vary_ratio.csv", "exp/vary_ratio.summary.csv",
        "exp/vary_ratio.svg", "exp/ablation.csv", "exp/ablation.svg", "rep/vary_ratio.json",
        "rep/vary_ratio.svg", "topics/topics.json", "model/model.json", "model/predictions.csv",
    ]
    for name in expected:
        assert name in first_run and first_run[name], name
    summary = json.loads(first_run["ext/extraction_summary.json"])
    assert summary["failed"] == [] and summary["labeled"] == summary["n"]
    ate = R.parse(first_run["ate/ate.json"].decode())
    assert ate.is_complete()


def test_rerun_byte_identical_at_other_parallelism(first_run, tmp_path):
    second = run_all(tmp_path, workers=2)
    assert second.keys() == first_run.keys()
    differing = [k for k in first_run if first_run[k] != second[k]]
    assert differing == []


def test_report_command_reproduces_structured_form(first_run, tmp_path):
    exp = R.parse(first_run["exp/vary_ratio.csv"].decode(), R.COLUMNAR)
    assert R.render(exp, R.STRUCTURED).encode() == first_run["rep/vary_ratio.json"]


def test_failure_emits_error_record(tmp_path, capsys):
    code = main(["analyze", "factors", "--cohort", str(tmp_path / "missing.csv"), "--out", str(tmp_path)])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["command"] == "analyze" and record["error"] == "FileNotFoundError"


def test_missing_notes_is_reported(first_run, tmp_path, capsys):
    (tmp_path / "c.csv").write_bytes(first_run["ext/labeled_cohort.csv"])
    code = main(["analyze", "outcome", "--cohort", str(tmp_path / "c.csv"), "--out", str(tmp_path)])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "CohortError" and "--notes" in record["message"]


def test_infeasible_experiment_reports_shortfall(tmp_path, capsys):
    synth = tmp_path / "s.json"
    synth.write_text(json.dumps({"n": 300}))
    code = main(["experiment", "vary-ratio", "--synth-config", str(synth), "--n-seeds", "1",
                 "--out", str(tmp_path)])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "InfeasibleSamplingError" and "short by" in record["message"]


def test_seed_out_of_range_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["generate", "--seed", str(2**64), "--out", str(tmp_path)])
