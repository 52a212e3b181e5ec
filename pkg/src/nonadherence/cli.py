"""Command-line entry point: ``nonadherence <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import causal, cohort, extraction, harness, learners, report, synthcohort, topics


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


# commands whose filters or prompts read second-visit note text
NEEDS_NOTES = {"extract", "analyze outcome", "train"}


def _records(args) -> list[cohort.CohortRecord]:
    notes = cohort.load_notes(args.notes) if getattr(args, "notes", None) else None
    records = cohort.read_cohort(args.cohort, notes)
    command = args.command if args.command != "analyze" else f"analyze {args.what}"
    if notes is None and command in NEEDS_NOTES and any(r.pair.second.note_id for r in records):
        raise cohort.CohortError(f"'{command}' needs note text: pass --notes with the cohort's notes JSON")
    return records


def _emit(args, rep, name: str, chart: bool = False) -> list[Path]:
    paths = report.emit_report(rep, _out(args), name, args.format, chart=chart)
    for p in paths:
        print(p)
    return paths


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> None:
    cfg = synthcohort.SynthConfig.from_dict(_load_json(args.config)) if args.config else synthcohort.default_config()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.n is not None:
        cfg = cfg.replace(n=args.n)
    records, truth = synthcohort.generate_cohort(cfg)
    out = _out(args)
    cohort.write_cohort(records, out / "cohort.csv", out / "notes.json")
    synthcohort.write_ground_truth(truth, out / "ground_truth.csv")
    synthcohort.save_config(cfg, out / "synth_config.json")
    for name in ("cohort.csv", "notes.json", "ground_truth.csv", "ground_truth.json", "synth_config.json"):
        print(out / name)


def _backend(args):
    if args.backend == "mock":
        return extraction.MockBackend()
    if not args.base_url or not args.model:
        raise ValueError("the http backend needs --base-url and --model")
    return extraction.HttpChatBackend(args.base_url, args.model, token_env=args.token_env)


def cmd_extract(args) -> None:
    records = _records(args)
    requests = []
    for r in records:
        note = r.pair.second.note_text
        if not note or not note.strip():
            raise cohort.CohortError(f"record {r.pair_id} has no second-visit note text")
        requests.append(extraction.ExtractionRequest(", ".join(r.pair.first.prescriptions), note, r.pair_id))
    results = extraction.run_extraction(requests, _backend(args), max_in_flight=args.max_in_flight)
    out = _out(args)
    extraction.write_results(results, out / "extraction.jsonl")
    labels = {pid: res.label for pid, res in results.items() if res.label is not None}
    cohort.write_cohort(cohort.attach_labels(records, labels), out / "labeled_cohort.csv")
    failed = sorted(pid for pid, res in results.items() if res.label is None)
    summary = {"n": len(results), "labeled": len(labels), "failed": failed,
               "verification_failed": sorted(p for p, r in results.items() if r.verification_failed)}
    (out / "extraction_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name in ("extraction.jsonl", "labeled_cohort.csv", "extraction_summary.json"):
        print(out / name)


def cmd_analyze(args) -> None:
    records = _records(args)
    if args.what == "factors":
        if not args.no_dedup:
            records = cohort.dedup_for_independence(records)
        _emit(args, harness.run_factor_analysis(records), "factors")
    else:
        _emit(args, harness.run_outcome_ttest(records), "outcome_ttest")


def cmd_ate(args) -> None:
    records = _records(args)
    outcomes = causal.OUTCOMES if args.outcome == "both" else (args.outcome,)
    datasets = {"full": ("full",), "adherent": ("adherent_only",), "both": causal.DATASETS}[args.dataset]
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    seed = 0 if args.seed is None else args.seed
    rep = causal.ate_comparison(records, base=args.base, seed=seed, estimators=estimators,
                                outcomes=outcomes, datasets=datasets)
    _emit(args, rep, "ate")


def _experiment_config(args, experiment: str) -> harness.ExperimentConfig:
    d = _load_json(args.config)
    d["experiment"] = experiment
    if args.seed is not None:
        d["base_seed"] = args.seed
    for key in ("n_seeds", "workers", "cohort_path", "notes_path"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.models:
        d["models"] = [m.strip() for m in args.models.split(",")]
    if args.synth_config:
        d["synth"] = _load_json(args.synth_config)
    return harness.ExperimentConfig.from_dict(d)


def cmd_experiment(args) -> None:
    experiment = harness.VARY_RATIO if args.which == "vary-ratio" else harness.ABLATION
    rep = harness.run_experiment(_experiment_config(args, experiment))
    _emit(args, rep, experiment, chart=args.chart)


def cmd_topics(args) -> None:
    corpus = topics.read_corpus(args.corpus)
    _emit(args, topics.topic_table(corpus, args.k), "topics")


def cmd_report(args) -> None:
    rep = report.read_report(args.input)
    name = Path(args.input).name.split(".")[0]
    _emit(args, rep, name, chart=args.chart)


def cmd_train(args) -> None:
    records = [r for r in cohort.outcome_cohort_records(_records(args))]
    if args.adherent_only:
        records = [r for r in records if r.adherence is not None and not r.adherence.non_adherent]
    fm = learners.encode(records)
    y = [r.outcome_normal_bp for r in records]
    seed = 0 if args.seed is None else args.seed
    if args.model == "forest":
        model = learners.fit_forest(fm.values, y, learners.ForestConfig(n_trees=args.n_trees), seed)
    else:
        model = learners.LogisticClassifier.fit(fm.values, y)
    path = _out(args) / "model.json"
    learners.save_model(model, fm.metadata, path)
    print(path)


def cmd_predict(args) -> None:
    model, metadata = learners.load_model(args.model_file)
    records = _records(args)
    fm = learners.encode(records, metadata)
    scores = model.predict(fm.values)
    labels = learners.classify(scores, args.threshold)
    path = _out(args) / "predictions.csv"
    with open(path, "w") as fh:
        fh.write("pair_id,score,prediction\n")
        for r, s, lab in zip(records, scores, labels):
            fh.write(f"{r.pair_id},{float(s)!r},{int(lab)}\n")
    print(path)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=report.FORMATS, default=report.STRUCTURED)

    p = argparse.ArgumentParser(prog="nonadherence", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic cohort and its ground truth")
    g.add_argument("--n", type=int)
    g.set_defaults(func=cmd_generate)

    def cohort_args(sp):
        sp.add_argument("--cohort", required=True, help="cohort CSV")
        sp.add_argument("--notes", help="notes JSON (note_id -> text)")

    e = sub.add_parser("extract", parents=[common], help="label notes for non-adherence")
    cohort_args(e)
    e.add_argument("--backend", choices=("mock", "http"), default="mock")
    e.add_argument("--base-url")
    e.add_argument("--model")
    e.add_argument("--token-env", default="NONADHERENCE_API_TOKEN")
    e.add_argument("--max-in-flight", type=int, default=4)
    e.set_defaults(func=cmd_extract)

    a = sub.add_parser("analyze", parents=[common], help="factor analysis or outcome t-tests")
    a.add_argument("what", choices=("factors", "outcome"))
    cohort_args(a)
    a.add_argument("--no-dedup", action="store_true", help="skip the one-pair-per-patient reduction")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("ate", parents=[common], help="amlodipine vs lisinopril effect estimates")
    cohort_args(t)
    t.add_argument("--outcome", choices=("diastolic", "systolic", "both"), default="both")
    t.add_argument("--dataset", choices=("full", "adherent", "both"), default="both")
    t.add_argument("--estimators", default=",".join(causal.ESTIMATORS))
    t.add_argument("--base", choices=("forest", "linear"), default="forest")
    t.set_defaults(func=cmd_ate)

    x = sub.add_parser("experiment", parents=[common], help="seeded prediction experiments")
    x.add_argument("which", choices=("vary-ratio", "ablate-na"))
    x.add_argument("--n-seeds", type=int)
    x.add_argument("--workers", type=int)
    x.add_argument("--models", help="comma list of logistic,forest")
    x.add_argument("--cohort-path", help="labeled cohort CSV instead of a synthetic cohort")
    x.add_argument("--notes-path", help="notes JSON for --cohort-path")
    x.add_argument("--synth-config", help="synthetic cohort config JSON")
    x.add_argument("--chart", action="store_true", help="also write an SVG chart")
    x.set_defaults(func=cmd_experiment)

    tp = sub.add_parser("topics", parents=[common], help="c-TF-IDF key terms per cluster")
    tp.add_argument("--corpus", required=True, help="CSV with excerpt,cluster_id")
    tp.add_argument("--k", type=int, default=10)
    tp.set_defaults(func=cmd_topics)

    r = sub.add_parser("report", parents=[common], help="re-emit a saved report")
    r.add_argument("input")
    r.add_argument("--chart", action="store_true")
    r.set_defaults(func=cmd_report)

    tr = sub.add_parser("train", parents=[common], help="fit an outcome classifier")
    cohort_args(tr)
    tr.add_argument("--model", choices=("forest", "logistic"), default="forest")
    tr.add_argument("--n-trees", type=int, default=100)
    tr.add_argument("--adherent-only", action="store_true")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", parents=[common], help="score a cohort with a saved model")
    cohort_args(pr)
    pr.add_argument("--model-file", required=True)
    pr.add_argument("--threshold", type=float, default=0.5)
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        args.func(args)
    except Exception as exc:  # reported as a machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
