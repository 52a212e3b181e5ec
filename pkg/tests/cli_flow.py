"""Runs every CLI command once into a directory; shared by the CLI and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path

from nonadherence.cli import main


def run(argv: list[str]) -> None:
    code = main([str(a) for a in argv])
    if code != 0:
        raise AssertionError(f"command failed: {argv}")


def run_all(out: Path, workers: int = 1, seed: int = 11) -> dict[str, bytes]:
    out = Path(out)
    gen = out / "gen"
    cohort, notes = gen / "cohort.csv", gen / "notes.json"
    run(["generate", "--n", 2500, "--seed", seed, "--out", gen])
    run(["extract", "--cohort", cohort, "--notes", notes, "--out", out / "ext",
         "--max-in-flight", 1 if workers == 1 else 8])
    labeled = out / "ext" / "labeled_cohort.csv"
    for what in ("factors", "outcome"):
        for fmt in ("columnar", "structured"):
            run(["analyze", what, "--cohort", labeled, "--notes", notes, "--out", out / "an", "--format", fmt])
    run(["ate", "--cohort", labeled, "--out", out / "ate", "--seed", seed])
    exp_cfg = out / "exp.json"
    exp_cfg.write_text(json.dumps({"train_size": 150, "na_ratios": [0.0, 0.5], "full_sizes": [300, 400],
                                   "n_trees": 20}))
    for which in ("vary-ratio", "ablate-na"):
        run(["experiment", which, "--config", exp_cfg, "--n-seeds", 3, "--workers", workers,
             "--seed", seed, "--out", out / "exp", "--format", "columnar", "--chart"])
    run(["report", out / "exp" / "vary_ratio.csv", "--out", out / "rep", "--chart"])
    corpus = out / "corpus.csv"
    corpus.write_text("excerpt,cluster_id\nside effects dizzy,0\nside effects cough,0\nforgot refill,1\n")
    run(["topics", "--corpus", corpus, "--out", out / "topics", "--k", 3])
    run(["train", "--cohort", labeled, "--notes", notes, "--out", out / "model", "--n-trees", 20,
         "--seed", seed])
    run(["predict", "--cohort", labeled, "--model-file", out / "model" / "model.json", "--out", out / "model"])
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
