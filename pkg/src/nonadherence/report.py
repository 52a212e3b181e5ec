"""Report emission (columnar CSV or structured JSON), parsing and SVG charts."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .causal import DATASETS, ESTIMATORS, OUTCOMES, AteReport
from .harness import ExperimentReport, FactorReport, OutcomeTTestReport
from .stats import TTestResult

COLUMNAR = "columnar"
STRUCTURED = "structured"
FORMATS = (COLUMNAR, STRUCTURED)
SUFFIX = {COLUMNAR: ".csv", STRUCTURED: ".json"}

KINDS = {
    "experiment": ExperimentReport,
    "ate": AteReport,
    "factors": FactorReport,
    "outcome_ttest": OutcomeTTestReport,
}


def report_kind(report) -> str:
    for kind, cls in KINDS.items():
        if isinstance(report, cls):
            return kind
    if isinstance(report, list):
        return "topics"
    raise TypeError(f"unsupported report type {type(report).__name__}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _num(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        return float(s)


def _write_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# columnar encodings per report kind


def _experiment_csv(r: ExperimentReport) -> str:
    header = ["experiment", "condition", "na_ratio", "train_size", "subset", "full_size", "model", "seed"]
    header += r.metrics
    rows = []
    for row in r.rows:
        info = r.condition_info.get(row["condition"], {})
        rows.append([r.experiment, row["condition"], info.get("na_ratio"), info.get("train_size"),
                     info.get("subset"), info.get("full_size"), row["model"], row["seed"]]
                    + [row[m] for m in r.metrics])
    return _write_csv(header, rows)


def _experiment_from_csv(text: str) -> ExperimentReport:
    reader = csv.DictReader(io.StringIO(text))
    metrics = reader.fieldnames[8:]
    rows, conditions, models, info, seeds = [], [], [], {}, set()
    experiment = None
    for d in reader:
        experiment = d["experiment"]
        c = d["condition"]
        if c not in conditions:
            conditions.append(c)
            ci = {"na_ratio": float(d["na_ratio"]), "train_size": int(d["train_size"]), "subset": d["subset"]}
            if d["full_size"]:
                ci["full_size"] = int(d["full_size"])
            info[c] = ci
        if d["model"] not in models:
            models.append(d["model"])
        seeds.add(int(d["seed"]))
        row = {"condition": c, "model": d["model"], "seed": int(d["seed"])}
        for m in metrics:
            v = _num(d[m])
            row[m] = None if v is None else float(v)
        rows.append(row)
    return ExperimentReport(experiment, conditions, models, list(metrics), rows, len(seeds), info)


def _ate_csv(r: AteReport) -> str:
    return _write_csv(["estimator", "outcome", "dataset", "ate_mmhg", "n_full", "n_adherent"],
                      [[c["estimator"], c["outcome"], c["dataset"], c["ate_mmhg"], r.n_full, r.n_adherent]
                       for c in r.rows()])


def _ate_from_csv(text: str) -> AteReport:
    rep = AteReport()
    for d in csv.DictReader(io.StringIO(text)):
        rep.cells[(d["estimator"], d["outcome"], d["dataset"])] = float(d["ate_mmhg"])
        rep.n_full, rep.n_adherent = int(d["n_full"]), int(d["n_adherent"])
    return rep


FACTOR_COLUMNS = ["section", "factor", "level", "n_total", "n_non_adherent", "reference",
                  "mean_non_adherent", "mean_adherent", "name", "odds_ratio", "ci_low", "ci_high",
                  "p_value", "significant", "n", "n_cohort_non_adherent", "alpha"]


def _factors_csv(r: FactorReport) -> str:
    rows = []
    for b in r.bivariate:
        d = b.to_dict()
        rows.append(["bivariate", b.factor, b.level, b.n_total, b.n_non_adherent, b.reference,
                     b.mean_non_adherent, b.mean_adherent, b.inference.name if b.inference else None,
                     d["odds_ratio"], d["ci_low"], d["ci_high"], d["p_value"],
                     b.factor in r.significant_factors, r.n, r.n_non_adherent, r.alpha])
    for m in r.multivariate:
        rows.append(["multivariate", None, None, None, None, None, None, None, m.name, m.odds_ratio,
                     m.ci_low, m.ci_high, m.p_value, None, r.n, r.n_non_adherent, r.alpha])
    return _write_csv(FACTOR_COLUMNS, rows)


def _factors_from_csv(text: str) -> FactorReport:
    from .harness import FactorRow
    from .stats import InferenceRow

    biv, multi, sig = [], [], []
    n = n_na = 0
    alpha = 0.05
    for d in csv.DictReader(io.StringIO(text)):
        n, n_na, alpha = int(d["n"]), int(d["n_cohort_non_adherent"]), float(d["alpha"])
        if d["section"] == "bivariate":
            inf = None
            if d["odds_ratio"]:
                inf = InferenceRow(d["name"], float(d["odds_ratio"]), float(d["ci_low"]),
                                   float(d["ci_high"]), float(d["p_value"]))
            mean_na = _num(d["mean_non_adherent"])
            mean_a = _num(d["mean_adherent"])
            biv.append(FactorRow(d["factor"], d["level"] or None, int(d["n_total"]),
                                 int(d["n_non_adherent"]), d["reference"] == "true", inf,
                                 None if mean_na is None else float(mean_na),
                                 None if mean_a is None else float(mean_a)))
            if d["significant"] == "true" and d["factor"] not in sig:
                sig.append(d["factor"])
        else:
            multi.append(InferenceRow(d["name"], float(d["odds_ratio"]), float(d["ci_low"]),
                                      float(d["ci_high"]), float(d["p_value"])))
    return FactorReport(n, n_na, biv, sig, multi, alpha)


TTEST_FIELDS = ["mean_difference", "ci_low", "ci_high", "t_statistic", "dof", "p_value"]


def _ttest_csv(r: OutcomeTTestReport) -> str:
    rows = [[name, r.n_non_adherent, r.n_adherent] + [getattr(t, f) for f in TTEST_FIELDS]
            for name, t in (("systolic", r.systolic), ("diastolic", r.diastolic))]
    return _write_csv(["outcome", "n_non_adherent", "n_adherent"] + TTEST_FIELDS, rows)


def _ttest_from_csv(text: str) -> OutcomeTTestReport:
    res, n_a, n_na = {}, 0, 0
    for d in csv.DictReader(io.StringIO(text)):
        res[d["outcome"]] = TTestResult(**{f: float(d[f]) for f in TTEST_FIELDS})
        n_a, n_na = int(d["n_adherent"]), int(d["n_non_adherent"])
    return OutcomeTTestReport(n_a, n_na, res["systolic"], res["diastolic"])


def _topics_csv(rows: list[dict]) -> str:
    out = []
    for t in rows:
        for rank, (term, score) in enumerate(zip(t["terms"], t["scores"]), start=1):
            out.append([t["cluster_id"], t["share_percent"], rank, term, score])
    return _write_csv(["cluster_id", "share_percent", "rank", "term", "score"], out)


def _topics_from_csv(text: str) -> list[dict]:
    by: dict[int, dict] = {}
    for d in csv.DictReader(io.StringIO(text)):
        c = int(d["cluster_id"])
        t = by.setdefault(c, {"cluster_id": c, "share_percent": float(d["share_percent"]),
                              "terms": [], "scores": []})
        t["terms"].append(d["term"])
        t["scores"].append(float(d["score"]))
    return [by[c] for c in sorted(by)]


_CSV = {
    "experiment": (_experiment_csv, _experiment_from_csv),
    "ate": (_ate_csv, _ate_from_csv),
    "factors": (_factors_csv, _factors_from_csv),
    "outcome_ttest": (_ttest_csv, _ttest_from_csv),
    "topics": (_topics_csv, _topics_from_csv),
}


def _to_structured(report) -> dict:
    kind = report_kind(report)
    body = report if kind == "topics" else report.to_dict()
    return {"kind": kind, "report": body}


def _from_structured(d: dict):
    kind = d["kind"]
    if kind == "topics":
        return d["report"]
    return KINDS[kind].from_dict(d["report"])


def _json_safe(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def render(report, fmt: str = STRUCTURED) -> str:
    if fmt == STRUCTURED:
        return json.dumps(_json_safe(_to_structured(report)), indent=2, sort_keys=True) + "\n"
    if fmt == COLUMNAR:
        kind = report_kind(report)
        return f"# kind={kind}\n" + _CSV[kind][0](report)
    raise ValueError(f"format must be one of {FORMATS}")


def parse(text: str, fmt: str = STRUCTURED):
    if fmt == STRUCTURED:
        return _from_structured(json.loads(text))
    if fmt == COLUMNAR:
        first, _, rest = text.partition("\n")
        if not first.startswith("# kind="):
            raise ValueError("columnar report lacks its '# kind=' header line")
        return _CSV[first[len("# kind="):]][1](rest)
    raise ValueError(f"format must be one of {FORMATS}")


def emit_report(report, out_dir: str | Path, name: str, fmt: str = STRUCTURED,
                chart: bool = False) -> list[Path]:
    """Write ``name`` + suffix in ``out_dir`` (and ``name.svg`` for experiment charts)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}{SUFFIX[fmt]}"
    path.write_text(render(report, fmt))
    written = [path]
    if fmt == COLUMNAR and isinstance(report, ExperimentReport):
        summary = out_dir / f"{name}.summary.csv"
        summary.write_text(_write_csv(["condition", "model", "metric", "mean", "sem", "n"],
                                      [[s["condition"], s["model"], s["metric"], s["mean"], s["sem"], s["n"]]
                                       for s in report.summary()]))
        written.append(summary)
    if chart and isinstance(report, ExperimentReport):
        written.append(write_chart(report, out_dir / f"{name}.svg"))
    return written


def read_report(path: str | Path):
    path = Path(path)
    fmt = COLUMNAR if path.suffix == ".csv" else STRUCTURED
    return parse(path.read_text(), fmt)


# ---------------------------------------------------------------------------
# text tables


def ate_table(report: AteReport) -> str:
    """Table with one row per dataset and one column per (outcome, estimator)."""
    head = ["dataset"] + [f"{o}:{e}" for o in OUTCOMES for e in ESTIMATORS]
    lines = [" | ".join(head)]
    for d in DATASETS:
        cells = [d]
        for o in OUTCOMES:
            for e in ESTIMATORS:
                v = report.cells.get((e, o, d))
                cells.append("" if v is None else f"{v:.2f}")
        lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"


def ttest_table(report: OutcomeTTestReport) -> str:
    lines = ["outcome | mean difference | 95% CI | p-value"]
    for name, t in (("Systolic reduction", report.systolic), ("Diastolic reduction", report.diastolic)):
        lines.append(f"{name} | {t.mean_difference:.2f} | ({t.ci_low:.2f} to {t.ci_high:.2f}) | {t.p_value:.3f}")
    return "\n".join(lines) + "\n"


def change_table(report: ExperimentReport, metric: str, model: str) -> str:
    """Mean +- SEM of one metric per condition, with the fold change against the first condition."""
    base = report.mean(report.conditions[0], model, metric)
    lines = [f"condition | {metric} mean | sem | vs {report.conditions[0]}"]
    for c in report.conditions:
        m, e = report.mean(c, model, metric), report.sem(c, model, metric)
        fold = "" if math.isnan(m) or not base else f"x{m / base:.2f}"
        sem = "" if math.isnan(e) else f"{e:.3f}"
        lines.append(f"{c} | {m:.3f} | {sem} | {fold}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# charts


def chart_series(report: ExperimentReport) -> list[dict]:
    """Mean +- SEM series: one per metric per model (and per subset for the ablation)."""
    series = []
    for metric in report.metrics:
        for model in report.models:
            if report.experiment == "ablation":
                for subset in ("full", "adherent_only"):
                    conds = [c for c in report.conditions if report.condition_info[c]["subset"] == subset]
                    x = [report.condition_info[c].get("full_size", report.condition_info[c]["train_size"])
                         for c in conds]
                    series.append(_series(report, metric, model, f"{model} ({subset})", conds, x))
            else:
                conds = list(report.conditions)
                x = [report.condition_info[c]["na_ratio"] for c in conds]
                series.append(_series(report, metric, model, model, conds, x))
    return series


def _series(report, metric, model, label, conds, x) -> dict:
    return {"metric": metric, "model": model, "label": label, "x": x,
            "mean": [report.mean(c, model, metric) for c in conds],
            "sem": [report.sem(c, model, metric) for c in conds]}


def write_chart(report: ExperimentReport, path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = chart_series(report)
    metrics = report.metrics
    with matplotlib.rc_context({"svg.hashsalt": "nonadherence", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.0), squeeze=False)
        for ax, metric in zip(axes[0], metrics):
            for s in (s for s in series if s["metric"] == metric):
                ax.errorbar(s["x"], s["mean"], yerr=s["sem"], marker="o", capsize=3, label=s["label"])
            ax.set_title(metric)
            ax.set_xlabel("non-adherent fraction" if report.experiment != "ablation" else "training size")
        axes[0][0].legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)
