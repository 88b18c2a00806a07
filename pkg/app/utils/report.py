"""
Report generation over a run directory: tables in markdown, CSV data and SVG charts.
"""

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from tabulate import tabulate

from app.analysis.stats import multiseed
from app.errors import TooFewSeeds
from app.harness.runner import baseline_for, read_results
from app.harness.scoring import (accuracy, content_decomposition, difficulty_breakdown,
                                 error_breakdown, leakage_report)
from app.models.plan import Ablation
from app.models.result import Condition, RunResult
from app.utils import charts
from app.utils.export import write_csv
from app.utils.helpers import format_float, format_pct, format_pp, format_ratio

logger = logging.getLogger(__name__)

META_SCHEMA = 1
BUDGET_ROWS = (0, 25, 50, 100, 150, 200)
DEFAULT_PLANNER = "oracle-frontier"
DEFAULT_FORMAT = "hybrid"


@dataclass
class ConditionRun:
    condition: Condition
    results: List[RunResult] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def accuracy(self) -> Optional[float]:
        return accuracy(self.results)


def meta_path(results_file: Union[str, Path]) -> Path:
    path = Path(results_file)
    return path.with_name(path.name[:-len(".jsonl")] + ".meta.json")


def write_meta(results_file: Union[str, Path], condition: Condition, config_hash: str,
               code_version: str, n_results: int) -> Path:
    """Sidecar that names the inputs behind a result file."""
    path = meta_path(results_file)
    meta = {
        "schema": META_SCHEMA,
        "condition": condition.to_dict(),
        "condition_id": condition.id,
        "config_hash": config_hash,
        "code_version": code_version,
        "results": n_results,
    }
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_runs(output_dir: Union[str, Path]) -> Dict[str, ConditionRun]:
    """Every condition with a results file and meta sidecar under output_dir/results."""
    results_dir = Path(output_dir) / "results"
    runs: Dict[str, ConditionRun] = {}
    if not results_dir.exists():
        return runs
    for name in sorted(os.listdir(results_dir)):
        if not name.endswith(".meta.json"):
            continue
        with open(results_dir / name, "r") as f:
            meta = json.load(f)
        condition = Condition.from_dict(meta["condition"])
        results_file = results_dir / f"{condition.id}.jsonl"
        if not results_file.exists():
            logger.warning(f"Meta without results for {condition.id}")
            continue
        runs[condition.id] = ConditionRun(condition, read_results(results_file), meta)
    logger.info(f"Loaded {len(runs)} conditions from {results_dir}")
    return runs


def shape_id(condition: Condition) -> str:
    """Condition id without the seed."""
    return condition.id.rsplit("-s", 1)[0]


def _baseline(runs: Dict[str, ConditionRun], condition: Condition) -> Optional[ConditionRun]:
    return runs.get(baseline_for(condition).id)


def condition_summary(runs: Dict[str, ConditionRun]) -> List[Dict[str, Any]]:
    rows = []
    for run in runs.values():
        base = _baseline(runs, run.condition)
        acc = run.accuracy
        lift = None
        if base is not None and acc is not None and base.accuracy is not None:
            lift = (acc - base.accuracy) * 100
        rows.append({
            "condition": run.condition.id,
            "n": len(run.results),
            "correct": sum(1 for r in run.results if r.correct),
            "accuracy": acc,
            "lift": lift,
        })
    return rows


def _mean(values: Sequence[float]) -> Optional[float]:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def budget_rows(runs: Dict[str, ConditionRun], planner: str = DEFAULT_PLANNER,
                fmt: str = DEFAULT_FORMAT) -> List[Dict[str, Any]]:
    """
    Accuracy and lift per plan budget, averaged over seeds; budget 0 is the
    bare baseline. The standard budgets always get a row.
    """
    by_budget: Dict[int, List[float]] = defaultdict(list)
    baselines: List[float] = []
    for run in runs.values():
        c = run.condition
        if c.is_bare:
            continue
        if c.planner_id != planner or c.format != fmt or c.ablation != Ablation.NONE.value:
            continue
        base = _baseline(runs, c)
        if base is not None:
            baselines.append(base.accuracy)
        by_budget[int(c.budget)].append(run.accuracy)
    baseline = _mean(baselines)
    if baseline is None:
        baseline = _mean([r.accuracy for r in runs.values() if r.condition.is_bare])

    rows = []
    for budget in sorted(set(BUDGET_ROWS) | set(by_budget)):
        acc = baseline if budget == 0 else _mean(by_budget.get(budget, []))
        lift = (acc - baseline) * 100 if acc is not None and baseline is not None else None
        rows.append({"budget": budget, "accuracy": acc, "lift": lift})
    return rows


def heatmap_matrix(runs: Dict[str, ConditionRun], planner: str = DEFAULT_PLANNER,
                   budget: Optional[int] = None) -> Dict[str, Dict[str, Optional[float]]]:
    """Accuracy by plan format (rows, plus "none") and task family (columns)."""
    pooled: Dict[str, Dict[str, List[bool]]] = defaultdict(lambda: defaultdict(list))
    for run in runs.values():
        c = run.condition
        if c.is_bare:
            row = "none"
        elif c.planner_id == planner and c.ablation == Ablation.NONE.value and \
                (budget is None or c.budget == budget):
            row = c.format
        else:
            continue
        for r in run.results:
            pooled[row][r.family or "unknown"].append(r.correct)
    return {row: {family: sum(v) / len(v) for family, v in sorted(families.items())}
            for row, families in sorted(pooled.items(), key=lambda kv: (kv[0] == "none", kv[0]))}


def compute_control_rows(runs: Dict[str, ConditionRun], prompt_len: float = 0.0) -> List[Dict[str, Any]]:
    """
    Bare conditions grouped by (gen_len, steps), with compute relative to the
    cheapest one approximated as steps x sequence length.
    """
    grouped: Dict[tuple, List[float]] = defaultdict(list)
    for run in runs.values():
        if run.condition.is_bare:
            grouped[(run.condition.gen_len, run.condition.steps)].append(run.accuracy)
    if not grouped:
        return []
    cost = {key: key[1] * (prompt_len + key[0]) for key in grouped}
    base_key = min(grouped, key=lambda k: (cost[k], k))
    rows = []
    for key in sorted(grouped, key=lambda k: (cost[k], k)):
        rows.append({
            "gen_len": key[0],
            "steps": key[1],
            "accuracy": _mean(grouped[key]),
            "relative_compute": cost[key] / cost[base_key] if cost[base_key] else None,
            "baseline": key == base_key,
        })
    return rows


def multiseed_rows(runs: Dict[str, ConditionRun]) -> List[Dict[str, Any]]:
    """Mean and sd of accuracy (percent) per condition shape over its seeds."""
    grouped: Dict[str, List[Optional[float]]] = defaultdict(list)
    seeds: Dict[str, List[int]] = defaultdict(list)
    for run in runs.values():
        key = shape_id(run.condition)
        grouped[key].append(run.accuracy * 100 if run.accuracy is not None else None)
        seeds[key].append(run.condition.seed)
    rows = []
    for key in sorted(grouped):
        values = [v for v in grouped[key] if v is not None]
        try:
            agg = multiseed(values, sorted(seeds[key]))
        except TooFewSeeds:
            continue
        rows.append({"label": key, "mean": agg.mean, "sd": agg.sd, "seeds": len(values)})
    return rows


def _plan_runs(runs: Dict[str, ConditionRun]) -> List[ConditionRun]:
    return [run for run in runs.values() if not run.condition.is_bare]


def content_rows(runs: Dict[str, ConditionRun]) -> List[Dict[str, Any]]:
    """Lift decomposition for each (planner, format, budget, decoding shape, seed) with the needed ablations."""
    groups: Dict[tuple, Dict[str, ConditionRun]] = defaultdict(dict)
    for run in _plan_runs(runs):
        c = run.condition
        key = (c.planner_id, c.format, c.budget, c.gen_len, c.steps, c.seed)
        groups[key][c.ablation] = run
    rows = []
    for key, by_ablation in sorted(groups.items()):
        needed = (Ablation.NONE.value, Ablation.RANDOM_TOKENS.value, Ablation.SHUFFLED.value)
        if not all(a in by_ablation for a in needed):
            continue
        base = _baseline(runs, by_ablation[Ablation.NONE.value].condition)
        if base is None:
            continue
        parts = content_decomposition(base.accuracy, by_ablation[Ablation.RANDOM_TOKENS.value].accuracy,
                                      by_ablation[Ablation.SHUFFLED.value].accuracy,
                                      by_ablation[Ablation.NONE.value].accuracy)
        rows.append({"condition": by_ablation[Ablation.NONE.value].condition.id, **parts})
    return rows


def _markdown(rows: Sequence[Dict[str, Any]], headers: Dict[str, str]) -> str:
    table = [[row.get(k) for k in headers] for row in rows]
    return tabulate(table, headers=list(headers.values()), tablefmt="github")


def render_markdown(runs: Dict[str, ConditionRun], prompt_len: float = 0.0,
                    stats_rows: Optional[Sequence[Dict[str, Any]]] = None,
                    config_hash: str = "", code_version: str = "") -> str:
    """The full report as markdown."""
    sections = ["# Plan-conditioned diffusion report", "",
                f"config hash: `{config_hash}`  code version: `{code_version}`", ""]

    summary = condition_summary(runs)
    sections += ["## Conditions", "", _markdown(
        [{**r, "accuracy": format_pct(r["accuracy"]), "lift": format_pp(r["lift"])} for r in summary],
        {"condition": "Condition", "n": "N", "correct": "Correct", "accuracy": "Accuracy", "lift": "Lift"}), ""]

    budget = budget_rows(runs)
    sections += ["## Plan budget", "", _markdown(
        [{"budget": r["budget"], "accuracy": format_pct(r["accuracy"]), "lift": format_pp(r["lift"])}
         for r in budget], {"budget": "Budget", "accuracy": "Accuracy", "lift": "Lift"}), ""]

    matrix = heatmap_matrix(runs)
    if matrix:
        families = sorted({f for row in matrix.values() for f in row})
        table = [[fmt] + [format_pct(matrix[fmt].get(f)) for f in families] for fmt in matrix]
        sections += ["## Format x family", "",
                     tabulate(table, headers=["Format"] + families, tablefmt="github"), ""]

    controls = compute_control_rows(runs, prompt_len)
    if controls:
        sections += ["## Compute-matched controls", "", _markdown(
            [{**r, "accuracy": format_pct(r["accuracy"]),
              "relative_compute": format_float(r["relative_compute"], 2)} for r in controls],
            {"gen_len": "Gen length", "steps": "Steps", "accuracy": "Accuracy",
             "relative_compute": "Relative compute"}), ""]

    difficulty, leakage, errors = [], [], []
    for run in _plan_runs(runs):
        base = _baseline(runs, run.condition)
        leak = leakage_report(run.results, base.results if base else None)
        leakage.append({
            "condition": run.condition.id,
            "no_leak": leak["no_leak"]["count"],
            "false_positive_leak": leak["false_positive_leak"]["count"],
            "true_leak": leak["true_leak"]["count"],
            "true_leak_accuracy": format_pct(leak["true_leak"]["accuracy"]),
            "max_contribution": format_pp(leak["max_leakage_contribution"]["lift"] * 100)
            if "max_leakage_contribution" in leak else "n/a",
        })
        errors.append({"condition": run.condition.id, **error_breakdown(run.results)})
        if base is not None:
            d = difficulty_breakdown(base.results, run.results)
            difficulty.append({
                "condition": run.condition.id,
                "rescue": format_pct(d.rescue_rate),
                "retention": format_pct(d.retention_rate),
                "fixed": d.fixed,
                "broken": d.broken,
                "ratio": format_ratio(d.fix_break_ratio),
            })
    if difficulty:
        sections += ["## Rescue and retention", "", _markdown(difficulty, {
            "condition": "Condition", "rescue": "Rescue", "retention": "Retention",
            "fixed": "Fixed", "broken": "Broken", "ratio": "Fix:break"}), ""]
    if leakage:
        sections += ["## Answer leakage", "", _markdown(leakage, {
            "condition": "Condition", "no_leak": "No leak", "false_positive_leak": "False positive",
            "true_leak": "True leak", "true_leak_accuracy": "True-leak accuracy",
            "max_contribution": "Max leakage contribution"}), ""]
    if errors:
        headers = {"condition": "Condition"}
        headers.update({k: k.replace("_", " ").title() for k in errors[0] if k != "condition"})
        sections += ["## Failure taxonomy", "", _markdown(errors, headers), ""]

    content = content_rows(runs)
    if content:
        sections += ["## Plan content", "", _markdown(
            [{"condition": r["condition"], "lift": format_pp(r["lift"] * 100),
              "tokens": format_pct(r["tokens_share"]), "vocabulary": format_pct(r["vocabulary_share"]),
              "semantics": format_pct(r["semantics_share"])} for r in content],
            {"condition": "Condition", "lift": "Lift", "tokens": "Extra tokens",
             "vocabulary": "Vocabulary", "semantics": "Semantics"}), ""]

    seeds = multiseed_rows(runs)
    if seeds:
        sections += ["## Across seeds", "", _markdown(
            [{"label": r["label"], "value": f"{r['mean']:.2f} ± {r['sd']:.2f}", "seeds": r["seeds"]}
             for r in seeds], {"label": "Condition", "value": "Accuracy (%)", "seeds": "Seeds"}), ""]

    if stats_rows:
        sections += ["## Paired tests vs baseline", "", _markdown(
            [{"condition": r["condition"], "delta": format_pp(r["delta"]),
              "ci": f"[{format_pp(r['ci_low'])}, {format_pp(r['ci_high'])}]",
              "p": f"{r['p_value']:.4f}", "mcnemar": f"{r['mcnemar_p']:.4g}"} for r in stats_rows],
            {"condition": "Condition", "delta": "Delta", "ci": "95% CI", "p": "Bootstrap p",
             "mcnemar": "McNemar p"}), ""]
    return "\n".join(sections)


def write_report(output_dir: Union[str, Path], prompt_len: float = 0.0, config_hash: str = "",
                 code_version: str = "") -> List[Path]:
    """Write report.md plus CSV and SVG artifacts under output_dir/report."""
    runs = load_runs(output_dir)
    report_dir = Path(output_dir) / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    stats_rows = None
    stats_file = Path(output_dir) / "stats" / "stats.json"
    if stats_file.exists():
        with open(stats_file, "r") as f:
            stats_rows = json.load(f).get("comparisons")

    written = []
    budget = budget_rows(runs)
    written.append(write_csv(
        [{**r, "accuracy": format_float(r["accuracy"], 4), "lift": format_float(r["lift"], 2)} for r in budget],
        report_dir / "budget_curve.csv", fieldnames=["budget", "accuracy", "lift"]))
    baseline = budget[0]["accuracy"] if budget else None
    written.append(charts.budget_curve([r for r in budget if r["budget"] > 0],
                                       report_dir / "budget_curve.svg", baseline))

    matrix = heatmap_matrix(runs)
    families = sorted({f for row in matrix.values() for f in row})
    written.append(write_csv(
        [{"format": fmt, **{f: format_float(matrix[fmt].get(f), 4) for f in families}} for fmt in matrix],
        report_dir / "format_family.csv", fieldnames=["format"] + families))
    if matrix:
        written.append(charts.heatmap(matrix, report_dir / "format_family.svg"))

    controls = compute_control_rows(runs, prompt_len)
    if controls:
        written.append(write_csv(controls, report_dir / "compute_controls.csv"))

    seeds = multiseed_rows(runs)
    if seeds:
        written.append(write_csv(seeds, report_dir / "multiseed.csv"))
        written.append(charts.multiseed_bars(seeds, report_dir / "multiseed.svg"))

    attention_file = Path(output_dir) / "attention" / "summary.json"
    if attention_file.exists():
        with open(attention_file, "r") as f:
            summary = json.load(f)
        series = {cond: {int(step): value for step, value in data["excess_by_step"].items()}
                  for cond, data in summary.get("conditions", {}).items()}
        if series:
            written.append(charts.attention_curves(series, report_dir / "attention_curves.svg"))

    report_file = report_dir / "report.md"
    with open(report_file, "w") as f:
        f.write(render_markdown(runs, prompt_len, stats_rows, config_hash, code_version))
    written.append(report_file)
    logger.info(f"Wrote report with {len(written)} artifacts to {report_dir}")
    return written
