"""
Utility functions for displaying lab outputs in the console.
"""

import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from app.denoiser.gradcheck import GradCheckReport
from app.models.plan import PlanRecord
from app.models.result import RunResult
from app.models.stats import AttentionShares
from app.utils.helpers import format_float, format_pct, format_pp, get_color_for_change

# Console setup for rich output
console = Console()
logger = logging.getLogger(__name__)


def create_progress_spinner(description: str = "Working...") -> Progress:
    """Create a progress spinner for long-running operations."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[bold blue]{task.description}"),
        transient=True
    )


def display_corpus_summary(counts: Mapping[str, Mapping[str, int]]) -> None:
    """
    Display problem counts per split and family.

    Args:
        counts: split name -> family -> number of problems
    """
    table = Table(title="Generated Problems")
    table.add_column("Split", style="cyan")
    table.add_column("Family")
    table.add_column("Problems", justify="right")
    for split, families in counts.items():
        for family, n in sorted(families.items()):
            table.add_row(split, family, str(n))
    console.print(table)


def display_loss_curve(curve: Sequence[Dict[str, float]], every: int = 1) -> None:
    """Display the training curve, one row per logged epoch."""
    if not curve:
        console.print("[yellow]No training epochs recorded.[/yellow]")
        return
    table = Table(title="Training Loss")
    table.add_column("Epoch", justify="right", style="cyan")
    table.add_column("Eval loss", justify="right")
    table.add_column("Train loss", justify="right")
    for i, row in enumerate(curve):
        if i % every and i != len(curve) - 1:
            continue
        table.add_row(str(row["epoch"]), format_float(row.get("loss"), 4),
                      format_float(row.get("train_loss"), 4))
    console.print(table)


def display_gradcheck(report: GradCheckReport, tolerance: float) -> None:
    worst = report.worst
    passed = report.max_relative_error < tolerance
    status = "[green]PASS[/green]" if passed else "[red]FAIL[/red]"
    lines = [
        f"Samples: {len(report.samples)}",
        f"Max relative error: {report.max_relative_error:.3e} (tolerance {tolerance:.0e})",
    ]
    if worst is not None:
        lines.append(f"Worst: {worst.name}[{worst.index}] analytic={worst.analytic:.6e} "
                     f"numeric={worst.numeric:.6e}")
    console.print(Panel("\n".join(lines), title=f"Gradient check {status}"))


def display_plans(plans: Sequence[PlanRecord], limit: int = 5) -> None:
    """Display a few plans with their token counts."""
    if not plans:
        console.print("[yellow]No plans generated.[/yellow]")
        return
    table = Table(title=f"Plans ({len(plans)} cached, showing {min(limit, len(plans))})")
    table.add_column("Problem", style="cyan")
    table.add_column("Planner")
    table.add_column("Format", style="magenta")
    table.add_column("Ablation")
    table.add_column("Tokens", justify="right")
    table.add_column("Text")
    for plan in plans[:limit]:
        text = plan.text if len(plan.text) <= 60 else plan.text[:57] + "..."
        table.add_row(plan.problem_id, plan.planner_id, plan.format.value, plan.ablation.value,
                      f"{plan.token_count}/{plan.budget}", text)
    console.print(table)


def display_condition_results(summary: Sequence[Dict[str, Any]]) -> None:
    """
    Display accuracy per condition.

    Args:
        summary: rows with condition, n, correct, accuracy and optional lift (pp)
    """
    if not summary:
        console.print("[yellow]No results to display.[/yellow]")
        return
    table = Table(title="Condition Results")
    table.add_column("Condition", style="cyan")
    table.add_column("N", justify="right")
    table.add_column("Correct", justify="right")
    table.add_column("Accuracy", justify="right")
    table.add_column("Lift", justify="right")
    for row in summary:
        lift = row.get("lift")
        color = get_color_for_change(lift)
        table.add_row(row["condition"], str(row["n"]), str(row["correct"]),
                      format_pct(row["accuracy"]), f"[{color}]{format_pp(lift)}[/{color}]")
    console.print(table)


def display_failures(results: Sequence[RunResult], limit: int = 5) -> None:
    failures = [r for r in results if not r.correct][:limit]
    if not failures:
        return
    table = Table(title="Sample Failures")
    table.add_column("Problem", style="cyan")
    table.add_column("Answer", justify="right")
    table.add_column("Error", style="red")
    table.add_column("Completion")
    for r in failures:
        completion = r.completion if len(r.completion) <= 50 else r.completion[:47] + "..."
        table.add_row(r.problem_id, "N/A" if r.answer is None else str(r.answer),
                      r.error.value if r.error else "N/A", completion)
    console.print(table)


def display_stats(rows: Sequence[Dict[str, Any]]) -> None:
    """Display paired comparisons against the baseline."""
    if not rows:
        console.print("[yellow]No comparisons to display.[/yellow]")
        return
    table = Table(title="Paired Comparisons vs Baseline")
    table.add_column("Condition", style="cyan")
    table.add_column("Delta", justify="right")
    table.add_column("95% CI", justify="right")
    table.add_column("Bootstrap p", justify="right")
    table.add_column("Fixed", justify="right", style="green")
    table.add_column("Broken", justify="right", style="red")
    table.add_column("McNemar p", justify="right")
    for row in rows:
        color = get_color_for_change(row["delta"])
        table.add_row(
            row["condition"],
            f"[{color}]{format_pp(row['delta'])}[/{color}]",
            f"[{format_pp(row['ci_low'])}, {format_pp(row['ci_high'])}]",
            f"{row['p_value']:.4f}",
            str(row["fixed"]),
            str(row["broken"]),
            f"{row['mcnemar_p']:.4g}",
        )
    console.print(table)


def display_attention(shares: AttentionShares, title: str = "Attention Shares") -> None:
    """Display layer-averaged shares per traced step."""
    table = Table(title=title)
    table.add_column("Step", justify="right", style="cyan")
    table.add_column("Plan", justify="right")
    table.add_column("Prompt", justify="right")
    table.add_column("Completion", justify="right")
    table.add_column("Excess", justify="right", style="magenta")
    for step in shares.steps:
        cells = [c for c in shares.cells if c.step == step]
        ratios = [c.excess_ratio for c in cells if c.excess_ratio is not None]
        table.add_row(
            str(step),
            format_pct(sum(c.plan for c in cells) / len(cells)),
            format_pct(sum(c.prompt for c in cells) / len(cells)),
            format_pct(sum(c.completion for c in cells) / len(cells)),
            f"{sum(ratios) / len(ratios):.2f}x" if ratios else "N/A",
        )
    console.print(table)
    console.print(f"Uniform baseline: plan {format_pct(shares.plan_fraction)}, "
                  f"prompt {format_pct(shares.prompt_fraction)}, "
                  f"completion {format_pct(shares.completion_fraction)}")


def display_attention_comparison(comparison: Mapping[str, Mapping[str, Optional[float]]]) -> None:
    table = Table(title="Plan Attention by Condition")
    table.add_column("Condition", style="cyan")
    table.add_column("First step excess", justify="right")
    table.add_column("Last step excess", justify="right")
    for condition, row in comparison.items():
        first, last = row.get("first"), row.get("last")
        table.add_row(condition, "N/A" if first is None else f"{first:.2f}x",
                      "N/A" if last is None else f"{last:.2f}x")
    console.print(table)


def display_written(paths: List[Any], title: str = "Wrote") -> None:
    if not paths:
        return
    console.print(f"\n{title}:")
    for path in paths:
        console.print(f"  {path}")
