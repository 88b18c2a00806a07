"""
Attention-share analysis over denoise traces.

For each traced (step, layer) the attention from Completion query rows is
split into three buckets (plan, prompt, completion). Comparing the plan
bucket to the plan's share of sequence positions gives the excess ratio,
1.0 being what uniform attention would produce.
"""

import logging
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from app.models.layout import PROMPT_REGIONS, LayoutSequence, Region
from app.models.stats import AttentionShares, ShareCell
from app.sampler.generate import DenoiseTrace
from app.sampler.trace import require_attention

logger = logging.getLogger(__name__)


def excess_ratio(plan_share: float, plan_fraction: float) -> Optional[float]:
    """Plan share over plan fraction; None when the sequence has no plan."""
    if plan_fraction <= 0:
        return None
    return plan_share / plan_fraction


def _buckets(layout: LayoutSequence) -> Dict[str, List[int]]:
    prompt = [i for i, region in enumerate(layout.regions) if region in PROMPT_REGIONS]
    return {
        "plan": layout.positions(Region.PLAN),
        "prompt": prompt,
        "completion": layout.completion_positions,
    }


def attention_shares(trace: DenoiseTrace, layout: Optional[LayoutSequence] = None) -> AttentionShares:
    """
    Region shares of Completion-query attention for every traced step and layer.

    Heads are averaged uniformly, then Completion query rows; the three
    bucket masses are renormalized to sum to 1.

    Raises:
        NoAttentionInTrace: the trace was recorded without attention capture
    """
    require_attention(trace)
    layout = layout or trace.layout
    buckets = _buckets(layout)
    n = len(layout)
    fractions = {name: len(idx) / n for name, idx in buckets.items()}
    queries = buckets["completion"]

    cells: List[ShareCell] = []
    for step in sorted(trace.attention):
        maps = np.asarray(trace.attention[step], dtype=np.float64)
        per_layer = maps.mean(axis=1)[:, queries, :]  # (layers, queries, keys)
        for layer in range(per_layer.shape[0]):
            rows = per_layer[layer]
            mass = {name: float(rows[:, idx].sum(axis=1).mean()) if idx else 0.0
                    for name, idx in buckets.items()}
            total = sum(mass.values())
            shares = {name: value / total for name, value in mass.items()}
            cells.append(ShareCell(
                step=step,
                layer=layer,
                plan=shares["plan"],
                prompt=shares["prompt"],
                completion=shares["completion"],
                excess_ratio=excess_ratio(shares["plan"], fractions["plan"]),
            ))
    return AttentionShares(cells=cells, plan_fraction=fractions["plan"],
                           prompt_fraction=fractions["prompt"],
                           completion_fraction=fractions["completion"])


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def aggregate_shares(per_problem: Sequence[AttentionShares]) -> AttentionShares:
    """Average shares over problems cell by cell; excess ratios over problems that have a plan."""
    if not per_problem:
        raise ValueError("no attention shares to aggregate")
    grouped: Dict[tuple, List[ShareCell]] = defaultdict(list)
    for shares in per_problem:
        for cell in shares.cells:
            grouped[(cell.step, cell.layer)].append(cell)

    cells = []
    for (step, layer), members in sorted(grouped.items()):
        ratios = [c.excess_ratio for c in members if c.excess_ratio is not None]
        cells.append(ShareCell(
            step=step,
            layer=layer,
            plan=_mean([c.plan for c in members]),
            prompt=_mean([c.prompt for c in members]),
            completion=_mean([c.completion for c in members]),
            excess_ratio=_mean(ratios),
        ))
    return AttentionShares(
        cells=cells,
        plan_fraction=_mean([s.plan_fraction for s in per_problem]),
        prompt_fraction=_mean([s.prompt_fraction for s in per_problem]),
        completion_fraction=_mean([s.completion_fraction for s in per_problem]),
    )


def excess_by_step(shares: AttentionShares) -> Dict[int, Optional[float]]:
    """Excess ratio per traced step, averaged over layers."""
    result = {}
    for step in shares.steps:
        ratios = [c.excess_ratio for c in shares.cells if c.step == step and c.excess_ratio is not None]
        result[step] = _mean(ratios)
    return result


def layer_early_late(shares: AttentionShares) -> Dict[str, Optional[float]]:
    """
    Per layer, plan share at the first traced step over plan share at the
    last one. Keys are "layer_<n>" plus "mean" over the defined ratios.
    """
    steps = shares.steps
    result: Dict[str, Optional[float]] = {}
    if not steps:
        return {"mean": None}
    first, last = steps[0], steps[-1]
    for layer in shares.layers:
        late = shares.cell(last, layer).plan
        early = shares.cell(first, layer).plan
        result[f"layer_{layer}"] = early / late if late > 0 else None
    result["mean"] = _mean([v for v in result.values() if v is not None])
    return result


def trend(shares: AttentionShares) -> Dict[str, Optional[float]]:
    """Layer-averaged excess ratio at the first and last traced step."""
    by_step = excess_by_step(shares)
    if not by_step:
        return {"first_step": None, "last_step": None, "first": None, "last": None}
    steps = sorted(by_step)
    return {"first_step": steps[0], "last_step": steps[-1],
            "first": by_step[steps[0]], "last": by_step[steps[-1]]}


def compare_conditions(traces: Mapping[str, Sequence[DenoiseTrace]]) -> Dict[str, Dict[str, Optional[float]]]:
    """First/last-step excess ratio for each condition's traces."""
    comparison = {}
    for condition, condition_traces in traces.items():
        aggregated = aggregate_shares([attention_shares(t) for t in condition_traces])
        comparison[condition] = trend(aggregated)
        logger.info(f"{condition}: step-{comparison[condition]['first_step']} excess "
                    f"{comparison[condition]['first']}")
    return comparison


def shares_to_rows(shares: AttentionShares) -> List[Dict[str, object]]:
    return [cell.to_csv_row() for cell in shares.cells]
