"""
Template assembly and the forward masking process.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from app.errors import OverLength
from app.models.layout import LayoutSequence, MaskState, Region
from app.models.plan import PlanRecord
from app.models.problem import Problem
from app.seqcore.vocab import Vocab

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = "solve the problem step by step"

TEMPLATE_SOLVE = "solve"
TEMPLATE_PLAN_REQUEST = "plan_request"
TEMPLATES = (TEMPLATE_SOLVE, TEMPLATE_PLAN_REQUEST)

DEFAULT_MAX_LEN = 512


def assemble_layout(problem: Problem, plan: Optional[PlanRecord], template: str, vocab: Vocab,
                    gen_len: int, max_len: int = DEFAULT_MAX_LEN) -> LayoutSequence:
    """Lay out [System, Problem, (PlanHeader, Plan), SolutionMarker, Completion].

    The plan_request template ends the prompt at the plan header so the
    Completion region is where a plan gets written. An absent or empty plan
    yields the bare layout.
    """
    if gen_len < 1:
        raise ValueError("gen_len must be at least 1")
    if template not in TEMPLATES:
        raise ValueError(f"Unknown template: {template}")

    segments: List[Tuple[Region, List[int]]] = [
        (Region.SYSTEM, [vocab.bos_id] + vocab.encode(SYSTEM_PROMPT)),
        (Region.PROBLEM, vocab.encode(problem.text)),
    ]
    if template == TEMPLATE_PLAN_REQUEST:
        segments.append((Region.PLAN_HEADER, [vocab.plan_header_id]))
    else:
        plan_ids = vocab.encode(plan.text) if plan is not None else []
        if plan_ids:
            segments.append((Region.PLAN_HEADER, [vocab.plan_header_id]))
            segments.append((Region.PLAN, plan_ids))
        segments.append((Region.SOLUTION_MARKER, [vocab.solution_marker_id]))
    segments.append((Region.COMPLETION, [vocab.mask_id] * gen_len))

    ids: List[int] = []
    regions: List[Region] = []
    for region, seg_ids in segments:
        ids.extend(seg_ids)
        regions.extend([region] * len(seg_ids))

    if len(ids) > max_len:
        raise OverLength(len(ids), max_len)

    return LayoutSequence(
        ids=tuple(ids),
        regions=tuple(regions),
        frozen=tuple(r != Region.COMPLETION for r in regions),
    )


def forward_mask(layout: LayoutSequence, t: float, rng: np.random.Generator) -> MaskState:
    """Mask each Completion position independently with probability t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"noise level must lie in [0, 1], got {t}")
    draws = rng.random(len(layout))
    masked = tuple(bool(not frozen and draw < t) for frozen, draw in zip(layout.frozen, draws))
    return MaskState(masked=masked, t=float(t))


def apply_mask(layout: LayoutSequence, mask_state: MaskState, vocab: Vocab) -> np.ndarray:
    """Input ids with every masked position replaced by MASK."""
    ids = np.asarray(layout.ids, dtype=np.int64).copy()
    ids[np.asarray(mask_state.masked, dtype=bool)] = vocab.mask_id
    return ids
