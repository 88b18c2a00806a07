"""
Self-planning: the executor writes its own plan in a first sampling pass.
"""

import logging
from dataclasses import replace
from typing import Optional

import numpy as np

from app.denoiser.model import Params
from app.models.config import ModelConfig, SamplerConfig
from app.models.plan import PlanFormat, PlanRecord
from app.models.problem import Problem
from app.planner.oracle import enforce_budget
from app.sampler.generate import completion_text, generate
from app.seqcore.layout import TEMPLATE_PLAN_REQUEST, assemble_layout
from app.seqcore.vocab import Vocab, default_vocab

logger = logging.getLogger(__name__)

SELF_PLANNER_ID = "self"


def self_plan(params: Params, config: ModelConfig, problem: Problem, format: PlanFormat,
              budget: int, scfg: SamplerConfig, vocab: Optional[Vocab] = None,
              rng: Optional[np.random.Generator] = None) -> PlanRecord:
    """Generate a plan with a plan-request layout, then truncate it to budget.

    The Completion region of the first pass is sized to the budget; a
    budget of 0 yields an empty plan without running the model.
    """
    vocab = vocab or default_vocab()
    fmt = PlanFormat(format)
    text = ""
    if budget > 0:
        gen_len = budget
        steps = min(scfg.steps, gen_len * 4)
        pass_cfg = replace(scfg, gen_len=gen_len, steps=steps, trace_attention=False)
        layout = assemble_layout(problem, None, TEMPLATE_PLAN_REQUEST, vocab, gen_len, config.max_len)
        ids, _ = generate(params, config, layout, pass_cfg, vocab, rng)
        text = completion_text(ids, layout, vocab)
    ids = enforce_budget(text, budget, vocab)
    logger.debug(f"Self plan for {problem.id}: {len(ids)} tokens")
    return PlanRecord(
        problem_id=problem.id,
        planner_id=SELF_PLANNER_ID,
        format=fmt,
        budget=budget,
        text=vocab.decode(ids),
        token_count=len(ids),
    )
