"""
Filling the plan cache for a set of problems, whatever the planner.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

from app.api.planner_client import EXTERNAL_PREFIX, PlannerClient, external_plan
from app.models.config import SamplerConfig
from app.models.plan import Ablation, PlanFormat, PlannerEndpointConfig, PlanRecord
from app.models.problem import Problem
from app.planner.ablation import ablate_plan, mismatch_pool
from app.planner.cache import PlanCache
from app.planner.oracle import PLANNER_PREFIX, oracle_plan, problem_rng, quality_from_planner_id
from app.planner.self_plan import SELF_PLANNER_ID, self_plan
from app.seqcore.vocab import Vocab, default_vocab
from app.utils.helpers import derived_rng

logger = logging.getLogger(__name__)

PlanFn = Callable[[Problem], PlanRecord]


def _planner_fn(planner_id: str, fmt: PlanFormat, budget: int, vocab: Vocab,
                endpoint: Optional[PlannerEndpointConfig] = None, executor=None,
                scfg: Optional[SamplerConfig] = None) -> PlanFn:
    if planner_id.startswith(PLANNER_PREFIX):
        quality = quality_from_planner_id(planner_id)
        return lambda problem: oracle_plan(problem, fmt, budget, quality, vocab=vocab)
    if planner_id == SELF_PLANNER_ID:
        if executor is None or scfg is None:
            raise ValueError("self planning needs a trained executor and sampler config")
        return lambda problem: self_plan(executor.params, executor.config, problem, fmt, budget, scfg,
                                         vocab, rng=derived_rng("self-plan", problem.id))
    if planner_id.startswith(EXTERNAL_PREFIX):
        if endpoint is None:
            raise ValueError("external planning needs an endpoint config")
        model = planner_id[len(EXTERNAL_PREFIX):]
        if model != endpoint.model:
            raise ValueError(f"planner {planner_id} does not match endpoint model {endpoint.model}")
        client = PlannerClient(endpoint)
        return lambda problem: external_plan(problem, fmt, budget, endpoint, client, vocab)
    raise ValueError(f"Unknown planner id: {planner_id}")


def ensure_plans(problems: Sequence[Problem], planner_id: str, format: PlanFormat, budget: int,
                 cache: PlanCache, ablation: Ablation = Ablation.NONE,
                 endpoint: Optional[PlannerEndpointConfig] = None, executor=None,
                 scfg: Optional[SamplerConfig] = None, vocab: Optional[Vocab] = None,
                 concurrency: int = 1) -> List[PlanRecord]:
    """
    Make sure the cache holds a plan for every problem under this key pattern.

    Base plans are generated first (in parallel for external planners) and
    written in problem order; ablated variants are derived from the cached
    base plans with per-problem streams, so cache files do not depend on
    sampler seeds or worker counts.
    """
    vocab = vocab or default_vocab()
    fmt = PlanFormat(format)
    ablation = Ablation(ablation)

    base_keys = [(p.id, planner_id, fmt.value, budget, Ablation.NONE.value) for p in problems]
    missing = [p for p, key in zip(problems, base_keys) if key not in cache]
    if missing:
        plan_fn = _planner_fn(planner_id, fmt, budget, vocab, endpoint, executor, scfg)
        logger.info(f"Generating {len(missing)} {planner_id} plans ({fmt.value}, budget {budget})")
        if concurrency > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                generated = list(pool.map(plan_fn, missing))
        else:
            generated = [plan_fn(p) for p in missing]
        for record in generated:
            cache.put(record)
    base = [cache.get(key) for key in base_keys]
    if ablation == Ablation.NONE:
        return base

    if ablation == Ablation.MISMATCHED:
        rng = derived_rng("mismatched", planner_id, fmt.value, budget)
        assigned = mismatch_pool(base, rng)
        variants = [assigned[p.id] for p in problems]
    else:
        variants = [ablate_plan(plan, ablation, problem_rng(plan.problem_id, f"ablation:{ablation.value}"),
                                vocab=vocab) for plan in base]
    return [cache.put(record) for record in variants]
