"""
Condition grids and their execution over a problem set.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from app.errors import MissingPlan
from app.denoiser.model import Params
from app.models.config import GridConfig, ModelConfig, SamplerConfig
from app.models.plan import PlanRecord
from app.models.problem import Problem
from app.models.result import RESULT_SCHEMA, Condition, RemaskStrategy, RunResult
from app.harness.scoring import error_classify, extract_answer, leakage_classify
from app.planner.cache import PlanCache
from app.sampler.generate import completion_text, generate
from app.sampler.trace import write_trace
from app.seqcore.layout import TEMPLATE_SOLVE, assemble_layout
from app.seqcore.vocab import Vocab, default_vocab
from app.taskgen.solver import is_correct
from app.utils.export import read_jsonl, write_jsonl
from app.utils.helpers import code_version, derived_rng

logger = logging.getLogger(__name__)


@dataclass
class Executor:
    """A trained denoiser ready for sampling."""
    params: Params
    config: ModelConfig
    vocab: Vocab = field(default_factory=default_vocab)


def expand_grid(grid: GridConfig) -> List[Condition]:
    """Every condition the grid declares, bare baselines and controls first."""
    strategy = RemaskStrategy(grid.remask_strategy)
    conditions: List[Condition] = []
    for seed in grid.seeds:
        common = dict(seed=seed, remask_strategy=strategy, temperature=grid.temperature)
        if grid.include_bare:
            for gen_len, steps in itertools.product(grid.gen_lens, grid.steps):
                conditions.append(Condition(gen_len=gen_len, steps=steps, **common))
        for gen_len, steps in grid.controls:
            conditions.append(Condition(gen_len=int(gen_len), steps=int(steps), **common))
        for planner, fmt, budget, ablation, gen_len, steps in itertools.product(
                grid.planners, grid.formats, grid.budgets, grid.ablations, grid.gen_lens, grid.steps):
            conditions.append(Condition(gen_len=gen_len, steps=steps, planner_id=planner, format=fmt,
                                        budget=int(budget), ablation=ablation, **common))
    unique = list(dict.fromkeys(conditions))
    logger.debug(f"Expanded grid into {len(unique)} conditions")
    return unique


def baseline_for(condition: Condition) -> Condition:
    """The bare condition sharing this condition's decoding shape and seed."""
    return Condition(gen_len=condition.gen_len, steps=condition.steps, seed=condition.seed,
                     remask_strategy=condition.remask_strategy, temperature=condition.temperature)


def problem_rng(condition: Condition, problem_id: str) -> np.random.Generator:
    return derived_rng(condition.seed, problem_id, condition.id)


def lookup_plan(condition: Condition, problem: Problem, plan_cache: Optional[PlanCache]) -> Optional[PlanRecord]:
    key = condition.plan_key(problem.id)
    if key is None:
        return None
    plan = plan_cache.get(key) if plan_cache is not None else None
    if plan is None:
        raise MissingPlan(problem.id, key)
    return plan


def run_problem(condition: Condition, problem: Problem, executor: Executor,
                plan: Optional[PlanRecord], trace_dir: Union[str, Path, None] = None,
                trace_attention: bool = False, trace_every: int = 4,
                config_hash: Optional[str] = None) -> RunResult:
    """Generate and score one problem under one condition."""
    vocab = executor.vocab
    layout = assemble_layout(problem, plan, TEMPLATE_SOLVE, vocab, condition.gen_len,
                             executor.config.max_len)
    scfg = SamplerConfig(steps=condition.steps, gen_len=condition.gen_len,
                         remask_strategy=condition.remask_strategy,
                         temperature=condition.temperature, seed=condition.seed,
                         trace_attention=trace_attention, trace_every=trace_every)
    ids, trace = generate(executor.params, executor.config, layout, scfg, vocab,
                          rng=problem_rng(condition, problem.id))
    completion = completion_text(ids, layout, vocab)
    answer = extract_answer(completion)
    correct = is_correct(problem, completion, answer)

    trace_ref = None
    if trace_dir is not None:
        path = Path(trace_dir) / condition.id / f"{problem.id}.jsonl"
        write_trace(trace, path, problem_id=problem.id, condition=condition.id)
        trace_ref = str(path)

    result = RunResult(
        problem_id=problem.id,
        condition=condition.id,
        completion=completion,
        answer=answer,
        correct=correct,
        leakage=leakage_classify(problem, plan, problem.gold_answer),
        plan_key=list(plan.key) if plan else None,
        trace_ref=trace_ref,
        family=problem.family.value,
        difficulty=problem.difficulty,
        config_hash=config_hash,
        code_version=code_version(),
    )
    if not correct:
        error = error_classify(result, plan, problem.gold_answer)
        result = replace(result, error=error)
    return result


def run_condition(condition: Condition, problems: Sequence[Problem], executor: Executor,
                  plan_cache: Optional[PlanCache] = None, workers: int = 1,
                  trace_dir: Union[str, Path, None] = None, trace_attention: bool = False,
                  trace_every: int = 4, config_hash: Optional[str] = None,
                  on_result: Optional[Callable[[RunResult], None]] = None) -> List[RunResult]:
    """
    Run one condition over every problem.

    Plans are resolved up front so a missing plan fails before any sampling.
    Results come back in problem order whatever the worker count.

    Raises:
        MissingPlan: a plan condition has no cached plan for some problem
    """
    plans = [lookup_plan(condition, problem, plan_cache) for problem in problems]

    def work(index: int) -> RunResult:
        result = run_problem(condition, problems[index], executor, plans[index], trace_dir,
                             trace_attention, trace_every, config_hash)
        if on_result:
            on_result(result)
        return result

    logger.info(f"Running {condition.id} on {len(problems)} problems with {workers} workers")
    if workers <= 1:
        results = [work(i) for i in range(len(problems))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(problems))))
    correct = sum(1 for r in results if r.correct)
    logger.info(f"{condition.id}: {correct}/{len(results)} correct")
    return results


def results_path(output_dir: Union[str, Path], condition: Condition) -> Path:
    return Path(output_dir) / "results" / f"{condition.id}.jsonl"


def write_results(results: Sequence[RunResult], path: Union[str, Path]) -> Path:
    return write_jsonl(results, path)


def read_results(path: Union[str, Path]) -> List[RunResult]:
    return read_jsonl(path, parse=RunResult.from_dict, schema=RESULT_SCHEMA)
