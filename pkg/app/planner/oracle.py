"""
Oracle planner: renders plans from a problem's gold trace.

The oracle reads the operation structure of the trace but never emits the
final answer as the plan's trailing number. Quality levels model a planner
ladder: frontier plans are faithful, degraded plans swap one operation,
wrong plans swap every operation.
"""

import hashlib
import logging
from typing import List, Optional, Sequence

import numpy as np

from app.models.plan import PlanFormat, PlanQuality, PlanRecord
from app.models.problem import Problem, TaskFamily, TraceStep
from app.seqcore.vocab import Vocab, default_vocab
from app.taskgen.solver import GRID_SIZE, OPERATIONS, parse_chain, parse_grid

logger = logging.getLogger(__name__)

PLANNER_PREFIX = "oracle-"


def oracle_planner_id(quality: PlanQuality) -> str:
    return f"{PLANNER_PREFIX}{PlanQuality(quality).value}"


def quality_from_planner_id(planner_id: str) -> PlanQuality:
    if not planner_id.startswith(PLANNER_PREFIX):
        raise ValueError(f"Not an oracle planner id: {planner_id}")
    return PlanQuality(planner_id[len(PLANNER_PREFIX):])


def problem_rng(problem_id: str, salt: str) -> np.random.Generator:
    """Seed-independent stream so cached plans do not vary with the run seed."""
    digest = hashlib.sha256(f"{problem_id}:{salt}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


# Quality transforms

def _swap_op(op: str, avoid: Sequence[str], rng: np.random.Generator) -> str:
    choices = [o for o in OPERATIONS if o != op and o not in avoid]
    if not choices:
        choices = [o for o in OPERATIONS if o != op]
    return choices[int(rng.integers(0, len(choices)))]


def _given_cells(problem: Problem) -> List[int]:
    grid = parse_grid(problem.text)
    return [r * GRID_SIZE + c for r in range(GRID_SIZE) for c in range(GRID_SIZE)
            if grid[r][c] is not None]


def degrade_trace(problem: Problem, quality: PlanQuality,
                  rng: np.random.Generator) -> List[TraceStep]:
    """Apply the quality ladder to the gold trace's operations.

    For Latin squares the "operation" of a step is the cell it fills;
    wrong plans point at given cells instead of blanks.
    """
    trace = list(problem.gold_trace)
    if quality == PlanQuality.FRONTIER:
        return trace

    # countdown's leading ("start", x, x) step carries no operation
    first = 1 if problem.family == TaskFamily.COUNTDOWN_STYLE else 0
    editable = list(range(first, len(trace)))
    if quality == PlanQuality.DEGRADED:
        editable = [editable[int(rng.integers(0, len(editable)))]]

    if problem.family == TaskFamily.LATIN_SQUARE:
        given = _given_cells(problem)
        for i in editable:
            op, cell, value = trace[i]
            trace[i] = (op, given[int(rng.integers(0, len(given)))], value)
        return trace

    gold_ops = set(problem.operations[first:])
    avoid = gold_ops if quality == PlanQuality.WRONG else ()
    for i in editable:
        op, operand, value = trace[i]
        trace[i] = (_swap_op(op, avoid, rng), operand, value)
    return trace


# Rendering per family and format

def _chain_plan(trace: Sequence[TraceStep], fmt: PlanFormat, modulus: int) -> str:
    ops = [step[0] for step in trace]
    operands = [str(step[1]) for step in trace]
    if fmt == PlanFormat.STRATEGY:
        return f"apply {' then '.join(ops)} in order and reduce mod {modulus} after each step ."
    if fmt == PlanFormat.OUTLINE:
        return " ; ".join(f"step {i} : apply {op}" for i, op in enumerate(ops, start=1)) + " ."
    if fmt == PlanFormat.CONSTRAINTS:
        return (f"operands {' , '.join(operands)} . "
                f"pitfall : reduce mod {modulus} after every step not only at the end .")
    steps = " then ".join(f"{op} {arg}" for op, arg in zip(ops, operands))
    return f"reduce mod {modulus} after each step . apply {steps} ."


def _countdown_plan(trace: Sequence[TraceStep], fmt: PlanFormat) -> str:
    (_, x, _), (op1, y, _), (op2, z, _) = trace
    if fmt == PlanFormat.STRATEGY:
        return f"combine the first pair with {op1} then {op2} the result with the last number ."
    if fmt == PlanFormat.OUTLINE:
        return f"step 1 : {op1} a pair ; step 2 : {op2} the result with the remaining number ."
    if fmt == PlanFormat.CONSTRAINTS:
        return f"use {x} , {y} , {z} exactly once each . pitfall : never go under 0 ."
    return f"use each number once . start with {x} then {op1} {y} then {op2} {z} ."


def _latin_plan(trace: Sequence[TraceStep], fmt: PlanFormat) -> str:
    cells = [str(step[1]) for step in trace]
    if fmt == PlanFormat.STRATEGY:
        return "fill each blank with the value missing from its row and column in order ."
    if fmt == PlanFormat.OUTLINE:
        return " ; ".join(f"step {i} : fill cell {c}" for i, c in enumerate(cells, start=1)) + " ."
    if fmt == PlanFormat.CONSTRAINTS:
        return ("each row and column holds 1 , 2 , 3 , 4 exactly once . "
                "pitfall : check the column not only the row .")
    return (f"fill cell {' then cell '.join(cells)} in order . "
            "each row and column holds every value exactly once .")


def render_plan(problem: Problem, trace: Sequence[TraceStep], fmt: PlanFormat) -> str:
    fmt = PlanFormat(fmt)
    if problem.family == TaskFamily.CHAIN_ARITHMETIC:
        return _chain_plan(trace, fmt, parse_chain(problem.text)[2])
    if problem.family == TaskFamily.COUNTDOWN_STYLE:
        return _countdown_plan(trace, fmt)
    return _latin_plan(trace, fmt)


# Budget enforcement

def strip_trailing_answer(ids: List[int], answer: int, vocab: Vocab) -> List[int]:
    """Drop a trailing number literal equal to the answer (a final "." is ignored)."""
    end = len(ids)
    period = vocab.index.get(".")
    if end and ids[end - 1] == period:
        end -= 1
    start = end
    while start > 0 and vocab.is_numeral(ids[start - 1]):
        start -= 1
    if start < end and int(vocab.decode(ids[start:end]).replace(" ", "")) == answer:
        return ids[:start] + ids[end:]
    return ids


def enforce_budget(text: str, budget: int, vocab: Vocab,
                   answer: Optional[int] = None) -> List[int]:
    """Encode, remove the answer mark, truncate to budget at token granularity."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    ids = [i for i in vocab.encode(text) if i != vocab.answer_mark_id][:budget]
    if answer is not None:
        ids = strip_trailing_answer(ids, answer, vocab)
    return ids


def oracle_plan(problem: Problem, format: PlanFormat, budget: int,
                quality: PlanQuality = PlanQuality.FRONTIER,
                rng: Optional[np.random.Generator] = None,
                vocab: Optional[Vocab] = None) -> PlanRecord:
    """Render a plan of the requested format and quality, truncated to budget."""
    vocab = vocab or default_vocab()
    quality = PlanQuality(quality)
    fmt = PlanFormat(format)
    if not problem.gold_trace:
        raise ValueError(f"Problem {problem.id} has no gold trace")
    if rng is None:
        rng = problem_rng(problem.id, quality.value)

    trace = degrade_trace(problem, quality, rng)
    text = render_plan(problem, trace, fmt)
    ids = enforce_budget(text, budget, vocab, answer=problem.gold_answer)
    return PlanRecord(
        problem_id=problem.id,
        planner_id=oracle_planner_id(quality),
        format=fmt,
        budget=budget,
        text=vocab.decode(ids),
        token_count=len(ids),
        quality=quality,
    )
