"""
Gold oracles: parse a problem text, solve it, render and verify solutions.
"""

import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from app.errors import Unsolvable
from app.models.problem import Problem, TaskFamily, TraceStep

logger = logging.getLogger(__name__)

MODULUS = 20
GRID_SIZE = 4

OP_SYMBOLS = {"add": "+", "sub": "-", "mul": "*"}
SYMBOL_OPS = {v: k for k, v in OP_SYMBOLS.items()}
OPERATIONS = tuple(OP_SYMBOLS)


def apply_op(op: str, left: int, right: int) -> int:
    if op == "add":
        return left + right
    if op == "sub":
        return left - right
    if op == "mul":
        return left * right
    raise ValueError(f"Unknown operation: {op}")


# Parsing

def parse_chain(text: str) -> Tuple[int, List[Tuple[str, int]], int]:
    """Return (start, [(op, operand)], modulus) of a chain problem text."""
    clauses = [c.split() for c in text.replace("?", "").split(";") if c.strip()]
    if not clauses or clauses[0][0] != "start" or clauses[-1][0] != "mod":
        raise Unsolvable(f"Malformed chain problem: {text!r}")
    start = int(clauses[0][1])
    modulus = int(clauses[-1][1])
    ops = [(c[0], int(c[1])) for c in clauses[1:-1]]
    return start, ops, modulus


def parse_countdown(text: str) -> Tuple[List[int], int]:
    numbers_part, target_part = text.replace("?", "").split(";")
    numbers = [int(u) for u in numbers_part.split() if u.isdigit()]
    target = int(target_part.split()[-1])
    return numbers, target


def parse_grid(text: str) -> List[List[Optional[int]]]:
    body = text.replace("?", "").replace("grid", "")
    rows = []
    for row in body.split("/"):
        cells = [c.strip() for c in row.split(",")]
        rows.append([None if c == "_" else int(c) for c in cells])
    if len(rows) != GRID_SIZE or any(len(r) != GRID_SIZE for r in rows):
        raise Unsolvable(f"Malformed grid: {text!r}")
    return rows


# Solving

def _solve_chain(problem: Problem) -> Tuple[List[TraceStep], int]:
    value, ops, modulus = parse_chain(problem.text)
    value %= modulus
    trace = []
    for op, operand in ops:
        value = apply_op(op, value, operand) % modulus
        trace.append((op, operand, value))
    if not trace:
        raise Unsolvable("chain problem has no operations")
    return trace, value


def countdown_solutions(numbers: Sequence[int], target: int) -> List[List[TraceStep]]:
    """Every left-fold derivation (x op y) op z reaching the target."""
    found = []
    for perm in itertools.permutations(numbers):
        for op1, op2 in itertools.product(OPERATIONS, repeat=2):
            first = apply_op(op1, perm[0], perm[1])
            if first < 0:
                continue
            final = apply_op(op2, first, perm[2])
            if final == target:
                found.append([("start", perm[0], perm[0]), (op1, perm[1], first), (op2, perm[2], final)])
    return found


def _solve_countdown(problem: Problem) -> Tuple[List[TraceStep], int]:
    numbers, target = parse_countdown(problem.text)
    solutions = countdown_solutions(numbers, target)
    if not solutions:
        raise Unsolvable(f"No expression over {numbers} reaches {target}")
    return solutions[0], target


def latin_completions(grid: List[List[Optional[int]]], limit: int = 2) -> List[List[List[int]]]:
    """Up to `limit` completions of a partially filled Latin square."""
    size = len(grid)
    work = [row[:] for row in grid]
    blanks = [(r, c) for r in range(size) for c in range(size) if work[r][c] is None]
    solutions: List[List[List[int]]] = []

    def search(i: int) -> None:
        if len(solutions) >= limit:
            return
        if i == len(blanks):
            solutions.append([row[:] for row in work])
            return
        r, c = blanks[i]
        used = set(work[r]) | {work[k][c] for k in range(size)}
        for value in range(1, size + 1):
            if value not in used:
                work[r][c] = value
                search(i + 1)
                work[r][c] = None

    search(0)
    return solutions


def _solve_latin(problem: Problem) -> Tuple[List[TraceStep], int]:
    grid = parse_grid(problem.text)
    completions = latin_completions(grid)
    if len(completions) != 1:
        raise Unsolvable(f"Grid has {len(completions)} completions, expected exactly one")
    solved = completions[0]
    trace = []
    for r in range(GRID_SIZE):
        for c in range(GRID_SIZE):
            if grid[r][c] is None:
                trace.append(("fill", r * GRID_SIZE + c, solved[r][c]))
    return trace, latin_answer(trace)


def latin_answer(trace: Sequence[TraceStep]) -> int:
    return int("".join(str(step[2]) for step in trace))


def gold_solve(problem: Problem) -> Tuple[List[TraceStep], int]:
    """Solve a problem from its text alone."""
    if problem.family == TaskFamily.CHAIN_ARITHMETIC:
        return _solve_chain(problem)
    if problem.family == TaskFamily.COUNTDOWN_STYLE:
        return _solve_countdown(problem)
    return _solve_latin(problem)


def replay_trace(problem: Problem) -> int:
    """Recompute the answer by replaying the stored gold trace."""
    trace = problem.gold_trace
    if problem.family == TaskFamily.CHAIN_ARITHMETIC:
        value, _, modulus = parse_chain(problem.text)
        value %= modulus
        for op, operand, _ in trace:
            value = apply_op(op, value, operand) % modulus
        return value
    if problem.family == TaskFamily.COUNTDOWN_STYLE:
        value = trace[0][1]
        for op, operand, _ in trace[1:]:
            value = apply_op(op, value, operand)
        return value
    return latin_answer(trace)


def countdown_expression(trace: Sequence[TraceStep]) -> str:
    """Render a left-fold derivation as '( x op y ) op z'."""
    (_, x, _), (op1, y, _), (op2, z, _) = trace
    return f"( {x} {OP_SYMBOLS[op1]} {y} ) {OP_SYMBOLS[op2]} {z}"


# Solutions the executor is trained to emit

def solution_text(problem: Problem) -> str:
    """Gold completion: one clause per step, then the answer marker."""
    clauses = []
    if problem.family == TaskFamily.CHAIN_ARITHMETIC:
        for i, (_, _, value) in enumerate(problem.gold_trace, start=1):
            clauses.append(f"step {i} : {value}")
    elif problem.family == TaskFamily.COUNTDOWN_STYLE:
        value = problem.gold_trace[0][1]
        for op, operand, result in problem.gold_trace[1:]:
            clauses.append(f"{value} {OP_SYMBOLS[op]} {operand} = {result}")
            value = result
    else:
        for _, cell, value in problem.gold_trace:
            clauses.append(f"cell {cell} : {value}")
    return " ; ".join(clauses) + f" ; #### {problem.gold_answer}"


def verify_countdown_steps(problem: Problem, completion: str) -> bool:
    """Check the emitted derivation uses every given number once and is exact."""
    numbers, target = parse_countdown(problem.text)
    body = completion.rsplit("####", 1)[0]
    available: Dict[int, int] = {}
    for n in numbers:
        available[n] = available.get(n, 0) + 1
    result = None
    for clause in (c.split() for c in body.split(";")):
        if not clause:
            continue
        if len(clause) != 5 or clause[1] not in SYMBOL_OPS or clause[3] != "=":
            return False
        if not (clause[0].isdigit() and clause[2].isdigit() and clause[4].isdigit()):
            return False
        left, right, result = int(clause[0]), int(clause[2]), int(clause[4])
        for operand in (left, right):
            if available.get(operand, 0) < 1:
                return False
            available[operand] -= 1
        if apply_op(SYMBOL_OPS[clause[1]], left, right) != result:
            return False
        available[result] = available.get(result, 0) + 1
    remaining = [n for n, count in available.items() for _ in range(count)]
    return result == target and remaining == [target]


def is_correct(problem: Problem, completion: str, answer: Optional[int]) -> bool:
    if answer is None or answer != problem.gold_answer:
        return False
    if problem.family == TaskFamily.COUNTDOWN_STYLE:
        return verify_countdown_steps(problem, completion)
    return True
