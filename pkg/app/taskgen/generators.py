"""
Synthetic benchmark families with gold traces.

ChainArithmetic stands in for sequential multi-step word problems,
CountdownStyle for combinatorial search over three numbers, and
LatinSquare (4x4) for spatial constraint propagation.
"""

import hashlib
import logging
from typing import List, Optional, Tuple

import numpy as np

from app.errors import InvalidDifficulty
from app.models.problem import Problem, TaskFamily
from app.taskgen.solver import (
    GRID_SIZE, MODULUS, OPERATIONS, apply_op, gold_solve, latin_completions,
)

logger = logging.getLogger(__name__)

CHAIN_DIFFICULTIES = range(2, 9)
COUNTDOWN_DIFFICULTY = 2
LATIN_DIFFICULTIES = range(1, 9)

MAX_ATTEMPTS_PER_PROBLEM = 1000


def family_rng(family: TaskFamily, difficulty: int, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{family.value}:{difficulty}:{seed}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _chain_text(rng: np.random.Generator, k: int) -> str:
    clauses = [f"start {int(rng.integers(0, MODULUS))}"]
    for _ in range(k):
        op = OPERATIONS[int(rng.integers(0, len(OPERATIONS)))]
        clauses.append(f"{op} {int(rng.integers(1, 10))}")
    clauses.append(f"mod {MODULUS}")
    return " ; ".join(clauses) + " ?"


def _countdown_text(rng: np.random.Generator) -> Optional[str]:
    numbers = [int(x) for x in rng.integers(1, 10, size=3)]
    op1, op2 = (OPERATIONS[int(i)] for i in rng.integers(0, len(OPERATIONS), size=2))
    first = apply_op(op1, numbers[0], numbers[1])
    if first < 0:
        return None
    target = apply_op(op2, first, numbers[2])
    if target <= 0:
        return None
    shown = [numbers[int(i)] for i in rng.permutation(3)]
    return f"numbers {shown[0]} , {shown[1]} , {shown[2]} ; target {target} ?"


def _random_latin_square(rng: np.random.Generator) -> List[List[int]]:
    base = [[(r + c) % GRID_SIZE for c in range(GRID_SIZE)] for r in range(GRID_SIZE)]
    rows = rng.permutation(GRID_SIZE)
    cols = rng.permutation(GRID_SIZE)
    symbols = rng.permutation(GRID_SIZE) + 1
    return [[int(symbols[base[r][c]]) for c in cols] for r in rows]


def _latin_text(rng: np.random.Generator, blanks: int) -> Optional[str]:
    square = _random_latin_square(rng)
    holes = set(int(i) for i in rng.choice(GRID_SIZE * GRID_SIZE, size=blanks, replace=False))
    grid = [[None if r * GRID_SIZE + c in holes else square[r][c] for c in range(GRID_SIZE)]
            for r in range(GRID_SIZE)]
    if len(latin_completions(grid)) != 1:
        return None
    rows = [" , ".join("_" if v is None else str(v) for v in row) for row in grid]
    return "grid " + " / ".join(rows) + " ?"


def validate_difficulty(family: TaskFamily, difficulty: Optional[int]) -> int:
    if family == TaskFamily.COUNTDOWN_STYLE:
        if difficulty not in (None, COUNTDOWN_DIFFICULTY):
            raise InvalidDifficulty(
                f"CountdownStyle combines exactly 3 numbers (difficulty {COUNTDOWN_DIFFICULTY})",
                family=family.value, difficulty=difficulty)
        return COUNTDOWN_DIFFICULTY
    allowed = CHAIN_DIFFICULTIES if family == TaskFamily.CHAIN_ARITHMETIC else LATIN_DIFFICULTIES
    if difficulty not in allowed:
        raise InvalidDifficulty(
            f"{family.value} difficulty must lie in [{allowed.start}, {allowed.stop - 1}]",
            family=family.value, difficulty=difficulty)
    return difficulty


def gen_problems(family: TaskFamily, difficulty: Optional[int], n: int, seed: int) -> List[Problem]:
    """Generate n distinct problems, deterministic in (family, difficulty, n, seed)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    family = TaskFamily(family)
    difficulty = validate_difficulty(family, difficulty)
    rng = family_rng(family, difficulty, seed)

    problems: List[Problem] = []
    seen = set()
    attempts = 0
    while len(problems) < n:
        attempts += 1
        if attempts > n * MAX_ATTEMPTS_PER_PROBLEM:
            raise InvalidDifficulty(
                f"Could not find {n} distinct {family.value} problems at difficulty {difficulty}",
                family=family.value, difficulty=difficulty, n=n)
        if family == TaskFamily.CHAIN_ARITHMETIC:
            text = _chain_text(rng, difficulty)
        elif family == TaskFamily.COUNTDOWN_STYLE:
            text = _countdown_text(rng)
        else:
            text = _latin_text(rng, difficulty)
        if text is None or text in seen:
            continue
        seen.add(text)
        draft = Problem(
            id=f"{family.value}-k{difficulty}-n{n}-s{seed}-{len(problems):05d}",
            family=family,
            difficulty=difficulty,
            text=text,
            gold_answer=0,
        )
        trace, answer = gold_solve(draft)
        problems.append(Problem(
            id=draft.id,
            family=family,
            difficulty=difficulty,
            text=text,
            gold_answer=answer,
            gold_trace=tuple(trace),
        ))

    logger.debug(f"Generated {n} {family.value} problems (k={difficulty}, seed={seed})")
    return problems


def split_by_hash(problems: List[Problem], test_fraction: float) -> Tuple[List[Problem], List[Problem]]:
    """Stable train/test split keyed on a hash of each problem id."""
    train, test = [], []
    for problem in problems:
        bucket = int(hashlib.sha256(problem.id.encode()).hexdigest()[:8], 16) / 0xFFFFFFFF
        (test if bucket < test_fraction else train).append(problem)
    return train, test
