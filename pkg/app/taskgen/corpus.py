"""
JSONL corpus files: one problem per line, schema versioned.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from app.models.config import DataConfig
from app.models.problem import CORPUS_SCHEMA, Problem, TaskFamily
from app.taskgen.generators import (
    CHAIN_DIFFICULTIES, COUNTDOWN_DIFFICULTY, LATIN_DIFFICULTIES, gen_problems, split_by_hash,
)
from app.utils.export import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)


def write_corpus(problems: List[Problem], path: Union[str, Path]) -> Path:
    written = write_jsonl(problems, path)
    logger.info(f"Wrote {len(problems)} problems to {path}")
    return written


def read_corpus(path: Union[str, Path]) -> List[Problem]:
    """Read a corpus; ParseError carries the offending line number."""
    return read_jsonl(path, parse=Problem.from_dict, schema=CORPUS_SCHEMA)


def corpus_io(problems_or_path: Union[List[Problem], str, Path],
              path: Union[str, Path, None] = None):
    """Write problems to path, or read problems from a path."""
    if isinstance(problems_or_path, (str, Path)):
        return read_corpus(problems_or_path)
    if path is None:
        raise ValueError("a destination path is required when writing a corpus")
    return write_corpus(problems_or_path, path)


def _cell_difficulties(family: TaskFamily, difficulties: Sequence[int]) -> List[int]:
    if family == TaskFamily.COUNTDOWN_STYLE:
        return [COUNTDOWN_DIFFICULTY]
    valid = [d for d in difficulties if d in (CHAIN_DIFFICULTIES if family == TaskFamily.CHAIN_ARITHMETIC
                                               else LATIN_DIFFICULTIES)]
    if len(valid) < len(difficulties):
        logger.warning(f"Skipping difficulties outside the {family.value} range: "
                       f"{sorted(set(difficulties) - set(valid))}")
    return valid


def build_splits(data: DataConfig, seed: int) -> Tuple[List[Problem], List[Problem]]:
    """
    Train and test corpora drawn from shared per-(family, difficulty) pools.

    Each pool is split by id hash, so no problem lands in both corpora.
    Test problems are capped at data.test_problems per family.
    """
    pool_size = max(
        math.ceil(data.train_problems / max(1, len(data.train_difficulties))),
        math.ceil(data.test_problems / max(1, len(data.test_difficulties)) / max(data.test_fraction, 1e-6)),
    )
    pools: Dict[Tuple[TaskFamily, int], Tuple[List[Problem], List[Problem]]] = {}

    def pool(family: TaskFamily, difficulty: int):
        if (family, difficulty) not in pools:
            problems = gen_problems(family, difficulty, pool_size, seed)
            pools[(family, difficulty)] = split_by_hash(problems, data.test_fraction)
        return pools[(family, difficulty)]

    train: List[Problem] = []
    for family in map(TaskFamily, data.train_families):
        for difficulty in _cell_difficulties(family, data.train_difficulties):
            train.extend(pool(family, difficulty)[0])

    test: List[Problem] = []
    for family in map(TaskFamily, data.test_families):
        held_out = [p for d in _cell_difficulties(family, data.test_difficulties) for p in pool(family, d)[1]]
        # interleave difficulties so the cap keeps every level represented
        held_out.sort(key=lambda p: (int(p.id.rsplit("-", 1)[1]), p.difficulty))
        test.extend(held_out[:data.test_problems])
    logger.info(f"Built {len(train)} train and {len(test)} test problems")
    return train, test
