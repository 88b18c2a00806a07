"""
Plan ablations: controls that keep some property of a plan and destroy the rest.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.errors import PoolTooSmall
from app.models.plan import Ablation, PlanRecord
from app.seqcore.vocab import ANSWER_MARK, MASK, PAD, NUMERALS, Vocab, default_vocab

logger = logging.getLogger(__name__)

# Operation words a wrong-strategy ablation swaps between.
STRATEGY_SWAPS = {
    "add": "mul", "sub": "add", "mul": "sub",
    "multiply": "subtract", "subtract": "multiply",
    "plus": "times", "times": "minus", "minus": "plus",
    "sum": "product", "product": "difference", "difference": "sum",
    "row": "column", "column": "row", "rows": "columns", "columns": "rows",
}


def _random_token_pool(vocab: Vocab) -> List[int]:
    banned = {vocab.index[MASK], vocab.index[PAD], vocab.index[ANSWER_MARK]}
    return [i for i in range(len(vocab)) if i not in banned]


def shuffle_tokens(ids: Sequence[int], rng: np.random.Generator) -> List[int]:
    return [int(ids[i]) for i in rng.permutation(len(ids))]


def random_tokens(count: int, vocab: Vocab, rng: np.random.Generator) -> List[int]:
    pool = _random_token_pool(vocab)
    return [pool[int(i)] for i in rng.integers(0, len(pool), size=count)]


def perturb_numbers(ids: Sequence[int], vocab: Vocab, rng: np.random.Generator) -> List[int]:
    """Replace every numeral token by a different numeral; everything else stays put."""
    out = []
    for token_id in ids:
        token = vocab.tokens[token_id]
        if token in NUMERALS:
            choices = [n for n in NUMERALS if n != token]
            token_id = vocab.index[choices[int(rng.integers(0, len(choices)))]]
        out.append(int(token_id))
    return out


def wrong_strategy(ids: Sequence[int], vocab: Vocab) -> List[int]:
    """Substitute each operation word with a different operation."""
    return [vocab.index[STRATEGY_SWAPS[vocab.tokens[i]]] if vocab.tokens[i] in STRATEGY_SWAPS
            else int(i) for i in ids]


def ablate_plan(plan: PlanRecord, kind: Ablation, rng: np.random.Generator,
                plan_pool: Optional[Sequence[PlanRecord]] = None,
                vocab: Optional[Vocab] = None) -> PlanRecord:
    """
    Apply one ablation to a plan.

    Mismatched needs the pool the plan belongs to; it returns the plan the
    derangement assigns to this plan's problem.
    """
    vocab = vocab or default_vocab()
    kind = Ablation(kind)
    if kind == Ablation.NONE:
        return plan
    if kind == Ablation.MISMATCHED:
        if plan_pool is None:
            raise PoolTooSmall("mismatched ablation needs a plan pool")
        assigned = mismatch_pool(plan_pool, rng)
        if plan.problem_id not in assigned:
            raise PoolTooSmall(f"problem {plan.problem_id} is not in the plan pool")
        return assigned[plan.problem_id]

    ids = vocab.encode(plan.text)
    if kind == Ablation.SHUFFLED:
        ids = shuffle_tokens(ids, rng)
    elif kind == Ablation.RANDOM_TOKENS:
        ids = random_tokens(plan.token_count, vocab, rng)
    elif kind == Ablation.PERTURBED_NUMBERS:
        ids = perturb_numbers(ids, vocab, rng)
    elif kind == Ablation.WRONG_STRATEGY:
        ids = wrong_strategy(ids, vocab)
    return _record(plan, ids, kind, vocab)


def _record(plan: PlanRecord, ids: List[int], kind: Ablation, vocab: Vocab) -> PlanRecord:
    return plan.with_text(vocab.decode(ids), len(ids), ablation=kind)


def mismatch_pool(plans: Sequence[PlanRecord], rng: np.random.Generator) -> Dict[str, PlanRecord]:
    """Assign each problem another problem's plan via a uniform cyclic derangement."""
    if len({p.problem_id for p in plans}) < 2 or len(plans) < 2:
        raise PoolTooSmall(f"mismatched ablation needs at least 2 problems, got {len(plans)}")
    ordered = sorted(plans, key=lambda p: p.problem_id)
    n = len(ordered)
    # Sattolo's algorithm yields a single n-cycle, so no fixed points
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    assigned = {}
    for i, plan in enumerate(ordered):
        donor = ordered[perm[i]]
        assigned[plan.problem_id] = donor.with_text(donor.text, donor.token_count,
                                                    problem_id=plan.problem_id,
                                                    ablation=Ablation.MISMATCHED)
    logger.debug(f"Deranged {n} plans for the mismatched control")
    return assigned
