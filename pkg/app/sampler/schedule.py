"""
How many positions to unmask per step, and which ones.
"""

import math
from typing import List, Sequence

import numpy as np

from app.models.result import RemaskStrategy


def unmask_schedule(gen_len: int, steps: int) -> List[int]:
    """Per-step unmask counts: step s reveals ceil(remaining / steps_left).

    >>> unmask_schedule(7, 4)
    [2, 2, 2, 1]
    """
    if gen_len < 1 or steps < 1:
        raise ValueError("gen_len and steps must both be at least 1")
    counts = []
    remaining = gen_len
    for s in range(steps):
        count = math.ceil(remaining / (steps - s))
        counts.append(count)
        remaining -= count
    return counts


def select_positions(confidences: Sequence[float], count: int, strategy: RemaskStrategy,
                     rng: np.random.Generator) -> List[int]:
    """Indices (into confidences) to unmask this step, in ascending order.

    LowConfidence keeps the most confident predictions, ties going to the
    lowest index. Random draws uniformly without replacement.
    """
    n = len(confidences)
    if count > n:
        raise ValueError(f"cannot select {count} of {n} masked positions")
    if count <= 0:
        return []
    if count == n:
        return list(range(n))
    if RemaskStrategy(strategy) == RemaskStrategy.RANDOM:
        return sorted(int(i) for i in rng.choice(n, size=count, replace=False))
    # stable sort on negated confidence keeps lower indices first among ties
    order = np.argsort(-np.asarray(confidences, dtype=np.float64), kind="stable")
    return sorted(int(i) for i in order[:count])
