"""
Paired significance tests and multi-seed aggregation.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from app.errors import TooFewOutcomes, TooFewSeeds
from app.harness.scoring import align
from app.models.result import RunResult
from app.models.stats import PairedOutcome, SeedAggregate, StatResult

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 10_000
CHUNK = 1_000


def paired_outcomes(a: Sequence[RunResult], b: Sequence[RunResult]) -> List[PairedOutcome]:
    """Pair two result sets by problem id."""
    return [PairedOutcome(ra.problem_id, ra.correct, rb.correct) for ra, rb in align(a, b)]


def paired_bootstrap(outcomes: Sequence[PairedOutcome], resamples: int = DEFAULT_RESAMPLES,
                     seed: int = 0) -> StatResult:
    """
    Percentile bootstrap of accuracy(b) - accuracy(a), in percentage points.

    Problems are resampled with replacement. The two-sided p-value is twice
    the smaller tail mass at zero, clamped to [2 / resamples, 1]; the CI is
    widened if needed so it always contains the point estimate.
    """
    n = len(outcomes)
    if n < 2:
        raise TooFewOutcomes(f"paired bootstrap needs at least 2 outcomes, got {n}", n=n)
    if resamples < 1:
        raise ValueError("resamples must be positive")
    diff = np.array([int(o.b_correct) - int(o.a_correct) for o in outcomes], dtype=np.float64)
    delta = float(diff.mean() * 100.0)

    rng = np.random.default_rng(seed)
    deltas = np.empty(resamples)
    for start in range(0, resamples, CHUNK):
        size = min(CHUNK, resamples - start)
        idx = rng.integers(0, n, size=(size, n))
        deltas[start:start + size] = diff[idx].mean(axis=1) * 100.0

    ci_low, ci_high = (float(x) for x in np.percentile(deltas, [2.5, 97.5]))
    tail = min(float(np.mean(deltas <= 0.0)), float(np.mean(deltas >= 0.0)))
    p_value = min(1.0, max(2.0 / resamples, 2.0 * tail))
    result = StatResult(delta=delta, ci_low=min(ci_low, delta), ci_high=max(ci_high, delta),
                        p_value=p_value, resamples=resamples, seed=seed)
    logger.debug(f"Bootstrap over {n} pairs: delta {delta:+.2f}pp, p={p_value:.4g}")
    return result


def mcnemar_exact(fixed: int, broken: int) -> float:
    """Exact two-sided McNemar p-value on the discordant pairs."""
    if fixed < 0 or broken < 0:
        raise ValueError("discordant counts must be non-negative")
    n = fixed + broken
    if n == 0:
        return 1.0
    return float(binomtest(min(fixed, broken), n, 0.5, alternative="two-sided").pvalue)


def discordant_counts(outcomes: Sequence[PairedOutcome]):
    """(fixed, broken): pairs only b got right, pairs only a got right."""
    fixed = sum(1 for o in outcomes if o.b_correct and not o.a_correct)
    broken = sum(1 for o in outcomes if o.a_correct and not o.b_correct)
    return fixed, broken


def multiseed(values: Sequence[float], seeds: Optional[Sequence[int]] = None) -> SeedAggregate:
    """Mean and sample standard deviation (n - 1) across seeds."""
    if len(values) < 2:
        raise TooFewSeeds(f"multi-seed aggregation needs at least 2 seeds, got {len(values)}",
                          n=len(values))
    values = [float(v) for v in values]
    seeds = list(seeds) if seeds is not None else []
    if all(v == values[0] for v in values):
        return SeedAggregate(mean=values[0], sd=0.0, seeds=seeds)
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return SeedAggregate(mean=mean, sd=math.sqrt(variance), seeds=seeds)
