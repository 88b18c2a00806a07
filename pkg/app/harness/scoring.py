"""
Answer extraction and the result classifiers: leakage, errors, difficulty.
"""

import logging
from collections import Counter
from typing import Dict, List, Optional, Sequence

from app.errors import MisalignedSets
from app.models.plan import Ablation, PlanQuality, PlanRecord
from app.models.problem import Problem
from app.models.result import DifficultyReport, ErrorCategory, LeakageCategory, RunResult
from app.seqcore.vocab import ANSWER_MARK, text_numbers

logger = logging.getLogger(__name__)

PLAN_WRONG_ABLATIONS = (Ablation.MISMATCHED, Ablation.WRONG_STRATEGY)
VALUE_SEPARATORS = (":", "=")


def extract_answer(text: str) -> Optional[int]:
    """The integer literal right after the last answer mark, if any."""
    units = text.split()
    marks = [i for i, unit in enumerate(units) if unit == ANSWER_MARK]
    if not marks:
        return None
    following = marks[-1] + 1
    if following < len(units) and units[following].isdigit() and units[following].isascii():
        return int(units[following])
    return None


def leakage_classify(problem: Problem, plan: Optional[PlanRecord], gold_answer: int) -> LeakageCategory:
    """TrueLeak if the gold number is in the plan but not the problem; FalsePositiveLeak if in both."""
    if plan is None or not plan.text:
        return LeakageCategory.NO_LEAK
    if gold_answer not in text_numbers(plan.text):
        return LeakageCategory.NO_LEAK
    if gold_answer in text_numbers(problem.text):
        return LeakageCategory.FALSE_POSITIVE_LEAK
    return LeakageCategory.TRUE_LEAK


def clause_values(text: str) -> List[int]:
    """Numbers stated as clause results ("step 2 : 7", "3 + 4 = 7"); labels are skipped."""
    units = text.split()
    return [int(unit) for prev, unit in zip(units, units[1:])
            if prev in VALUE_SEPARATORS and unit.isdigit() and unit.isascii()]


def error_classify(result: RunResult, plan_meta: Optional[PlanRecord], gold_answer: int) -> ErrorCategory:
    """Assign exactly one failure category to an incorrect result.

    Checked in order: FormatFailure (the gold number was reached as a clause
    value but the answer mark is missing or points elsewhere), NoAnswer,
    PlanWrong, ExecutionError.
    """
    if result.correct:
        raise ValueError("error_classify applies only to incorrect results")
    if gold_answer in clause_values(result.completion) and result.answer != gold_answer:
        return ErrorCategory.FORMAT_FAILURE
    if result.answer is None:
        return ErrorCategory.NO_ANSWER
    if plan_meta is not None and (plan_meta.quality == PlanQuality.WRONG
                                  or plan_meta.ablation in PLAN_WRONG_ABLATIONS):
        return ErrorCategory.PLAN_WRONG
    return ErrorCategory.EXECUTION_ERROR


def align(baseline: Sequence[RunResult], treated: Sequence[RunResult]) -> List[tuple]:
    """Pair results by problem id; both sets must cover the same problems once each."""
    base = {r.problem_id: r for r in baseline}
    treat = {r.problem_id: r for r in treated}
    if len(base) != len(baseline) or len(treat) != len(treated):
        raise MisalignedSets("duplicate problem ids in a result set")
    if set(base) != set(treat):
        missing = sorted(set(base) ^ set(treat))
        raise MisalignedSets(f"result sets cover different problems ({len(missing)} unmatched)",
                             unmatched=missing[:10])
    return [(base[pid], treat[pid]) for pid in sorted(base)]


def difficulty_breakdown(baseline: Sequence[RunResult], treated: Sequence[RunResult]) -> DifficultyReport:
    pairs = align(baseline, treated)
    baseline_correct = sum(1 for b, _ in pairs if b.correct)
    baseline_incorrect = len(pairs) - baseline_correct
    fixed = sum(1 for b, t in pairs if not b.correct and t.correct)
    broken = sum(1 for b, t in pairs if b.correct and not t.correct)

    if broken:
        ratio = fixed / broken
    else:
        ratio = float("inf") if fixed else None
    return DifficultyReport(
        rescue_rate=fixed / baseline_incorrect if baseline_incorrect else None,
        retention_rate=1.0 - broken / baseline_correct if baseline_correct else None,
        fixed=fixed,
        broken=broken,
        fix_break_ratio=ratio,
        baseline_correct=baseline_correct,
        baseline_incorrect=baseline_incorrect,
    )


def accuracy(results: Sequence[RunResult]) -> Optional[float]:
    if not results:
        return None
    return sum(1 for r in results if r.correct) / len(results)


def leakage_report(treated: Sequence[RunResult],
                   baseline: Optional[Sequence[RunResult]] = None) -> Dict[str, dict]:
    """Counts and accuracy per leakage category.

    With a baseline, also the largest share of the lift that leakage could
    explain: the drop in treated accuracy if every TrueLeak problem scored
    as it did without a plan.
    """
    counts = Counter(r.leakage for r in treated)
    report: Dict[str, dict] = {}
    for category in LeakageCategory:
        members = [r for r in treated if r.leakage == category]
        report[category.value] = {"count": counts.get(category, 0), "accuracy": accuracy(members)}
    if baseline is not None and treated:
        pairs = align(baseline, treated)
        gained = sum(int(t.correct) - int(b.correct) for b, t in pairs
                     if t.leakage == LeakageCategory.TRUE_LEAK)
        report["max_leakage_contribution"] = {"lift": gained / len(pairs)}
    return report


def content_decomposition(baseline: float, random_tokens: float, shuffled: float,
                          frontier: float) -> Dict[str, Optional[float]]:
    """Split the plan lift into extra tokens, domain vocabulary and semantic content.

    Each share is that component's accuracy gain over the total lift; all
    shares are None when there is no lift to split.
    """
    lift = frontier - baseline
    parts = {
        "tokens": random_tokens - baseline,
        "vocabulary": shuffled - random_tokens,
        "semantics": frontier - shuffled,
    }
    result: Dict[str, Optional[float]] = {"lift": lift}
    for name, gain in parts.items():
        result[name] = gain
        result[f"{name}_share"] = gain / lift if lift else None
    return result


def error_breakdown(results: Sequence[RunResult]) -> Dict[str, int]:
    counts = Counter(r.error.value for r in results if not r.correct and r.error is not None)
    return {category.value: counts.get(category.value, 0) for category in ErrorCategory}
