"""
System prompts sent to external planners, one per plan format.

Bump PROMPT_VERSION whenever a prompt changes; it is recorded with every
external plan request so cached plans can be traced to their prompt.
"""

from app.models.plan import PlanFormat
from app.models.problem import Problem

PROMPT_VERSION = 1

_COMMON = (
    "You write a short plan for a solver that will then work the problem out. "
    "Never state the final answer and never write '####'. "
    "Use only lowercase words, digits and simple punctuation. "
    "Stay within {budget} words."
)

FORMAT_PROMPTS = {
    PlanFormat.STRATEGY: "Describe the high-level approach in one or two sentences.",
    PlanFormat.OUTLINE: "List numbered steps naming each operation, without computing any values.",
    PlanFormat.CONSTRAINTS: "List the key values and constraints and one pitfall to avoid, "
                            "without a procedure.",
    PlanFormat.HYBRID: "Give one strategy sentence followed by the key values to use.",
}


def system_prompt(fmt: PlanFormat, budget: int) -> str:
    return f"{_COMMON.format(budget=budget)} {FORMAT_PROMPTS[PlanFormat(fmt)]}"


def planner_messages(problem: Problem, fmt: PlanFormat, budget: int):
    """Chat messages for one plan request; the gold answer is never included."""
    return [
        {"role": "system", "content": system_prompt(fmt, budget)},
        {"role": "user", "content": problem.text},
    ]
