"""
Data models for experimental conditions and their per-problem outcomes.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

RESULT_SCHEMA = 1


class LeakageCategory(str, Enum):
    NO_LEAK = "no_leak"
    FALSE_POSITIVE_LEAK = "false_positive_leak"
    TRUE_LEAK = "true_leak"


class ErrorCategory(str, Enum):
    EXECUTION_ERROR = "execution_error"
    FORMAT_FAILURE = "format_failure"
    PLAN_WRONG = "plan_wrong"
    NO_ANSWER = "no_answer"


class RemaskStrategy(str, Enum):
    LOW_CONFIDENCE = "low_confidence"
    RANDOM = "random"


@dataclass(frozen=True)
class Condition:
    """One cell of the experiment grid.

    A bare condition has no planner, format or budget. Compute-matched
    controls are bare conditions with a larger gen_len or more steps.
    """
    gen_len: int
    steps: int
    seed: int
    planner_id: Optional[str] = None
    format: Optional[str] = None
    budget: Optional[int] = None
    ablation: str = "none"
    remask_strategy: RemaskStrategy = RemaskStrategy.LOW_CONFIDENCE
    temperature: float = 0.0

    def __post_init__(self):
        if self.planner_id is None and (self.format is not None or self.budget is not None):
            raise ValueError("bare conditions carry no format or budget")
        if self.planner_id is not None and (self.format is None or self.budget is None):
            raise ValueError("plan conditions need a format and a budget")

    @property
    def is_bare(self) -> bool:
        return self.planner_id is None

    @property
    def id(self) -> str:
        plan = "bare" if self.is_bare else f"{self.planner_id}-{self.format}-b{self.budget}-{self.ablation}"
        return f"{plan}-g{self.gen_len}-t{self.steps}-{self.remask_strategy.value}-s{self.seed}"

    def plan_key(self, problem_id: str):
        if self.is_bare:
            return None
        return (problem_id, self.planner_id, self.format, self.budget, self.ablation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gen_len": self.gen_len,
            "steps": self.steps,
            "seed": self.seed,
            "planner_id": self.planner_id,
            "format": self.format,
            "budget": self.budget,
            "ablation": self.ablation,
            "remask_strategy": self.remask_strategy.value,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Condition":
        return cls(
            gen_len=int(data["gen_len"]),
            steps=int(data["steps"]),
            seed=int(data["seed"]),
            planner_id=data.get("planner_id"),
            format=data.get("format"),
            budget=data.get("budget"),
            ablation=data.get("ablation", "none"),
            remask_strategy=RemaskStrategy(data.get("remask_strategy", "low_confidence")),
            temperature=float(data.get("temperature", 0.0)),
        )


@dataclass(frozen=True)
class RunResult:
    """Outcome of one problem under one condition."""
    problem_id: str
    condition: str
    completion: str
    answer: Optional[int]
    correct: bool
    leakage: LeakageCategory
    error: Optional[ErrorCategory] = None
    plan_key: Optional[List[Any]] = None
    trace_ref: Optional[str] = None
    family: Optional[str] = None
    difficulty: Optional[int] = None
    config_hash: Optional[str] = None
    code_version: Optional[str] = None

    def __post_init__(self):
        if self.correct and self.answer is None:
            raise ValueError("a correct result must carry an extracted answer")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem_id": self.problem_id,
            "condition": self.condition,
            "completion": self.completion,
            "answer": self.answer,
            "correct": self.correct,
            "leakage": self.leakage.value,
            "error": self.error.value if self.error else None,
            "plan_key": list(self.plan_key) if self.plan_key else None,
            "trace_ref": self.trace_ref,
            "family": self.family,
            "difficulty": self.difficulty,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "schema": RESULT_SCHEMA,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunResult":
        return cls(
            problem_id=data["problem_id"],
            condition=data["condition"],
            completion=data.get("completion", ""),
            answer=data.get("answer"),
            correct=bool(data["correct"]),
            leakage=LeakageCategory(data["leakage"]),
            error=ErrorCategory(data["error"]) if data.get("error") else None,
            plan_key=data.get("plan_key"),
            trace_ref=data.get("trace_ref"),
            family=data.get("family"),
            difficulty=data.get("difficulty"),
            config_hash=data.get("config_hash"),
            code_version=data.get("code_version"),
        )


@dataclass(frozen=True)
class DifficultyReport:
    """How plans redistribute baseline successes and failures.

    Rates are None when their denominator is empty; fix_break_ratio is
    None for 0:0 and infinity when nothing broke.
    """
    rescue_rate: Optional[float]
    retention_rate: Optional[float]
    fixed: int
    broken: int
    fix_break_ratio: Optional[float]
    baseline_correct: int
    baseline_incorrect: int

    def to_dict(self) -> Dict[str, Any]:
        ratio = self.fix_break_ratio
        return {
            "rescue_rate": self.rescue_rate,
            "retention_rate": self.retention_rate,
            "fixed": self.fixed,
            "broken": self.broken,
            "fix_break_ratio": "inf" if ratio == float("inf") else ratio,
            "baseline_correct": self.baseline_correct,
            "baseline_incorrect": self.baseline_incorrect,
        }
