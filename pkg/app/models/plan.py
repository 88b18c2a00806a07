"""
Data models for plans and the planner endpoint.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

PLAN_SCHEMA = 1


class PlanFormat(str, Enum):
    STRATEGY = "strategy"
    OUTLINE = "outline"
    CONSTRAINTS = "constraints"
    HYBRID = "hybrid"


class Ablation(str, Enum):
    NONE = "none"
    SHUFFLED = "shuffled"
    RANDOM_TOKENS = "random_tokens"
    PERTURBED_NUMBERS = "perturbed_numbers"
    MISMATCHED = "mismatched"
    WRONG_STRATEGY = "wrong_strategy"


class PlanQuality(str, Enum):
    """Quality ladder of the oracle planner."""
    FRONTIER = "frontier"
    DEGRADED = "degraded"
    WRONG = "wrong"


# (problem_id, planner_id, format, budget, ablation)
PlanKey = Tuple[str, str, str, int, str]


@dataclass(frozen=True)
class PlanRecord:
    """A generated or ablated plan with its provenance."""
    problem_id: str
    planner_id: str
    format: PlanFormat
    budget: int
    text: str
    token_count: int
    ablation: Ablation = Ablation.NONE
    quality: Optional[PlanQuality] = None
    dropped_units: int = 0

    @property
    def key(self) -> PlanKey:
        return (self.problem_id, self.planner_id, self.format.value, self.budget, self.ablation.value)

    def with_text(self, text: str, token_count: int, **changes: Any) -> "PlanRecord":
        return replace(self, text=text, token_count=token_count, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem_id": self.problem_id,
            "planner_id": self.planner_id,
            "format": self.format.value,
            "budget": self.budget,
            "ablation": self.ablation.value,
            "text": self.text,
            "token_count": self.token_count,
            "quality": self.quality.value if self.quality else None,
            "dropped_units": self.dropped_units,
            "schema": PLAN_SCHEMA,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PlanRecord":
        quality = data.get("quality")
        return cls(
            problem_id=str(data["problem_id"]),
            planner_id=str(data["planner_id"]),
            format=PlanFormat(data["format"]),
            budget=int(data["budget"]),
            text=str(data["text"]),
            token_count=int(data["token_count"]),
            ablation=Ablation(data.get("ablation", "none")),
            quality=PlanQuality(quality) if quality else None,
            dropped_units=int(data.get("dropped_units", 0)),
        )


@dataclass
class PlannerEndpointConfig:
    """Chat-completions endpoint used by the external planner."""
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    temperature: float = 0.3
    max_tokens: int = 200
    timeout: float = 30.0
    retries: int = 3
    api_key_env: str = "PLANNER_API_KEY"
    concurrency: int = 4
    replay_path: Optional[str] = None
    record_path: Optional[str] = None
