"""
Data models for synthetic task instances.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Tuple

CORPUS_SCHEMA = 1


class TaskFamily(str, Enum):
    """Synthetic benchmark families."""
    CHAIN_ARITHMETIC = "chain"
    COUNTDOWN_STYLE = "countdown"
    LATIN_SQUARE = "latin"


# (operation, operand, intermediate value)
TraceStep = Tuple[str, int, int]


@dataclass(frozen=True)
class Problem:
    """A synthetic task instance with its gold trace and answer."""
    id: str
    family: TaskFamily
    difficulty: int
    text: str
    gold_answer: int
    gold_trace: Tuple[TraceStep, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "family": self.family.value,
            "difficulty": self.difficulty,
            "text": self.text,
            "gold_answer": self.gold_answer,
            "gold_trace": [list(step) for step in self.gold_trace],
            "schema": CORPUS_SCHEMA,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Problem":
        return cls(
            id=str(data["id"]),
            family=TaskFamily(data["family"]),
            difficulty=int(data["difficulty"]),
            text=str(data["text"]),
            gold_answer=int(data["gold_answer"]),
            gold_trace=tuple((str(op), int(arg), int(val)) for op, arg, val in data["gold_trace"]),
        )

    @property
    def operations(self) -> List[str]:
        return [step[0] for step in self.gold_trace]
