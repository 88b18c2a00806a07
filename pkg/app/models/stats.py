"""
Data models for statistics and attention analysis outputs.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class PairedOutcome:
    problem_id: str
    a_correct: bool
    b_correct: bool


@dataclass(frozen=True)
class StatResult:
    """Paired difference b - a in percentage points with a percentile CI."""
    delta: float
    ci_low: float
    ci_high: float
    p_value: float
    resamples: int
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "resamples": self.resamples,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SeedAggregate:
    mean: float
    sd: float
    seeds: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean, "sd": self.sd, "seeds": list(self.seeds)}


@dataclass(frozen=True)
class ShareCell:
    """Attention shares from Completion queries for one (step, layer)."""
    step: int
    layer: int
    plan: float
    prompt: float
    completion: float
    excess_ratio: Optional[float]

    def to_csv_row(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "layer": self.layer,
            "plan_share": f"{self.plan:.6f}",
            "prompt_share": f"{self.prompt:.6f}",
            "completion_share": f"{self.completion:.6f}",
            "excess_ratio": "n/a" if self.excess_ratio is None else f"{self.excess_ratio:.6f}",
        }


@dataclass(frozen=True)
class AttentionShares:
    """Per (step, layer) attention shares plus the uniform baselines."""
    cells: List[ShareCell]
    plan_fraction: float
    prompt_fraction: float
    completion_fraction: float

    @property
    def steps(self) -> List[int]:
        return sorted({cell.step for cell in self.cells})

    @property
    def layers(self) -> List[int]:
        return sorted({cell.layer for cell in self.cells})

    def cell(self, step: int, layer: int) -> ShareCell:
        for c in self.cells:
            if c.step == step and c.layer == layer:
                return c
        raise KeyError((step, layer))
