"""
Data models for region-labelled sequences and their masking state.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

from app.errors import ShapeMismatch


class Region(str, Enum):
    """Template segment a sequence position belongs to."""
    SYSTEM = "system"
    PROBLEM = "problem"
    PLAN_HEADER = "plan_header"
    PLAN = "plan"
    SOLUTION_MARKER = "solution_marker"
    COMPLETION = "completion"


# Buckets used by attention analysis: everything frozen that is not plan.
PROMPT_REGIONS = (Region.SYSTEM, Region.PROBLEM, Region.PLAN_HEADER, Region.SOLUTION_MARKER)


@dataclass(frozen=True)
class LayoutSequence:
    """Token ids with per-position region labels and frozen flags."""
    ids: Tuple[int, ...]
    regions: Tuple[Region, ...]
    frozen: Tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.regions) == len(self.frozen)):
            raise ShapeMismatch(
                "ids, regions and frozen must have the same length",
                ids=len(self.ids), regions=len(self.regions), frozen=len(self.frozen))
        for i, (region, frozen) in enumerate(zip(self.regions, self.frozen)):
            if frozen != (region != Region.COMPLETION):
                raise ShapeMismatch("frozen flag disagrees with region", position=i)
        completion = self.positions(Region.COMPLETION)
        if completion and completion != list(range(len(self.ids) - len(completion), len(self.ids))):
            raise ShapeMismatch("completion positions must be contiguous and final")

    def __len__(self) -> int:
        return len(self.ids)

    def positions(self, region: Region) -> List[int]:
        return [i for i, r in enumerate(self.regions) if r == region]

    @property
    def completion_positions(self) -> List[int]:
        return self.positions(Region.COMPLETION)

    @property
    def completion_start(self) -> int:
        return len(self.ids) - len(self.completion_positions)

    def region_lengths(self) -> Dict[Region, int]:
        """Token count per region; the counts sum to the sequence length."""
        lengths = {region: 0 for region in Region}
        for region in self.regions:
            lengths[region] += 1
        return lengths

    def with_completion(self, completion_ids: List[int]) -> "LayoutSequence":
        """Return a copy whose Completion region holds the given ids."""
        start = self.completion_start
        if len(completion_ids) != len(self.ids) - start:
            raise ShapeMismatch("completion length mismatch",
                                expected=len(self.ids) - start, got=len(completion_ids))
        return LayoutSequence(
            ids=tuple(self.ids[:start]) + tuple(int(i) for i in completion_ids),
            regions=self.regions,
            frozen=self.frozen,
        )

    def to_dict(self) -> Dict[str, list]:
        return {
            "ids": list(self.ids),
            "regions": [r.value for r in self.regions],
            "frozen": list(self.frozen),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "LayoutSequence":
        return cls(
            ids=tuple(int(i) for i in data["ids"]),
            regions=tuple(Region(r) for r in data["regions"]),
            frozen=tuple(bool(f) for f in data["frozen"]),
        )


@dataclass(frozen=True)
class MaskState:
    """Which positions are masked, and the noise level that produced them."""
    masked: Tuple[bool, ...]
    t: float

    @property
    def masked_positions(self) -> List[int]:
        return [i for i, m in enumerate(self.masked) if m]

    @property
    def n_masked(self) -> int:
        return sum(self.masked)
