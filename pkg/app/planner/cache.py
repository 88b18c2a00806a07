"""
Append-only JSONL plan cache keyed by (problem, planner, format, budget, ablation).
"""

import logging
import threading
from pathlib import Path
from typing import Dict, Iterator, Optional, Union

from app.errors import KeyCollisionWithDifferentText
from app.models.plan import PLAN_SCHEMA, PlanKey, PlanRecord
from app.seqcore.vocab import ANSWER_MARK
from app.utils.export import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)


def validate_plan(record: PlanRecord) -> None:
    if record.token_count > record.budget:
        raise ValueError(f"plan for {record.problem_id} has {record.token_count} tokens, "
                         f"over its budget of {record.budget}")
    if ANSWER_MARK in record.text.split():
        raise ValueError(f"plan for {record.problem_id} contains the answer mark")


class PlanCache:
    """Plans on disk, loaded into memory; puts append one line each.

    Reads are lock-free dictionary lookups. Writes go through a single lock
    so concurrent planners never interleave lines.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: Dict[PlanKey, PlanRecord] = {}
        if self.path.exists():
            for record in read_jsonl(self.path, parse=PlanRecord.from_dict, schema=PLAN_SCHEMA):
                self._records[record.key] = record
            logger.debug(f"Loaded {len(self._records)} cached plans from {self.path}")

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: PlanKey) -> bool:
        return tuple(key) in self._records

    def __iter__(self) -> Iterator[PlanRecord]:
        return iter(list(self._records.values()))

    def get(self, key: PlanKey) -> Optional[PlanRecord]:
        return self._records.get(tuple(key))

    def put(self, record: PlanRecord) -> PlanRecord:
        """Store a record; re-putting identical text is a no-op."""
        validate_plan(record)
        with self._lock:
            existing = self._records.get(record.key)
            if existing is not None:
                if existing.text != record.text:
                    raise KeyCollisionWithDifferentText(
                        f"cache already holds a different plan for {record.key}",
                        key=list(record.key))
                return existing
            write_jsonl([record], self.path, append=True)
            self._records[record.key] = record
        return record


def cache(store: PlanCache, op: str, key: PlanKey,
          record: Optional[PlanRecord] = None) -> Optional[PlanRecord]:
    """get returns the cached record or None; put stores and returns the record."""
    if op == "get":
        return store.get(key)
    if op == "put":
        if record is None or record.key != tuple(key):
            raise ValueError("put needs a record whose key matches")
        return store.put(record)
    raise ValueError(f"Unknown cache operation: {op}")
