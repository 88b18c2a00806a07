"""
Exception hierarchy for the plan-conditioned diffusion lab.

Library code raises these; only the CLI catches them and turns them into
exit codes and machine-readable error JSON.
"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for every module error."""

    code = "lab_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used by the CLI."""
        return {
            "error": self.code,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


# seqcore

class UnknownToken(LabError):
    code = "unknown_token"

    def __init__(self, unit: str):
        super().__init__(f"Unknown token: {unit!r}", unit=unit)
        self.unit = unit


class OverLength(LabError):
    code = "over_length"

    def __init__(self, length: int, max_len: int):
        super().__init__(f"Sequence length {length} exceeds model max length {max_len}",
                         length=length, max_len=max_len)


# taskgen

class InvalidDifficulty(LabError):
    code = "invalid_difficulty"


class Unsolvable(LabError):
    code = "unsolvable"


class SchemaMismatch(LabError):
    code = "schema_mismatch"


class ParseError(LabError):
    code = "parse_error"

    def __init__(self, message: str, line: int, path: Optional[str] = None):
        super().__init__(f"{message} (line {line})", line=line, path=path)
        self.line = line


# denoiser

class ShapeMismatch(LabError):
    code = "shape_mismatch"


class NoMaskedPositions(LabError):
    code = "no_masked_positions"


class Divergence(LabError):
    code = "divergence"

    def __init__(self, message: str, epoch: int, last_good_params: Any = None,
                 checkpoint: Optional[str] = None):
        super().__init__(message, epoch=epoch, checkpoint=checkpoint)
        self.last_good_params = last_good_params


# planner

class PoolTooSmall(LabError):
    code = "pool_too_small"


class KeyCollisionWithDifferentText(LabError):
    code = "key_collision"


class PlannerTimeout(LabError):
    code = "timeout"


class HttpStatus(LabError):
    code = "http_status"

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"Planner endpoint returned HTTP {status}", status=status, body=body[:500])
        self.status = status


class MalformedResponse(LabError):
    code = "malformed_response"


# harness

class MissingPlan(LabError):
    code = "missing_plan"

    def __init__(self, problem_id: str, key: Any):
        super().__init__(f"No cached plan for problem {problem_id} under key {key}",
                         problem_id=problem_id, key=list(key))


class MisalignedSets(LabError):
    code = "misaligned_sets"


# analysis

class TooFewOutcomes(LabError):
    code = "too_few_outcomes"


class TooFewSeeds(LabError):
    code = "too_few_seeds"


class NoAttentionInTrace(LabError):
    code = "no_attention_in_trace"


# cli / config

class UnknownKey(LabError):
    code = "unknown_key"

    def __init__(self, key_path: str):
        super().__init__(f"Unknown config key: {key_path}", key=key_path)
        self.key_path = key_path


class ConfigTypeError(LabError):
    code = "config_type_error"

    def __init__(self, key_path: str, expected: str, got: Any):
        super().__init__(f"Config key {key_path} expects {expected}, got {type(got).__name__}",
                         key=key_path, expected=expected)
        self.key_path = key_path


class ConfigNotFound(LabError):
    code = "config_not_found"

    def __init__(self, path: str):
        super().__init__(f"Config file not found: {path}", path=path)
        self.path = path
