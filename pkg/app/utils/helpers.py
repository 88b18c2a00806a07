"""
Utility functions shared across the lab: seeding and number formatting.
"""

import hashlib
import subprocess
from functools import lru_cache
from typing import Any, Optional

import numpy as np

CODE_VERSION = "0.1.0"


# Seeding utilities
def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from arbitrary parts, independent of call order elsewhere."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derived_rng(*parts: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


@lru_cache(maxsize=1)
def code_version() -> str:
    """Package version plus the git revision when available."""
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, check=True).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{CODE_VERSION}+{rev}" if rev else CODE_VERSION


# Formatting utilities
def format_pct(value: Optional[float], decimal_places: int = 1) -> str:
    """Format a fraction as a percentage."""
    if value is None:
        return "n/a"
    return f"{value * 100:.{decimal_places}f}%"


def format_pp(delta: Optional[float], decimal_places: int = 1) -> str:
    """Format a difference in percentage points with an explicit sign."""
    if delta is None:
        return "n/a"
    return f"{delta:+.{decimal_places}f}pp"


def format_ratio(ratio: Optional[float], decimal_places: int = 1) -> str:
    if ratio is None:
        return "n/a"
    if ratio == float("inf"):
        return "inf"
    return f"{ratio:.{decimal_places}f}:1"


def format_float(value: Optional[float], decimal_places: int = 3) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{decimal_places}f}"


def get_color_for_change(change: Optional[float]) -> str:
    """Get color based on the sign of a change."""
    if change is None:
        return "white"
    if change > 0:
        return "green"
    elif change < 0:
        return "red"
    return "white"
