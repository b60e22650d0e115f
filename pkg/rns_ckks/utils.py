"""Utility functions shared by the library and the CLI."""

from functools import lru_cache
from typing import Dict, List, Sequence, Union

import numpy as np


def is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def bit_reverse(value: int, bits: int) -> int:
    """Reverse the lowest ``bits`` bits of ``value``."""
    result = 0
    for _ in range(bits):
        result = (result << 1) | (value & 1)
        value >>= 1
    return result


@lru_cache(maxsize=64)
def bit_reverse_permutation(size: int) -> np.ndarray:
    """Index array ``perm`` with ``perm[i] = bitrev(i)`` for a power-of-two size."""
    bits = size.bit_length() - 1
    perm = np.zeros(size, dtype=np.int64)
    for i in range(size):
        perm[i] = bit_reverse(i, bits)
    perm.setflags(write=False)
    return perm


def format_duration_ms(duration_ms: float) -> str:
    """Format a duration in milliseconds to a readable string."""
    if duration_ms == 0:
        return "0ms"

    seconds = duration_ms / 1000

    if seconds < 1:
        return f"{duration_ms:.3f}ms"
    elif seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = int(seconds // 60)
        remaining_seconds = int(seconds % 60)
        return f"{minutes}m {remaining_seconds}s"
    else:
        hours = int(seconds // 3600)
        remaining_minutes = int((seconds % 3600) // 60)
        return f"{hours}h {remaining_minutes}m"


def safe_divide(numerator: Union[int, float], denominator: Union[int, float], default: float = 0.0) -> float:
    """Safe division that handles division by zero returning default value."""
    if denominator == 0:
        return default
    return numerator / denominator


def create_timing_stats(samples: Sequence[float]) -> Dict[str, float]:
    """Median / p10 / p90 / min / max of wall-time samples (seconds)."""
    if not samples:
        return {"count": 0, "median": 0.0, "p10": 0.0, "p90": 0.0, "min": 0.0, "max": 0.0}

    data = np.asarray(samples, dtype=np.float64)
    return {
        "count": int(data.size),
        "median": float(np.median(data)),
        "p10": float(np.percentile(data, 10)),
        "p90": float(np.percentile(data, 90)),
        "min": float(data.min()),
        "max": float(data.max()),
    }


def chunked(items: Sequence, size: int) -> List[Sequence]:
    """Split ``items`` into consecutive chunks of ``size`` (size <= 0 means one chunk)."""
    if size <= 0 or size >= len(items):
        return [items] if len(items) else []
    return [items[i:i + size] for i in range(0, len(items), size)]


def precision_bits(max_error: float) -> float:
    """Bits of precision corresponding to a max absolute error."""
    if max_error <= 0:
        return float("inf")
    return float(-np.log2(max_error))
