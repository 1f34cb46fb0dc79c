"""Number and timestamp text formats used in prompts and files."""

from __future__ import annotations

import math
from datetime import datetime

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def parse_timestamp(text: str) -> datetime:
    """Strict inverse of :func:`format_timestamp`."""
    ts = datetime.strptime(text, TIMESTAMP_FORMAT)
    # strptime tolerates single-digit fields ("2013-5-28"); the wire format does not
    if format_timestamp(ts) != text:
        raise ValueError(f"non-canonical timestamp {text!r}")
    return ts


def format_value(value: float, precision: int = 6) -> str:
    """Render ``value`` with at most ``precision`` significant digits.

    Positional notation is used for magnitudes in [1e-4, 1e9); outside that
    range (zero excepted) scientific notation keeps lines short.
    """
    if precision < 1:
        raise ValueError("precision must be >= 1")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot format non-finite value {value!r}")
    if value == 0.0:
        return "0.0"
    mag = abs(value)
    if 1e-4 <= mag < 1e9:
        text = np.format_float_positional(
            value, precision=precision, unique=True, fractional=False, trim="0"
        )
        # rounding can carry into the 1e9 decade, e.g. 999999999.7 at 9 digits
        if abs(float(text)) < 1e9:
            return text
    return np.format_float_scientific(value, precision=precision - 1, unique=True, trim="0")


def round_sig(value: float, precision: int) -> float:
    """Round to ``precision`` significant digits (what :func:`format_value` keeps)."""
    if value == 0.0 or not math.isfinite(value):
        return float(value)
    return float(f"{value:.{precision - 1}e}")
