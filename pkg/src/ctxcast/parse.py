"""Extraction of tag-delimited blocks and forecast bodies from model output."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

from .errors import (
    DuplicateTimestamp,
    MissingAnswerTag,
    MissingCloseTag,
    MissingOpenTag,
    NonFiniteValue,
    TimestampMismatch,
    UnparsableLine,
    UnrecognizedVerdict,
)
from .numfmt import parse_timestamp

_PAIR = re.compile(r"^\(\s*(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2})\s*,\s*([^()]*?)\s*\)$")


@dataclass(frozen=True)
class TaggedBlock:
    tag: str
    body: str
    span: tuple[int, int]


def extract_tagged(text: str, tag: str) -> TaggedBlock:
    """First ``<tag>...</tag>`` block of ``text`` (case-sensitive).

    ``span`` covers the block including its tags. Anything after the closing
    tag is ignored.
    """
    if not tag:
        raise ValueError("tag must be non-empty")
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    start = text.find(open_tag)
    if start < 0:
        raise MissingOpenTag(f"no {open_tag} in output")
    body_start = start + len(open_tag)
    end = text.find(close_tag, body_start)
    if end < 0:
        raise MissingCloseTag(f"{open_tag} at offset {start} is never closed")
    return TaggedBlock(tag=tag, body=text[body_start:end], span=(start, end + len(close_tag)))


def parse_forecast_block(body: str, expected: Sequence[datetime]) -> list[float]:
    """Values of a ``(timestamp, value)`` block, ordered as ``expected``."""
    if not expected:
        raise ValueError("expected timestamps must be non-empty")
    found: dict[datetime, float] = {}
    for line_no, raw in enumerate(body.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _PAIR.match(line)
        if m is None:
            raise UnparsableLine(line_no, raw)
        try:
            ts = parse_timestamp(m.group(1))
            value = float(m.group(2))
        except ValueError:
            raise UnparsableLine(line_no, raw) from None
        if not math.isfinite(value):
            raise NonFiniteValue(f"line {line_no}: non-finite value {m.group(2)!r}")
        if ts in found:
            raise DuplicateTimestamp(f"line {line_no}: timestamp {m.group(1)} repeated")
        found[ts] = value
    want = set(expected)
    missing = [t for t in expected if t not in found]
    unexpected = sorted(t for t in found if t not in want)
    if missing or unexpected:
        raise TimestampMismatch(missing=missing, unexpected=unexpected)
    return [found[t] for t in expected]


def parse_judge_verdict(text: str) -> bool:
    try:
        body = extract_tagged(text, "answer").body
    except (MissingOpenTag, MissingCloseTag) as exc:
        raise MissingAnswerTag(str(exc)) from exc
    verdict = body.strip().upper()
    if verdict == "YES":
        return True
    if verdict == "NO":
        return False
    raise UnrecognizedVerdict(f"judge answered {body.strip()!r}")
