"""Normalization of duration / sets / reps mentions to integers.

Duration is always returned in seconds.  ``'`` reads as minutes and ``"`` as
seconds (the time reading; distances are not annotated).  ``NxM`` reads as
N sets of M reps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import NoNumber

DURATION, SETS, REPS = "duration", "sets", "reps"
SETS_REPS = "sets_reps"
CATEGORIES = (DURATION, SETS, REPS)

_INT = re.compile(r"\d+")
_NXM = re.compile(r"(\d+)\s*[xX×]\s*(\d+)")
_MINUTES = re.compile(r"(\d+)\s*(?:min(?:ute)?s?\b|mins?\.|')", re.I)
_SECONDS = re.compile(r"(\d+)\s*(?:sec(?:ond)?s?\b|secs?\.|\"|s\b)", re.I)
_HOURS = re.compile(r"(\d+)\s*(?:hours?|hrs?)\b", re.I)


@dataclass(frozen=True)
class NumericValue:
    category: str
    value: int

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown numeric category {self.category!r}")
        if self.value < 0:
            raise ValueError("numeric value must be >= 0")


def _duration_seconds(text: str) -> int:
    total, found = 0, False
    for pattern, scale in ((_HOURS, 3600), (_MINUTES, 60), (_SECONDS, 1)):
        for m in pattern.finditer(text):
            total += int(m.group(1)) * scale
            found = True
    if found:
        return total
    # no unit: a bare number is taken as seconds
    return int(_INT.search(text).group())


def normalize_numeric(matched_text: str, category: str) -> list[NumericValue]:
    """Normalize a matched span to one value, or two for ``category="sets_reps"``.

    >>> normalize_numeric("2 min", "duration")
    [NumericValue(category='duration', value=120)]
    >>> normalize_numeric("2x10", "sets_reps")
    [NumericValue(category='sets', value=2), NumericValue(category='reps', value=10)]
    """
    if not _INT.search(matched_text):
        raise NoNumber(f"no digits in {matched_text!r}")
    nxm = _NXM.search(matched_text)
    if category == SETS_REPS:
        if nxm:
            return [NumericValue(SETS, int(nxm.group(1))), NumericValue(REPS, int(nxm.group(2)))]
        raise NoNumber(f"{matched_text!r} is not of the form NxM")
    if category == DURATION:
        return [NumericValue(DURATION, _duration_seconds(matched_text))]
    if category == SETS:
        value = int(nxm.group(1)) if nxm else int(_INT.search(matched_text).group())
        return [NumericValue(SETS, value)]
    if category == REPS:
        value = int(nxm.group(2)) if nxm else int(_INT.search(matched_text).group())
        return [NumericValue(REPS, value)]
    raise ValueError(f"unknown numeric category {category!r}")
