"""Extracting ratings from raw model responses.

Only the rating is pulled out of a response; the descriptive portion is
ignored.  A response always parses to exactly one outcome: a value in
[1, 5] or a rejection reason ("nonsensical" answers are operationalized as
no_match / ambiguous / out_of_range, auditable via per-reason counts).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

# Level phrases in rating order; matched longest-first so "medium high" is
# never misread as "medium" or "high".
LEVEL_SCORES = {
    "low": 1,
    "medium low": 2,
    "medium": 3,
    "medium high": 4,
    "high": 5,
}

_LEVELS_BY_LENGTH = sorted(LEVEL_SCORES, key=len, reverse=True)
_LEVEL_PATTERNS = {
    phrase: re.compile(r"\b" + r"\s+".join(map(re.escape, phrase.split())) + r"\b")
    for phrase in _LEVELS_BY_LENGTH
}

# A standalone integer: a digit run that is not part of a decimal number
# (so "3.5" and "v2.0" contribute no integer token, while a sentence-final
# "3." still reads 3).
_INT_PATTERN = re.compile(r"(?<!\d)(?<!\.)(\d+)(?!\d)(?!\.\d)")

REJECTION_NONE = "none"
REJECTION_NO_MATCH = "no_match"
REJECTION_AMBIGUOUS = "ambiguous"
REJECTION_OUT_OF_RANGE = "out_of_range"
# Assigned by the trial driver when the backend call itself failed; the
# parsers never emit it but the filter accounts for it.
REJECTION_BACKEND_ERROR = "backend_error"


@dataclass(frozen=True)
class ParsedResponse:
    value: float | None
    rejection: str = REJECTION_NONE

    @property
    def ok(self) -> bool:
        return self.value is not None


def parse_level_response(text: str) -> ParsedResponse:
    """Map a level-worded response to its 1-5 score.

    Case-insensitive, longest-match-first with consumed spans masked out.
    Exactly one distinct level -> value; none -> no_match; two or more
    distinct levels -> ambiguous.  Numerals are ignored entirely.
    """
    lowered = text.lower()
    taken: list[tuple[int, int]] = []
    found: set[str] = set()
    for phrase in _LEVELS_BY_LENGTH:
        for m in _LEVEL_PATTERNS[phrase].finditer(lowered):
            span = m.span()
            if any(span[0] < e and s < span[1] for s, e in taken):
                continue
            taken.append(span)
            found.add(phrase)
    if not found:
        return ParsedResponse(None, REJECTION_NO_MATCH)
    if len(found) > 1:
        return ParsedResponse(None, REJECTION_AMBIGUOUS)
    return ParsedResponse(float(LEVEL_SCORES[found.pop()]))


def parse_score_response(text: str) -> ParsedResponse:
    """Take the first standalone integer; value iff it lies in [1, 5].

    "3 out of 5" reads 3 (the first match); an in-range later number never
    rescues an out-of-range first one.
    """
    m = _INT_PATTERN.search(text)
    if m is None:
        return ParsedResponse(None, REJECTION_NO_MATCH)
    value = int(m.group(1))
    if not 1 <= value <= 5:
        return ParsedResponse(None, REJECTION_OUT_OF_RANGE)
    return ParsedResponse(float(value))


PARSERS = {
    "score_related": parse_score_response,
    "level_related": parse_level_response,
}


def filter_valid(records: list) -> tuple[list, dict[str, int]]:
    """Split trial records into kept (parsed value present) and rejected.

    Returns the kept records and a per-reason count of the rejected ones.
    """
    kept = []
    reasons: Counter[str] = Counter()
    for rec in records:
        if rec.value is not None:
            kept.append(rec)
        else:
            reasons[rec.rejection] += 1
    return kept, dict(sorted(reasons.items()))
