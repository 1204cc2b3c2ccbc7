"""Prediction extraction from LLM answers and canonical answer rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from llmad.core import Naming

_ABSTAIN_WORDS = ("no", "No", "None")
_CLEAN_FORMS = re.compile(r"\s*All (data|rows) are normal\.*\s*")


@dataclass(frozen=True)
class ParsedPrediction:
    indices: frozenset[int]
    abstained: bool = False

    def __post_init__(self):
        if self.abstained and self.indices:
            raise ValueError("an abstaining prediction cannot carry indices")

    def sorted(self) -> list[int]:
        return sorted(self.indices)


def _is_index_token(token: str) -> bool:
    # str.isnumeric also admits vulgar fractions and superscripts that int() rejects
    return token.isnumeric() and "." not in token and token.isdecimal()


def parse_response(text: str, max_index: int) -> ParsedPrediction:
    """Extract predicted anomaly indices from a model answer.

    Mirrors the reference extraction routine: trailing periods are removed,
    only the text after the last ``:->`` is kept, colons become spaces and
    commas vanish, then the answer is split on whitespace.  A bare "no",
    "No" or "None" token means the model abstained.  Remaining tokens made
    of digits only are kept when they lie in ``1..max_index``.

    The canonical clean-batch sentence ("All data are normal.") is also
    reported as an abstention; it never carries indices either way.
    """
    ans = text
    if ans.endswith("."):
        ans = ans.rstrip(".")
    ans = ans.rsplit(":->", 1)[-1]
    if ":" in ans:
        ans = ans.replace(":", " ")
    ans = ans.replace(",", "")
    tokens = ans.split()
    if any(word in tokens for word in _ABSTAIN_WORDS):
        return ParsedPrediction(frozenset(), abstained=True)
    found = set()
    for tok in tokens:
        if _is_index_token(tok):
            value = int(tok)
            if 1 <= value <= max_index:
                found.add(value)
    if not found and _CLEAN_FORMS.fullmatch(text):
        return ParsedPrediction(frozenset(), abstained=True)
    return ParsedPrediction(frozenset(found))


def render_response(indices: Sequence[int] | Iterable[int], naming: Naming | str = Naming.DATA) -> str:
    """Canonical ground-truth answer for a sorted list of anomalous rows."""
    naming = Naming.parse(naming)
    indices = list(indices)
    for prev, cur in zip(indices, indices[1:]):
        if cur <= prev:
            raise ValueError(f"indices must be strictly increasing, got {indices}")
    if any(int(i) < 1 for i in indices):
        raise ValueError("indices are 1-based and must be positive")
    if not indices:
        return naming.clean_response
    joined = ", ".join(str(int(i)) for i in indices)
    return f"{naming.noun} {joined} are abnormal."
