"""Column-to-text serialization and prompt assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from llmad.core import DetectorConfig, Naming


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    column_index: int
    n_rows: int
    naming: Naming = Naming.DATA

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user},
        ]


def format_value(x: float, decimal_places: int = 2) -> str:
    """Fixed-point string, rounded half away from zero.

    Rounding works on the shortest decimal repr of ``x`` (so 2.675 gives
    "2.68", as a reader of the number would expect).  ``decimal_places=0``
    yields a plain integer with no decimal point.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    if decimal_places < 0:
        raise ValueError("decimal_places must be >= 0")
    quantum = Decimal(1).scaleb(-decimal_places)
    # ROUND_HALF_UP in decimal is half away from zero
    d = Decimal(repr(x)).quantize(quantum, rounding=ROUND_HALF_UP)
    if d.is_zero():
        d = abs(d)
    return f"{d:f}"


def serialize_column(
    column: Sequence[float],
    naming: Naming | str = Naming.DATA,
    decimal_places: int = 2,
) -> str:
    naming = Naming.parse(naming)
    if len(column) == 0:
        raise ValueError("cannot serialize an empty column")
    return " ".join(
        f"{naming.noun} {i} is {format_value(x, decimal_places)}."
        for i, x in enumerate(column, start=1)
    )


def build_prompt(
    column: Sequence[float],
    config: DetectorConfig | None = None,
    column_index: int = 0,
    decimal_places: int | None = None,
) -> PromptBundle:
    config = config or DetectorConfig()
    places = config.decimal_places if decimal_places is None else decimal_places
    data_text = serialize_column(column, config.naming, places)
    return PromptBundle(
        system=config.naming.system_message,
        user=f"{data_text} {config.prompt_text}",
        column_index=column_index,
        n_rows=len(column),
        naming=config.naming,
    )
