"""Chapman-Bailey point estimates with "maybe" plants counted as seen or not seen."""
from __future__ import annotations

import enum
import math

from .data import BasicCounts, IdCounts, validate

__all__ = ["CbScenario", "chapman_bailey", "chapman_bailey_table"]


class CbScenario(str, enum.Enum):
    MAYBE_AS_SEEN = "maybe-as-seen"
    MAYBE_AS_NOT_SEEN = "maybe-as-not-seen"


def chapman_bailey(data: IdCounts | BasicCounts, scenario: CbScenario | str) -> int:
    """Target population estimate ``(M+1)(y+1)/(m+1) - 1 - M``, rounded.

    ``m`` counts the plants taken as captured: identified plants, "yes"
    plants and, for ``maybe-as-seen``, the "maybe" plants too. Rounding is to
    the nearest integer (halves up).
    """
    data = validate(data)
    if isinstance(data, BasicCounts):
        data = data.to_id()
    scenario = CbScenario(scenario)
    m = data.m_i + data.m_yes + (data.m_mb if scenario is CbScenario.MAYBE_AS_SEEN else 0)
    M = data.m_total
    value = (M + 1) * (data.y + 1) / (m + 1) - 1 - M
    return int(math.floor(value + 0.5 + 1e-9))


def chapman_bailey_table(datasets: dict) -> dict[str, dict[str, int]]:
    return {
        name: {s.value: chapman_bailey(d, s) for s in CbScenario}
        for name, d in datasets.items()
    }
