"""Pass/fail reports and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

SIG_DIGITS = 10


def fmt_num(v: float) -> str:
    return f"{v:.{SIG_DIGITS}g}"


def jsonable(v: Any) -> Any:
    """Round floats to 10 significant digits; non-finite floats become strings."""
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, float) or hasattr(v, "dtype"):
        v = float(v)
        if math.isfinite(v):
            return float(fmt_num(v))
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=False, ensure_ascii=False) + "\n"


@dataclass
class ConditionItem:
    id: str
    worst: float
    at: float | None
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        d = {"id": self.id, "worst": self.worst, "at": self.at, "pass": self.passed}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class ConditionReport:
    items: list[ConditionItem]
    values: dict[str, Any] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(it.passed for it in self.items)

    def __getitem__(self, cid: str) -> ConditionItem:
        for it in self.items:
            if it.id == cid:
                return it
        raise KeyError(cid)

    def failed(self) -> list[str]:
        return [it.id for it in self.items if not it.passed]

    def to_dict(self) -> dict:
        return {
            "conditions": [it.to_dict() for it in self.items],
            "overall": self.overall,
            **({"values": dict(self.values)} if self.values else {}),
        }
