"""Pass/fail records shared by every check in the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


@dataclass
class Certificate:
    """Outcome of one quantitative check.

    ``passed`` is derived from ``margin``: a certificate passes iff its
    worst-case margin is strictly positive.
    """

    lemma: str
    margin: float
    grid: dict = field(default_factory=dict)
    tolerance: float = 0.0
    witness: Any = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.margin > 0)

    def to_dict(self) -> dict:
        return _plain(
            {
                "lemma": self.lemma,
                "passed": self.passed,
                "margin": self.margin,
                "tolerance": self.tolerance,
                "grid": self.grid,
                "witness": self.witness,
                "details": self.details,
            }
        )

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.lemma}: margin={self.margin:.6g}"


def from_bound(lemma: str, observed: float, bound: float, **kw) -> Certificate:
    """Certificate for ``observed <= bound``; the margin is ``bound - observed``.

    Equality counts as a pass, so the margin is nudged by the smallest float
    above zero when the bound is met exactly.
    """
    margin = float(bound) - float(observed)
    if margin == 0.0:
        margin = 5e-324
    kw.setdefault("tolerance", bound)
    details = kw.pop("details", {})
    details = {"observed": observed, "bound": bound, **details}
    return Certificate(lemma=lemma, margin=margin, details=details, **kw)
