"""Per-epoch learning-rate schedules.

Epochs are counted from zero. The ``power`` schedule is ``a0 / (k+1)**tau``
so that its first epoch uses ``a0``; ``tau = 0`` is the constant schedule.
"""
from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Schedule"]

KINDS = ("constant", "exponential", "k-inverse", "power")


@dataclass(frozen=True)
class Schedule:
    kind: str = "constant"
    alpha0: float = 0.1
    b: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {KINDS}")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be >= 0")
        if self.b < 0:
            raise ValueError("b must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    def rate(self, k: int) -> float:
        if k < 0:
            raise ValueError("epoch index must be >= 0")
        if self.kind == "constant":
            return self.alpha0
        if self.kind == "exponential":
            return self.alpha0 * self.b**k
        if self.kind == "k-inverse":
            return self.alpha0 / (1.0 + self.b * k)
        return self.alpha0 / (k + 1) ** self.tau

    @property
    def power_tau(self):
        """``tau`` if this is an ``alpha/k**tau`` family schedule, else None."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "power":
            return self.tau
        return None
