"""
Interval Module
Closed real intervals and the interval arithmetic used to combine estimates.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval ``[lo, hi]``; infinite endpoints only via ``unbounded()``."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError(f"Interval endpoints must not be NaN: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"Interval lower end exceeds upper end: [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: float) -> "Interval":
        return cls(value, value)

    @classmethod
    def around(cls, center: float, radius: float) -> "Interval":
        return cls(center - radius, center + radius)

    @classmethod
    def unbounded(cls) -> "Interval":
        return cls(-math.inf, math.inf)

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def radius(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        if not (self.is_bounded and other.is_bounded):
            return Interval.unbounded()
        corners = (
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        )
        return Interval(min(corners), max(corners))

    def reciprocal(self) -> "Interval":
        """``1/[lo, hi]``; unbounded when the interval touches zero."""
        if self.lo <= 0.0 <= self.hi:
            return Interval.unbounded()
        return Interval(1.0 / self.hi, 1.0 / self.lo)

    def __truediv__(self, other: "Interval") -> "Interval":
        return self * other.reciprocal()

    def __str__(self) -> str:
        return f"[{self.lo:.6g}, {self.hi:.6g}]"
