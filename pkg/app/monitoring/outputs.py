"""
Outputs Module
Verdicts reported by the monitors after each observed transition.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

from .interval import Interval


@dataclass(frozen=True, slots=True)
class Pending:
    """No estimate is available yet."""

    reason: str = "awaiting data"


@dataclass(frozen=True, slots=True)
class Estimate:
    """
    Confidence interval around a point estimate.

    ``samples`` is the number of i.i.d. observations behind a frequentist
    estimate (0 for Bayesian ones); ``variance`` is the posterior variance of a
    Bayesian estimate (None for frequentist ones).
    """

    interval: Interval
    mean: float
    samples: int = 0
    variance: Optional[float] = None

    @property
    def lo(self) -> float:
        return self.interval.lo

    @property
    def hi(self) -> float:
        return self.interval.hi

    @property
    def width(self) -> float:
        return self.interval.width

    @property
    def radius(self) -> float:
        return self.interval.radius

    def contains(self, value: float) -> bool:
        return self.interval.contains(value)


MonitorOutput = Union[Pending, Estimate]


def is_estimate(output: MonitorOutput) -> bool:
    return isinstance(output, Estimate)


def output_fields(output: MonitorOutput) -> tuple:
    """``(lo, hi, mean, width)``, NaN for every field while pending."""
    if isinstance(output, Estimate):
        return output.lo, output.hi, output.mean, output.width
    return math.nan, math.nan, math.nan, math.nan
