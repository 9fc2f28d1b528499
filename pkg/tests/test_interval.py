"""
Tests for Interval and output types
"""

import math

import pytest

from app.monitoring.interval import Interval
from app.monitoring.outputs import Estimate, Pending, is_estimate, output_fields


class TestInterval:
    """Test suite for interval arithmetic."""

    def test_sum_and_difference(self):
        """Test endpoint arithmetic of + and −."""
        a, b = Interval(0.1, 0.2), Interval(1.0, 2.0)

        total, difference = a + b, a - b

        assert (total.lo, total.hi) == (pytest.approx(1.1), pytest.approx(2.2))
        assert (difference.lo, difference.hi) == (pytest.approx(-1.9), pytest.approx(-0.8))

    def test_product_with_signs(self):
        """Test that products take the extreme corners."""
        assert Interval(-1.0, 2.0) * Interval(-3.0, 1.0) == Interval(-6.0, 3.0)

    def test_division(self):
        """Test division by an interval away from 0."""
        result = Interval(1.0, 2.0) / Interval(2.0, 4.0)

        assert result.lo == pytest.approx(0.25)
        assert result.hi == pytest.approx(1.0)

    def test_reciprocal_through_zero(self):
        """Test that 1/[a,b] with 0 inside is unbounded."""
        assert not Interval(-0.1, 0.5).reciprocal().is_bounded

    def test_invalid(self):
        """Test that lo must not exceed hi."""
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)
        with pytest.raises(ValueError):
            Interval(math.nan, 1.0)

    def test_around(self):
        """Test construction from a center and radius."""
        interval = Interval.around(0.5, 0.25)

        assert interval.width == 0.5
        assert interval.midpoint == 0.5
        assert interval.contains(0.75)
        assert not interval.contains(0.8)


class TestOutputs:
    """Test suite for monitor outputs."""

    def test_estimate_fields(self):
        """Test the fields of an estimate."""
        estimate = Estimate(Interval(0.1, 0.3), 0.2, samples=5)

        assert is_estimate(estimate)
        assert output_fields(estimate) == (0.1, 0.3, 0.2, pytest.approx(0.2))

    def test_pending_fields(self):
        """Test that pending outputs map to NaN."""
        assert not is_estimate(Pending())
        assert all(math.isnan(value) for value in output_fields(Pending()))
