"""
Tests for the Frequentist module
"""

import json
import math

import numpy as np
import pytest

from app.monitoring.errors import DivisionError, InsufficientVisitsError, UnknownStateError
from app.monitoring.frequentist import (
    TOP,
    BaselineMonitor,
    FreqMonitor,
    FreqMonitorDivFree,
    FreqState,
    hoeffding_interval,
    hoeffding_radius,
    required_visits,
    visits_per_sample,
)
from app.monitoring.harness import analytic_error_ratio, feed, ratio_chain, ratio_spec
from app.monitoring.interval import Interval
from app.monitoring.markov import ground_truth, simulate
from app.monitoring.outputs import Estimate, Pending
from app.monitoring.pse import Const, parse_pse, size
from app.monitoring.states import StateSpace

ACCEPTANCE_FIXTURES = [
    "p(1,2)",
    "p(1,2) + p(1,3)",
    "p(1,2) - p(1,3)",
    "p(1,2)*p(1,3)",
    "p(1,2)*p(3,4)",
    "(p(1,2) + p(1,3))*p(1,2)",
]

UNBIASED_FIXTURES = ACCEPTANCE_FIXTURES + [
    "p(1,2) - p(2,1)",
    "(p(1,2) + p(1,3))*p(1,4)",
    "p(1,1)*p(1,1)",
    "2*p(2,3) - 0.5",
    "p(1,2)*p(2,3)*p(3,4)",
    "(p(1,2) - p(3,1))*(p(2,2) + p(4,4))",
]


def _coverage_hits(chain, text, runs, steps, delta=0.05):
    node = parse_pse(text, chain.states)
    truth = ground_truth(chain, node)
    hits = 0
    for run in range(runs):
        monitor = FreqMonitorDivFree(chain.states, node, delta, seed=run)
        output = feed(monitor, simulate(chain, steps, seed=1000 + run))
        assert max(monitor.high_water.values(), default=0) <= size(node) + 1
        assert monitor.register_count() <= 16 * (size(node) + 1) ** 2
        if isinstance(output, Estimate) and output.contains(truth):
            hits += 1
    return hits


class TestHoeffding:
    """Test suite for the Hoeffding bound."""

    def test_reference_radius(self):
        """Test ε for n=100, range [0,1], δ=0.05."""
        assert hoeffding_radius(100, Interval(0.0, 1.0), 0.05) == pytest.approx(0.135811, abs=1e-6)

    def test_scaling(self):
        """Test that 4n halves ε and doubling the range doubles it."""
        base = hoeffding_radius(100, Interval(0.0, 1.0), 0.05)

        assert hoeffding_radius(400, Interval(0.0, 1.0), 0.05) == pytest.approx(base / 2)
        assert hoeffding_radius(100, Interval(-1.0, 1.0), 0.05) == pytest.approx(2 * base)

    def test_interval_is_centered(self):
        """Test the interval around a mean."""
        interval = hoeffding_interval(0.4, 100, Interval(0.0, 1.0), 0.05)

        assert interval.midpoint == pytest.approx(0.4)
        assert interval.radius == pytest.approx(0.135811, abs=1e-6)

    def test_needs_samples(self):
        """Test that n=0 is rejected."""
        with pytest.raises(ValueError):
            hoeffding_radius(0, Interval(0.0, 1.0), 0.05)

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5])
    def test_delta_range(self, delta):
        """Test that δ must lie strictly between 0 and 1."""
        with pytest.raises(ValueError):
            hoeffding_radius(10, Interval(0.0, 1.0), delta)


class TestFreqState:
    """Test suite for counter registers and reshuffled extraction."""

    def test_register_inventory(self):
        """Test the counters created for v12 + v13."""
        state = FreqState([1], [(1, 2), (1, 3)], np.random.default_rng(0))

        assert set(state.visits) == {1}
        assert set(state.edge_counts) == {(1, 2), (1, 3)}

    def test_extract_all(self):
        """Test that extracting every visit returns the recorded successors."""
        state = FreqState([1], [(1, 2), (1, 3)], np.random.default_rng(0))
        for target in (2, 2, 3):
            state.record(1, target)
        state.extract_outcomes(1, 3)

        assert sorted(state.buffers[1]) == [2, 2, 3]
        assert state.residual_visits[1] == 0

    def test_unwatched_successors_become_top(self):
        """Test that successors no variable looks at are materialized as the placeholder."""
        state = FreqState([1], [(1, 2)], np.random.default_rng(0))
        state.record(1, 2)
        state.record(1, 3)
        state.extract_outcomes(1, 2)

        assert sorted(state.buffers[1]) == [TOP, 2]
        assert state.slack(1) == 1

    def test_insufficient_visits(self):
        """Test that over-extraction is an error."""
        state = FreqState([1], [(1, 2)], np.random.default_rng(0))
        state.record(1, 2)

        with pytest.raises(InsufficientVisitsError):
            state.extract_outcomes(1, 2)

    def test_unrelated_sources_ignored(self):
        """Test that transitions out of untracked states are not counted."""
        state = FreqState([1], [(1, 2)], np.random.default_rng(0))
        state.record(2, 1)

        assert state.visits[1] == 0

    def test_extraction_is_uniform(self):
        """Test that the first extracted symbol is uniform over the recorded successors."""
        rng = np.random.default_rng(42)
        firsts = 0
        trials = 10_000
        for _ in range(trials):
            state = FreqState([1], [(1, 2), (1, 3)], rng)
            state.record(1, 2)
            state.record(1, 3)
            state.extract_outcomes(1, 1)
            firsts += state.buffers[1][0] == 2

        assert abs(firsts / trials - 0.5) <= 0.02

    def test_multiset_conservation(self, rng):
        """Test that materialized symbols plus residuals always equal the recorded counts."""
        state = FreqState([1], [(1, 2), (1, 3)], np.random.default_rng(7))
        extracted = []
        for _ in range(500):
            state.record(1, int(rng.integers(1, 5)))
            if rng.random() < 0.3 and state.residual_visits[1]:
                state.extract_outcomes(1, int(rng.integers(1, state.residual_visits[1] + 1)))
                extracted.extend(state.buffers[1])
                state.reset_buffers()

            for target in (2, 3):
                taken = extracted.count(target)
                assert taken + state.residual_edges[(1, target)] == state.edge_counts[(1, target)]
            residual_top = state.residual_visits[1] - sum(state.residual_edges.values())
            assert extracted.count(TOP) + residual_top == state.slack(1)
            assert len(extracted) + state.residual_visits[1] == state.visits[1]


class TestSchedule:
    """Test suite for slot demand and required visits."""

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("p(1,2)", 1),
            ("p(1,2)*p(1,3)", 2),
            ("(p(1,2) + p(1,3))*p(1,2)", 2),
            ("p(1,2)*p(3,4)", 1),
            ("p(1,2)*p(1,3)*p(1,4)", 3),
            ("0.5", 1),
        ],
    )
    def test_visits_per_sample(self, text, expected):
        """Test visits consumed per sample."""
        assert visits_per_sample(parse_pse(text, StateSpace(4))) == expected

    def test_required_visits_single_variable(self):
        """Test the reference count for one variable."""
        assert required_visits(parse_pse("p(1,2)", StateSpace(3)), 0.1, 0.05) == 185

    def test_required_visits_dependent_product(self):
        """Test that a dependent product doubles the visits."""
        assert required_visits(parse_pse("p(1,2)*p(1,3)", StateSpace(3)), 0.1, 0.05) == 370

    def test_required_visits_halving_epsilon(self):
        """Test that halving ε roughly quadruples the visits."""
        node = parse_pse("p(1,2)", StateSpace(3))
        halved = required_visits(node, 0.05, 0.05)

        assert halved == math.ceil(math.log(40) / (2 * 0.05**2))
        assert 4 * 185 - 4 <= halved <= 4 * 185

    def test_required_visits_wide_range(self):
        """Test the range factor of a difference."""
        assert required_visits(parse_pse("p(1,2) - p(2,1)", StateSpace(3)), 0.1, 0.05) == 738

    def test_required_visits_rejects_division(self):
        """Test that reciprocals have no sample bound."""
        with pytest.raises(DivisionError):
            required_visits(parse_pse("1/p(1,2)", StateSpace(3)), 0.1, 0.05)

    def test_required_visits_rejects_epsilon(self):
        """Test that ε must be positive."""
        with pytest.raises(ValueError):
            required_visits(parse_pse("p(1,2)", StateSpace(3)), 0.0, 0.05)

    @pytest.mark.parametrize("text,successors", [("p(1,2)", [2]), ("p(1,2)*p(1,3)", [2, 3])])
    def test_convergence_after_required_visits(self, text, successors):
        """Test that the half-width reaches ε after the required number of visits."""
        states = StateSpace(3)
        node = parse_pse(text, states)
        visits = required_visits(node, 0.1, 0.05)
        path = [1]
        for k in range(visits):
            if k:
                path.append(1)
            path.append(successors[k % len(successors)])

        output = feed(FreqMonitorDivFree(states, node, 0.05, seed=0), path)

        assert isinstance(output, Estimate)
        assert output.radius <= 0.1 + 1e-12


class TestFreqMonitorDivFree:
    """Test suite for the division-free monitor."""

    def test_rejects_division(self):
        """Test that reciprocals need the general monitor."""
        with pytest.raises(DivisionError):
            FreqMonitorDivFree(StateSpace(2), parse_pse("1/p(1,2)", StateSpace(2)), 0.05)

    def test_rejects_delta(self):
        """Test δ validation."""
        with pytest.raises(ValueError):
            FreqMonitorDivFree(StateSpace(2), parse_pse("p(1,2)", StateSpace(2)), 1.0)

    def test_unknown_symbol(self):
        """Test that symbols outside the state space are rejected."""
        monitor = FreqMonitorDivFree(StateSpace(2), parse_pse("p(1,2)", StateSpace(2)), 0.05)

        with pytest.raises(UnknownStateError):
            monitor.next(9)

    def test_pending_until_first_sample(self):
        """Test that the first state alone gives no verdict."""
        monitor = FreqMonitorDivFree(StateSpace(2), parse_pse("p(1,2)", StateSpace(2)), 0.05)

        assert isinstance(monitor.next(1), Pending)

    def test_single_variable_samples(self):
        """Test the samples 1, 0, 1 produced by the run 1,2,1,1,2,3."""
        states = StateSpace(3)
        monitor = FreqMonitorDivFree(states, parse_pse("p(1,2)", states), 0.05, seed=0)
        observed = []
        for symbol in [1, 2, 1, 1, 2, 3]:
            before = (monitor.count, monitor.total)
            monitor.next(symbol)
            if monitor.count > before[0]:
                observed.append(monitor.total - before[1])

        assert observed == [1.0, 0.0, 1.0]
        assert monitor.mean == pytest.approx(2 / 3)

    def test_sum_from_one_state(self):
        """Test that v12 + v13 gives w = 1 after the transition 1 → 2."""
        states = StateSpace(3)
        monitor = FreqMonitorDivFree(states, parse_pse("p(1,2) + p(1,3)", states), 0.05)
        monitor.next(1)
        output = monitor.next(2)

        assert isinstance(output, Estimate)
        assert output.mean == 1.0

    def test_dependent_product_waits_for_two_visits(self):
        """Test that v12·v13 needs two visits to state 1."""
        states = StateSpace(3)
        monitor = FreqMonitorDivFree(states, parse_pse("p(1,2)*p(1,3)", states), 0.05, seed=0)
        for symbol in [1, 2, 1]:
            monitor.next(symbol)
        assert monitor.count == 0

        monitor.next(3)
        assert monitor.count == 1

    def test_independent_product(self):
        """Test that v12·v34 draws from two different states."""
        states = StateSpace(4)
        monitor = FreqMonitorDivFree(states, parse_pse("p(1,2)*p(3,4)", states), 0.05)
        for symbol in [1, 2, 3, 4]:
            monitor.next(symbol)

        assert monitor.count == 1
        assert monitor.total == 1.0

    def test_constant_expression(self):
        """Test that a constant yields a point interval at once."""
        monitor = FreqMonitorDivFree(StateSpace(2), Const(2.0), 0.05, initial=1)
        output = monitor.next(2)

        assert isinstance(output, Estimate)
        assert output.interval == Interval(2.0, 2.0)

    def test_width_is_hoeffding(self, lending):
        """Test that every emitted interval is the Hoeffding interval of its sample count."""
        node = parse_pse("p(g,gy) - p(gbar,gbary)", lending.states)
        monitor = FreqMonitorDivFree(lending.states, node, 0.05, seed=1)
        for state in simulate(lending, 2000, seed=1):
            output = monitor.next(state)
            if isinstance(output, Estimate):
                assert output.radius == pytest.approx(hoeffding_radius(output.samples, Interval(-1, 1), 0.05))

    def test_deterministic(self, four_state_chain):
        """Test that equal seeds and paths give identical outputs."""
        node = parse_pse("p(1,2)*p(1,3) + p(2,4)", four_state_chain.states)
        path = simulate(four_state_chain, 3000, seed=4)
        first = FreqMonitorDivFree(four_state_chain.states, node, 0.05, seed=9)
        second = FreqMonitorDivFree(four_state_chain.states, node, 0.05, seed=9)

        assert [first.next(s) for s in path] == [second.next(s) for s in path]

    def test_unbiased_coverage(self, four_state_chain):
        """Smoke test: final intervals mostly cover the ground truth on short runs."""
        for text in UNBIASED_FIXTURES:
            assert _coverage_hits(four_state_chain, text, runs=10, steps=3000) >= 8, text

    @pytest.mark.slow
    @pytest.mark.parametrize("text", ACCEPTANCE_FIXTURES)
    def test_unbiased_coverage_full(self, four_state_chain, text):
        """Test coverage in at least 93 of 100 runs of 10^5 steps."""
        assert _coverage_hits(four_state_chain, text, runs=100, steps=100_000) >= 93

    @pytest.mark.slow
    def test_unbiased_coverage_extended(self, four_state_chain):
        """Test coverage over 100 runs of 10^4 steps on the remaining expressions."""
        for text in UNBIASED_FIXTURES[len(ACCEPTANCE_FIXTURES):]:
            assert _coverage_hits(four_state_chain, text, runs=100, steps=10_000) >= 93, text

    def test_snapshot_resume(self, lending):
        """Test that a restored monitor continues exactly like the original."""
        node = parse_pse("p(g,gy)*p(g,ybar) + p(gbar,gbary)", lending.states)
        path = simulate(lending, 3000, seed=2)
        uninterrupted = FreqMonitorDivFree(lending.states, node, 0.05, seed=3)
        expected = [uninterrupted.next(s) for s in path]

        original = FreqMonitorDivFree(lending.states, node, 0.05, seed=3)
        for s in path[:1500]:
            original.next(s)
        payload = json.loads(json.dumps(original.snapshot()))
        restored = FreqMonitorDivFree(lending.states, node, 0.05, seed=99)
        restored.restore(payload)

        assert [restored.next(s) for s in path[1500:]] == expected[1500:]


class TestFreqMonitor:
    """Test suite for the general frequentist monitor."""

    def test_division_free_passthrough(self, four_state_chain):
        """Test that without division the general monitor equals the division-free one."""
        states = four_state_chain.states
        node = parse_pse("p(1,2) - p(3,4)", states)
        path = simulate(four_state_chain, 1000, seed=6)
        general = FreqMonitor(states, node, 0.05, seed=5)
        plain = FreqMonitorDivFree(states, node, 0.05, seed=5)

        assert general.parts is None
        assert [general.next(s) for s in path] == [plain.next(s) for s in path]

    def test_three_monitors_at_third_delta(self, four_state_chain):
        """Test the decomposition into three monitors at δ/3."""
        monitor = FreqMonitor(four_state_chain.states, parse_pse("p(1,2)/p(1,3)", four_state_chain.states), 0.06)

        assert len(monitor.monitors) == 3
        assert all(m.delta == pytest.approx(0.02) for m in monitor.monitors)

    def test_combine(self, four_state_chain):
        """Test the interval arithmetic of φ_a + φ_b/φ_c."""
        monitor = FreqMonitor(four_state_chain.states, parse_pse("p(1,2)/p(1,3)", four_state_chain.states), 0.05)
        combined = monitor._combine(
            [
                Estimate(Interval(0.1, 0.2), 0.15, samples=10),
                Estimate(Interval(1.0, 2.0), 1.5, samples=12),
                Estimate(Interval(2.0, 4.0), 3.0, samples=11),
            ]
        )

        assert isinstance(combined, Estimate)
        assert combined.lo == pytest.approx(0.35)
        assert combined.hi == pytest.approx(1.2)
        assert combined.mean == pytest.approx(0.65)
        assert combined.samples == 10

    def test_denominator_straddling_zero(self, four_state_chain):
        """Test that a denominator interval containing 0 keeps the monitor pending."""
        monitor = FreqMonitor(four_state_chain.states, parse_pse("p(1,2)/p(1,3)", four_state_chain.states), 0.05)
        combined = monitor._combine(
            [
                Estimate(Interval(0.0, 0.0), 0.0, samples=10),
                Estimate(Interval(0.1, 0.5), 0.3, samples=10),
                Estimate(Interval(-0.1, 0.6), 0.25, samples=10),
            ]
        )

        assert isinstance(combined, Pending)

    def test_quotient_covers_truth(self, four_state_chain):
        """Test that the quotient monitor settles on an interval around M12/M13."""
        states = four_state_chain.states
        node = parse_pse("p(1,2)/p(1,3)", states)
        monitor = FreqMonitor(states, node, 0.05, seed=8)
        output = feed(monitor, simulate(four_state_chain, 20_000, seed=8))

        assert isinstance(output, Estimate)
        assert output.contains(ground_truth(four_state_chain, node))

    def test_snapshot_resume_with_division(self, four_state_chain):
        """Test snapshot and restore of the decomposing monitor."""
        states = four_state_chain.states
        node = parse_pse("p(1,2) + p(2,3)/p(2,4)", states)
        path = simulate(four_state_chain, 2000, seed=12)
        reference = FreqMonitor(states, node, 0.05, seed=1)
        expected = [reference.next(s) for s in path]

        original = FreqMonitor(states, node, 0.05, seed=1)
        for s in path[:700]:
            original.next(s)
        restored = FreqMonitor(states, node, 0.05, seed=1)
        restored.restore(json.loads(json.dumps(original.snapshot())))

        assert [restored.next(s) for s in path[700:]] == expected[700:]


class TestBaselineMonitor:
    """Test suite for the per-variable baseline."""

    def test_single_variable_matches(self, four_state_chain):
        """Test that for one variable the baseline interval equals the combined one."""
        states = four_state_chain.states
        node = parse_pse("p(1,2)", states)
        path = simulate(four_state_chain, 2000, seed=3)
        ours = feed(FreqMonitorDivFree(states, node, 0.05, seed=3), path)
        baseline = feed(BaselineMonitor(states, node, 0.05), path)

        assert isinstance(ours, Estimate) and isinstance(baseline, Estimate)
        assert baseline.lo == pytest.approx(ours.lo, abs=1e-12)
        assert baseline.hi == pytest.approx(ours.hi, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 3, 10])
    def test_error_ratio(self, n):
        """Test that the baseline is wider by the analytic ratio on a sum from one state."""
        chain = ratio_chain(n)
        node = parse_pse(ratio_spec(n), chain.states)
        path = simulate(chain, 3000, seed=n)
        ours = feed(FreqMonitorDivFree(chain.states, node, 0.05, seed=n), path)
        baseline = feed(BaselineMonitor(chain.states, node, 0.05), path)

        assert baseline.radius / ours.radius == pytest.approx(analytic_error_ratio(n, 0.05), abs=1e-9)

    def test_variable_delta(self, two_states):
        """Test that δ is split over the variable occurrences."""
        monitor = BaselineMonitor(two_states, parse_pse("p(1,1) + p(1,2) - p(1,1)", two_states), 0.06)

        assert monitor.occurrences == 3
        assert monitor.variable_delta == pytest.approx(0.02)

    def test_pending_reciprocal(self, four_state_chain):
        """Test that a reciprocal interval touching 0 gives no estimate."""
        states = four_state_chain.states
        monitor = BaselineMonitor(states, parse_pse("1/p(1,2)", states), 0.05)
        monitor.next(1)

        assert isinstance(monitor.next(2), Pending)

    def test_pending_before_visits(self, two_states):
        """Test that the baseline waits for every source state."""
        monitor = BaselineMonitor(two_states, parse_pse("p(1,1) - p(2,1)", two_states), 0.05)
        monitor.next(1)

        assert isinstance(monitor.next(1), Pending)
        assert isinstance(monitor.next(2), Pending)
        assert isinstance(monitor.next(1), Estimate)
