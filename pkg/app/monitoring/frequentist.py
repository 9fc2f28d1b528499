"""
Frequentist Module
Monitors that estimate φ(M) from a single observed run with Hoeffding
confidence intervals: the division-free monitor, the general monitor built on
the a + b/c decomposition, and the per-variable baseline.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import DivisionError, InsufficientVisitsError, SnapshotError, UnknownStateError
from .interval import Interval
from .outputs import Estimate, MonitorOutput, Pending
from .polynomial import Polynomial, decompose_division
from .pse import (
    Add,
    Const,
    Edge,
    Inv,
    Mul,
    Pse,
    Sub,
    Var,
    dep_states,
    is_division_free,
    iter_vars,
    relabel_duplicates,
    size,
    static_range,
    variables,
)
from .states import StateSpace

logger = logging.getLogger(__name__)

# Placeholder for successors that no variable of φ looks at.
TOP = 0

Seed = Union[int, np.random.SeedSequence, None]


def hoeffding_radius(n: int, value_range: Interval, delta: float) -> float:
    """Half-width ε with ``2·exp(−2ε²n/(b−a)²) = δ``."""
    if n < 1:
        raise ValueError(f"Hoeffding bound needs at least one sample, got n={n}")
    _check_delta(delta)
    return value_range.width * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def hoeffding_interval(mean: float, n: int, value_range: Interval, delta: float) -> Interval:
    """
    Two-sided Hoeffding interval for the mean of ``n`` i.i.d. samples in ``value_range``.

    Raises:
        ValueError: If ``n < 1`` or δ is outside (0, 1)
    """
    return Interval.around(mean, hoeffding_radius(n, value_range, delta))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


# --------------------------------------------------------------------------- registers

class FreqState:
    """
    Counter registers and reshuffle buffers of a division-free monitor.

    ``x_i`` holds successors of past visits to ``i`` drawn uniformly without
    replacement from the residual multiset ``{j: r_ij} ∪ {TOP: r_i − Σ_j r_ij}``,
    so materialized symbols plus residuals always equal the recorded counts.
    """

    def __init__(self, sources: Iterable[int], edges: Iterable[Edge], rng: np.random.Generator):
        self.rng = rng
        self.visits: Dict[int, int] = {i: 0 for i in sorted(set(sources))}
        self.edge_counts: Dict[Edge, int] = {edge: 0 for edge in sorted(set(edges))}
        self.residual_visits: Dict[int, int] = dict.fromkeys(self.visits, 0)
        self.residual_edges: Dict[Edge, int] = dict.fromkeys(self.edge_counts, 0)
        self.successors: Dict[int, List[int]] = {i: [] for i in self.visits}
        for i, j in self.edge_counts:
            self.successors[i].append(j)
        self.buffers: Dict[int, List[int]] = {i: [] for i in self.visits}
        self.high_water: Dict[int, int] = dict.fromkeys(self.visits, 0)

    def record(self, source: int, target: int) -> None:
        if source not in self.visits:
            return
        self.visits[source] += 1
        self.residual_visits[source] += 1
        edge = (source, target)
        if edge in self.edge_counts:
            self.edge_counts[edge] += 1
            self.residual_edges[edge] += 1

    def can_extract(self, source: int, needed: int) -> bool:
        return self.residual_visits[source] >= needed

    def extract_outcomes(self, source: int, needed: int) -> None:
        """Append ``needed`` reshuffled successors of ``source`` to ``x_source``."""
        if not self.can_extract(source, needed):
            raise InsufficientVisitsError(
                f"State {source} has {self.residual_visits[source]} unused visits, {needed} needed"
            )
        buffer = self.buffers[source]
        for _ in range(needed):
            k = int(self.rng.integers(self.residual_visits[source]))
            symbol = TOP
            for target in self.successors[source]:
                edge = (source, target)
                remaining = self.residual_edges[edge]
                if k < remaining:
                    symbol = target
                    self.residual_edges[edge] = remaining - 1
                    break
                k -= remaining
            self.residual_visits[source] -= 1
            buffer.append(symbol)
        if len(buffer) > self.high_water[source]:
            self.high_water[source] = len(buffer)

    def reset_buffers(self) -> None:
        for buffer in self.buffers.values():
            buffer.clear()

    def slack(self, source: int) -> int:
        """Recorded visits to ``source`` whose successor no variable looks at."""
        return self.visits[source] - sum(self.edge_counts[(source, j)] for j in self.successors[source])

    def register_count(self) -> int:
        return 2 * (len(self.visits) + len(self.edge_counts)) + sum(self.high_water.values())

    def to_payload(self) -> Dict[str, Any]:
        return {
            "visits": [[i, c] for i, c in self.visits.items()],
            "edge_counts": [[i, j, c] for (i, j), c in self.edge_counts.items()],
            "residual_visits": [[i, c] for i, c in self.residual_visits.items()],
            "residual_edges": [[i, j, c] for (i, j), c in self.residual_edges.items()],
            "buffers": [[i, list(b)] for i, b in self.buffers.items()],
            "high_water": [[i, c] for i, c in self.high_water.items()],
            "rng": self.rng.bit_generator.state,
        }

    def load_payload(self, payload: Dict[str, Any]) -> None:
        try:
            visits = {int(i): int(c) for i, c in payload["visits"]}
            edges = {(int(i), int(j)): int(c) for i, j, c in payload["edge_counts"]}
            if set(visits) != set(self.visits) or set(edges) != set(self.edge_counts):
                raise SnapshotError("Snapshot registers do not match the monitored expression")
            self.visits = visits
            self.edge_counts = edges
            self.residual_visits = {int(i): int(c) for i, c in payload["residual_visits"]}
            self.residual_edges = {(int(i), int(j)): int(c) for i, j, c in payload["residual_edges"]}
            self.buffers = {int(i): [int(s) for s in b] for i, b in payload["buffers"]}
            self.high_water = {int(i): int(c) for i, c in payload["high_water"]}
            self.rng.bit_generator.state = payload["rng"]
        except (KeyError, TypeError, ValueError) as e:
            raise SnapshotError(f"Malformed frequentist snapshot: {str(e)}")


# --------------------------------------------------------------------------- evaluation schedule

@dataclass(eq=False)
class _Node:
    """Compiled subexpression; ``outcome`` is its buffer of one unconsumed value."""

    kind: str
    value: float = 0.0
    source: int = 0
    target: int = 0
    slot: int = 0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    outcome: Optional[float] = None


def slot_demand(node: Pse) -> Dict[int, int]:
    """Slots of each ``x_i`` one outcome of ``node`` consumes."""
    if isinstance(node, Const):
        return {}
    if isinstance(node, Var):
        return {node.source: 1}
    if isinstance(node, Inv):
        raise DivisionError("Division-free monitors cannot evaluate reciprocals")
    left = slot_demand(node.left)
    right = slot_demand(node.right)
    if isinstance(node, Mul) and left.keys() & right.keys():
        return {i: left.get(i, 0) + right.get(i, 0) for i in left.keys() | right.keys()}
    return {i: max(left.get(i, 0), right.get(i, 0)) for i in left.keys() | right.keys()}


def visits_per_sample(node: Pse) -> int:
    """Visits to the busiest source state consumed by one sample of φ (at least 1)."""
    demand = slot_demand(node)
    return max(demand.values(), default=0) or 1


def _compile(node: Pse, base: Dict[int, int], nodes: List[_Node]) -> _Node:
    if isinstance(node, Const):
        compiled = _Node("const", value=node.value, outcome=node.value)
    elif isinstance(node, Var):
        compiled = _Node("var", source=node.source, target=node.target, slot=base.get(node.source, 0))
    elif isinstance(node, Inv):
        raise DivisionError("Division-free monitors cannot evaluate reciprocals")
    else:
        kind = "add" if isinstance(node, Add) else "sub" if isinstance(node, Sub) else "mul"
        left = _compile(node.left, base, nodes)
        right_base = base
        if kind == "mul":
            left_demand = slot_demand(node.left)
            if left_demand.keys() & slot_demand(node.right).keys():
                right_base = dict(base)
                for i, count in left_demand.items():
                    right_base[i] = base.get(i, 0) + count
        right = _compile(node.right, right_base, nodes)
        compiled = _Node(kind, left=left, right=right)
    nodes.append(compiled)
    return compiled


def required_visits(node: Pse, epsilon: float, delta: float) -> int:
    """
    Visits to every relevant state after which the reported half-width is at most ε.

    Args:
        node: Division-free expression
        epsilon: Target half-width ε̄ > 0
        delta: Confidence parameter

    Raises:
        ValueError: If ε̄ ≤ 0
        DivisionError: If φ contains a reciprocal
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _check_delta(delta)
    width = static_range(node).width
    samples = math.ceil(width**2 * math.log(2.0 / delta) / (2.0 * epsilon**2))
    return max(samples, 1) * visits_per_sample(node)


# --------------------------------------------------------------------------- monitors

class FreqMonitorDivFree:
    """
    Division-free frequentist monitor.

    Every root evaluation turns reshuffled successor slots into one sample w of
    φ; products whose factors share a source state read disjoint slots so the
    factors stay independent. The verdict is the Hoeffding interval of the
    sample mean over the static range of φ.
    """

    def __init__(
        self,
        states: StateSpace,
        node: Pse,
        delta: float,
        seed: Seed = None,
        initial: Optional[int] = None,
    ):
        if not is_division_free(node):
            raise DivisionError("Expression contains division; use FreqMonitor instead")
        _check_delta(delta)
        self.states = states
        self.node = relabel_duplicates(node)
        self.delta = delta
        self.value_range = static_range(node)
        self.previous = initial
        self.count = 0
        self.total = 0.0

        self._nodes: List[_Node] = []
        self._root = _compile(self.node, {}, self._nodes)
        self._leaves = [n for n in self._nodes if n.kind == "var"]
        self.registers = FreqState(dep_states(node), variables(node), np.random.default_rng(seed))
        self._output: MonitorOutput = Pending()
        logger.debug(
            "Division-free monitor: size %d, %d variable occurrences, %d registers",
            size(node), len(self._leaves), self.register_count(),
        )

    @property
    def output(self) -> MonitorOutput:
        return self._output

    @property
    def mean(self) -> Optional[float]:
        return self.total / self.count if self.count else None

    def next(self, symbol: int) -> MonitorOutput:
        """Consume the next observed state and return the current verdict."""
        if symbol not in self.states:
            raise UnknownStateError(str(symbol))
        if self.previous is not None:
            self.registers.record(self.previous, symbol)
        self.previous = symbol

        while True:
            w = self._evaluate(self._root)
            if w is None:
                break
            self.count += 1
            self.total += w
            self._reset()
            if not self._leaves:
                break

        if self.count:
            mean = self.total / self.count
            self._output = Estimate(
                hoeffding_interval(mean, self.count, self.value_range, self.delta),
                mean,
                samples=self.count,
            )
        return self._output

    def _evaluate(self, node: _Node) -> Optional[float]:
        if node.outcome is not None:
            return node.outcome
        if node.kind == "var":
            buffer = self.registers.buffers[node.source]
            missing = node.slot + 1 - len(buffer)
            if missing > 0:
                if not self.registers.can_extract(node.source, missing):
                    return None
                self.registers.extract_outcomes(node.source, missing)
            node.outcome = 1.0 if buffer[node.slot] == node.target else 0.0
            return node.outcome
        left = self._evaluate(node.left)
        right = self._evaluate(node.right)
        if left is None or right is None:
            return None
        if node.kind == "add":
            node.outcome = left + right
        elif node.kind == "sub":
            node.outcome = left - right
        else:
            node.outcome = left * right
        return node.outcome

    def _reset(self) -> None:
        for node in self._nodes:
            if node.kind != "const":
                node.outcome = None
        self.registers.reset_buffers()

    def register_count(self) -> int:
        """Counters, residuals, buffer high-water marks, pointers, outcome buffers and 3 scalars."""
        outcome_buffers = sum(1 for n in self._nodes if n.kind != "const")
        return self.registers.register_count() + len(self._leaves) + outcome_buffers + 3

    @property
    def high_water(self) -> Dict[int, int]:
        return dict(self.registers.high_water)

    def snapshot(self) -> Dict[str, Any]:
        return {
            "previous": self.previous,
            "count": self.count,
            "total": self.total,
            "outcomes": [n.outcome for n in self._nodes],
            "registers": self.registers.to_payload(),
        }

    def restore(self, payload: Dict[str, Any]) -> None:
        try:
            outcomes = payload["outcomes"]
            if len(outcomes) != len(self._nodes):
                raise SnapshotError("Snapshot outcome buffers do not match the expression")
            self.registers.load_payload(payload["registers"])
            for node, outcome in zip(self._nodes, outcomes):
                node.outcome = outcome
            self.previous = payload["previous"]
            self.count = int(payload["count"])
            self.total = float(payload["total"])
        except (KeyError, TypeError) as e:
            raise SnapshotError(f"Malformed frequentist snapshot: {str(e)}")
        if self.count:
            mean = self.total / self.count
            self._output = Estimate(
                hoeffding_interval(mean, self.count, self.value_range, self.delta), mean, samples=self.count
            )
        else:
            self._output = Pending()


class FreqMonitor:
    """
    General frequentist monitor.

    Without division it is a single division-free monitor at the full δ.
    Otherwise φ is rewritten to ``φ_a + φ_b/φ_c`` and three division-free
    monitors run at δ/3 each; their intervals are combined by interval
    arithmetic, which gives confidence 1−δ by the union bound.
    """

    def __init__(
        self,
        states: StateSpace,
        node: Pse,
        delta: float,
        seed: Seed = None,
        initial: Optional[int] = None,
    ):
        _check_delta(delta)
        self.states = states
        self.node = node
        self.delta = delta
        self.parts: Optional[Tuple[Polynomial, Polynomial, Polynomial]] = None

        if is_division_free(node):
            self.monitors = [FreqMonitorDivFree(states, node, delta, seed, initial)]
        else:
            plain, scaled, common = decompose_division(node)
            self.parts = (plain, scaled, Polynomial((common,)))
            children = np.random.SeedSequence(seed).spawn(3)
            self.monitors = [
                FreqMonitorDivFree(states, part.to_pse(), delta / 3.0, child, initial)
                for part, child in zip(self.parts, children)
            ]
            logger.debug(
                "Division rewritten into %d + %d/%d monomials at delta/3 each",
                len(plain), len(scaled), 1,
            )
        self._output: MonitorOutput = Pending()

    @property
    def output(self) -> MonitorOutput:
        return self._output

    def next(self, symbol: int) -> MonitorOutput:
        outputs = [monitor.next(symbol) for monitor in self.monitors]
        self._output = self._combine(outputs)
        return self._output

    def _combine(self, outputs: List[MonitorOutput]) -> MonitorOutput:
        if len(outputs) == 1:
            return outputs[0]
        if not all(isinstance(output, Estimate) for output in outputs):
            return Pending("awaiting samples for every part of the decomposition")
        plain, scaled, common = outputs
        if common.interval.contains(0.0):
            return Pending("denominator interval contains 0")
        interval = plain.interval + scaled.interval / common.interval
        mean = plain.mean + scaled.mean / common.mean
        return Estimate(interval, mean, samples=min(o.samples for o in outputs))

    def register_count(self) -> int:
        return sum(monitor.register_count() for monitor in self.monitors)

    def snapshot(self) -> Dict[str, Any]:
        return {"monitors": [monitor.snapshot() for monitor in self.monitors]}

    def restore(self, payload: Dict[str, Any]) -> None:
        parts = payload.get("monitors")
        if not isinstance(parts, list) or len(parts) != len(self.monitors):
            raise SnapshotError("Snapshot does not match the monitor's decomposition")
        for monitor, part in zip(self.monitors, parts):
            monitor.restore(part)
        self._output = self._combine([monitor.output for monitor in self.monitors])


@dataclass
class _BaselineCounts:
    visits: Dict[int, int] = field(default_factory=dict)
    edges: Dict[Edge, int] = field(default_factory=dict)


class BaselineMonitor:
    """
    Per-variable baseline: each of the k variable occurrences gets its own
    Hoeffding interval at δ/k around ``c_ij / c_i``, and the intervals are
    composed along the expression tree.
    """

    def __init__(
        self,
        states: StateSpace,
        node: Pse,
        delta: float,
        seed: Seed = None,
        initial: Optional[int] = None,
    ):
        _check_delta(delta)
        self.states = states
        self.node = relabel_duplicates(node)
        self.delta = delta
        self.occurrences = sum(1 for _ in iter_vars(node))
        self.variable_delta = delta / self.occurrences if self.occurrences else delta
        self.previous = initial
        self.counts = _BaselineCounts(
            visits=dict.fromkeys(sorted(dep_states(node)), 0),
            edges=dict.fromkeys(sorted(variables(node)), 0),
        )
        self._output: MonitorOutput = Pending()

    @property
    def output(self) -> MonitorOutput:
        return self._output

    def next(self, symbol: int) -> MonitorOutput:
        if symbol not in self.states:
            raise UnknownStateError(str(symbol))
        if self.previous is not None:
            source, edge = self.previous, (self.previous, symbol)
            if source in self.counts.visits:
                self.counts.visits[source] += 1
                if edge in self.counts.edges:
                    self.counts.edges[edge] += 1
            self._output = self._estimate()
        self.previous = symbol
        return self._output

    def _estimate(self) -> MonitorOutput:
        if any(count == 0 for count in self.counts.visits.values()):
            return Pending("some source state has not been visited")
        result = self._interval(self.node)
        if result is None:
            return Pending("reciprocal interval contains 0")
        interval, mean = result
        samples = min(self.counts.visits.values(), default=0)
        return Estimate(interval, mean, samples=samples)

    def _interval(self, node: Pse) -> Optional[Tuple[Interval, float]]:
        if isinstance(node, Const):
            return Interval.point(node.value), node.value
        if isinstance(node, Var):
            n = self.counts.visits[node.source]
            mean = self.counts.edges[node.edge] / n
            return hoeffding_interval(mean, n, Interval(0.0, 1.0), self.variable_delta), mean
        if isinstance(node, Inv):
            body = self._interval(node.body)
            if body is None or body[0].contains(0.0):
                return None
            return body[0].reciprocal(), 1.0 / body[1]
        left = self._interval(node.left)
        right = self._interval(node.right)
        if left is None or right is None:
            return None
        if isinstance(node, Add):
            return left[0] + right[0], left[1] + right[1]
        if isinstance(node, Sub):
            return left[0] - right[0], left[1] - right[1]
        return left[0] * right[0], left[1] * right[1]

    def register_count(self) -> int:
        return len(self.counts.visits) + len(self.counts.edges) + 1

    def snapshot(self) -> Dict[str, Any]:
        return {
            "previous": self.previous,
            "visits": [[i, c] for i, c in self.counts.visits.items()],
            "edges": [[i, j, c] for (i, j), c in self.counts.edges.items()],
        }

    def restore(self, payload: Dict[str, Any]) -> None:
        try:
            visits = {int(i): int(c) for i, c in payload["visits"]}
            edges = {(int(i), int(j)): int(c) for i, j, c in payload["edges"]}
        except (KeyError, TypeError, ValueError) as e:
            raise SnapshotError(f"Malformed baseline snapshot: {str(e)}")
        if set(visits) != set(self.counts.visits) or set(edges) != set(self.counts.edges):
            raise SnapshotError("Snapshot registers do not match the monitored expression")
        self.counts = _BaselineCounts(visits=visits, edges=edges)
        self.previous = payload.get("previous")
        self._output = self._estimate() if self.previous is not None else Pending()
