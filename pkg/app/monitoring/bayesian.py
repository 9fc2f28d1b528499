"""
Bayesian Module
Posterior-expectation monitors under a matrix-beta prior: exact monomial
expectations, their incremental update, and Chebyshev confidence intervals.
"""

import logging
import math
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, ConsistencyError, SnapshotError, UnknownStateError
from .interval import Interval
from .markov import TransitionMatrix
from .outputs import Estimate, MonitorOutput, Pending
from .polynomial import Monomial, Polynomial, to_polynomial
from .pse import Edge, Pse, square
from .states import StateSpace

logger = logging.getLogger(__name__)

DEFAULT_RESYNC_INTERVAL = 8192
MIN_ORACLE_SAMPLES = 10_000


class PriorTheta:
    """Integer parameter matrix θ ≥ 1 of a matrix-beta prior."""

    def __init__(self, rows: Sequence[Sequence[Union[int, float]]]):
        array = np.array(rows, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] == 0:
            raise ConfigError(f"Prior must be a square nonempty matrix, got shape {array.shape}")
        if not np.all(np.isfinite(array)) or np.any(array != np.round(array)):
            raise ConfigError("Prior entries must be integers")
        if np.any(array < 1):
            raise ConfigError("Prior entries must be at least 1")
        self._array = array.astype(np.int64)
        self._array.setflags(write=False)

    @classmethod
    def uniform(cls, n: int) -> "PriorTheta":
        return cls(np.ones((n, n), dtype=np.int64))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "PriorTheta":
        return cls(rows)

    @property
    def n(self) -> int:
        return self._array.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._array

    def entry(self, source: int, target: int) -> int:
        return int(self._array[source - 1, target - 1])

    def row_total(self, source: int) -> int:
        return int(self._array[source - 1].sum())

    def to_rows(self) -> List[List[int]]:
        return self._array.tolist()


# --------------------------------------------------------------------------- closed forms

def consistent(monomial: Monomial, edge_counts: Mapping[Edge, int]) -> bool:
    """``c̄_ij + d_ij > 0`` for every variable of the monomial."""
    return all(edge_counts[edge] + power > 0 for edge, power in monomial.exponents)


def h_initial_exact(
    monomial: Monomial,
    edge_counts: Mapping[Edge, int],
    row_counts: Mapping[int, int],
) -> Fraction:
    """
    Posterior expectation of ``Π M_ij^d_ij`` (without κ) from smoothed counts.

    Positive exponents contribute rising products ``P(c̄_ij−1+d, d)`` divided by
    ``P(c̄_i−1+d_i, d_i)`` per row; negative exponents contribute
    ``P(c̄_i−1, |d_i|)`` divided by ``P(c̄_ij−1, |d_ij|)``.

    Raises:
        ConsistencyError: If some ``c̄_ij + d_ij ≤ 0``
    """
    if not consistent(monomial, edge_counts):
        raise ConsistencyError(f"Counts do not support the negative exponents of {monomial.exponents}")
    value = Fraction(1)
    for edge, power in monomial.exponents:
        count = edge_counts[edge]
        if power > 0:
            value *= math.perm(count - 1 + power, power)
        else:
            value /= math.perm(count - 1, -power)
    for row, power in monomial.row_exponents().items():
        count = row_counts[row]
        if power > 0:
            value /= math.perm(count - 1 + power, power)
        elif power < 0:
            value *= math.perm(count - 1, -power)
    return value


def h_initial(
    monomial: Monomial,
    edge_counts: Mapping[Edge, int],
    row_counts: Mapping[int, int],
) -> float:
    return float(h_initial_exact(monomial, edge_counts, row_counts))


def h_update(
    h: float,
    source: int,
    target: int,
    monomial: Monomial,
    edge_counts: Mapping[Edge, int],
    row_counts: Mapping[int, int],
) -> float:
    """
    Extend ``h`` by the transition ``source → target``; counters are already incremented.
    """
    power = monomial.exponent(source, target)
    if power != 0:
        count = edge_counts[(source, target)]
        h *= (count - 1 + power) / (count - 1)
    row_power = monomial.row_exponent(source)
    if row_power != 0:
        count = row_counts[source]
        h *= (count - 1) / (count - 1 + row_power)
    return h


def chebyshev_interval(mean: float, variance: float, delta: float) -> Interval:
    """``mean ± sqrt(variance/δ)``; holds with probability at least 1−δ."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return Interval.around(mean, math.sqrt(max(variance, 0.0) / delta))


# --------------------------------------------------------------------------- monitors

class BayesExpMonitor:
    """
    Posterior expectation ``E_θ(φ(M) | x)`` of a polynomial φ, updated in O(p)
    per transition once every monomial's expectation is defined.
    """

    def __init__(
        self,
        states: StateSpace,
        polynomial: Union[Polynomial, Pse],
        prior: PriorTheta,
        initial: Optional[int] = None,
        resync_interval: int = DEFAULT_RESYNC_INTERVAL,
    ):
        if not isinstance(polynomial, Polynomial):
            polynomial = to_polynomial(polynomial)
        if prior.n != len(states):
            raise ConfigError(f"Prior is {prior.n}×{prior.n} but there are {len(states)} states")
        self.states = states
        self.polynomial = polynomial
        self.prior = prior
        self.previous = initial
        self.resync_interval = resync_interval

        edges = sorted(polynomial.variables())
        self.edge_counts: Dict[Edge, int] = {edge: prior.entry(*edge) for edge in edges}
        self.row_counts: Dict[int, int] = {i: prior.row_total(i) for i in sorted(polynomial.dep_states())}
        self.min_exponents: Dict[Edge, int] = {
            edge: min(monomial.exponent(*edge) for monomial in polynomial) for edge in edges
        }

        self._by_edge: Dict[Edge, List[Tuple[int, int]]] = {}
        self._by_row: Dict[int, List[Tuple[int, int]]] = {}
        for index, monomial in enumerate(polynomial):
            for edge, power in monomial.exponents:
                self._by_edge.setdefault(edge, []).append((index, power))
            for row, power in monomial.row_exponents().items():
                if power != 0:
                    self._by_row.setdefault(row, []).append((index, power))

        self.h: List[float] = [0.0] * len(polynomial)
        self.active = False
        self.operations = 0
        self.active_steps = 0
        self._expectation: Optional[float] = None

    @property
    def expectation(self) -> Optional[float]:
        return self._expectation

    def next(self, symbol: int) -> Optional[float]:
        """Consume the next state; returns E, or None while pending."""
        if symbol not in self.states:
            raise UnknownStateError(str(symbol))
        source, self.previous = self.previous, symbol
        if source is not None:
            edge = (source, symbol)
            if source in self.row_counts:
                self.row_counts[source] += 1
            if edge in self.edge_counts:
                self.edge_counts[edge] += 1
            if self.active:
                self._update(source, edge)

        if not self.active and self._activation_holds():
            self._resync()
            self.active = True
            logger.debug("Bayesian expectation monitor active over %d monomials", len(self.h))

        if self.active:
            self._expectation = sum(m.coefficient * h for m, h in zip(self.polynomial, self.h))
        return self._expectation

    def _activation_holds(self) -> bool:
        return all(self.edge_counts[edge] + self.min_exponents[edge] > 0 for edge in self.edge_counts)

    def _update(self, source: int, edge: Edge) -> None:
        h = self.h
        for index, power in self._by_edge.get(edge, ()):
            count = self.edge_counts[edge]
            h[index] *= (count - 1 + power) / (count - 1)
            self.operations += 1
        for index, power in self._by_row.get(source, ()):
            count = self.row_counts[source]
            h[index] *= (count - 1) / (count - 1 + power)
            self.operations += 1
        self.active_steps += 1
        if self.resync_interval and self.active_steps % self.resync_interval == 0:
            self._resync()
            logger.debug("Resynchronised monomial expectations after %d steps", self.active_steps)

    def _resync(self) -> None:
        self.h = [h_initial(m, self.edge_counts, self.row_counts) for m in self.polynomial]

    def expectation_from_scratch(self) -> float:
        """E recomputed exactly from the current counters."""
        total = Fraction(0)
        for monomial in self.polynomial:
            total += Fraction(monomial.coefficient) * h_initial_exact(monomial, self.edge_counts, self.row_counts)
        return float(total)

    def counter_count(self) -> int:
        return len(self.edge_counts) + len(self.row_counts) + len(self.h)

    def register_count(self) -> int:
        return self.counter_count() + len(self.min_exponents) + 2

    def snapshot(self) -> Dict[str, Any]:
        return {
            "previous": self.previous,
            "active": self.active,
            "edge_counts": [[i, j, c] for (i, j), c in self.edge_counts.items()],
            "row_counts": [[i, c] for i, c in self.row_counts.items()],
            "h": list(self.h),
            "active_steps": self.active_steps,
            "operations": self.operations,
        }

    def restore(self, payload: Dict[str, Any]) -> None:
        try:
            edges = {(int(i), int(j)): int(c) for i, j, c in payload["edge_counts"]}
            rows = {int(i): int(c) for i, c in payload["row_counts"]}
            h = [float(v) for v in payload["h"]]
            if set(edges) != set(self.edge_counts) or set(rows) != set(self.row_counts) or len(h) != len(self.h):
                raise SnapshotError("Snapshot counters do not match the monitored polynomial")
            self.edge_counts, self.row_counts, self.h = edges, rows, h
            self.previous = payload["previous"]
            self.active = bool(payload["active"])
            self.active_steps = int(payload["active_steps"])
            self.operations = int(payload["operations"])
        except (KeyError, TypeError, ValueError) as e:
            raise SnapshotError(f"Malformed Bayesian snapshot: {str(e)}")
        self._expectation = (
            sum(m.coefficient * h for m, h in zip(self.polynomial, self.h)) if self.active else None
        )


class BayesMonitor:
    """
    Bayesian confidence monitor: posterior mean E of φ and of φ², variance
    ``S² = max(0, E2 − E²)`` and the Chebyshev interval ``E ± sqrt(S²/δ)``.
    """

    def __init__(
        self,
        states: StateSpace,
        node: Pse,
        prior: PriorTheta,
        delta: float,
        initial: Optional[int] = None,
        resync_interval: int = DEFAULT_RESYNC_INTERVAL,
    ):
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        self.states = states
        self.node = node
        self.delta = delta
        self.first = BayesExpMonitor(states, to_polynomial(node), prior, initial, resync_interval)
        self.second = BayesExpMonitor(states, to_polynomial(square(node)), prior, initial, resync_interval)
        self._output: MonitorOutput = Pending()
        logger.debug(
            "Bayesian monitor over %d + %d monomials", len(self.first.polynomial), len(self.second.polynomial)
        )

    @property
    def output(self) -> MonitorOutput:
        return self._output

    @property
    def operations(self) -> int:
        return self.first.operations + self.second.operations

    def next(self, symbol: int) -> MonitorOutput:
        mean = self.first.next(symbol)
        second = self.second.next(symbol)
        self._output = self._combine(mean, second)
        return self._output

    def _combine(self, mean: Optional[float], second: Optional[float]) -> MonitorOutput:
        if mean is None or second is None:
            return Pending("posterior expectation not yet defined")
        variance = max(0.0, second - mean * mean)
        return Estimate(chebyshev_interval(mean, variance, self.delta), mean, variance=variance)

    def counter_count(self) -> int:
        return self.first.counter_count() + self.second.counter_count()

    def register_count(self) -> int:
        return self.first.register_count() + self.second.register_count()

    def snapshot(self) -> Dict[str, Any]:
        return {"first": self.first.snapshot(), "second": self.second.snapshot()}

    def restore(self, payload: Dict[str, Any]) -> None:
        try:
            self.first.restore(payload["first"])
            self.second.restore(payload["second"])
        except KeyError as e:
            raise SnapshotError(f"Malformed Bayesian snapshot: missing {str(e)}")
        self._output = self._combine(self.first.expectation, self.second.expectation)


# --------------------------------------------------------------------------- oracles

def sample_prior_matrix(prior: PriorTheta, rng: np.random.Generator) -> TransitionMatrix:
    """Draw M from the matrix-beta prior, one Dirichlet row at a time."""
    rows = [rng.dirichlet(prior.array[i].astype(float)) for i in range(prior.n)]
    return TransitionMatrix(rows)


def log_evidence(prior: PriorTheta, counts: np.ndarray) -> float:
    """``log 𝒩(θ + c) − log 𝒩(θ)`` for the matrix-beta normalisation constant 𝒩."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != prior.array.shape:
        raise ConfigError(f"Counts shape {counts.shape} does not match prior {prior.array.shape}")

    def log_norm(theta: np.ndarray) -> float:
        return float(gammaln(theta).sum() - gammaln(theta.sum(axis=1)).sum())

    theta = prior.array.astype(float)
    return log_norm(theta + counts) - log_norm(theta)


def posterior_mc_oracle(
    prior: PriorTheta,
    counts: np.ndarray,
    monomial: Monomial,
    samples: int = MIN_ORACLE_SAMPLES,
    seed: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Monte-Carlo estimate of ``E_θ(ξ(M) | counts)`` with its standard error.

    Rows are drawn from their posterior Dirichlet distributions by normalising
    independent Gamma draws.

    Args:
        prior: Matrix-beta parameters θ
        counts: Observed N×N transition counts
        monomial: Monomial ξ, coefficient included
        samples: Number of posterior draws (at least 10^4)
        seed: PRNG seed

    Returns:
        Tuple of (estimate, standard_error)
    """
    if samples < MIN_ORACLE_SAMPLES:
        raise ValueError(f"samples must be at least {MIN_ORACLE_SAMPLES}, got {samples}")
    if monomial.is_constant:
        return monomial.coefficient, 0.0

    rng = np.random.default_rng(seed)
    alpha = prior.array.astype(float) + np.asarray(counts, dtype=float)
    values = np.full(samples, monomial.coefficient)
    rows: Dict[int, np.ndarray] = {}
    for (i, j), power in monomial.exponents:
        if i not in rows:
            draws = rng.gamma(alpha[i - 1], size=(samples, prior.n))
            rows[i] = draws / draws.sum(axis=1, keepdims=True)
        values *= rows[i][:, j - 1] ** power
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(samples))
