"""
Markov Module
Finite Markov chains: validated transition matrices, seeded simulation and the
bundled lending and admission chains.
"""

import bisect
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .errors import ChainValidationError
from .pse import Pse, evaluate
from .states import StateSpace

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-9
UNIFORM_BLOCK = 4096

Path = List[int]


class TransitionMatrix:
    """
    Row-stochastic N×N matrix addressed with 1-based state indices.

    Rows summing to 1 within ``ROW_TOLERANCE`` are renormalised; anything
    further off is rejected.
    """

    def __init__(self, entries: Sequence[Sequence[float]]):
        array = np.array(entries, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] == 0:
            raise ChainValidationError(f"Transition matrix must be square and nonempty, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ChainValidationError("Transition matrix entries must be finite")
        if np.any(array < 0.0):
            row, col = np.argwhere(array < 0.0)[0]
            raise ChainValidationError(f"Negative entry {array[row, col]} at ({row + 1},{col + 1})")
        if np.any(array > 1.0):
            row, col = np.argwhere(array > 1.0)[0]
            raise ChainValidationError(f"Entry {array[row, col]} at ({row + 1},{col + 1}) exceeds 1")

        sums = array.sum(axis=1)
        for row, total in enumerate(sums, start=1):
            if abs(total - 1.0) > ROW_TOLERANCE:
                raise ChainValidationError(f"Row {row} sums to {total}, expected 1")
            if total != 1.0:
                array[row - 1] /= total

        array.setflags(write=False)
        self._array = array

    @property
    def n(self) -> int:
        return self._array.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._array

    def prob(self, source: int, target: int) -> float:
        return float(self._array[source - 1, target - 1])

    def row(self, source: int) -> np.ndarray:
        return self._array[source - 1]

    def successors(self, source: int) -> List[int]:
        return [int(j) + 1 for j in np.flatnonzero(self._array[source - 1] > 0.0)]

    def to_rows(self) -> List[List[float]]:
        return self._array.tolist()

    def __getitem__(self, index):
        return self._array[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return np.array_equal(self._array, other._array)


@dataclass(frozen=True)
class MarkovChain:
    """Chain with a fixed initial state."""

    matrix: TransitionMatrix
    initial: int
    states: StateSpace

    def __post_init__(self):
        if len(self.states) != self.matrix.n:
            raise ChainValidationError(
                f"State space has {len(self.states)} states but the matrix is {self.matrix.n}×{self.matrix.n}"
            )
        if self.initial not in self.states:
            raise ChainValidationError(f"Initial state {self.initial} outside 1..{self.matrix.n}")

    @property
    def n(self) -> int:
        return self.matrix.n


def new_chain(
    entries: Sequence[Sequence[float]],
    initial: int,
    names: Optional[Sequence[str]] = None,
) -> MarkovChain:
    """
    Build a validated chain.

    Args:
        entries: Dense N×N transition probabilities
        initial: 1-based initial state
        names: Optional state names

    Raises:
        ChainValidationError: On a non-stochastic row, a negative entry or a bad initial state
    """
    matrix = TransitionMatrix(entries)
    states = StateSpace(matrix.n, names)
    return MarkovChain(matrix=matrix, initial=initial, states=states)


class ChainCursor:
    """Incremental simulator owned by a single consumer."""

    def __init__(self, chain: MarkovChain, seed: int):
        self.chain = chain
        self.state = chain.initial
        self.steps = 0
        self._rng = np.random.default_rng(seed)
        self._cumulative: List[List[float]] = []
        self._last: List[int] = []
        for i in chain.states:
            row = chain.matrix.row(i)
            self._cumulative.append(np.cumsum(row).tolist())
            self._last.append(int(np.flatnonzero(row > 0.0)[-1]))
        self._uniforms: List[float] = []
        self._next_uniform = 0

    def _uniform(self) -> float:
        if self._next_uniform >= len(self._uniforms):
            self._uniforms = self._rng.random(UNIFORM_BLOCK).tolist()
            self._next_uniform = 0
        value = self._uniforms[self._next_uniform]
        self._next_uniform += 1
        return value

    def step(self) -> int:
        """Advance one transition by inverse CDF over the current row."""
        row = self.state - 1
        index = bisect.bisect_right(self._cumulative[row], self._uniform())
        self.state = min(index, self._last[row]) + 1
        self.steps += 1
        return self.state

    def take(self, count: int) -> List[int]:
        return [self.step() for _ in range(count)]

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.step()


def simulate(chain: MarkovChain, steps: int, seed: int) -> Path:
    """Path of ``steps`` transitions starting at the initial state (length ``steps + 1``)."""
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    cursor = ChainCursor(chain, seed)
    return [chain.initial] + cursor.take(steps)


def stream_seeds(seed: int, count: int = 2) -> List[int]:
    """
    Integer seeds of ``count`` independent streams spawned from one run seed.

    Stream 0 drives the simulator, stream 1 the monitor, stream 2 any sampled chain.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def ground_truth(chain: MarkovChain, node: Pse) -> float:
    return evaluate(node, chain.matrix)


def empirical_counts(path: Sequence[int], n: int) -> np.ndarray:
    """Transition counts ``c_ij`` of a path as an N×N integer matrix."""
    counts = np.zeros((n, n), dtype=np.int64)
    for source, target in zip(path, path[1:]):
        counts[source - 1, target - 1] += 1
    return counts


LENDING_STATES = ("init", "g", "gbar", "gy", "gbary", "ybar", "z", "zbar")


def lending_chain(
    group: float = 0.5,
    grant_g: float = 0.7,
    grant_gbar: float = 0.4,
    repay_g: float = 0.8,
    repay_gbar: float = 0.6,
) -> MarkovChain:
    """
    Lending chain: an applicant of group ``g`` or ``gbar`` is granted a loan
    (``gy``/``gbary``) or refused (``ybar``), a granted loan is repaid (``z``) or
    not (``zbar``), and every outcome returns to ``init``.

    The default probabilities are a reconstruction chosen for experiments; no
    published matrix backs them.
    """
    index = {name: k for k, name in enumerate(LENDING_STATES)}
    rows = [[0.0] * len(LENDING_STATES) for _ in LENDING_STATES]

    def edge(source: str, target: str, value: float) -> None:
        rows[index[source]][index[target]] += value

    edge("init", "g", group)
    edge("init", "gbar", 1.0 - group)
    edge("g", "gy", grant_g)
    edge("g", "ybar", 1.0 - grant_g)
    edge("gbar", "gbary", grant_gbar)
    edge("gbar", "ybar", 1.0 - grant_gbar)
    edge("gy", "z", repay_g)
    edge("gy", "zbar", 1.0 - repay_g)
    edge("gbary", "z", repay_gbar)
    edge("gbary", "zbar", 1.0 - repay_gbar)
    for outcome in ("ybar", "z", "zbar"):
        edge(outcome, "init", 1.0)
    return new_chain(rows, initial=1, names=LENDING_STATES)


def admission_chain(
    levels: int = 10,
    group: float = 0.5,
    investment_g: Optional[Sequence[float]] = None,
    investment_gbar: Optional[Sequence[float]] = None,
) -> MarkovChain:
    """
    College-admission chain: a candidate of group ``g`` or ``gbar`` invests one of
    the levels ``0..levels`` before returning to ``init``.

    Default investment distributions (reconstructed): linearly decreasing weights
    for ``g``, uniform for ``gbar``.
    """
    if levels < 1:
        raise ChainValidationError(f"levels must be at least 1, got {levels}")
    width = levels + 1
    if investment_g is None:
        weights = np.arange(width, 0, -1, dtype=float)
        investment_g = (weights / weights.sum()).tolist()
    if investment_gbar is None:
        investment_gbar = [1.0 / width] * width
    for label, distribution in (("investment_g", investment_g), ("investment_gbar", investment_gbar)):
        if len(distribution) != width:
            raise ChainValidationError(f"{label} needs {width} entries, got {len(distribution)}")

    names = ["init", "g", "gbar"] + [str(level) for level in range(width)]
    size = len(names)
    rows = [[0.0] * size for _ in range(size)]
    rows[0][1] = group
    rows[0][2] = 1.0 - group
    for level in range(width):
        rows[1][3 + level] = float(investment_g[level])
        rows[2][3 + level] = float(investment_gbar[level])
        rows[3 + level][0] = 1.0
    return new_chain(rows, initial=1, names=names)
