"""
PSE Module
Probabilistic specification expressions: expression tree, parser, static
analyses, evaluation against a transition matrix, relabeling and rendering.
"""

import logging
import re
from dataclasses import dataclass, replace
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple, Union

from .errors import DivisionError, PseSyntaxError, ZeroDenominatorError
from .interval import Interval
from .states import StateSpace

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass(frozen=True, slots=True)
class Const:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    """Edge variable ``v_ij``; ``label`` tells duplicate occurrences apart (0 = unlabeled)."""

    source: int
    target: int
    label: int = 0

    @property
    def edge(self) -> Edge:
        return (self.source, self.target)


@dataclass(frozen=True, slots=True)
class Add:
    left: "Pse"
    right: "Pse"


@dataclass(frozen=True, slots=True)
class Sub:
    left: "Pse"
    right: "Pse"


@dataclass(frozen=True, slots=True)
class Mul:
    """
    Product node.

    ``implicit`` marks multiplications introduced by the parser when rewriting a
    division (``x/κ`` becomes ``(1/κ)·x``, ``x/ξ`` becomes ``x·(1/ξ)``). ``size``
    counts the first as the division; the second is counted through ``Inv``.
    """

    left: "Pse"
    right: "Pse"
    implicit: bool = False


@dataclass(frozen=True, slots=True)
class Inv:
    """Reciprocal ``1/ξ`` of a monomial-shaped subtree."""

    body: "Pse"

    def __post_init__(self):
        if not is_monomial(self.body):
            raise DivisionError(
                f"Reciprocal must wrap a product of variables, got {type(self.body).__name__}"
            )


Pse = Union[Const, Var, Add, Sub, Mul, Inv]


def is_monomial(node: Pse) -> bool:
    """True for products of variables and reciprocals, including the products a division creates."""
    if isinstance(node, (Var, Inv)):
        return True
    if isinstance(node, Mul):
        return is_monomial(node.left) and is_monomial(node.right)
    return False


def is_division_free(node: Pse) -> bool:
    if isinstance(node, Inv):
        return False
    if isinstance(node, (Add, Sub, Mul)):
        return is_division_free(node.left) and is_division_free(node.right)
    return True


# --------------------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>p)\s*\(|(?P<op>[-+*/()]))"
)


class _Parser:
    """Recursive-descent parser over the concrete PSE grammar."""

    def __init__(self, text: str, states: StateSpace):
        self.text = text
        self.states = states
        self.pos = 0

    def parse(self) -> Pse:
        node = self._expr()
        self._skip_space()
        if self.pos != len(self.text):
            raise PseSyntaxError(f"Unexpected {self.text[self.pos]!r}", self.pos)
        return node

    def _skip_space(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> Optional[str]:
        self._skip_space()
        if self.pos >= len(self.text):
            return None
        return self.text[self.pos]

    def _expect(self, char: str) -> None:
        if self._peek() != char:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            raise PseSyntaxError(f"Expected {char!r}, found {found!r}", self.pos)
        self.pos += 1

    def _expr(self) -> Pse:
        node = self._term()
        while self._peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            right = self._term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def _term(self) -> Pse:
        node = self._factor()
        while self._peek() in ("*", "/"):
            op = self.text[self.pos]
            op_pos = self.pos
            self.pos += 1
            right = self._factor()
            node = Mul(node, right) if op == "*" else self._divide(node, right, op_pos)
        return node

    def _divide(self, numerator: Pse, denominator: Pse, position: int) -> Pse:
        if isinstance(denominator, Const):
            if denominator.value == 0.0:
                raise DivisionError(f"Division by zero constant at position {position}")
            if denominator.value < 0.0:
                raise DivisionError(
                    f"Constant denominator must be positive, got {denominator.value} "
                    f"at position {position}"
                )
            if isinstance(numerator, Const):
                return Const(numerator.value / denominator.value)
            return Mul(Const(1.0 / denominator.value), numerator, implicit=True)
        if is_monomial(denominator):
            if isinstance(numerator, Const) and numerator.value == 1.0:
                return Inv(denominator)
            return Mul(numerator, Inv(denominator), implicit=True)
        raise DivisionError(
            f"Denominator at position {position} must be a product of variables "
            f"or a positive constant"
        )

    def _factor(self) -> Pse:
        self._skip_space()
        start = self.pos
        match = _TOKEN_RE.match(self.text, self.pos)
        if match is None:
            if self.pos >= len(self.text):
                raise PseSyntaxError("Unexpected end of input", self.pos)
            raise PseSyntaxError(f"Unexpected {self.text[self.pos]!r}", self.pos)

        if match.group("number") is not None:
            self.pos = match.end()
            return Const(float(match.group("number")))
        if match.group("var") is not None:
            self.pos = match.end()
            source = self._state_token(",")
            self._expect(",")
            target = self._state_token(")")
            self._expect(")")
            return Var(source, target)

        op = match.group("op")
        self.pos = match.end()
        if op == "(":
            node = self._expr()
            self._expect(")")
            return node
        if op == "-":
            number = _TOKEN_RE.match(self.text, self.pos)
            if number is None or number.group("number") is None:
                raise PseSyntaxError("Unary minus is only allowed before a number", start)
            self.pos = number.end()
            return Const(-float(number.group("number")))
        raise PseSyntaxError(f"Unexpected {op!r}", start)

    def _state_token(self, terminator: str) -> int:
        self._skip_space()
        start = self.pos
        end = start
        while end < len(self.text) and self.text[end] not in ",()":
            end += 1
        token = self.text[start:end].strip()
        if not token:
            raise PseSyntaxError("Missing state in p(i,j)", start)
        if end >= len(self.text) or self.text[end] != terminator:
            raise PseSyntaxError(f"Expected {terminator!r} after state {token!r}", end)
        self.pos = end
        return self.states.resolve(token)


def parse_pse(text: str, states: StateSpace) -> Pse:
    """
    Parse PSE text into an expression tree.

    Args:
        text: Expression such as ``"p(g,gy) - p(gbar,gbary)"``
        states: Declared state space used to resolve ``p(i,j)`` arguments

    Returns:
        Expression tree with constant divisions rewritten to multiplications

    Raises:
        PseSyntaxError: On malformed text (position reported)
        UnknownStateError: On an undeclared state
        DivisionError: On a denominator that is neither a monomial nor a positive constant
    """
    return _Parser(text, states).parse()


# --------------------------------------------------------------------------- analyses

def iter_vars(node: Pse) -> Iterator[Var]:
    """Variable occurrences in left-to-right order."""
    if isinstance(node, Var):
        yield node
    elif isinstance(node, Inv):
        yield from iter_vars(node.body)
    elif isinstance(node, (Add, Sub, Mul)):
        yield from iter_vars(node.left)
        yield from iter_vars(node.right)


def size(node: Pse) -> int:
    """Number of arithmetic operators; each division counts once, through its reciprocal when it has one."""
    if isinstance(node, (Const, Var)):
        return 0
    if isinstance(node, Inv):
        return 1 + size(node.body)
    own = 0 if isinstance(node, Mul) and node.implicit and isinstance(node.right, Inv) else 1
    return own + size(node.left) + size(node.right)


def written_size(node: Pse) -> int:
    """Number of symbols when written out: leaves plus every operator."""
    if isinstance(node, (Const, Var)):
        return 1
    if isinstance(node, Inv):
        return 1 + written_size(node.body)
    return 1 + written_size(node.left) + written_size(node.right)


def variables(node: Pse) -> FrozenSet[Edge]:
    return frozenset(var.edge for var in iter_vars(node))


def dep_states(node: Pse) -> FrozenSet[int]:
    return frozenset(var.source for var in iter_vars(node))


def domain_states(node: Pse) -> FrozenSet[int]:
    """States touched by some variable, as source or target."""
    found = set()
    for var in iter_vars(node):
        found.add(var.source)
        found.add(var.target)
    return frozenset(found)


def static_range(node: Pse) -> Interval:
    """
    Range of a division-free PSE when every variable occurrence ranges over [0, 1]
    independently.

    Raises:
        DivisionError: If the tree contains a reciprocal
    """
    if isinstance(node, Const):
        return Interval.point(node.value)
    if isinstance(node, Var):
        return Interval(0.0, 1.0)
    if isinstance(node, Inv):
        raise DivisionError("Static range is unbounded for expressions with division")
    left = static_range(node.left)
    right = static_range(node.right)
    if isinstance(node, Add):
        return left + right
    if isinstance(node, Sub):
        return left - right
    return left * right


def matrix_entry(matrix: Any, source: int, target: int) -> float:
    if hasattr(matrix, "prob"):
        return matrix.prob(source, target)
    return float(matrix[source - 1][target - 1])


def evaluate(node: Pse, matrix: Any) -> float:
    """
    Evaluate φ(M) by substituting ``M_ij`` for every ``v_ij``.

    Args:
        node: Expression tree
        matrix: TransitionMatrix, or any N×N array indexed from 0

    Raises:
        ZeroDenominatorError: If a reciprocal's monomial evaluates to 0
    """
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return matrix_entry(matrix, node.source, node.target)
    if isinstance(node, Inv):
        denominator = evaluate(node.body, matrix)
        if denominator == 0.0:
            raise ZeroDenominatorError("Reciprocal of a monomial that evaluates to 0")
        return 1.0 / denominator
    left = evaluate(node.left, matrix)
    right = evaluate(node.right, matrix)
    if isinstance(node, Add):
        return left + right
    if isinstance(node, Sub):
        return left - right
    return left * right


def relabel_duplicates(node: Pse) -> Pse:
    """Give every occurrence of a variable its own label, 1, 2, ... left to right."""
    counters: Dict[Edge, int] = {}

    def walk(current: Pse) -> Pse:
        if isinstance(current, Var):
            label = counters.get(current.edge, 0) + 1
            counters[current.edge] = label
            return replace(current, label=label)
        if isinstance(current, Inv):
            return Inv(walk(current.body))
        if isinstance(current, (Add, Sub, Mul)):
            left = walk(current.left)
            right = walk(current.right)
            return replace(current, left=left, right=right)
        return current

    return walk(node)


def square(node: Pse) -> Pse:
    return Mul(node, node)


# --------------------------------------------------------------------------- rendering

def _number(value: float) -> str:
    return repr(float(value))


def to_text(node: Pse, states: Optional[StateSpace] = None) -> str:
    """Render a tree in the concrete grammar; the text parses back to an equivalent tree."""

    def token(index: int) -> str:
        return states.name(index) if states is not None else str(index)

    def render(current: Pse, min_prec: int) -> str:
        if isinstance(current, Const):
            return _number(current.value)
        if isinstance(current, Var):
            return f"p({token(current.source)},{token(current.target)})"

        if isinstance(current, (Add, Sub)):
            prec = 1
            op = "+" if isinstance(current, Add) else "-"
            text = f"{render(current.left, 1)} {op} {render(current.right, 2)}"
        elif isinstance(current, Inv):
            prec = 2
            text = f"1/{render(current.body, 3)}"
        elif current.implicit and isinstance(current.left, Const):
            prec = 2
            text = f"{render(current.right, 2)}/{_number(1.0 / current.left.value)}"
        elif current.implicit and isinstance(current.right, Inv):
            prec = 2
            text = f"{render(current.left, 2)}/{render(current.right.body, 3)}"
        else:
            prec = 2
            text = f"{render(current.left, 2)}*{render(current.right, 3)}"
        return f"({text})" if prec < min_prec else text

    return render(node, 0)


# --------------------------------------------------------------------------- fairness encodings

def demographic_parity(g: str = "g", gbar: str = "gbar", gy: str = "gy", gbary: str = "gbary") -> str:
    """Difference of the loan-granting probabilities of the two groups."""
    return f"p({g},{gy}) - p({gbar},{gbary})"


def disparate_impact(g: str = "g", gbar: str = "gbar", gy: str = "gy", gbary: str = "gbary") -> str:
    """Ratio of the loan-granting probabilities of the two groups."""
    return f"p({g},{gy}) / p({gbar},{gbary})"


def equal_opportunity(
    c1: float,
    c2: float,
    g: str = "g",
    gbar: str = "gbar",
    gy: str = "gy",
    gbary: str = "gbary",
    repaid: str = "z",
) -> str:
    """
    Equal opportunity after Bayes' rule, with the known repayment rates
    ``P(z | g) = c1`` and ``P(z | gbar) = c2`` as constant denominators.
    """
    if c1 <= 0 or c2 <= 0:
        raise DivisionError(f"Repayment rates must be positive, got c1={c1}, c2={c2}")
    return (
        f"(p({gy},{repaid})*p({g},{gy}))/{_number(c1)} "
        f"- (p({gbary},{repaid})*p({gbar},{gbary}))/{_number(c2)}"
    )


def social_burden(levels: int, group: str = "g") -> str:
    """Expected investment ``1·v_g1 + ... + N·v_gN`` of the qualified group."""
    if levels < 1:
        raise ValueError(f"levels must be at least 1, got {levels}")
    return " + ".join(f"{level}*p({group},{level})" for level in range(1, levels + 1))


def occurrence_count(node: Pse) -> int:
    return sum(1 for _ in iter_vars(node))


def occurrences(node: Pse) -> List[Var]:
    return list(iter_vars(node))
