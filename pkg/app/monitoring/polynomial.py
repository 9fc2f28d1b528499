"""
Polynomial Module
Polynomial normal form of PSEs and the a + b/c division decomposition.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, Iterator, Tuple

from .errors import DivisionError, ZeroDenominatorError
from .pse import Add, Const, Edge, Inv, Mul, Pse, Sub, Var, matrix_entry

Exponents = Tuple[Tuple[Edge, int], ...]


def _normalize(exponents: Dict[Edge, int]) -> Exponents:
    return tuple(sorted((edge, power) for edge, power in exponents.items() if power != 0))


@dataclass(frozen=True, slots=True)
class Monomial:
    """
    ``κ · Π v_ij^d_ij`` with signed integer exponents.

    Exponents are kept as a sorted tuple without zero entries, so two monomials
    over the same variables compare equal on ``exponents``.
    """

    coefficient: float = 1.0
    exponents: Exponents = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "exponents", _normalize(dict(self.exponents)))

    @classmethod
    def variable(cls, source: int, target: int, power: int = 1) -> "Monomial":
        return cls(1.0, (((source, target), power),))

    @classmethod
    def constant(cls, value: float) -> "Monomial":
        return cls(float(value), ())

    @property
    def powers(self) -> Dict[Edge, int]:
        return dict(self.exponents)

    def exponent(self, source: int, target: int) -> int:
        """``d_ij``; 0 when the variable does not occur."""
        for edge, power in self.exponents:
            if edge == (source, target):
                return power
        return 0

    def row_exponent(self, source: int) -> int:
        """``d_i = Σ_j d_ij``."""
        return sum(power for (i, _), power in self.exponents if i == source)

    def row_exponents(self) -> Dict[int, int]:
        rows: Dict[int, int] = {}
        for (i, _), power in self.exponents:
            rows[i] = rows.get(i, 0) + power
        return rows

    @property
    def edges(self) -> FrozenSet[Edge]:
        return frozenset(edge for edge, _ in self.exponents)

    @property
    def is_constant(self) -> bool:
        return not self.exponents

    @property
    def has_division(self) -> bool:
        return any(power < 0 for _, power in self.exponents)

    @property
    def degree(self) -> int:
        return sum(abs(power) for _, power in self.exponents)

    def __mul__(self, other: "Monomial") -> "Monomial":
        powers = self.powers
        for edge, power in other.exponents:
            powers[edge] = powers.get(edge, 0) + power
        return Monomial(self.coefficient * other.coefficient, _normalize(powers))

    def scaled(self, factor: float) -> "Monomial":
        return Monomial(self.coefficient * factor, self.exponents)

    def reciprocal(self) -> "Monomial":
        if self.coefficient == 0.0:
            raise DivisionError("Reciprocal of a zero monomial")
        return Monomial(
            1.0 / self.coefficient,
            tuple((edge, -power) for edge, power in self.exponents),
        )

    def evaluate(self, matrix: Any) -> float:
        value = self.coefficient
        for (i, j), power in self.exponents:
            entry = matrix_entry(matrix, i, j)
            if power < 0 and entry == 0.0:
                raise ZeroDenominatorError(f"Monomial divides by p({i},{j}) = 0")
            value *= entry**power
        return value

    def to_pse(self) -> Pse:
        """Tree of repeated variables, led by ``Const(κ)`` when κ ≠ 1."""
        if self.has_division:
            raise DivisionError("Only division-free monomials convert to a product tree")
        factors = [Var(i, j) for (i, j), power in self.exponents for _ in range(power)]
        if self.coefficient != 1.0 or not factors:
            factors.insert(0, Const(self.coefficient))
        node: Pse = factors[0]
        for factor in factors[1:]:
            node = Mul(node, factor)
        return node

    def written_size(self) -> int:
        factors = self.degree
        if abs(self.coefficient) != 1.0 or self.is_constant:
            factors += 1
        return 2 * factors - 1


@dataclass(frozen=True, slots=True)
class Polynomial:
    """Weighted sum of monomials with like terms merged in first-appearance order."""

    monomials: Tuple[Monomial, ...] = ()

    def __post_init__(self):
        merged: Dict[Exponents, float] = {}
        for monomial in self.monomials:
            merged[monomial.exponents] = merged.get(monomial.exponents, 0.0) + monomial.coefficient
        object.__setattr__(
            self,
            "monomials",
            tuple(
                Monomial(coefficient, exponents)
                for exponents, coefficient in merged.items()
                if coefficient != 0.0
            ),
        )

    @classmethod
    def of(cls, terms: Iterable[Monomial]) -> "Polynomial":
        return cls(tuple(terms))

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls((Monomial.constant(value),))

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self.monomials)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(self.monomials + other.monomials)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(monomial.scaled(-1.0) for monomial in self.monomials))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(tuple(a * b for a in self.monomials for b in other.monomials))

    @property
    def is_zero(self) -> bool:
        return not self.monomials

    @property
    def has_division(self) -> bool:
        return any(monomial.has_division for monomial in self.monomials)

    def variables(self) -> FrozenSet[Edge]:
        return frozenset(edge for monomial in self.monomials for edge in monomial.edges)

    def dep_states(self) -> FrozenSet[int]:
        return frozenset(i for i, _ in self.variables())

    def evaluate(self, matrix: Any) -> float:
        return sum((monomial.evaluate(matrix) for monomial in self.monomials), 0.0)

    def to_pse(self) -> Pse:
        """Sum tree of the monomials; ``Const(0.0)`` for the zero polynomial."""
        if not self.monomials:
            return Const(0.0)
        node = self.monomials[0].to_pse()
        for monomial in self.monomials[1:]:
            node = Add(node, monomial.to_pse())
        return node

    def written_size(self) -> int:
        """Symbols of the written-out sum; signs between monomials count once each."""
        if not self.monomials:
            return 1
        return sum(m.written_size() for m in self.monomials) + len(self.monomials) - 1


def to_polynomial(node: Pse) -> Polynomial:
    """
    Distribute products over sums until φ is a weighted sum of monomials.

    Exponents add under multiplication; a reciprocal negates the exponents of its
    monomial. Like monomials are merged and zero coefficients dropped.
    """
    if isinstance(node, Const):
        return Polynomial.constant(node.value)
    if isinstance(node, Var):
        return Polynomial((Monomial.variable(node.source, node.target),))
    if isinstance(node, Inv):
        body = to_polynomial(node.body)
        if len(body) != 1:
            raise DivisionError("Reciprocal body does not reduce to a single monomial")
        return Polynomial((body.monomials[0].reciprocal(),))
    left = to_polynomial(node.left)
    right = to_polynomial(node.right)
    if isinstance(node, Add):
        return left + right
    if isinstance(node, Sub):
        return left - right
    return left * right


def decompose_division(node: Pse) -> Tuple[Polynomial, Polynomial, Monomial]:
    """
    Rewrite φ as ``φ_a + φ_b / φ_c`` with all three parts division-free.

    Args:
        node: Expression tree, possibly with reciprocals

    Returns:
        Tuple ``(φ_a, φ_b, φ_c)``: the division-free monomials, the division-carrying
        monomials multiplied by the common denominator, and the least common
        denominator itself. Without division this is ``(poly(φ), 0, 1)``.
    """
    polynomial = to_polynomial(node)
    denominator: Dict[Edge, int] = {}
    for monomial in polynomial:
        for edge, power in monomial.exponents:
            if power < 0:
                denominator[edge] = max(denominator.get(edge, 0), -power)
    common = Monomial(1.0, _normalize(denominator))

    plain = Polynomial.of(m for m in polynomial if not m.has_division)
    scaled = Polynomial.of(m * common for m in polynomial if m.has_division)
    return plain, scaled, common
