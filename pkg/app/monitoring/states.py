"""
States Module
Declared state space of the observed Markov chain.
"""

from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

from .errors import ChainValidationError, UnknownStateError


class StateSpace:
    """
    States ``1..N`` with optional unique names.

    Tokens are resolved by name first, then as an integer index, so names such as
    ``"3"`` in the admission chain keep their meaning even when they collide with
    an index.
    """

    def __init__(self, size: int, names: Optional[Sequence[str]] = None):
        if size < 1:
            raise ChainValidationError(f"State space must be nonempty, got size {size}")
        if names is not None:
            names = [str(name).strip() for name in names]
            if len(names) != size:
                raise ChainValidationError(
                    f"Expected {size} state names, got {len(names)}"
                )
            if any(not name for name in names):
                raise ChainValidationError("State names must be nonempty")
            if len(set(names)) != size:
                raise ChainValidationError(f"State names must be unique: {names}")
        self.size = size
        self._names: Optional[List[str]] = list(names) if names is not None else None
        self._by_name: Dict[str, int] = (
            {name: index for index, name in enumerate(self._names, start=1)}
            if self._names is not None
            else {}
        )

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "StateSpace":
        return cls(len(names), names)

    @property
    def names(self) -> Optional[List[str]]:
        return list(self._names) if self._names is not None else None

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[int]:
        return iter(range(1, self.size + 1))

    def __contains__(self, index: object) -> bool:
        return isinstance(index, int) and 1 <= index <= self.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateSpace):
            return NotImplemented
        return self.size == other.size and self._names == other._names

    def __repr__(self) -> str:
        return f"StateSpace(size={self.size}, names={self._names})"

    def resolve(self, token: Union[str, int], line: Optional[int] = None) -> int:
        """
        Map a state token to its index.

        Args:
            token: State name or 1-based index
            line: Optional input line number reported on failure

        Returns:
            1-based state index

        Raises:
            UnknownStateError: If the token names no declared state
        """
        if isinstance(token, int):
            if token in self:
                return token
            raise UnknownStateError(str(token), line)
        text = token.strip()
        if text in self._by_name:
            return self._by_name[text]
        if text.isdigit() and int(text) in self:
            return int(text)
        raise UnknownStateError(text, line)

    def name(self, index: int) -> str:
        """Human-readable token for a state (its name, or its index)."""
        if index not in self:
            raise UnknownStateError(str(index))
        if self._names is None:
            return str(index)
        return self._names[index - 1]


def load_state_space(path: Union[str, Path]) -> StateSpace:
    """
    Load a state-space declaration file.

    Each non-blank line holds ``index name``; ``#`` starts a comment. Indices
    must cover ``1..N`` exactly once.

    Args:
        path: Path to the declaration file

    Returns:
        StateSpace with the declared names
    """
    entries: Dict[int, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not parts[0].isdigit():
            raise ChainValidationError(
                f"{path}:{number}: expected 'index name', got {raw!r}"
            )
        index = int(parts[0])
        if index in entries:
            raise ChainValidationError(f"{path}:{number}: duplicate index {index}")
        entries[index] = parts[1]

    if not entries:
        raise ChainValidationError(f"{path}: no states declared")
    size = len(entries)
    if sorted(entries) != list(range(1, size + 1)):
        raise ChainValidationError(f"{path}: indices must be exactly 1..{size}")
    return StateSpace(size, [entries[index] for index in range(1, size + 1)])
