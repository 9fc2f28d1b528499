"""
Chain Loader Module
Loads chain configs, state-space files, prior files and state traces.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from pydantic import ValidationError

from .errors import ChainValidationError, ConfigError
from .markov import MarkovChain, new_chain
from .schema import ChainConfig
from .states import StateSpace, load_state_space

logger = logging.getLogger(__name__)

CONFIGS_DIR = Path(__file__).parent.parent.parent / "configs"


class ChainLoader:
    """Loads and validates chain descriptions from JSON files or dictionaries."""

    def __init__(self, configs_dir: Optional[Union[str, Path]] = None):
        self.configs_dir = Path(configs_dir) if configs_dir is not None else CONFIGS_DIR

    def resolve_path(self, path: Union[str, Path]) -> Path:
        """Use the path as given if it exists, else look it up in the configs directory."""
        candidate = Path(path)
        if candidate.exists():
            return candidate
        bundled = self.configs_dir / candidate
        if bundled.exists():
            return bundled
        raise ConfigError(f"File not found: {path}")

    def load_from_path(self, path: Union[str, Path]) -> MarkovChain:
        """
        Load a chain config file.

        Args:
            path: JSON file with ``states``, ``initial``, ``rows`` and optional ``names``

        Returns:
            Validated MarkovChain
        """
        resolved = self.resolve_path(path)
        try:
            data = json.loads(resolved.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Chain config {resolved} is not valid JSON: {str(e)}")
        return self.load_from_dict(data)

    def load_from_dict(self, data: Union[Dict[str, Any], ChainConfig]) -> MarkovChain:
        if isinstance(data, ChainConfig):
            config = data
        else:
            try:
                config = ChainConfig.model_validate(data)
            except ValidationError as e:
                raise ChainValidationError(f"Invalid chain config: {str(e)}")
        chain = new_chain(config.rows, config.initial_index(), config.names)
        logger.debug("Loaded chain with %d states, initial %d", chain.n, chain.initial)
        return chain

    def validate_chain_config(self, data: Any) -> Tuple[bool, Optional[str]]:
        """
        Check whether a chain config can be loaded.

        Returns:
            Tuple of (is_valid, error_message)
        """
        try:
            if isinstance(data, (str, Path)):
                self.load_from_path(data)
            else:
                self.load_from_dict(data)
            return True, None
        except (ChainValidationError, ConfigError) as e:
            return False, str(e)

    def load_states(self, path: Union[str, Path]) -> StateSpace:
        return load_state_space(self.resolve_path(path))

    def load_prior_rows(self, path: Union[str, Path]) -> List[List[int]]:
        """Integer matrix, one whitespace-separated row per line; ``#`` starts a comment."""
        resolved = self.resolve_path(path)
        rows: List[List[int]] = []
        for number, raw in enumerate(resolved.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([int(token) for token in line.split()])
            except ValueError:
                raise ConfigError(f"{resolved}:{number}: prior entries must be integers, got {raw!r}")
        if not rows:
            raise ConfigError(f"{resolved}: prior file is empty")
        return rows


def load_spec_text(value: str, configs_dir: Optional[Union[str, Path]] = None) -> str:
    """An expression given inline, or the contents of a file (also looked up in ``configs_dir``)."""
    candidates = [Path(value)]
    if configs_dir is not None:
        candidates.append(Path(configs_dir) / value)
    for candidate in candidates:
        try:
            if candidate.is_file():
                return candidate.read_text(encoding="utf-8").strip()
        except OSError:
            continue
    return value


def iter_trace(lines: Iterable[str], states: StateSpace) -> Iterator[Tuple[int, int]]:
    """
    Resolve a newline-delimited trace.

    Yields:
        ``(line_number, state_index)`` for every non-blank line

    Raises:
        UnknownStateError: With the offending line number
    """
    for number, raw in enumerate(lines, start=1):
        token = raw.strip()
        if not token:
            continue
        yield number, states.resolve(token, line=number)


def load_trace(path: Union[str, Path], states: StateSpace) -> List[int]:
    with open(path, encoding="utf-8") as handle:
        return [state for _, state in iter_trace(handle, states)]


def format_trace(path: Iterable[int], states: StateSpace) -> Iterator[str]:
    for state in path:
        yield states.name(state)
