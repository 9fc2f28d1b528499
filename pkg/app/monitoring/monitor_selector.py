"""
Monitor Selector Module
Builds the monitor for a requested mode and moves monitors in and out of
versioned snapshots.
"""

import logging
from typing import Any, Dict, Optional, Protocol

from .bayesian import DEFAULT_RESYNC_INTERVAL, BayesMonitor, PriorTheta
from .errors import ConfigError, SnapshotError
from .frequentist import BaselineMonitor, FreqMonitor
from .outputs import MonitorOutput
from .pse import Pse, is_division_free, to_text
from .schema import SNAPSHOT_VERSION, MonitorMode, MonitorSnapshot
from .states import StateSpace

logger = logging.getLogger(__name__)

MODES = ("freq", "freq-baseline", "bayes")


class Monitor(Protocol):
    output: MonitorOutput

    def next(self, symbol: int) -> MonitorOutput: ...

    def register_count(self) -> int: ...

    def snapshot(self) -> Dict[str, Any]: ...

    def restore(self, payload: Dict[str, Any]) -> None: ...


class MonitorSelector:
    """Selects and initializes monitors for one state space."""

    def __init__(
        self,
        states: StateSpace,
        delta: float = 0.05,
        prior: Optional[PriorTheta] = None,
        resync_interval: int = DEFAULT_RESYNC_INTERVAL,
    ):
        """
        Initialize monitor selector.

        Args:
            states: Declared state space
            delta: Confidence parameter δ for every monitor built
            prior: Matrix-beta prior for Bayesian monitors (uniform when None)
            resync_interval: Steps between exact recomputations in Bayesian monitors
        """
        if not 0.0 < delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {delta}")
        self.states = states
        self.delta = delta
        self.prior = prior
        self.resync_interval = resync_interval

    def get_prior(self) -> PriorTheta:
        if self.prior is None:
            logger.warning("No prior given; assuming the uniform prior over %d states", len(self.states))
            self.prior = PriorTheta.uniform(len(self.states))
        if self.prior.n != len(self.states):
            raise ConfigError(f"Prior is {self.prior.n}×{self.prior.n} but there are {len(self.states)} states")
        return self.prior

    def build(
        self,
        mode: MonitorMode,
        node: Pse,
        seed: Optional[int] = None,
        initial: Optional[int] = None,
    ) -> Monitor:
        """
        Build a monitor for ``node``.

        Raises:
            ConfigError: On an unknown mode or a prior of the wrong size
        """
        if mode == "freq":
            if not is_division_free(node):
                logger.info("Expression has division; using the decomposing frequentist monitor")
            return FreqMonitor(self.states, node, self.delta, seed, initial)
        if mode == "freq-baseline":
            return BaselineMonitor(self.states, node, self.delta, seed, initial)
        if mode == "bayes":
            return BayesMonitor(self.states, node, self.get_prior(), self.delta, initial, self.resync_interval)
        raise ConfigError(f"Unknown monitor mode {mode!r}; expected one of {', '.join(MODES)}")

    def snapshot(
        self,
        monitor: Monitor,
        mode: MonitorMode,
        node: Pse,
        seed: Optional[int] = None,
        step: int = 0,
    ) -> MonitorSnapshot:
        return MonitorSnapshot(
            mode=mode,
            spec=to_text(node, self.states),
            delta=self.delta,
            seed=seed,
            states=len(self.states),
            step=step,
            payload=monitor.snapshot(),
        )

    def restore(self, snapshot: MonitorSnapshot, mode: MonitorMode, node: Pse) -> Monitor:
        """
        Rebuild a monitor from a snapshot taken with the same mode and expression.

        Raises:
            SnapshotError: On a version, mode, expression, δ or state-space mismatch
        """
        if snapshot.version != SNAPSHOT_VERSION:
            raise SnapshotError(f"Unsupported snapshot version {snapshot.version}")
        if snapshot.mode != mode:
            raise SnapshotError(f"Snapshot was taken in mode {snapshot.mode!r}, not {mode!r}")
        if snapshot.spec != to_text(node, self.states):
            raise SnapshotError(f"Snapshot monitors {snapshot.spec!r}, not {to_text(node, self.states)!r}")
        if snapshot.states != len(self.states):
            raise SnapshotError(f"Snapshot has {snapshot.states} states, expected {len(self.states)}")
        if snapshot.delta is not None and snapshot.delta != self.delta:
            raise SnapshotError(f"Snapshot uses delta={snapshot.delta}, not {self.delta}")
        monitor = self.build(mode, node, snapshot.seed)
        monitor.restore(snapshot.payload)
        return monitor
