"""
Harness Module
Experiment engine: monitored runs over simulated chains, coverage statistics,
the baseline error-ratio study and update-latency measurements.
"""

import json
import logging
import math
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .bayesian import PriorTheta, sample_prior_matrix
from .chain_loader import ChainLoader, load_spec_text
from .errors import ConfigError, HarnessError
from .frequentist import BaselineMonitor, FreqMonitorDivFree
from .markov import ChainCursor, MarkovChain, ground_truth, new_chain, stream_seeds
from .metrics_writer import MetricsWriter
from .monitor_selector import Monitor, MonitorSelector
from .outputs import Estimate, MonitorOutput, output_fields
from .pse import Pse, parse_pse
from .schema import CoverageResult, ExperimentConfig, LatencyReport, MetricsRow, validate_experiment_config
from .settings import Settings, get_settings

logger = logging.getLogger(__name__)

RATIO_TOLERANCE = 1e-6

_DONE = object()


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Raises:
        ConfigError: If the file is missing or fails validation
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read experiment config {path}: {str(e)}")
    result = validate_experiment_config(text)
    if not result.is_valid:
        raise ConfigError("; ".join(result.errors))
    for warning in result.warnings:
        logger.warning(warning)
    return ExperimentConfig.model_validate(result.data)


class ExperimentHarness:
    """Runs the experiments described by an ExperimentConfig."""

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self.loader = ChainLoader(self.settings.configs_dir)
        self.writer = MetricsWriter()
        self._chain: Optional[MarkovChain] = None
        self._node: Optional[Pse] = None

    @property
    def chain(self) -> MarkovChain:
        if self._chain is None:
            if self.config.chain is None:
                raise ConfigError(f"kind {self.config.kind!r} needs a chain")
            if isinstance(self.config.chain, str):
                self._chain = self.loader.load_from_path(self.config.chain)
            else:
                self._chain = self.loader.load_from_dict(self.config.chain)
        return self._chain

    @property
    def node(self) -> Pse:
        if self._node is None:
            if self.config.spec is None:
                raise ConfigError(f"kind {self.config.kind!r} needs a spec")
            self._node = parse_pse(load_spec_text(self.config.spec, self.settings.configs_dir), self.chain.states)
        return self._node

    def prior(self) -> Optional[PriorTheta]:
        if self.config.prior is None:
            return None
        rows = self.config.prior
        if isinstance(rows, str):
            rows = self.loader.load_prior_rows(rows)
        return PriorTheta.from_rows(rows)

    def selector(self) -> MonitorSelector:
        return MonitorSelector(
            self.chain.states,
            delta=self.config.delta,
            prior=self.prior(),
            resync_interval=self.settings.resync_interval,
        )

    # ----------------------------------------------------------------------- event stream

    def _chunks(self, chain: MarkovChain, seed: int) -> Iterator[List[int]]:
        """Path of ``steps`` transitions in chunks; the first chunk starts with the initial state."""
        cursor = ChainCursor(chain, seed)
        chunk_size = self.settings.chunk_size
        chunk = [chain.initial]
        remaining = self.config.steps
        while remaining > 0:
            take = min(chunk_size - len(chunk), remaining)
            chunk.extend(cursor.take(take))
            remaining -= take
            if len(chunk) >= chunk_size:
                yield chunk
                chunk = []
        if chunk:
            yield chunk

    def _threaded_chunks(self, chain: MarkovChain, seed: int) -> Iterator[List[int]]:
        """Same chunks, produced on a separate thread through a bounded FIFO queue."""
        channel: "queue.Queue" = queue.Queue(maxsize=self.settings.queue_size)
        stop = threading.Event()
        failure: List[BaseException] = []

        def produce() -> None:
            try:
                for chunk in self._chunks(chain, seed):
                    while not stop.is_set():
                        try:
                            channel.put(chunk, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    if stop.is_set():
                        return
            except BaseException as e:
                failure.append(e)
            finally:
                while not stop.is_set():
                    try:
                        channel.put(_DONE, timeout=0.1)
                        break
                    except queue.Full:
                        continue

        producer = threading.Thread(target=produce, name=f"simulator-{seed}", daemon=True)
        producer.start()
        try:
            while True:
                item = channel.get()
                if item is _DONE:
                    break
                yield item
        finally:
            stop.set()
            producer.join()
        if failure:
            raise HarnessError(f"Simulation failed: {str(failure[0])}")

    def _stream(self, chain: MarkovChain, seed: int) -> Iterator[List[int]]:
        if self.config.threaded:
            return self._threaded_chunks(chain, seed)
        return self._chunks(chain, seed)

    # ----------------------------------------------------------------------- runs

    def run_single(self, run: int, seed: int, selector: Optional[MonitorSelector] = None) -> List[MetricsRow]:
        """Monitor one simulated run, recording a row every ``stride`` steps and at the last step."""
        selector = selector or self.selector()
        simulation_seed, monitor_seed = stream_seeds(seed)
        monitor = selector.build(self.config.mode, self.node, monitor_seed)
        stride, steps = self.config.stride, self.config.steps
        rows: List[MetricsRow] = []
        step = -1
        for chunk in self._stream(self.chain, simulation_seed):
            for state in chunk:
                step += 1
                started = time.perf_counter_ns()
                output = monitor.next(state)
                elapsed = time.perf_counter_ns() - started
                if step >= 1 and (step % stride == 0 or step == steps):
                    rows.append(_metrics_row(run, step, state, output, elapsed))
        return rows

    def run_experiment(self) -> pd.DataFrame:
        """
        Monitor every configured run.

        Returns:
            Metrics table with columns run, step, state, lo, hi, mean, width, update_ns
        """
        seeds = self.config.run_seeds()
        selector = self.selector()
        logger.debug("Monitoring %r over %d runs", self.node, len(seeds))
        jobs = list(enumerate(seeds))
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            results = list(pool.map(lambda job: self.run_single(job[0], job[1], selector), jobs))
        rows = [row for run_rows in results for row in run_rows]
        logger.info("Recorded %d rows over %d runs", len(rows), len(seeds))
        return self.writer.rows_to_dataframe(rows)

    def _final_output(self, chain: MarkovChain, seed: int, selector: MonitorSelector) -> MonitorOutput:
        simulation_seed, monitor_seed = stream_seeds(seed)
        monitor = selector.build(self.config.mode, self.node, monitor_seed)
        output: MonitorOutput = monitor.output
        for chunk in self._stream(chain, simulation_seed):
            for state in chunk:
                output = monitor.next(state)
        return output

    def _chain_for_run(self, seed: int) -> MarkovChain:
        if not self.config.sample_from_prior:
            return self.chain
        prior = self.prior() or PriorTheta.uniform(self.chain.n)
        rng = np.random.default_rng(stream_seeds(seed, 3)[2])
        matrix = sample_prior_matrix(prior, rng)
        return MarkovChain(matrix=matrix, initial=self.chain.initial, states=self.chain.states)

    def coverage(self) -> CoverageResult:
        """Fraction of runs whose final interval contains the ground truth, with its binomial s.e."""
        seeds = self.config.run_seeds()
        selector = self.selector()
        logger.debug("Monitoring %r over %d runs", self.node, len(seeds))

        def one(seed: int) -> Tuple[bool, bool, float]:
            chain = self._chain_for_run(seed)
            truth = ground_truth(chain, self.node)
            output = self._final_output(chain, seed, selector)
            if not isinstance(output, Estimate):
                return False, True, truth
            return output.contains(truth), False, truth

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            outcomes = list(pool.map(one, seeds))

        hits = sum(1 for hit, _, _ in outcomes if hit)
        pending = sum(1 for _, was_pending, _ in outcomes if was_pending)
        runs = len(outcomes)
        fraction = hits / runs
        if pending:
            logger.warning("%d of %d runs ended without an estimate", pending, runs)
        return CoverageResult(
            hits=hits,
            runs=runs,
            fraction=fraction,
            standard_error=math.sqrt(fraction * (1.0 - fraction) / runs),
            truth=None if self.config.sample_from_prior else outcomes[0][2],
            pending=pending,
        )

    def latency_report(self) -> LatencyReport:
        """Mean and max wall-clock time of ``next()`` after a warmup, plus the register count."""
        if self.config.warmup < 1:
            raise HarnessError("Latency measurement needs a warmup of at least 1 step")
        simulation_seed, monitor_seed = stream_seeds(self.config.run_seeds()[0])
        monitor = self.selector().build(self.config.mode, self.node, monitor_seed)
        cursor = ChainCursor(self.chain, simulation_seed)
        monitor.next(self.chain.initial)
        for state in cursor.take(self.config.warmup):
            monitor.next(state)
        timings = np.empty(self.config.steps, dtype=np.int64)
        for index, state in enumerate(cursor.take(self.config.steps)):
            started = time.perf_counter_ns()
            monitor.next(state)
            timings[index] = time.perf_counter_ns() - started
        return LatencyReport(
            mean_ns=float(timings.mean()),
            max_ns=int(timings.max()),
            registers=monitor.register_count(),
            steps=self.config.steps,
            warmup=self.config.warmup,
            mode=self.config.mode,
        )

    def execute(self) -> pd.DataFrame:
        """Run the experiment named by ``kind`` and return its table."""
        kind = self.config.kind
        if kind == "run":
            return self.run_experiment()
        if kind == "coverage":
            return pd.DataFrame([self.coverage().model_dump()])
        if kind == "ratio":
            return error_ratio_study(
                self.config.n_max,
                self.config.delta,
                self.config.trace_lengths,
                seed=self.config.run_seeds()[0],
            )
        if kind == "latency":
            return pd.DataFrame([self.latency_report().model_dump()])
        raise ConfigError(f"Unknown experiment kind {kind!r}")


def _metrics_row(run: int, step: int, state: int, output: MonitorOutput, elapsed: int) -> MetricsRow:
    lo, hi, mean, width = output_fields(output)
    return MetricsRow(run=run, step=step, state=state, lo=lo, hi=hi, mean=mean, width=width, update_ns=elapsed)


def feed(monitor: Monitor, path: Iterable[int]) -> MonitorOutput:
    """Feed a whole path and return the last verdict."""
    output = monitor.output
    for state in path:
        output = monitor.next(state)
    return output


# --------------------------------------------------------------------------- error-ratio study

def ratio_chain(n: int) -> MarkovChain:
    """States 1..n+1: state 1 moves uniformly to every state, every other state returns to 1."""
    size = n + 1
    rows = [[1.0 / size] * size]
    for _ in range(n):
        rows.append([1.0] + [0.0] * n)
    return new_chain(rows, initial=1)


def ratio_spec(n: int) -> str:
    return " + ".join(f"p(1,{i})" for i in range(1, n + 1))


def analytic_error_ratio(n: int, delta: float) -> float:
    """Baseline over combined half-width for a sum of n variables from one state."""
    return math.sqrt(math.log(2.0 * n / delta) / math.log(2.0 / delta))


def error_ratio_study(
    n_max: int,
    delta: float,
    trace_lengths: Iterable[int] = (1_000, 10_000),
    seed: int = 0,
) -> pd.DataFrame:
    """
    Compare the per-variable baseline with the combined monitor on ``Σ_{i≤n} p(1,i)``.

    Returns:
        Table with columns n, analytic_ratio and one empirical_ratio_<L> per trace length

    Raises:
        HarnessError: If a monitor stays pending or the empirical ratio moves with the trace length
    """
    if n_max < 1:
        raise ConfigError(f"n_max must be at least 1, got {n_max}")
    lengths = list(trace_lengths)
    records = []
    simulation_seed, monitor_seed = stream_seeds(seed)
    for n in range(1, n_max + 1):
        chain = ratio_chain(n)
        node = parse_pse(ratio_spec(n), chain.states)
        record = {"n": n, "analytic_ratio": analytic_error_ratio(n, delta)}
        for length in lengths:
            path = [chain.initial] + ChainCursor(chain, simulation_seed).take(length)
            ours = feed(FreqMonitorDivFree(chain.states, node, delta, monitor_seed), path)
            baseline = feed(BaselineMonitor(chain.states, node, delta, monitor_seed), path)
            if not (isinstance(ours, Estimate) and isinstance(baseline, Estimate)):
                raise HarnessError(f"Trace of length {length} gave no estimate for n={n}")
            record[f"empirical_ratio_{length}"] = baseline.radius / ours.radius
        empirical = [record[f"empirical_ratio_{length}"] for length in lengths]
        if max(empirical) - min(empirical) > RATIO_TOLERANCE:
            raise HarnessError(f"Error ratio for n={n} depends on the trace length: {empirical}")
        records.append(record)
    return pd.DataFrame(records)


def load_and_execute(path: Union[str, Path], settings: Optional[Settings] = None) -> Tuple[ExperimentConfig, pd.DataFrame]:
    config = load_experiment_config(path)
    return config, ExperimentHarness(config, settings).execute()


def describe(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(exclude_none=True), default=str)
