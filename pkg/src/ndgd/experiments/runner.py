"""Run every configured algorithm on a shared problem and compare escape times."""

import logging
import statistics
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ndgd.config import ExperimentConfig
from ndgd.engine import escape_iteration, run_many, theorem_thresholds
from ndgd.experiments.builder import BuildError, Problem, build_problem
from ndgd.models import Algorithm, LiftedPoint, ParameterError, RunConfig, RunTrace


logger = logging.getLogger(__name__)

ESCAPE_FRACTIONS = (0.5, 0.1)
_ROW_FIELDS = dict(zip(ESCAPE_FRACTIONS, ("half", "tenth")))


def _row_field(fraction: float) -> str:
    try:
        return _ROW_FIELDS[fraction]
    except KeyError:
        raise ParameterError(f"escape fraction must be one of {ESCAPE_FRACTIONS}, got {fraction}") from None


@dataclass
class EscapeRow:
    """Escape summary of one run."""

    algorithm: Algorithm
    repeat: int
    half: int | None
    tenth: int | None
    iterations: int
    final_consensus: float
    final_distance: float | None


@dataclass
class ExperimentResult:
    problem: Problem
    traces: dict[Algorithm, list[RunTrace]] = field(default_factory=dict)
    rows: list[EscapeRow] = field(default_factory=list)

    def median_escape(self, algorithm: Algorithm, fraction: float = 0.5) -> float | None:
        """Median escape iteration, counting runs that never escape as infinite."""
        name = _row_field(fraction)
        values = [getattr(r, name) for r in self.rows if r.algorithm is algorithm]
        if not values:
            return None
        median = statistics.median([np.inf if v is None else v for v in values])
        return None if np.isinf(median) else float(median)

    def escape_rate(self, algorithm: Algorithm, fraction: float = 0.5) -> float:
        name = _row_field(fraction)
        values = [getattr(r, name) for r in self.rows if r.algorithm is algorithm]
        return sum(v is not None for v in values) / len(values) if values else 0.0


def summarize(trace: RunTrace, repeat: int) -> EscapeRow:
    last = trace.records[-1]
    return EscapeRow(
        algorithm=trace.algorithm,
        repeat=repeat,
        half=escape_iteration(trace, ESCAPE_FRACTIONS[0]),
        tenth=escape_iteration(trace, ESCAPE_FRACTIONS[1]),
        iterations=trace.iterations,
        final_consensus=last.consensus_error,
        final_distance=max(last.distances) if last.distances else None,
    )


class ExperimentRunner:
    """Runs the configured algorithms from one initial point on one network.

    Algorithm ``a`` and repeat ``r`` draw their noise from stream ``(a, r)``
    under the experiment seed.
    """

    def __init__(self, config: ExperimentConfig, problem: Problem | None = None):
        self.config = config
        self.problem = problem or build_problem(config)

    def thresholds(self) -> tuple[float, float, float] | None:
        run = self.config.run
        if not run.stop_on_stationarity:
            return None
        if run.thresholds is not None:
            return tuple(run.thresholds)
        if self.problem.schedule is None:
            raise BuildError("stop_on_stationarity needs explicit thresholds when no schedule exists")
        return theorem_thresholds(self.problem.schedule)

    def run(self, on_progress: Callable[[Algorithm], None] | None = None) -> ExperimentResult:
        run = self.config.run
        problem = self.problem
        result = ExperimentResult(problem=problem)
        stop = self.thresholds()

        for index, algorithm in enumerate(run.algorithms):
            if on_progress:
                on_progress(algorithm)
            config = RunConfig(
                algorithm=algorithm,
                x0=LiftedPoint.from_blocks(problem.x0),
                max_iters=run.max_iters,
                seed=self.config.experiment.seed,
                record_every=run.record_every,
                stop_on_stationarity=stop,
                track_q_hessian=run.track_q_hessian,
                stream=(index,),
            )
            traces = run_many(config, problem.obj, problem.w, problem.params, run.repeats, run.workers)
            result.traces[algorithm] = traces
            result.rows.extend(summarize(t, r) for r, t in enumerate(traces))
            logger.info(
                "%s: median escape %s over %d repeats",
                algorithm.value, result.median_escape(algorithm), len(traces),
            )
        return result
