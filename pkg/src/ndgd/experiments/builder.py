"""Turn a validated configuration into a concrete problem instance."""

import logging
from dataclasses import dataclass

import numpy as np

from ndgd.config import ExperimentConfig, ExperimentKind, GraphKind, StepMode
from ndgd.engine import ScheduleInfeasibleError, build_schedule
from ndgd.models import (
    DomainBox,
    Graph,
    MixingMatrix,
    RegularityConstants,
    Schedule,
    SpectralSummary,
    StepParameters,
)
from ndgd.objectives import (
    ObjectiveSet,
    estimate_constants,
    load_objective_factory,
    make_quartic,
    q_value,
    random_quartic_coefficients,
    strict_saddle_logistic_data,
)
from ndgd.topology import (
    build_regular_graph,
    complete_graph,
    lazy_metropolis_mixing,
    ring_graph,
    validate_mixing,
)


logger = logging.getLogger(__name__)

NAMED_INITS = {
    ExperimentKind.QUARTIC: {
        "saddle_manifold": (1.0, 0.0),
        "near_saddle": (1.0 - 1e-5, 1e-5),
    },
    ExperimentKind.LOGISTIC: {
        "saddle_manifold": (-1.0, 1.0),
        "near_saddle": (1.0 - 1e-5, -1.0 - 1e-5),
    },
}


class BuildError(Exception):
    """Configuration describes an inconsistent problem."""

    pass


@dataclass
class Problem:
    """Everything a run needs besides the algorithm choice."""

    graph: Graph
    w: MixingMatrix
    obj: ObjectiveSet
    constants: RegularityConstants
    x0: np.ndarray  # (m, n) agent blocks
    params: Schedule | StepParameters
    schedule: Schedule | None  # reported even for manual steps when feasible

    @property
    def m(self) -> int:
        return self.obj.m

    @property
    def n(self) -> int:
        return self.obj.n


def build_graph(config: ExperimentConfig) -> Graph:
    exp = config.experiment
    if exp.graph is GraphKind.COMPLETE:
        return complete_graph(exp.m)
    if exp.graph is GraphKind.RING:
        return ring_graph(exp.m)
    return build_regular_graph(exp.m, exp.degree, exp.graph_seed)


def build_objective(config: ExperimentConfig) -> ObjectiveSet:
    exp, spec = config.experiment, config.objective
    if exp.kind is ExperimentKind.QUARTIC:
        coeffs = random_quartic_coefficients(
            exp.m, spec.coeff_seed, tuple(spec.positive_range), tuple(spec.negative_range)
        )
        box = DomainBox.cube(*spec.box, 2) if spec.box else None
        return make_quartic(coeffs, box)
    if exp.kind is ExperimentKind.LOGISTIC:
        obj = strict_saddle_logistic_data(
            exp.m, spec.eta, spec.data_seed, features=spec.features, inner_dim=spec.inner_dim
        )
        if spec.box:
            obj.domain_box = DomainBox.cube(*spec.box, obj.n)
        return obj
    obj = load_objective_factory(spec.factory, **spec.params)
    if obj.m != exp.m:
        raise BuildError(f"factory built {obj.m} components but experiment.m = {exp.m}")
    return obj


def resolve_init(config: ExperimentConfig, obj: ObjectiveSet) -> np.ndarray:
    """Agent blocks of the initial point named or given in the configuration."""
    init = config.run.init
    if isinstance(init, str):
        try:
            vector = np.array(NAMED_INITS[config.experiment.kind][init])
        except KeyError:
            raise BuildError(f"init {init!r} is not defined for {config.experiment.kind.value} experiments")
        if vector.shape != (obj.n,):
            raise BuildError(f"init {init!r} is two-dimensional but the objective has n = {obj.n}")
        return np.tile(vector, (obj.m, 1))

    vector = np.asarray(init, dtype=float)
    if vector.size == obj.n:
        return np.tile(vector, (obj.m, 1))
    if vector.size == obj.m * obj.n:
        return vector.reshape(obj.m, obj.n)
    raise BuildError(f"init vector has {vector.size} entries; expected n = {obj.n} or m*n = {obj.m * obj.n}")


@dataclass
class Components:
    """Network, objective, constants and start point, before any step choice."""

    graph: Graph
    w: MixingMatrix
    obj: ObjectiveSet
    constants: RegularityConstants
    x0: np.ndarray


def build_components(config: ExperimentConfig) -> Components:
    graph = build_graph(config)
    w = lazy_metropolis_mixing(graph)
    report = validate_mixing(w, graph)
    if not report.passed:
        raise BuildError(f"mixing matrix violates: {', '.join(report.details)}")
    logger.info("mixing matrix: lambda_min=%.4g lambda_2=%.4g", w.lambda_min, w.lambda_2)

    obj = build_objective(config)
    constants = estimate_constants(obj, obj.domain_box, config.objective.constant_samples, seed=config.experiment.seed)
    return Components(graph=graph, w=w, obj=obj, constants=constants, x0=resolve_init(config, obj))


def schedule_for(
    parts: Components,
    rho: float,
    spectrum: MixingMatrix | SpectralSummary | None = None,
    constants: RegularityConstants | None = None,
) -> Schedule:
    """Schedule at ``rho`` with Q_alpha(x0) evaluated on the actual network.

    ``spectrum`` and ``constants`` override the derived values.
    """
    obj, x0 = parts.obj, parts.x0
    spectrum = spectrum or parts.w.spectrum
    constants = constants or parts.constants
    if np.all(x0 == x0[0]):
        q0 = float(q_value(obj, parts.w, 1.0, x0))  # penalty vanishes at consensus
    else:
        trial = build_schedule(rho, constants, spectrum, obj.m, obj.n)
        q0 = float(q_value(obj, parts.w, trial.alpha, x0))
    return build_schedule(rho, constants, spectrum, obj.m, obj.n, q0=q0)


def build_problem(config: ExperimentConfig) -> Problem:
    """Graph, mixing matrix, objective, constants, initial point and step parameters.

    Raises ScheduleInfeasibleError when the configuration asks for
    schedule-derived steps that do not exist at the given rho.
    """
    parts = build_components(config)

    schedule = None
    try:
        schedule = schedule_for(parts, config.run.rho)
    except ScheduleInfeasibleError as e:
        if config.run.step is StepMode.SCHEDULE:
            raise
        logger.info("no schedule at rho=%g: %s", config.run.rho, e)

    if config.run.step is StepMode.SCHEDULE:
        params: Schedule | StepParameters = schedule
    else:
        params = StepParameters(alpha=config.run.alpha, sigma=config.run.sigma)

    return Problem(
        graph=parts.graph,
        w=parts.w,
        obj=parts.obj,
        constants=parts.constants,
        x0=parts.x0,
        params=params,
        schedule=schedule,
    )
