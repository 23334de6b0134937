"""Verification suites over fixed reference instances."""

import dataclasses
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ndgd.analysis import (
    AzumaProcess,
    chi_square_tail_check,
    consensus_bound_trial,
    decomposition_check,
    descent_bound_trial,
    eig_sandwich_check,
    evolve_coupling,
    relaxed_azuma_trial,
    wilson_interval,
)
from ndgd.engine import build_schedule
from ndgd.models import (
    BoundKind,
    LiftedPoint,
    MixingMatrix,
    ParameterError,
    RegularityConstants,
    Schedule,
    TrialStats,
    Verdict,
)
from ndgd.objectives import (
    ObjectiveSet,
    check_derivatives,
    estimate_constants,
    make_quadratic,
    make_quartic,
    q_value,
    random_quartic_coefficients,
    strict_saddle_logistic_data,
)
from ndgd.topology import (
    complete_graph,
    consensus_contraction_check,
    lazy_metropolis_mixing,
    ring_graph,
)


logger = logging.getLogger(__name__)

SUITES = ("lemma1", "lemma3", "lemma7", "lemma10", "chisq", "azuma", "derivatives", "consensus")

REFERENCE_AGENTS = 10
REFERENCE_COEFF_SEED = 11
REFERENCE_LOGISTIC_SEED = 3
CONSTANT_SAMPLES = 2000


class VerificationError(Exception):
    """Verification suite could not be run."""

    pass


@dataclass
class ReferenceProblem:
    """An objective on a fixed network with its certified constants."""

    name: str
    obj: ObjectiveSet
    w: MixingMatrix
    constants: RegularityConstants
    x0: np.ndarray  # common initial point of every agent

    def schedule(self, rho: float) -> Schedule:
        start = np.tile(self.x0, (self.obj.m, 1))
        q0 = float(q_value(self.obj, self.w, 1.0, start))  # consensual, so the penalty vanishes
        return build_schedule(rho, self.constants, self.w, self.obj.m, self.obj.n, q0=q0)


def reference_quartic(identical: bool = False) -> ReferenceProblem:
    """Quartic on the complete graph, where the consensus bound is feasible for every rho > 1."""
    coeffs = random_quartic_coefficients(REFERENCE_AGENTS, REFERENCE_COEFF_SEED)
    if identical:
        coeffs = np.tile(coeffs.mean(axis=0), (REFERENCE_AGENTS, 1))
    obj = make_quartic(coeffs)
    w = lazy_metropolis_mixing(complete_graph(REFERENCE_AGENTS))
    constants = estimate_constants(obj, obj.domain_box, CONSTANT_SAMPLES, seed=0)
    return ReferenceProblem(
        name="quartic-identical" if identical else "quartic",
        obj=obj,
        w=w,
        constants=constants,
        x0=np.array([1.0, 0.0]),
    )


def reference_logistic() -> ReferenceProblem:
    obj = strict_saddle_logistic_data(5, eta=0.1, seed=REFERENCE_LOGISTIC_SEED)
    w = lazy_metropolis_mixing(ring_graph(5))
    constants = estimate_constants(obj, obj.domain_box, CONSTANT_SAMPLES, seed=0)
    return ReferenceProblem(name="logistic", obj=obj, w=w, constants=constants, x0=np.array([-1.0, 1.0]))


def reference_quadratic() -> ReferenceProblem:
    """Constant-Hessian instance with an indefinite sum, on the complete graph."""
    m = REFERENCE_AGENTS
    matrices = np.tile(np.diag([1.0, -0.5]), (m, 1, 1)) + np.linspace(0.0, 0.2, m)[:, None, None] * np.eye(2)
    offsets = np.zeros((m, 2))
    obj = make_quadratic(matrices, offsets)
    w = lazy_metropolis_mixing(complete_graph(m))
    constants = estimate_constants(obj, obj.domain_box, CONSTANT_SAMPLES, seed=0)
    return ReferenceProblem(name="quadratic", obj=obj, w=w, constants=constants, x0=np.zeros(2))


def _exact(name: str, reference: str, ok: bool, **detail) -> TrialStats:
    return TrialStats(
        name=name,
        reference=reference,
        kind=BoundKind.EXACT,
        trials=1,
        successes=int(ok),
        bound_probability=1.0,
        wilson_interval=wilson_interval(int(ok), 1),
        detail=detail,
    )


class VerificationSuite:
    """Runs the named checks at a confidence parameter ``rho``."""

    def __init__(self, rho: float = 6.0, trials: int = 2000, seed: int = 0):
        if trials < 1:
            raise ParameterError("trials must be >= 1")
        self.rho = rho
        self.trials = trials
        self.seed = seed

    @cached_property
    def quartic(self) -> ReferenceProblem:
        return reference_quartic()

    @cached_property
    def logistic(self) -> ReferenceProblem:
        return reference_logistic()

    def run(self, names: list[str] | tuple[str, ...] | str = "all") -> list[TrialStats]:
        """Run the selected suites in canonical order."""
        if isinstance(names, str):
            names = SUITES if names == "all" else (names,)
        unknown = [n for n in names if n not in SUITES]
        if unknown:
            raise VerificationError(f"unknown suite(s): {', '.join(unknown)}")

        results: list[TrialStats] = []
        for name in SUITES:
            if name in names:
                logger.info("running %s", name)
                results.extend(getattr(self, f"_run_{name}")())
        return results

    def _run_lemma1(self) -> list[TrialStats]:
        out = []
        for problem in (self.quartic, self.logistic):
            stats = eig_sandwich_check(problem.obj, problem.w, self.trials, self.seed)
            out.append(dataclasses.replace(stats, name=f"lemma1_{problem.name}"))
        return out

    def _run_lemma3(self) -> list[TrialStats]:
        problem = self.quartic
        schedule = problem.schedule(self.rho)
        noisy = consensus_bound_trial(problem.obj, problem.w, schedule, 50, self.trials, self.seed)

        identical = reference_quartic(identical=True)
        quiet = consensus_bound_trial(
            identical.obj,
            identical.w,
            identical.schedule(self.rho),
            50,
            self.trials,
            self.seed,
            sigma=0.0,
            consensual_init=True,
        )
        quiet = dataclasses.replace(
            quiet, name="lemma3_noiseless", kind=BoundKind.EXACT, bound_probability=1.0
        )
        return [noisy, quiet]

    def _run_lemma7(self) -> list[TrialStats]:
        problem = self.quartic
        schedule = problem.schedule(self.rho)
        noisy = descent_bound_trial(problem.obj, problem.w, schedule, 100, self.trials, self.seed)
        quiet = descent_bound_trial(problem.obj, problem.w, schedule, 100, self.trials, self.seed, sigma=0.0)
        quiet = dataclasses.replace(
            quiet, name="lemma7_noiseless", kind=BoundKind.EXACT, bound_probability=1.0
        )
        return [noisy, quiet]

    def _run_lemma10(self) -> list[TrialStats]:
        out = []
        cases = (
            (self.quartic, 3, 1e-9),
            (reference_quadratic(), 1, 1e-11),
            (self.logistic, 32, 1e-6),
        )
        for problem, nodes, tol in cases:
            alpha = problem.schedule(self.rho).alpha if problem.name == "quartic" else 0.05
            start = np.tile(np.zeros(problem.obj.n), (problem.obj.m, 1))
            start += 1e-3 * np.arange(problem.obj.m * problem.obj.n).reshape(start.shape) / start.size
            pair = evolve_coupling(
                problem.obj, problem.w, alpha, 1e-2, LiftedPoint.from_blocks(start), 50, self.seed
            )
            residual = decomposition_check(pair, problem.obj, problem.w, alpha, nodes)
            out.append(
                _exact(
                    f"lemma10_{problem.name}",
                    "coupling difference splits into Hessian-path and noise parts",
                    residual < tol,
                    residual=residual,
                    quad_nodes=nodes,
                    mirror_residual=pair.mirror_residual(),
                )
            )
        return out

    def _run_chisq(self) -> list[TrialStats]:
        out = []
        for i, (dof, x) in enumerate(((1, 3.0), (1, 5.0), (40, 3.0), (40, 5.0))):
            out.extend(chi_square_tail_check(dof, x, self.trials, self.seed + i))
        return out

    def _run_azuma(self) -> list[TrialStats]:
        cases = (
            ("azuma_zero", AzumaProcess("zero", steps=100), 30.0),
            ("azuma_rademacher", AzumaProcess("rademacher", steps=100), 30.0),
            (
                "azuma_jumps",
                AzumaProcess("gaussian", steps=100, jump_probability=1e-4, jump_size=5.0, tail_multiple=3.0),
                60.0,
            ),
        )
        out = []
        for i, (name, process, lam) in enumerate(cases):
            stats = relaxed_azuma_trial(process, lam, self.trials, self.seed + i)
            out.append(dataclasses.replace(stats, name=name))
        return out

    def _run_derivatives(self) -> list[TrialStats]:
        out = []
        for problem in (self.quartic, self.logistic):
            report = check_derivatives(problem.obj, 100, self.seed)
            out.append(
                _exact(
                    f"derivatives_{problem.name}",
                    "analytic gradients and Hessians against central differences",
                    report.passed,
                    gradient_error=report.max_gradient_error,
                    hessian_error=report.max_hessian_error,
                )
            )
        return out

    def _run_consensus(self) -> list[TrialStats]:
        return [consensus_contraction_check(self.quartic.w, 2, self.trials, self.seed)]


def has_failures(results: list[TrialStats]) -> bool:
    return any(r.verdict is Verdict.FAIL for r in results)


def report_json(results: list[TrialStats]) -> str:
    return json.dumps([r.as_dict() for r in results], indent=2) + "\n"


def write_report(results: list[TrialStats], path: str | Path) -> Path:
    """Write the verification report as a JSON array."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_json(results))
    return path
