"""Parameter schedule and the DGD / NDGD iteration engine."""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from ndgd.models import (
    Algorithm,
    LiftedPoint,
    MixingMatrix,
    ParameterError,
    RegularityConstants,
    RunConfig,
    RunTrace,
    Schedule,
    SpectralSummary,
    StationarityReport,
    StepParameters,
    TraceRecord,
)
from ndgd.objectives import (
    ObjectiveSet,
    as_blocks,
    consensus_error,
    hessian_q,
    q_gradient,
    q_value,
)
from ndgd.streams import make_rng, rng_digest


logger = logging.getLogger(__name__)


class EngineError(Exception):
    """Engine operation failed."""

    pass


class ScheduleInfeasibleError(EngineError):
    """The consensus contraction factor is not below one."""

    def __init__(self, message: str, required_rho: float):
        super().__init__(message)
        self.required_rho = required_rho


class DivergenceError(EngineError):
    """An iterate became non-finite."""

    def __init__(self, message: str, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def required_rho(lambda_min: float, lambda_2: float) -> float:
    """Smallest rho above which lambda_2 + alpha L_F^g < 1."""
    if lambda_2 >= 1.0:
        return math.inf
    return (lambda_min / (1.0 - lambda_2)) ** 2


def build_schedule(
    rho: float,
    constants: RegularityConstants,
    w: MixingMatrix | SpectralSummary,
    m: int,
    n: int,
    q0: float | None = None,
    f_star_sum: float | None = None,
) -> Schedule:
    """Derive step size, noise level, consensus bound and horizon from ``rho``.

    ``f_star_sum`` defaults to the value carried by ``constants``. Without a
    finite ``q0 - f_star_sum`` the horizon ``K`` is reported as None.
    """
    if not rho >= 1:
        raise ParameterError(f"rho must be >= 1, got {rho}")
    if w.lambda_min <= 0:
        raise ParameterError(f"mixing matrix must be positive definite, lambda_min = {w.lambda_min}")

    lg = constants.grad_lipschitz
    lh = constants.hess_lipschitz
    mn = m * n

    alpha = w.lambda_min / (lg * math.sqrt(rho))
    contraction = w.lambda_2 + alpha * lg
    if contraction >= 1.0:
        need = required_rho(w.lambda_min, w.lambda_2)
        raise ScheduleInfeasibleError(
            f"lambda_2 + alpha L_g = {contraction:.6g} >= 1 at rho = {rho}; rho must exceed {need:.6g}",
            required_rho=need,
        )

    sigma = alpha / (40 * math.sqrt(mn) * lh * rho**3)
    zeta = (alpha * constants.disagreement + alpha * sigma * (math.sqrt(2 * rho) + math.sqrt(mn))) / (
        1.0 - contraction
    )
    d = math.sqrt(alpha) / (40 * lh * rho**1.5)
    eps_g = math.sqrt(alpha)
    eps_h = math.sqrt(eps_g * lh)
    r = math.ceil(alpha**-1.5 * rho)

    if f_star_sum is None:
        f_star_sum = constants.f_star_sum
    k_exact, log10_k = _horizon(q0, f_star_sum, alpha, rho)

    logger.debug(
        "schedule rho=%g: alpha=%.6g sigma=%.6g zeta=%.6g log10 K=%.4g", rho, alpha, sigma, zeta, log10_k
    )
    return Schedule(
        rho=float(rho),
        alpha=alpha,
        sigma=sigma,
        zeta=zeta,
        K=k_exact,
        log10_K=log10_k,
        d=d,
        eps_g=eps_g,
        eps_H=eps_h,
        r=r,
        m=m,
        n=n,
        lambda_min=w.lambda_min,
        lambda_2=w.lambda_2,
        grad_lipschitz=lg,
        hess_lipschitz=lh,
        disagreement=constants.disagreement,
    )


def _horizon(q0: float | None, f_star_sum: float | None, alpha: float, rho: float) -> tuple[int | None, float]:
    if q0 is None or f_star_sum is None or not math.isfinite(q0) or not math.isfinite(f_star_sum):
        return None, math.nan
    gap = q0 - f_star_sum
    if gap <= 0:
        return 0, -math.inf
    exact = math.ceil(Fraction(gap) * Fraction(alpha) ** -4 * Fraction(rho) ** 5)
    return exact, math.log10(gap) - 4 * math.log10(alpha) + 5 * math.log10(rho)


def theorem_thresholds(schedule: Schedule, m: int | None = None) -> tuple[float, float, float]:
    """Default ``(eta, eps, gamma)`` for the consensual second-order test."""
    m = schedule.m if m is None else m
    return (
        schedule.zeta,
        math.sqrt(m * schedule.alpha),
        m * math.sqrt(schedule.hess_lipschitz * math.sqrt(schedule.alpha)),
    )


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


def _lift(x, obj: ObjectiveSet) -> tuple[np.ndarray, bool]:
    if isinstance(x, LiftedPoint):
        return x.blocks, True
    return as_blocks(x, obj.m, obj.n), False


def _wrap(blocks: np.ndarray, lifted: bool):
    return LiftedPoint.from_blocks(blocks) if lifted else blocks


def dgd_step(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x):
    """``(W (x) I) x - alpha grad F(x)``; each agent mixes its neighbours' blocks."""
    blocks, lifted = _lift(x, obj)
    return _wrap(w.entries @ blocks - alpha * obj.gradients(blocks), lifted)


def gdq_step(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x):
    """``x - alpha grad Q(x)``."""
    blocks, lifted = _lift(x, obj)
    return _wrap(blocks - alpha * q_gradient(obj, w, alpha, blocks), lifted)


def ndgd_step(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x, noise):
    """``(W (x) I) x - alpha (grad F(x) + noise)``."""
    blocks, lifted = _lift(x, obj)
    noise = np.asarray(noise, dtype=float)
    if noise.size != blocks.size:
        raise ParameterError(f"noise has {noise.size} entries, expected {blocks.size}")
    noise = noise.reshape(blocks.shape)
    return _wrap(w.entries @ blocks - alpha * (obj.gradients(blocks) + noise), lifted)


def sample_perturbation(m: int, n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Stacked ``N(0, sigma^2 I_mn)`` draw, agent-major order."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    return sigma * rng.standard_normal(m * n)


# ---------------------------------------------------------------------------
# Stationarity
# ---------------------------------------------------------------------------


def _check_thresholds(**thresholds: float) -> None:
    for name, value in thresholds.items():
        if not value > 0:
            raise ParameterError(f"{name} must be positive, got {value}")


def check_consensual_first_order(obj: ObjectiveSet, x, eta: float, eps: float) -> StationarityReport:
    _check_thresholds(eta=eta, eps=eps)
    blocks = as_blocks(x, obj.m, obj.n)
    err = consensus_error(blocks)
    grad_norm = float(np.linalg.norm(obj.gradients(blocks).sum(axis=0)))
    return StationarityReport(
        consensus_error=err,
        gradient_sum_norm=grad_norm,
        lambda_min_hessian_sum=None,
        consensus_ok=err <= eta,
        gradient_ok=grad_norm <= eps,
        hessian_ok=None,
    )


def check_consensual_stationarity(
    obj: ObjectiveSet, x, eta: float, eps: float, gamma: float
) -> StationarityReport:
    """Consensus error, gradient sum and Hessian sum against ``(eta, eps, gamma)``."""
    _check_thresholds(gamma=gamma)
    report = check_consensual_first_order(obj, x, eta, eps)
    blocks = as_blocks(x, obj.m, obj.n)
    lmin = float(np.linalg.eigvalsh(obj.hessians(blocks).sum(axis=0))[0])
    report.lambda_min_hessian_sum = lmin
    report.hessian_ok = lmin >= -gamma
    return report


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _smallest_eigenvalue(matrix: np.ndarray) -> float:
    if not np.all(np.isfinite(matrix)):
        return math.nan
    return float(np.linalg.eigvalsh(matrix)[0])


def agent_distances(blocks: np.ndarray, points: np.ndarray | None) -> tuple[float, ...]:
    """Distance of every agent block to the nearest point of ``points``."""
    if points is None or len(points) == 0:
        return ()
    gaps = np.linalg.norm(blocks[:, None, :] - points[None, :, :], axis=-1)
    return tuple(float(v) for v in gaps.min(axis=1))


class Engine:
    """Runs one algorithm on a fixed objective, mixing matrix and step parameters."""

    def __init__(self, obj: ObjectiveSet, w: MixingMatrix, params: Schedule | StepParameters):
        if w.m != obj.m:
            raise ParameterError(f"mixing matrix has {w.m} agents, objective has {obj.m}")
        if not params.alpha > 0:
            raise ParameterError(f"step size must be positive, got {params.alpha}")
        if params.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {params.sigma}")
        self.obj = obj
        self.w = w
        self.params = params
        self.alpha = float(params.alpha)
        self.sigma = float(params.sigma)
        self.schedule = params if isinstance(params, Schedule) else None

    def initial_blocks(self, x0) -> np.ndarray:
        if isinstance(x0, LiftedPoint):
            if (x0.m, x0.n) != (self.obj.m, self.obj.n):
                raise ParameterError(f"initial point is ({x0.m}, {x0.n}), expected ({self.obj.m}, {self.obj.n})")
            return x0.blocks.copy()
        x0 = np.asarray(x0, dtype=float)
        if x0.shape == (self.obj.n,):
            return np.tile(x0, (self.obj.m, 1))
        return as_blocks(x0, self.obj.m, self.obj.n).copy()

    def step(self, algorithm: Algorithm, blocks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if algorithm is Algorithm.GDQ:
            return gdq_step(self.obj, self.w, self.alpha, blocks)
        if algorithm is Algorithm.NDGD:
            noise = sample_perturbation(self.obj.m, self.obj.n, self.sigma, rng)
            return ndgd_step(self.obj, self.w, self.alpha, blocks, noise)
        return dgd_step(self.obj, self.w, self.alpha, blocks)

    def budget(self, max_iters: int) -> int:
        if self.schedule is not None and self.schedule.K is not None:
            return int(min(max_iters, self.schedule.K))
        return max_iters

    def _record(self, k: int, blocks: np.ndarray, minimizers, track_q: bool) -> TraceRecord:
        obj = self.obj
        grad_q = q_gradient(obj, self.w, self.alpha, blocks)
        record = TraceRecord(
            k=k,
            consensus_error=consensus_error(blocks),
            grad_q_norm=float(np.linalg.norm(grad_q)),
            q_value=float(q_value(obj, self.w, self.alpha, blocks)),
            grad_sum_norm=float(np.linalg.norm(obj.gradients(blocks).sum(axis=0))),
            lmin_hess_sum=_smallest_eigenvalue(obj.hessians(blocks).sum(axis=0)),
            distances=agent_distances(blocks, minimizers),
        )
        if track_q:
            record.lmin_hess_q = _smallest_eigenvalue(hessian_q(obj, self.w, self.alpha, blocks))
        return record

    def _q_stationary(self, record: TraceRecord) -> bool:
        s = self.schedule
        return (
            record.grad_q_norm <= s.eps_g
            and record.lmin_hess_q >= -math.sqrt(s.hess_lipschitz * math.sqrt(s.alpha))
            and record.consensus_error <= s.zeta
        )

    def run(self, config: RunConfig) -> RunTrace:
        """Iterate ``config.algorithm`` and record the monitored quantities."""
        blocks = self.initial_blocks(config.x0)
        rng = make_rng(config.seed, *config.stream)
        minimizers = self.obj.minimizers
        iterations = self.budget(config.max_iters)
        sigma = self.sigma if config.algorithm is Algorithm.NDGD else 0.0

        trace = RunTrace(
            algorithm=config.algorithm,
            seed=config.seed,
            stream=tuple(config.stream),
            alpha=self.alpha,
            sigma=sigma,
        )
        logger.debug(
            "running %s for %d iterations (alpha=%.4g, sigma=%.4g, stream=%s)",
            config.algorithm.value, iterations, self.alpha, sigma, config.stream,
        )

        def record(k: int) -> bool:
            entry = self._record(k, blocks, minimizers, config.track_q_hessian)
            trace.records.append(entry)
            trace.positions.append(blocks.copy())
            if config.track_q_hessian and self.schedule is not None and trace.q_stationary_hit is None:
                if self._q_stationary(entry):
                    trace.q_stationary_hit = k
            if config.stop_on_stationarity is not None:
                eta, eps, gamma = config.stop_on_stationarity
                return check_consensual_stationarity(self.obj, blocks, eta, eps, gamma).passed
            return False

        stop = record(0)
        k = 0
        while not stop and k < iterations:
            nxt = self.step(config.algorithm, blocks, rng)
            if not np.all(np.isfinite(nxt)):
                trace.final = LiftedPoint.from_blocks(blocks)
                trace.iterations = k
                trace.rng_digest = rng_digest(rng)
                logger.warning("%s diverged at iteration %d", config.algorithm.value, k + 1)
                raise DivergenceError(f"non-finite iterate at iteration {k + 1}", trace)
            blocks = nxt
            k += 1
            if k % config.record_every == 0 or k == iterations:
                stop = record(k)

        if stop and k < iterations:
            trace.stopped_early = True
            logger.info("%s reached the stationarity thresholds at iteration %d", config.algorithm.value, k)
        trace.final = LiftedPoint.from_blocks(blocks)
        trace.iterations = k
        trace.rng_digest = rng_digest(rng)
        return trace


def create_engine(obj: ObjectiveSet, w: MixingMatrix, params: Schedule | StepParameters) -> Engine:
    """Create an engine for one objective, mixing matrix and parameter set."""
    return Engine(obj, w, params)


def run(config: RunConfig, obj: ObjectiveSet, w: MixingMatrix, params: Schedule | StepParameters) -> RunTrace:
    return create_engine(obj, w, params).run(config)


def run_many(
    config: RunConfig,
    obj: ObjectiveSet,
    w: MixingMatrix,
    params: Schedule | StepParameters,
    repeats: int,
    workers: int = 1,
) -> list[RunTrace]:
    """Independent repeats, repeat ``i`` drawing from stream ``(*config.stream, i)``."""
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    engine = create_engine(obj, w, params)
    configs = [dataclasses.replace(config, stream=(*config.stream, i)) for i in range(repeats)]
    if workers <= 1:
        return [engine.run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(engine.run, configs))


def escape_iteration(trace: RunTrace, fraction: float) -> int | None:
    """First recorded k where every agent is within ``fraction`` of its initial distance."""
    if not 0 < fraction < 1:
        raise ParameterError(f"fraction must lie in (0, 1), got {fraction}")
    dist = trace.distance_matrix()
    if dist.size == 0:
        return None
    reached = np.all(dist < fraction * dist[0], axis=1)
    hits = np.flatnonzero(reached)
    return int(trace.records[hits[0]].k) if hits.size else None
