"""Empirical checks of the convergence and concentration results.

Exact identities are checked point by point; probabilistic bounds are
compared with Wilson 95% intervals over independent trials. Trial ``t`` draws
from stream ``(seed, t)`` (or ``(seed, chunk)`` for bulk scalar sampling), so
results do not depend on evaluation order.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.linalg import block_diag

from ndgd.models import (
    BoundKind,
    CouplingPair,
    LiftedPoint,
    MixingMatrix,
    ParameterError,
    Schedule,
    TrialStats,
)
from ndgd.objectives import (
    ObjectiveSet,
    consensus_error,
    gradient_sum,
    hessian_q,
    hessian_sum,
    q_gradient,
    q_value,
)
from ndgd.streams import make_rng


logger = logging.getLogger(__name__)

SANDWICH_SLACK = 1e-8
CHUNK = 100_000


class AnalysisError(Exception):
    """A check cannot be run with the given inputs."""

    pass


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    low = 0.0 if successes == 0 else float(ci.low)
    high = 1.0 if successes == trials else float(ci.high)
    return (low, high)


def _stats(name: str, reference: str, kind: BoundKind, trials: int, successes: int, bound: float, **detail) -> TrialStats:
    return TrialStats(
        name=name,
        reference=reference,
        kind=kind,
        trials=trials,
        successes=int(successes),
        bound_probability=float(min(1.0, max(0.0, bound))),
        wilson_interval=wilson_interval(successes, trials),
        detail=detail,
    )


def distance_to_set(x, points) -> float:
    """Smallest Euclidean distance from ``x`` to a finite point set."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise ParameterError("distance to an empty set is undefined")
    return float(np.min(np.linalg.norm(points - np.asarray(x, dtype=float), axis=-1)))


# ---------------------------------------------------------------------------
# Curvature of the penalised objective
# ---------------------------------------------------------------------------


def curvature_triple(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x) -> tuple[float, float, float]:
    """``(lmin hess F, lmin hess Q, lmin(hessian sum) / m)`` at ``x``."""
    lf = min(float(np.linalg.eigvalsh(h)[0]) for h in obj.hessians(_blocks(obj, x)))
    lq = float(np.linalg.eigvalsh(hessian_q(obj, w, alpha, x))[0])
    ls = float(np.linalg.eigvalsh(hessian_sum(obj, x))[0]) / obj.m
    return lf, lq, ls


def _blocks(obj: ObjectiveSet, x) -> np.ndarray:
    if isinstance(x, LiftedPoint):
        return x.blocks
    return np.asarray(x, dtype=float).reshape(obj.m, obj.n)


def eig_sandwich_check(
    obj: ObjectiveSet,
    w: MixingMatrix,
    trials: int,
    seed: int,
    alpha_range: tuple[float, float] = (1e-3, 1e2),
) -> TrialStats:
    """The smallest Hessian eigenvalue of Q lies between those of F and of the Hessian sum."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    successes = 0
    worst = -math.inf
    for t in range(trials):
        rng = make_rng(seed, t)
        x = obj.domain_box.sample(rng, obj.m)
        alpha = float(np.exp(rng.uniform(np.log(alpha_range[0]), np.log(alpha_range[1]))))
        lf, lq, ls = curvature_triple(obj, w, alpha, x)
        violation = max(lf - lq, lq - ls)
        worst = max(worst, violation)
        successes += violation <= SANDWICH_SLACK
    return _stats(
        "lemma1",
        "eigenvalue sandwich of the penalised Hessian",
        BoundKind.EXACT,
        trials,
        successes,
        1.0,
        worst_violation=worst,
    )


def q_curvature_profile(obj: ObjectiveSet, w: MixingMatrix, x, alphas) -> list[float]:
    """Smallest Hessian eigenvalue of Q at ``x`` for each step size."""
    return [curvature_triple(obj, w, a, x)[1] for a in alphas]


def aggregate_bounds_check(obj: ObjectiveSet, w: MixingMatrix, alpha: float, trials: int, seed: int) -> TrialStats:
    """Gradient-sum, Hessian-sum and penalty inequalities at random points."""
    successes = 0
    for t in range(trials):
        rng = make_rng(seed, t)
        x = obj.domain_box.sample(rng, obj.m)
        grad_q = q_gradient(obj, w, alpha, x)
        lq = float(np.linalg.eigvalsh(hessian_q(obj, w, alpha, x))[0])
        ls = float(np.linalg.eigvalsh(hessian_sum(obj, x))[0])
        grad_ok = np.linalg.norm(gradient_sum(obj, x)) <= math.sqrt(obj.m) * np.linalg.norm(grad_q) + 1e-10
        hess_ok = ls >= obj.m * lq - 1e-8
        penalty_ok = q_value(obj, w, alpha, x) >= obj.values(x).sum() - 1e-12
        successes += bool(grad_ok and hess_ok and penalty_ok)
    return _stats(
        "aggregates",
        "gradient-sum and Hessian-sum bounds through the penalised objective",
        BoundKind.EXACT,
        trials,
        successes,
        1.0,
    )


# ---------------------------------------------------------------------------
# Batched NDGD trials
# ---------------------------------------------------------------------------


def _trial_noise(seed: int, trials: int, steps: int, m: int, n: int, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.zeros((trials, steps, m, n))
    return np.stack([sigma * make_rng(seed, t).standard_normal((steps, m, n)) for t in range(trials)])


def _trial_inits(obj: ObjectiveSet, seed: int, trials: int, consensual: bool) -> np.ndarray:
    inits = []
    for t in range(trials):
        rng = make_rng(seed, t, 1)
        if consensual:
            inits.append(np.tile(obj.domain_box.sample(rng, 1), (obj.m, 1)))
        else:
            inits.append(obj.domain_box.sample(rng, obj.m))
    return np.stack(inits)


def consensus_bound_trial(
    obj: ObjectiveSet,
    w: MixingMatrix,
    schedule: Schedule,
    k: int,
    trials: int,
    seed: int,
    sigma: float | None = None,
    consensual_init: bool = False,
) -> TrialStats:
    """NDGD consensus error stays below its geometric-plus-zeta envelope.

    A trial succeeds when the envelope holds at every step up to ``k``.
    """
    if k < 1 or trials < 1:
        raise ParameterError("horizon and trials must be >= 1")
    rate = schedule.contraction
    if rate >= 1:
        raise AnalysisError(f"contraction factor {rate:.4g} >= 1; the consensus bound is undefined")
    alpha = schedule.alpha
    sigma = schedule.sigma if sigma is None else sigma

    x = _trial_inits(obj, seed, trials, consensual_init)
    noise = _trial_noise(seed, trials, k, obj.m, obj.n, sigma)
    e0 = consensus_error(x)
    ok = np.ones(trials, dtype=bool)
    worst = -math.inf
    for step in range(k):
        x = w.entries @ x - alpha * (obj.gradients(x) + noise[:, step])
        envelope = rate ** (step + 1) * e0 + schedule.zeta
        excess = consensus_error(x) - envelope
        ok &= excess <= 0
        worst = max(worst, float(np.max(excess)))

    return _stats(
        "lemma3",
        "consensus error envelope of noisy DGD",
        BoundKind.LOWER,
        trials,
        int(ok.sum()),
        1.0 - k * math.exp(-schedule.rho),
        worst_excess=worst,
        horizon=k,
        sigma=sigma,
    )


def descent_bound_trial(
    obj: ObjectiveSet,
    w: MixingMatrix,
    schedule: Schedule,
    t: int,
    trials: int,
    seed: int,
    sigma: float | None = None,
) -> TrialStats:
    """The penalised objective decreases by half the accumulated squared gradient, up to a noise term."""
    if t < 1 or trials < 1:
        raise ParameterError("horizon and trials must be >= 1")
    alpha = schedule.alpha
    if alpha > 1.0 / schedule.lq_g * (1 + 1e-12):
        raise AnalysisError(f"alpha = {alpha:.4g} exceeds 1/L_Q = {1 / schedule.lq_g:.4g}")
    sigma = schedule.sigma if sigma is None else sigma
    mn = obj.m * obj.n

    x = _trial_inits(obj, seed, trials, consensual=False)
    noise = _trial_noise(seed, trials, t, obj.m, obj.n, sigma)
    q0 = q_value(obj, w, alpha, x)
    iterates = [x]
    accumulated = np.zeros(trials)
    for step in range(t):
        grad = q_gradient(obj, w, alpha, x)
        accumulated += np.sum(grad**2, axis=(-2, -1))
        x = x - alpha * (grad + noise[:, step])
        iterates.append(x)

    stored = np.stack(iterates[:-1], axis=1)
    recomputed = np.sum(q_gradient(obj, w, alpha, stored) ** 2, axis=(-2, -1)).sum(axis=1)
    noise_term = mn * alpha * sigma**2 * (t + math.sqrt(t * schedule.rho) + schedule.rho)
    decrease = q_value(obj, w, alpha, x) - q0
    ok = decrease <= -0.5 * alpha * accumulated + noise_term + 1e-12 * np.maximum(1.0, np.abs(q0))

    return _stats(
        "lemma7",
        "sufficient decrease of noisy gradient descent on the penalised objective",
        BoundKind.LOWER,
        trials,
        int(ok.sum()),
        1.0 - 2 * math.exp(-schedule.rho),
        gradient_sum_discrepancy=float(np.max(np.abs(accumulated - recomputed) / np.maximum(1.0, accumulated))),
        horizon=t,
        sigma=sigma,
    )


# ---------------------------------------------------------------------------
# Coupling sequences
# ---------------------------------------------------------------------------


def escape_direction(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x0) -> tuple[np.ndarray, float]:
    """Unit eigenvector of the smallest Hessian eigenvalue of Q at ``x0``, sign-normalised."""
    try:
        values, vectors = np.linalg.eigh(hessian_q(obj, w, alpha, x0))
    except np.linalg.LinAlgError as e:
        raise AnalysisError(f"eigendecomposition failed: {e}")
    e = vectors[:, 0]
    pivot = np.flatnonzero(np.abs(e) > 1e-12)
    if pivot.size and e[pivot[0]] < 0:
        e = -e
    return e, float(values[0])


def evolve_coupling(
    obj: ObjectiveSet,
    w: MixingMatrix,
    alpha: float,
    sigma: float,
    x0: LiftedPoint,
    steps: int,
    seed: int,
) -> CouplingPair:
    """Two NDGD runs sharing noise except for a mirrored component along the escape direction."""
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    e, curvature = escape_direction(obj, w, alpha, x0)
    if curvature >= 0:
        logger.info("coupling start has no negative curvature (lambda_min = %.4g)", curvature)

    pair = CouplingPair(x0=x0, e_alpha=e, alpha=alpha, sigma=sigma)
    rng = make_rng(seed)
    y = x0.blocks.copy()
    z = x0.blocks.copy()
    pair.y.append(y.reshape(-1).copy())
    pair.z.append(z.reshape(-1).copy())
    for _ in range(steps):
        xi = sigma * rng.standard_normal(obj.m * obj.n)
        ny = xi
        nz = xi - 2.0 * (e @ xi) * e
        y = w.entries @ y - alpha * (obj.gradients(y) + ny.reshape(y.shape))
        z = w.entries @ z - alpha * (obj.gradients(z) + nz.reshape(z.shape))
        pair.noise_y.append(ny)
        pair.noise_z.append(nz)
        pair.y.append(y.reshape(-1).copy())
        pair.z.append(z.reshape(-1).copy())
    return pair


def path_hessian(obj: ObjectiveSet, w: MixingMatrix, alpha: float, y: np.ndarray, z: np.ndarray, quad_nodes: int) -> np.ndarray:
    """Gauss-Legendre estimate of the mean Hessian of Q on the segment from z to y."""
    nodes, weights = leggauss(quad_nodes)
    s = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    path = (s[:, None] * y[None, :] + (1.0 - s[:, None]) * z[None, :]).reshape(quad_nodes, obj.m, obj.n)
    blocks = np.tensordot(weights, obj.hessians(path), axes=1)
    laplacian = np.kron(np.eye(obj.m) - w.entries, np.eye(obj.n))
    return block_diag(*blocks) + laplacian / alpha


def decompose_coupling(
    pair: CouplingPair,
    obj: ObjectiveSet,
    w: MixingMatrix,
    alpha: float,
    quad_nodes: int,
) -> tuple[list[np.ndarray], list[np.ndarray], list[float]]:
    """Split the coupling difference into its Hessian-path and noise parts.

    Returns the two parts per step and the residual against the observed
    difference ``y - z``.
    """
    if quad_nodes < 1:
        raise ParameterError("quad_nodes must be >= 1")
    if pair.steps == 0:
        raise AnalysisError("coupling pair has no history")
    h0 = hessian_q(obj, w, alpha, pair.x0)
    propagate = np.eye(h0.shape[0]) - alpha * h0

    observed = pair.deltas
    noise_diff = pair.noise_differences
    d1 = np.zeros_like(h0[0])
    d2 = np.zeros_like(h0[0])
    part1, part2, residuals = [d1.copy()], [d2.copy()], [float(np.linalg.norm(observed[0]))]
    for k in range(pair.steps):
        mean_hess = path_hessian(obj, w, alpha, pair.y[k], pair.z[k], quad_nodes)
        d1 = propagate @ d1 - alpha * (mean_hess - h0) @ observed[k]
        d2 = propagate @ d2 - alpha * noise_diff[k]
        part1.append(d1)
        part2.append(d2)
        residuals.append(float(np.linalg.norm(observed[k + 1] - d1 - d2)))
    return part1, part2, residuals


def decomposition_check(pair: CouplingPair, obj: ObjectiveSet, w: MixingMatrix, alpha: float, quad_nodes: int) -> float:
    """Largest residual of the coupling decomposition over the history."""
    return max(decompose_coupling(pair, obj, w, alpha, quad_nodes)[2])


# ---------------------------------------------------------------------------
# Concentration inequalities
# ---------------------------------------------------------------------------


def _chunks(trials: int):
    for index, start in enumerate(range(0, trials, CHUNK)):
        yield index, min(CHUNK, trials - start)


def chi_square_tail_check(D: int, x: float, trials: int, seed: int) -> tuple[TrialStats, TrialStats]:
    """Upper and lower chi-square tail frequencies against ``exp(-x)``."""
    if D < 1:
        raise ParameterError(f"degrees of freedom must be >= 1, got {D}")
    if not x > 0:
        raise ParameterError(f"tail parameter must be positive, got {x}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")

    upper = lower = 0
    for index, size in _chunks(trials):
        u = make_rng(seed, index).chisquare(D, size=size)
        upper += int(np.sum(u - D >= 2 * math.sqrt(D * x) + 2 * x))
        lower += int(np.sum(D - u >= 2 * math.sqrt(D * x)))

    bound = math.exp(-x)
    label = f"chi-square tail, D={D}, x={x:g}"
    return (
        _stats(f"chisq_upper_D{D}_x{x:g}", f"upper {label}", BoundKind.UPPER, trials, upper, bound, D=D, x=x),
        _stats(f"chisq_lower_D{D}_x{x:g}", f"lower {label}", BoundKind.UPPER, trials, lower, bound, D=D, x=x),
    )


@dataclass(frozen=True)
class AzumaProcess:
    """Synthetic martingale with independent mean-zero increments.

    ``zero`` never moves; ``rademacher`` steps ``+-scale``; ``gaussian`` adds
    ``N(0, scale^2)`` plus, with probability ``jump_probability``, a jump of
    ``+-jump_size``. Increments exceeding ``a_k + clip`` only occur on jumps or
    on Gaussian draws beyond ``tail_multiple`` standard deviations.
    """

    kind: str
    steps: int
    scale: float = 1.0
    jump_probability: float = 0.0
    jump_size: float = 0.0
    clip: float = 0.0
    tail_multiple: float = 4.0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "rademacher", "gaussian"):
            raise ParameterError(f"unknown process kind {self.kind!r}")
        if self.steps < 1:
            raise ParameterError("process needs at least one step")
        if not 0 <= self.jump_probability <= 1:
            raise ParameterError("jump probability must lie in [0, 1]")

    @property
    def variance(self) -> float:
        """Per-step conditional variance bound sigma_k^2."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "rademacher":
            return self.scale**2
        return self.scale**2 + self.jump_probability * self.jump_size**2

    @property
    def excess(self) -> float:
        """Per-step increment bound a_k."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "rademacher":
            return self.scale
        return self.tail_multiple * self.scale

    @property
    def exception_probability(self) -> float:
        """Per-step probability p_k that an increment exceeds ``a_k + clip``."""
        if self.kind != "gaussian":
            return 0.0
        normal_tail = stats.norm.sf((self.excess + self.clip) / self.scale) if self.scale > 0 else 0.0
        return min(1.0, self.jump_probability + float(normal_tail))

    def bound(self, lam: float) -> float:
        """Tail bound for ``X^t - X^0 >= lam``."""
        spread = self.steps * (self.variance + self.excess**2)
        denom = 2 * (spread + self.clip * lam / 3)
        main = math.exp(-(lam**2) / denom) if denom > 0 else 0.0
        return main + self.steps * self.exception_probability

    def terminal(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Samples of ``X^t - X^0``, drawn through sufficient statistics of the increments."""
        t = self.steps
        if self.kind == "zero":
            return np.zeros(size)
        if self.kind == "rademacher":
            return self.scale * (2.0 * rng.binomial(t, 0.5, size=size) - t)
        drift = self.scale * math.sqrt(t) * rng.standard_normal(size)
        jumps = rng.binomial(t, self.jump_probability, size=size)
        signs = 2.0 * rng.binomial(jumps, 0.5) - jumps
        return drift + self.jump_size * signs


def relaxed_azuma_trial(process: AzumaProcess, lam: float, trials: int, seed: int) -> TrialStats:
    """Tail frequency of ``X^t >= X^0 + lam`` against the relaxed Azuma bound."""
    if not lam > 0:
        raise ParameterError(f"deviation must be positive, got {lam}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    hits = 0
    for index, size in _chunks(trials):
        hits += int(np.sum(process.terminal(make_rng(seed, index), size) >= lam))
    return _stats(
        "azuma",
        f"relaxed Azuma tail, {process.kind} process, t={process.steps}, lambda={lam:g}",
        BoundKind.UPPER,
        trials,
        hits,
        process.bound(lam),
        process=process.kind,
    )
