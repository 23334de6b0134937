"""Data models for ndgd."""

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple

import numpy as np


class ParameterError(ValueError):
    """An argument is outside its admissible range."""

    pass


class Algorithm(str, Enum):
    """Iteration rule driven by the engine."""

    DGD = "dgd"  # mix neighbours, local gradient step
    NDGD = "ndgd"  # DGD plus Gaussian perturbation
    GDQ = "gdq"  # plain gradient descent on the penalised objective


class Verdict(str, Enum):
    """Outcome of a verification check."""

    PASS = "pass"
    FAIL = "fail"
    VACUOUS = "vacuous"


class BoundKind(str, Enum):
    """How a check's empirical rate is compared with its bound."""

    LOWER = "lower"  # success rate must reach the bound
    UPPER = "upper"  # tail frequency must stay below the bound
    EXACT = "exact"  # every trial must succeed


class CriticalPointKind(str, Enum):
    """Second-order classification of a point of f."""

    LOCAL_MINIMIZER = "local_minimizer"
    STRICT_SADDLE = "strict_saddle"
    DEGENERATE = "degenerate"
    NON_STATIONARY = "non_stationary"


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on agents ``0..m-1``."""

    m: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ParameterError(f"agent count must be >= 2, got {self.m}")
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise ParameterError(f"self-loop on agent {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ParameterError(f"edge ({i}, {j}) references an agent >= {self.m}")
            normalized.add((min(i, j), max(i, j)))
        if len(normalized) != len(self.edges):
            raise ParameterError("duplicate edges")
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def from_pairs(cls, m: int, pairs) -> "Graph":
        """Build a graph from any iterable of index pairs."""
        normalized = [(min(int(i), int(j)), max(int(i), int(j))) for i, j in pairs]
        if len(set(normalized)) != len(normalized):
            raise ParameterError("duplicate edges")
        return cls(m=m, edges=frozenset(normalized))

    def neighbors(self, i: int) -> list[int]:
        return sorted(j if a == i else a for a, j in self.edges if i in (a, j))

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.m, self.m))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


class SpectralSummary(NamedTuple):
    """Smallest eigenvalue and second-largest magnitude eigenvalue of W."""

    lambda_min: float
    lambda_2: float


@dataclass(frozen=True)
class MixingMatrix:
    """Consensus weight matrix with its spectral summary."""

    entries: np.ndarray
    lambda_min: float
    lambda_2: float

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def spectrum(self) -> SpectralSummary:
        return SpectralSummary(self.lambda_min, self.lambda_2)

    @classmethod
    def from_entries(cls, entries) -> "MixingMatrix":
        """Wrap an arbitrary symmetric matrix, computing its spectrum."""
        from ndgd.topology import spectral_summary

        w = np.array(entries, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ParameterError(f"mixing matrix must be square, got shape {w.shape}")
        w.setflags(write=False)
        summary = spectral_summary(w)
        return cls(entries=w, lambda_min=summary.lambda_min, lambda_2=summary.lambda_2)


@dataclass
class ValidationReport:
    """Pass/fail per mixing-matrix condition."""

    sparsity: bool
    symmetry: bool
    null_space: bool
    positive_definite: bool
    doubly_stochastic: bool
    details: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.sparsity and self.symmetry and self.null_space and self.positive_definite

    def as_dict(self) -> dict[str, bool]:
        return {
            "sparsity": self.sparsity,
            "symmetry": self.symmetry,
            "null_space": self.null_space,
            "positive_definite": self.positive_definite,
            "doubly_stochastic": self.doubly_stochastic,
        }


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box ``[lower, upper]`` in R^n."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ParameterError("box bounds must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ParameterError("box lower bound exceeds upper bound")

    @classmethod
    def cube(cls, low: float, high: float, n: int) -> "DomainBox":
        return cls(lower=(float(low),) * n, upper=(float(high),) * n)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        """Uniform samples, trailing axis of length ``dim``."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        return rng.uniform(self.lower, self.upper, size=(*shape, self.dim))

    def vertices(self, limit: int = 10) -> np.ndarray:
        """Corner points (only for ``dim <= limit``)."""
        if self.dim > limit:
            return np.empty((0, self.dim))
        corners = np.array(np.meshgrid(*zip(self.lower, self.upper), indexing="ij"))
        return corners.reshape(self.dim, -1).T


@dataclass(frozen=True)
class RegularityConstants:
    """Lipschitz and disagreement constants certified on ``domain_box``."""

    grad_lipschitz: float  # L_F^g = max_i L_{f_i}^g
    hess_lipschitz: float  # L_F^H = max_i L_{f_i}^H
    disagreement: float  # D
    f_star_sum: float  # sum_i f_i^*
    domain_box: DomainBox

    def __post_init__(self) -> None:
        if min(self.grad_lipschitz, self.hess_lipschitz, self.disagreement) <= 0:
            raise ParameterError("regularity constants must be positive")


@dataclass(frozen=True)
class LiftedPoint:
    """Stacked decision vector; agent ``i`` owns ``data[i*n:(i+1)*n]``."""

    data: np.ndarray
    m: int
    n: int

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float).reshape(-1)
        if data.shape[0] != self.m * self.n:
            raise ParameterError(
                f"lifted point has length {data.shape[0]}, expected m*n = {self.m * self.n}"
            )
        object.__setattr__(self, "data", data)

    @property
    def blocks(self) -> np.ndarray:
        """``(m, n)`` view of the agent blocks."""
        return self.data.reshape(self.m, self.n)

    def block(self, i: int) -> np.ndarray:
        return self.data[i * self.n : (i + 1) * self.n]

    @classmethod
    def from_blocks(cls, blocks) -> "LiftedPoint":
        x = np.asarray(blocks, dtype=float)
        if x.ndim != 2:
            raise ParameterError(f"blocks must be a 2-D array, got shape {x.shape}")
        return cls(data=x.reshape(-1), m=x.shape[0], n=x.shape[1])

    @classmethod
    def consensual(cls, v, m: int) -> "LiftedPoint":
        """``1_m (x) v``."""
        v = np.asarray(v, dtype=float).reshape(-1)
        return cls(data=np.tile(v, m), m=m, n=v.shape[0])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


@dataclass
class DerivativeReport:
    """Worst finite-difference mismatch of analytic derivatives."""

    points: int
    max_gradient_error: float
    max_hessian_error: float
    gradient_tol: float = 1e-5
    hessian_tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_gradient_error < self.gradient_tol and self.max_hessian_error < self.hessian_tol


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class StepParameters(NamedTuple):
    """Manually chosen step size and noise level."""

    alpha: float
    sigma: float


@dataclass(frozen=True)
class Schedule:
    """Quantities derived from the confidence parameter rho."""

    rho: float
    alpha: float
    sigma: float
    zeta: float
    K: int | None  # None when the objective has no finite lower bound
    log10_K: float
    d: float
    eps_g: float
    eps_H: float
    r: int
    m: int
    n: int
    lambda_min: float
    lambda_2: float
    grad_lipschitz: float
    hess_lipschitz: float
    disagreement: float

    @property
    def contraction(self) -> float:
        """lambda_2 + alpha L_F^g, the consensus contraction factor."""
        return self.lambda_2 + self.alpha * self.grad_lipschitz

    @property
    def lq_g(self) -> float:
        return self.grad_lipschitz + (1.0 - self.lambda_min) / self.alpha

    @property
    def lq_h(self) -> float:
        return self.hess_lipschitz

    @property
    def escape_decrease(self) -> float:
        """Sufficient-decrease level that separates escape from localisation."""
        mn = self.m * self.n
        noise = 2 * mn * self.alpha * self.sigma**2 * (self.r + math.sqrt(self.r * self.rho) + self.rho)
        return self.d**2 / (4 * self.alpha * self.r) - noise

    def noise_spread(self, t: int, gamma: float) -> float:
        """Scale of the coupled noise difference after ``t`` steps at curvature -gamma."""
        ag = self.alpha * gamma
        if ag <= 0:
            raise ParameterError("gamma must be positive")
        return math.sqrt(4 * (1 + ag) ** (2 * t) / (2 * ag + ag**2) * self.sigma**2)

    def minimizer_radius(self, mu: float) -> float:
        """Radius of the neighbourhood reached around a common local minimizer."""
        if mu <= 0:
            raise ParameterError("mu must be positive")
        return (7 * mu + 5 * math.sqrt(self.m) * self.grad_lipschitz) / mu**2 * math.sqrt(self.alpha)

    def as_dict(self) -> dict[str, Any]:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "zeta": self.zeta,
            "K": str(self.K) if self.K is not None else None,
            "log10_K": self.log10_K,
            "d": self.d,
            "eps_g": self.eps_g,
            "eps_H": self.eps_H,
            "r": self.r,
            "lq_g": self.lq_g,
            "escape_decrease": self.escape_decrease,
        }


@dataclass
class RunConfig:
    """Inputs of a single engine run."""

    algorithm: Algorithm
    x0: LiftedPoint | np.ndarray
    max_iters: int
    seed: int = 0
    record_every: int = 1
    stop_on_stationarity: tuple[float, float, float] | None = None
    track_q_hessian: bool = False
    stream: tuple[int, ...] = ()  # index path under the master seed

    def __post_init__(self) -> None:
        self.algorithm = Algorithm(self.algorithm)
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.record_every < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")


@dataclass
class TraceRecord:
    """Monitored quantities at one iteration."""

    k: int
    consensus_error: float
    grad_q_norm: float
    q_value: float
    grad_sum_norm: float
    lmin_hess_sum: float
    distances: tuple[float, ...] = ()
    lmin_hess_q: float | None = None


TRACE_FIELDS = ("k", "consensus_error", "grad_q_norm", "q_value", "grad_sum_norm", "lmin_hess_sum")


@dataclass
class RunTrace:
    """Recorded history of a run."""

    algorithm: Algorithm
    seed: int
    stream: tuple[int, ...]
    alpha: float
    sigma: float
    records: list[TraceRecord] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)
    final: LiftedPoint | None = None
    rng_digest: str = ""
    iterations: int = 0
    stopped_early: bool = False
    q_stationary_hit: int | None = None

    @property
    def ks(self) -> list[int]:
        return [r.k for r in self.records]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def distance_matrix(self) -> np.ndarray:
        """``(records, m)`` distances to the minimizer set."""
        return np.array([r.distances for r in self.records], dtype=float)

    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(np.array([getattr(r, f) for f in TRACE_FIELDS], dtype=float).tobytes())
            h.update(np.asarray(r.distances, dtype=float).tobytes())
        if self.final is not None:
            h.update(self.final.data.tobytes())
        h.update(self.rng_digest.encode("utf-8"))
        return h.hexdigest()


@dataclass
class StationarityReport:
    """Consensual stationarity conditions with their measured values."""

    consensus_error: float
    gradient_sum_norm: float
    lambda_min_hessian_sum: float | None
    consensus_ok: bool
    gradient_ok: bool
    hessian_ok: bool | None  # None when only first order was checked

    @property
    def passed(self) -> bool:
        return self.consensus_ok and self.gradient_ok and self.hessian_ok is not False


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


@dataclass
class TrialStats:
    """Monte Carlo outcome of one verification check."""

    name: str
    reference: str
    kind: BoundKind
    trials: int
    successes: int
    bound_probability: float
    wilson_interval: tuple[float, float]
    detail: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.trials:
            raise ParameterError("successes must lie in [0, trials]")

    @property
    def empirical_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def verdict(self) -> Verdict:
        low, high = self.wilson_interval
        if self.kind is BoundKind.EXACT:
            return Verdict.PASS if self.successes == self.trials else Verdict.FAIL
        if self.kind is BoundKind.LOWER:
            if self.bound_probability <= 0.0:
                return Verdict.VACUOUS
            return Verdict.PASS if high >= self.bound_probability else Verdict.FAIL
        if self.bound_probability >= 1.0:
            return Verdict.VACUOUS
        return Verdict.PASS if low <= self.bound_probability else Verdict.FAIL

    def as_dict(self) -> dict[str, Any]:
        return {
            "check_name": self.name,
            "reference": self.reference,
            "trials": self.trials,
            "empirical_rate": self.empirical_rate,
            "bound": self.bound_probability,
            "wilson_low": self.wilson_interval[0],
            "wilson_high": self.wilson_interval[1],
            "verdict": self.verdict.value,
        }


@dataclass
class CouplingPair:
    """Two perturbed runs whose noise is mirrored along ``e_alpha``."""

    x0: LiftedPoint
    e_alpha: np.ndarray
    alpha: float
    sigma: float
    y: list[np.ndarray] = field(default_factory=list)
    z: list[np.ndarray] = field(default_factory=list)
    noise_y: list[np.ndarray] = field(default_factory=list)
    noise_z: list[np.ndarray] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.noise_y)

    @property
    def deltas(self) -> list[np.ndarray]:
        return [a - b for a, b in zip(self.y, self.z)]

    @property
    def noise_differences(self) -> list[np.ndarray]:
        return [a - b for a, b in zip(self.noise_y, self.noise_z)]

    def mirror_residual(self) -> float:
        """Largest violation of the two mirroring constraints over all steps."""
        worst = 0.0
        e = self.e_alpha
        for ny, nz in zip(self.noise_y, self.noise_z):
            diff = ny - nz
            off_axis = diff - (e @ diff) * e
            worst = max(worst, float(np.linalg.norm(off_axis)), abs(float(e @ ny + e @ nz)))
        return worst
