"""Agent communication graphs and consensus mixing matrices."""

import logging
from pathlib import Path

import networkx as nx
import numpy as np

from ndgd.models import (
    BoundKind,
    Graph,
    MixingMatrix,
    ParameterError,
    SpectralSummary,
    TrialStats,
    ValidationReport,
)
from ndgd.streams import make_rng


logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
EIGENVALUE_ONE_TOL = 1e-10


class TopologyError(Exception):
    """Graph or mixing matrix operation failed."""

    pass


class GraphConstructionError(TopologyError):
    """Random graph generation ran out of attempts."""

    pass


class DisconnectedGraphError(TopologyError):
    """Operation requires a connected graph."""

    pass


class SpectralError(TopologyError):
    """Eigendecomposition failed."""

    pass


def _to_networkx(g: Graph) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(g.m))
    graph.add_edges_from(g.edges)
    return graph


def build_regular_graph(m: int, degree: int, seed: int) -> Graph:
    """Random connected ``degree``-regular graph on ``m`` agents.

    Stubs are paired at random with unsuitable pairs (self-loops, repeated
    edges) rejected; a pairing that yields a disconnected graph is discarded
    and retried, at most ``10*m`` times.
    """
    if m < 2:
        raise ParameterError(f"agent count must be >= 2, got {m}")
    if not 1 <= degree < m:
        raise ParameterError(f"degree must satisfy 1 <= degree < m, got {degree}")
    if (m * degree) % 2:
        raise ParameterError(f"m*degree must be even, got {m}*{degree}")

    rng = make_rng(seed)
    budget = 10 * m
    for attempt in range(budget):
        pairing_seed = int(rng.integers(2**32))
        candidate = nx.random_regular_graph(degree, m, seed=pairing_seed)
        if nx.is_connected(candidate):
            logger.debug("regular graph m=%d degree=%d accepted on attempt %d", m, degree, attempt + 1)
            return Graph.from_pairs(m, candidate.edges())
        logger.debug("regular graph attempt %d disconnected, retrying", attempt + 1)

    raise GraphConstructionError(
        f"no connected {degree}-regular graph on {m} agents after {budget} attempts"
    )


def complete_graph(m: int) -> Graph:
    return Graph.from_pairs(m, ((i, j) for i in range(m) for j in range(i + 1, m)))


def ring_graph(m: int) -> Graph:
    if m < 3:
        return Graph.from_pairs(m, [(0, 1)])
    return Graph.from_pairs(m, ((i, (i + 1) % m) for i in range(m)))


def check_connected(g: Graph) -> bool:
    """True iff breadth-first search from agent 0 reaches every agent."""
    return nx.is_connected(_to_networkx(g))


def lazy_metropolis_mixing(g: Graph) -> MixingMatrix:
    """W = (I + M)/2 with Metropolis weights M on the edges of ``g``."""
    if not check_connected(g):
        raise DisconnectedGraphError("mixing matrix requires a connected graph")

    deg = g.degrees
    metropolis = np.zeros((g.m, g.m))
    for i, j in g.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        metropolis[i, j] = w
        metropolis[j, i] = w
    np.fill_diagonal(metropolis, 1.0 - metropolis.sum(axis=1))

    return MixingMatrix.from_entries(0.5 * (np.eye(g.m) + metropolis))


def spectral_summary(w) -> SpectralSummary:
    """``(lambda_min, lambda_2)`` of a symmetric matrix.

    lambda_2 is the largest magnitude among the eigenvalues left after removing
    one copy of the maximal eigenvalue.
    """
    entries = w.entries if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    try:
        eigenvalues = np.linalg.eigvalsh(entries)
    except np.linalg.LinAlgError as e:
        raise SpectralError(f"eigendecomposition failed: {e}")

    rest = eigenvalues[:-1]
    lambda_2 = float(np.max(np.abs(rest))) if rest.size else 0.0
    return SpectralSummary(lambda_min=float(eigenvalues[0]), lambda_2=lambda_2)


def validate_mixing(w: MixingMatrix, g: Graph) -> ValidationReport:
    """Check the four mixing-matrix conditions against graph ``g``."""
    entries = w.entries
    if entries.shape != (g.m, g.m):
        raise ParameterError(f"mixing matrix shape {entries.shape} does not match {g.m} agents")

    details = []
    adjacency = g.adjacency().astype(bool)
    off = ~np.eye(g.m, dtype=bool)

    sparsity = bool(np.all(np.diag(entries) > 0))
    if not sparsity:
        details.append("non-positive diagonal entry")
    if np.any(entries[adjacency] <= 0):
        sparsity = False
        details.append("zero or negative weight on an edge")
    if np.any(entries[off & ~adjacency] != 0):
        sparsity = False
        details.append("non-zero weight between non-adjacent agents")

    symmetry = bool(np.array_equal(entries, entries.T))
    if not symmetry:
        details.append("matrix is not symmetric")

    eigenvalues = np.linalg.eigvalsh(0.5 * (entries + entries.T))
    near_one = int(np.sum(np.abs(eigenvalues - 1.0) <= EIGENVALUE_ONE_TOL))
    ones = np.ones(g.m)
    null_space = near_one == 1 and bool(np.allclose(entries @ ones, ones, atol=STOCHASTIC_TOL * g.m))
    if not null_space:
        details.append(f"eigenvalue 1 has multiplicity {near_one}")

    positive_definite = bool(eigenvalues[0] > 0 and eigenvalues[-1] <= 1 + STOCHASTIC_TOL)
    if not positive_definite:
        details.append(f"spectrum [{eigenvalues[0]:.3g}, {eigenvalues[-1]:.3g}] not in (0, 1]")

    doubly_stochastic = bool(
        np.all(np.abs(entries.sum(axis=1) - 1) <= STOCHASTIC_TOL)
        and np.all(np.abs(entries.sum(axis=0) - 1) <= STOCHASTIC_TOL)
    )

    return ValidationReport(
        sparsity=sparsity,
        symmetry=symmetry,
        null_space=null_space,
        positive_definite=positive_definite,
        doubly_stochastic=doubly_stochastic,
        details=details,
    )


def mix(w: MixingMatrix, blocks: np.ndarray) -> np.ndarray:
    """Apply ``W (x) I_n`` to ``(m, n)`` agent blocks without forming the Kronecker product."""
    return w.entries @ blocks


def consensus_contraction_check(w: MixingMatrix, n: int, trials: int, seed: int) -> TrialStats:
    """Disagreement shrinks by at least lambda_2 under one mixing round."""
    from ndgd.analysis import wilson_interval

    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = make_rng(seed)
    successes = 0
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((w.m, n))
        before = np.linalg.norm(x - x.mean(axis=0))
        mixed = mix(w, x)
        after = np.linalg.norm(mixed - mixed.mean(axis=0))
        worst = max(worst, after - w.lambda_2 * before)
        successes += after <= w.lambda_2 * before + 1e-10

    return TrialStats(
        name="consensus",
        reference="consensus contraction by the second-largest eigenvalue",
        kind=BoundKind.EXACT,
        trials=trials,
        successes=successes,
        bound_probability=1.0,
        wilson_interval=wilson_interval(successes, trials),
        detail={"worst_excess": worst},
    )


def write_edge_list(g: Graph, path: str | Path) -> None:
    lines = [f"m {g.m}"] + [f"{i} {j}" for i, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> Graph:
    lines = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines or lines[0][0] != "m":
        raise TopologyError(f"edge list {path} lacks an 'm <count>' header")
    m = int(lines[0][1])
    return Graph.from_pairs(m, ((int(i), int(j)) for i, j in lines[1:]))


def write_mixing_csv(w: MixingMatrix, path: str | Path) -> None:
    rows = [",".join(format(float(v), ".17g") for v in row) for row in w.entries]
    Path(path).write_text("\n".join(rows) + "\n")


def read_mixing_csv(path: str | Path) -> MixingMatrix:
    rows = [
        [float(v) for v in line.split(",")]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    return MixingMatrix.from_entries(rows)
