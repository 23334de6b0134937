"""Finite-sum objectives, the lifted objective F and the penalised objective Q.

Components are evaluated in a vectorised way: every method takes an array of
shape ``(..., m, n)`` whose row ``i`` is the argument of component ``i`` and
returns values ``(..., m)``, gradients ``(..., m, n)`` or Hessians
``(..., m, n, n)``. Leading axes batch independent points (trials, samples).
"""

import importlib
import logging
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import ndimage, optimize
from scipy.linalg import block_diag
from scipy.special import expit

from ndgd.models import (
    CriticalPointKind,
    DerivativeReport,
    DomainBox,
    LiftedPoint,
    MixingMatrix,
    ParameterError,
    RegularityConstants,
)
from ndgd.streams import make_rng


logger = logging.getLogger(__name__)

SAFETY_FACTOR = 1.5
CONSTANT_FLOOR = 1e-12
MINIMIZER_GRAD_TOL = 1e-8


class ObjectiveError(Exception):
    """Objective construction or evaluation failed."""

    pass


class ObjectiveSet:
    """The ``m`` components ``f_i: R^n -> R`` of ``f = sum_i f_i``."""

    kind = "custom"

    def __init__(self, m: int, n: int, domain_box: DomainBox | None = None):
        if m < 1 or n < 1:
            raise ParameterError(f"objective needs m >= 1 and n >= 1, got m={m}, n={n}")
        self.m = m
        self.n = n
        self.domain_box = domain_box or DomainBox.cube(-2.0, 2.0, n)
        if self.domain_box.dim != n:
            raise ParameterError(f"domain box has dimension {self.domain_box.dim}, expected {n}")

    # Subclasses implement these three.

    def values(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessians(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def f_star_sum(self) -> float | None:
        """Sum of the component minima, or None if some component is unbounded."""
        return None

    @property
    def minimizers(self) -> np.ndarray | None:
        """Known local minimizers of f as a ``(k, n)`` array."""
        return None

    @property
    def critical_points(self) -> np.ndarray:
        """Critical points of f that are known in closed form or by search."""
        mins = self.minimizers
        return mins if mins is not None else np.empty((0, self.n))

    @cached_property
    def constants(self) -> RegularityConstants:
        return estimate_constants(self, self.domain_box, samples=2000, seed=0)

    def describe(self) -> dict:
        return {"kind": self.kind, "m": self.m, "n": self.n}

    # Sums over components at a common point x in R^n.

    def broadcast(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(x[..., None, :], (*x.shape[:-1], self.m, self.n))

    def f_value(self, x) -> np.ndarray:
        return self.values(self.broadcast(x)).sum(axis=-1)

    def f_gradient(self, x) -> np.ndarray:
        return self.gradients(self.broadcast(x)).sum(axis=-2)

    def f_hessian(self, x) -> np.ndarray:
        return self.hessians(self.broadcast(x)).sum(axis=-3)


class QuarticObjective(ObjectiveSet):
    """``J_i(t1, t2) = (a_i t1^4 + b_i t1^2 + c_i t2^4 + d_i t2^2) / m``."""

    kind = "quartic"

    def __init__(self, coeffs, domain_box: DomainBox | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != 4:
            raise ParameterError(f"quartic coefficients must be (m, 4), got shape {coeffs.shape}")
        a, b, c, d = coeffs.sum(axis=0)
        if not (a > 0 and b > 0 and c > 0 and d < 0):
            raise ParameterError(
                f"quartic needs sum a > 0, sum b > 0, sum c > 0, sum d < 0; got "
                f"({a:.4g}, {b:.4g}, {c:.4g}, {d:.4g})"
            )
        super().__init__(coeffs.shape[0], 2, domain_box)
        self.coeffs = coeffs
        self.coeffs.setflags(write=False)

    def _split(self):
        return (self.coeffs[:, k] / self.m for k in range(4))

    def values(self, z):
        a, b, c, d = self._split()
        t1, t2 = z[..., 0], z[..., 1]
        return a * t1**4 + b * t1**2 + c * t2**4 + d * t2**2

    def gradients(self, z):
        a, b, c, d = self._split()
        t1, t2 = z[..., 0], z[..., 1]
        return np.stack([4 * a * t1**3 + 2 * b * t1, 4 * c * t2**3 + 2 * d * t2], axis=-1)

    def hessians(self, z):
        a, b, c, d = self._split()
        t1, t2 = z[..., 0], z[..., 1]
        h = np.zeros((*z.shape, 2))
        h[..., 0, 0] = 12 * a * t1**2 + 2 * b
        h[..., 1, 1] = 12 * c * t2**2 + 2 * d
        return h

    @property
    def f_star_sum(self) -> float | None:
        a, b, c, d = (self.coeffs[:, k] for k in range(4))
        if np.any(a < 0) or np.any(c < 0) or np.any((a == 0) & (b < 0)) or np.any((c == 0) & (d < 0)):
            return None
        first = np.where(b < 0, -(b**2) / (4 * np.where(a > 0, a, 1.0)), 0.0)
        second = np.where(d < 0, -(d**2) / (4 * np.where(c > 0, c, 1.0)), 0.0)
        return float(np.sum(first + second) / self.m)

    @cached_property
    def minimizers(self) -> np.ndarray:
        c = self.coeffs[:, 2].sum()
        d = self.coeffs[:, 3].sum()
        t2 = np.sqrt(-d / (2 * c))
        return np.array([[0.0, t2], [0.0, -t2]])

    @property
    def critical_points(self) -> np.ndarray:
        return np.vstack([self.minimizers, np.zeros((1, 2))])

    def describe(self) -> dict:
        return {**super().describe(), "coefficients": self.coeffs.tolist()}


class LogisticObjective(ObjectiveSet):
    """Two-layer linear classifier under the regularised logistic loss.

    Component ``i`` holds one sample ``(x_i, y_i)`` with ``x_i`` in R^p and
    evaluates ``(1/m) ln(1 + exp(-y_i v1^T V2 x_i)) + eta/(2m) (|v1|^2 + |V2|_F^2)``.
    The decision vector stacks ``v1`` (length ``d``) and ``V2`` (``d x p``,
    row-major), so ``n = d + d p``.
    """

    kind = "logistic"

    def __init__(
        self,
        features,
        labels,
        eta: float,
        inner_dim: int = 1,
        domain_box: DomainBox | None = None,
    ):
        if eta <= 0:
            raise ParameterError(f"eta must be positive, got {eta}")
        if inner_dim < 1:
            raise ParameterError(f"inner dimension must be >= 1, got {inner_dim}")
        x = np.asarray(features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(labels, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise ParameterError("features and labels disagree on the sample count")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ParameterError("labels must be -1 or +1")

        p = x.shape[1]
        n = inner_dim + inner_dim * p
        super().__init__(x.shape[0], n, domain_box or DomainBox.cube(-3.0, 3.0, n))
        self.features = x
        self.labels = y
        self.eta = float(eta)
        self.inner_dim = inner_dim
        self.feature_dim = p

        # second derivative of u = v1^T V2 x, constant per component
        curvature = np.zeros((self.m, n, n))
        for a in range(inner_dim):
            cols = inner_dim + a * p + np.arange(p)
            curvature[:, a, cols] = x
            curvature[:, cols, a] = x
        self._curvature = curvature

    def _parts(self, z):
        dd, p = self.inner_dim, self.feature_dim
        v1 = z[..., :dd]
        v2 = z[..., dd:].reshape(*z.shape[:-1], dd, p)
        v2x = np.einsum("...ab,...b->...a", v2, self.features)
        u = np.sum(v1 * v2x, axis=-1)
        du = np.concatenate(
            [v2x, (v1[..., :, None] * self.features[..., None, :]).reshape(*z.shape[:-1], dd * p)],
            axis=-1,
        )
        return u, du

    def values(self, z):
        u, _ = self._parts(z)
        margin = self.labels * u
        ridge = 0.5 * self.eta * np.sum(z**2, axis=-1)
        return (np.logaddexp(0.0, -margin) + ridge) / self.m

    def gradients(self, z):
        u, du = self._parts(z)
        slope = -self.labels * expit(-self.labels * u)
        return (slope[..., None] * du + self.eta * z) / self.m

    def hessians(self, z):
        u, du = self._parts(z)
        margin = self.labels * u
        slope = -self.labels * expit(-margin)
        bend = expit(margin) * expit(-margin)
        h = bend[..., None, None] * du[..., :, None] * du[..., None, :]
        h = h + slope[..., None, None] * self._curvature
        h = h + self.eta * np.eye(self.n)
        return h / self.m

    def origin_hessian(self) -> np.ndarray:
        """Hessian of f at the origin."""
        return self.f_hessian(np.zeros(self.n))

    @cached_property
    def f_star_sum(self) -> float:
        """Grid and multi-start estimate of the component minima."""
        rng = make_rng(0, 1)
        total = 0.0
        for i in range(self.m):
            def fun(z, i=i):
                return float(self.values(np.broadcast_to(z, (self.m, self.n)))[i])

            def jac(z, i=i):
                return self.gradients(np.broadcast_to(z, (self.m, self.n)))[i]

            def hess(z, i=i):
                return self.hessians(np.broadcast_to(z, (self.m, self.n)))[i]

            starts = self.domain_box.sample(rng, 8)
            best = min(
                optimize.minimize(fun, s, jac=jac, hess=hess, method="trust-exact").fun
                for s in starts
            )
            total += best
        return float(total)

    @cached_property
    def minimizers(self) -> np.ndarray:
        return find_minimizers(self)

    @property
    def critical_points(self) -> np.ndarray:
        return np.vstack([self.minimizers, np.zeros((1, self.n))])

    def describe(self) -> dict:
        return {
            **super().describe(),
            "eta": self.eta,
            "inner_dim": self.inner_dim,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }


class QuadraticObjective(ObjectiveSet):
    """``f_i(x) = x^T A_i x / 2 + b_i^T x`` with constant Hessians."""

    kind = "quadratic"

    def __init__(self, matrices, offsets, domain_box: DomainBox | None = None):
        a = np.asarray(matrices, dtype=float)
        b = np.asarray(offsets, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2] or b.shape != a.shape[:2]:
            raise ParameterError("quadratic needs matrices (m, n, n) and offsets (m, n)")
        if not np.allclose(a, np.swapaxes(a, 1, 2)):
            raise ParameterError("quadratic matrices must be symmetric")
        super().__init__(a.shape[0], a.shape[1], domain_box)
        self.matrices = 0.5 * (a + np.swapaxes(a, 1, 2))
        self.offsets = b

    def values(self, z):
        quad = np.einsum("...mi,mij,...mj->...m", z, self.matrices, z)
        return 0.5 * quad + np.sum(self.offsets * z, axis=-1)

    def gradients(self, z):
        return np.einsum("mij,...mj->...mi", self.matrices, z) + self.offsets

    def hessians(self, z):
        return np.broadcast_to(self.matrices, (*z.shape, self.n)).copy()

    @property
    def f_star_sum(self) -> float | None:
        total = 0.0
        for a, b in zip(self.matrices, self.offsets):
            if np.linalg.eigvalsh(a)[0] <= 0:
                return None
            total -= 0.5 * b @ np.linalg.solve(a, b)
        return float(total)

    @cached_property
    def minimizers(self) -> np.ndarray | None:
        total = self.matrices.sum(axis=0)
        if np.linalg.eigvalsh(total)[0] <= 0:
            return None
        return np.linalg.solve(total, -self.offsets.sum(axis=0))[None, :]


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def make_quartic(coeffs, domain_box: DomainBox | None = None) -> QuarticObjective:
    return QuarticObjective(coeffs, domain_box)


def make_logistic(data, eta: float, d: int = 1, domain_box: DomainBox | None = None) -> LogisticObjective:
    """Build the logistic objective from ``(x_i, y_i)`` pairs."""
    pairs = list(data)
    if not pairs:
        raise ParameterError("logistic objective needs at least one sample")
    features = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs])
    labels = np.array([y for _, y in pairs], dtype=float)
    return LogisticObjective(features, labels, eta, inner_dim=d, domain_box=domain_box)


def make_quadratic(matrices, offsets, domain_box: DomainBox | None = None) -> QuadraticObjective:
    return QuadraticObjective(matrices, offsets, domain_box)


def random_quartic_coefficients(
    m: int,
    seed: int,
    positive_range: tuple[float, float] = (0.5, 1.5),
    negative_range: tuple[float, float] = (-1.5, -0.5),
    max_draws: int = 100,
) -> np.ndarray:
    """Draw ``(a, b, c, d)`` per component until the sum sign conditions hold."""
    for draw in range(max_draws):
        rng = make_rng(seed, draw)
        abc = rng.uniform(*positive_range, size=(m, 3))
        d = rng.uniform(*negative_range, size=(m, 1))
        coeffs = np.hstack([abc, d])
        a, b, c, dsum = coeffs.sum(axis=0)
        if a > 0 and b > 0 and c > 0 and dsum < 0:
            return coeffs
        logger.debug("quartic draw %d violates the sign conditions, redrawing", draw)
    raise ObjectiveError(f"no admissible quartic coefficients after {max_draws} draws")


def generate_logistic_data(m: int, seed: int, features: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Labels uniform on {-1, 1}; features ``x ~ N(y, 1)`` per coordinate."""
    rng = make_rng(seed)
    labels = rng.choice(np.array([-1.0, 1.0]), size=m)
    x = rng.normal(loc=labels[:, None], scale=1.0, size=(m, features))
    return x, labels


def strict_saddle_logistic_data(
    m: int,
    eta: float,
    seed: int,
    features: int = 1,
    inner_dim: int = 1,
    max_draws: int = 100,
) -> LogisticObjective:
    """Redraw logistic data until the origin is a strict saddle of f."""
    for draw in range(max_draws):
        x, y = generate_logistic_data(m, seed + draw, features)
        obj = LogisticObjective(x, y, eta, inner_dim=inner_dim)
        lmin = np.linalg.eigvalsh(obj.origin_hessian())[0]
        if lmin < 0:
            logger.info("logistic data draw %d (seed %d): origin curvature %.4g", draw, seed + draw, lmin)
            return obj
        logger.info("logistic data draw %d has no saddle at the origin (curvature %.4g), redrawing", draw, lmin)
    raise ObjectiveError(f"no logistic draw with a strict saddle at the origin after {max_draws} draws")


def load_objective_factory(spec: str, **params) -> ObjectiveSet:
    """Call a ``module:function`` factory and check it returns an ObjectiveSet."""
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise ObjectiveError(f"factory must look like 'module:function', got {spec!r}")
    try:
        module = importlib.import_module(module_name)
        factory: Callable[..., ObjectiveSet] = getattr(module, attr)
    except (ImportError, AttributeError) as e:
        raise ObjectiveError(f"cannot load objective factory {spec!r}: {e}")
    obj = factory(**params)
    if not isinstance(obj, ObjectiveSet):
        raise ObjectiveError(f"factory {spec!r} returned {type(obj).__name__}, not an ObjectiveSet")
    return obj


# ---------------------------------------------------------------------------
# Lifted quantities
# ---------------------------------------------------------------------------


def as_blocks(x, m: int | None = None, n: int | None = None) -> np.ndarray:
    """Agent blocks ``(..., m, n)`` of a LiftedPoint or array."""
    if isinstance(x, LiftedPoint):
        return x.blocks
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if m is None or n is None:
            raise ParameterError("flat arrays need explicit m and n")
        if arr.shape[0] != m * n:
            raise ParameterError(f"lifted vector has length {arr.shape[0]}, expected {m * n}")
        return arr.reshape(m, n)
    return arr


def av(x) -> np.ndarray:
    """Network average of the agent blocks."""
    return as_blocks(x).mean(axis=-2)


def consensus_error(x) -> np.ndarray | float:
    """``|x - 1 (x) av(x)|``; batched inputs give one value per point."""
    blocks = as_blocks(x)
    spread = blocks - blocks.mean(axis=-2, keepdims=True)
    err = np.sqrt(np.sum(spread**2, axis=(-2, -1)))
    return float(err) if np.ndim(err) == 0 else err


def penalty(w: MixingMatrix, alpha: float, blocks: np.ndarray) -> np.ndarray:
    """``|x|^2_{I - W (x) I} / (2 alpha)``."""
    _check_alpha(alpha)
    return np.sum(blocks * (blocks - w.entries @ blocks), axis=(-2, -1)) / (2 * alpha)


def q_gradient(obj: ObjectiveSet, w: MixingMatrix, alpha: float, blocks: np.ndarray) -> np.ndarray:
    _check_alpha(alpha)
    return obj.gradients(blocks) + (blocks - w.entries @ blocks) / alpha


def q_value(obj: ObjectiveSet, w: MixingMatrix, alpha: float, blocks: np.ndarray) -> np.ndarray:
    return obj.values(blocks).sum(axis=-1) + penalty(w, alpha, blocks)


def F_eval(obj: ObjectiveSet, x) -> tuple[float, np.ndarray, list[np.ndarray]]:
    """Value, gradient and block-diagonal Hessian of the lifted objective."""
    blocks = as_blocks(x, obj.m, obj.n)
    value = float(obj.values(blocks).sum())
    grad = obj.gradients(blocks).reshape(-1)
    return value, grad, list(obj.hessians(blocks))


def hessian_q(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x) -> np.ndarray:
    """Dense ``block_diag(hess f_i) + (I - W) (x) I_n / alpha``."""
    _check_alpha(alpha)
    blocks = as_blocks(x, obj.m, obj.n)
    laplacian = np.kron(np.eye(obj.m) - w.entries, np.eye(obj.n))
    return block_diag(*obj.hessians(blocks)) + laplacian / alpha


def Q_eval(obj: ObjectiveSet, w: MixingMatrix, alpha: float, x) -> tuple[float, np.ndarray, float]:
    """Value, gradient and smallest Hessian eigenvalue of Q."""
    blocks = as_blocks(x, obj.m, obj.n)
    value = float(q_value(obj, w, alpha, blocks))
    grad = q_gradient(obj, w, alpha, blocks).reshape(-1)
    lmin = float(np.linalg.eigvalsh(hessian_q(obj, w, alpha, blocks))[0])
    return value, grad, lmin


def gradient_sum(obj: ObjectiveSet, x) -> np.ndarray:
    return obj.gradients(as_blocks(x, obj.m, obj.n)).sum(axis=-2)


def hessian_sum(obj: ObjectiveSet, x) -> np.ndarray:
    return obj.hessians(as_blocks(x, obj.m, obj.n)).sum(axis=-3)


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ParameterError(f"step size must be positive, got {alpha}")


# ---------------------------------------------------------------------------
# Constants and checks
# ---------------------------------------------------------------------------


def _box_sample_pairs(box: DomainBox, rng: np.random.Generator, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Random pairs plus short segments leaving every vertex toward the centre."""
    x = box.sample(rng, samples)
    y = box.sample(rng, samples)
    corners = box.vertices()
    if corners.size:
        centre = 0.5 * (np.asarray(box.lower) + np.asarray(box.upper))
        x = np.vstack([x, corners])
        y = np.vstack([y, corners + 1e-3 * (centre - corners)])
    return x, y


def estimate_constants(obj: ObjectiveSet, box: DomainBox, samples: int, seed: int) -> RegularityConstants:
    """Sampled Lipschitz and disagreement constants on ``box``, inflated by 1.5."""
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    if box.dim != obj.n:
        raise ParameterError(f"box dimension {box.dim} does not match n={obj.n}")

    rng = make_rng(seed)
    x, y = _box_sample_pairs(box, rng, samples)
    gx, gy = obj.gradients(obj.broadcast(x)), obj.gradients(obj.broadcast(y))
    hx, hy = obj.hessians(obj.broadcast(x)), obj.hessians(obj.broadcast(y))
    step = np.linalg.norm(x - y, axis=-1)[:, None]
    step = np.where(step > 0, step, np.inf)

    grad_ratio = np.linalg.norm(gx - gy, axis=-1) / step
    hess_norm = np.linalg.norm(hx, ord=2, axis=(-2, -1))
    hess_ratio = np.linalg.norm(hx - hy, ord=2, axis=(-2, -1)) / step
    lg = max(float(grad_ratio.max()), float(hess_norm.max()))
    lh = float(hess_ratio.max())

    spread = np.linalg.norm(gx[:, :, None, :] - gx[:, None, :, :], axis=-1)
    disagreement = float(spread.max())

    logger.debug("raw constants on box: L_g=%.4g L_H=%.4g D=%.4g", lg, lh, disagreement)
    f_star = obj.f_star_sum
    return RegularityConstants(
        grad_lipschitz=max(SAFETY_FACTOR * lg, CONSTANT_FLOOR),
        hess_lipschitz=max(SAFETY_FACTOR * lh, CONSTANT_FLOOR),
        disagreement=max(SAFETY_FACTOR * disagreement, CONSTANT_FLOOR),
        f_star_sum=float(f_star) if f_star is not None else float("-inf"),
        domain_box=box,
    )


def check_regularity(obj: ObjectiveSet, constants: RegularityConstants, samples: int, seed: int) -> bool:
    """Sampled check of the Lipschitz and bounded-disagreement assumptions."""
    rng = make_rng(seed)
    box = constants.domain_box
    x, y = box.sample(rng, samples), box.sample(rng, samples)
    gx, gy = obj.gradients(obj.broadcast(x)), obj.gradients(obj.broadcast(y))
    hx, hy = obj.hessians(obj.broadcast(x)), obj.hessians(obj.broadcast(y))
    step = np.linalg.norm(x - y, axis=-1)[:, None]

    grad_ok = np.all(np.linalg.norm(gx - gy, axis=-1) <= constants.grad_lipschitz * step + 1e-12)
    hess_ok = np.all(
        np.linalg.norm(hx - hy, ord=2, axis=(-2, -1)) <= constants.hess_lipschitz * step + 1e-12
    )
    spread = np.linalg.norm(gx[:, :, None, :] - gx[:, None, :, :], axis=-1)
    disagreement_ok = np.all(spread <= constants.disagreement + 1e-12)
    return bool(grad_ok and hess_ok and disagreement_ok)


def check_derivatives(
    obj: ObjectiveSet,
    points: int,
    seed: int,
    box: DomainBox | None = None,
) -> DerivativeReport:
    """Compare analytic derivatives with central finite differences.

    Errors are relative to ``max(1, |analytic|)`` per component and point.
    """
    if points < 1:
        raise ParameterError("points must be >= 1")
    rng = make_rng(seed)
    x = (box or obj.domain_box).sample(rng, points)
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    eye = np.eye(obj.n)

    # (points, n_dir, n) shifted arguments
    steps = h[:, :, None] * eye[None, :, :]
    plus = x[:, None, :] + steps
    minus = x[:, None, :] - steps
    width = 2 * h[:, :, None]

    fd_grad = (obj.values(obj.broadcast(plus)) - obj.values(obj.broadcast(minus))) / width
    grad = obj.gradients(obj.broadcast(x))
    fd_grad = np.swapaxes(fd_grad, 1, 2)
    grad_err = np.linalg.norm(fd_grad - grad, axis=-1) / np.maximum(1.0, np.linalg.norm(grad, axis=-1))

    diff = obj.gradients(obj.broadcast(plus)) - obj.gradients(obj.broadcast(minus))
    fd_hess = np.moveaxis(diff / width[..., None], 1, 2)
    hess = obj.hessians(obj.broadcast(x))
    hess_err = np.linalg.norm(fd_hess - hess, axis=(-2, -1)) / np.maximum(
        1.0, np.linalg.norm(hess, axis=(-2, -1))
    )

    return DerivativeReport(
        points=points,
        max_gradient_error=float(grad_err.max()),
        max_hessian_error=float(hess_err.max()),
    )


def classify_point(obj: ObjectiveSet, x, tol: float = 1e-6) -> CriticalPointKind:
    """Second-order classification of ``x`` as a point of f."""
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(obj.f_gradient(x)) > tol:
        return CriticalPointKind.NON_STATIONARY
    lmin = np.linalg.eigvalsh(obj.f_hessian(x))[0]
    if lmin > tol:
        return CriticalPointKind.LOCAL_MINIMIZER
    if lmin < -tol:
        return CriticalPointKind.STRICT_SADDLE
    return CriticalPointKind.DEGENERATE


def check_strict_saddle(obj: ObjectiveSet, tol: float = 1e-6) -> bool:
    """Every known critical point is a local minimizer or a strict saddle."""
    kinds = [classify_point(obj, p, tol) for p in obj.critical_points]
    return all(k in (CriticalPointKind.LOCAL_MINIMIZER, CriticalPointKind.STRICT_SADDLE) for k in kinds)


def polish_minimizer(obj: ObjectiveSet, z, steps: int = 8) -> np.ndarray:
    """Newton steps on f from ``z`` while the Hessian stays positive definite."""
    z = np.asarray(z, dtype=float).copy()
    for _ in range(steps):
        g = obj.f_gradient(z)
        if np.linalg.norm(g) == 0:
            break
        h = obj.f_hessian(z)
        if np.linalg.eigvalsh(h)[0] <= 0:
            break
        step = np.linalg.solve(h, g)
        if np.linalg.norm(obj.f_gradient(z - step)) >= np.linalg.norm(g):
            break
        z = z - step
    return z


def find_minimizers(obj: ObjectiveSet, grid: int = 201, starts: int = 64, seed: int = 0) -> np.ndarray:
    """Local minimizers of f by grid search (n <= 2) or multi-start, refined by Newton trust region and polished."""
    box = obj.domain_box
    if obj.n <= 2:
        axes = [np.linspace(lo, hi, grid) for lo, hi in zip(box.lower, box.upper)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        values = obj.f_value(mesh)
        interior = np.zeros(values.shape, dtype=bool)
        interior[(slice(1, -1),) * obj.n] = True
        is_min = (values == ndimage.minimum_filter(values, size=3, mode="nearest")) & interior
        candidates = mesh[is_min]
    else:
        candidates = box.sample(make_rng(seed), starts)

    found: list[np.ndarray] = []
    for start in candidates:
        result = optimize.minimize(
            lambda z: float(obj.f_value(z)),
            start,
            jac=obj.f_gradient,
            hess=obj.f_hessian,
            method="trust-exact",
            options={"gtol": 1e-12},
        )
        z = polish_minimizer(obj, result.x)
        eigs = np.linalg.eigvalsh(obj.f_hessian(z))
        if eigs[0] <= 0:
            continue
        # gradient tolerance relative to the curvature scale
        if np.linalg.norm(obj.f_gradient(z)) >= MINIMIZER_GRAD_TOL * max(1.0, float(np.abs(eigs).max())):
            continue
        if any(np.linalg.norm(z - other) < 1e-6 for other in found):
            continue
        found.append(z)

    if not found:
        raise ObjectiveError("no local minimizer found inside the domain box")
    logger.debug("found %d local minimizers of the %s objective", len(found), obj.kind)
    return np.array(sorted(found, key=lambda z: tuple(z)))
