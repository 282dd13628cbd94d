"""Concrete metric spaces.

All distances are vectorized: points may carry arbitrary leading batch axes
and broadcast against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, SpecError
from .spd import random_spd, symmetrize

NORMS = ("l1", "l2", "linf")
DUAL = {"l1": "linf", "l2": "l2", "linf": "l1"}


def vector_norm(x: np.ndarray, norm: str) -> np.ndarray:
    x = np.asarray(x)
    if norm == "l1":
        return np.sum(np.abs(x), axis=-1)
    if norm == "l2":
        return np.sqrt(np.sum(np.abs(x) ** 2, axis=-1))
    if norm == "linf":
        return np.max(np.abs(x), axis=-1)
    raise SpecError(f"unknown norm {norm!r}")


def operator_norm(M: np.ndarray, norm: str) -> float:
    """Operator norm of a matrix acting on (R^d, norm)."""
    M = np.asarray(M, dtype=float)
    if norm == "l1":
        return float(np.max(np.sum(np.abs(M), axis=0)))
    if norm == "linf":
        return float(np.max(np.sum(np.abs(M), axis=1)))
    if norm == "l2":
        return float(np.linalg.norm(M, 2))
    raise SpecError(f"unknown norm {norm!r}")


class MetricSpace:
    kind: str = "abstract"
    point_shape: tuple = ()
    dtype = float

    def distance(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def validate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[x.ndim - len(self.point_shape):] != self.point_shape:
            raise DomainError(f"point of shape {x.shape} does not fit {self.kind} points {self.point_shape}")
        return x

    def origin(self) -> np.ndarray:
        raise NotImplementedError

    def random_points(self, rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Banach(MetricSpace):
    """(R^d, l1 | l2 | linf)."""

    dim: int
    norm: str = "l2"
    kind = "banach"

    def __post_init__(self):
        if self.norm not in NORMS:
            raise SpecError(f"unknown norm {self.norm!r}")

    @property
    def point_shape(self):
        return (self.dim,)

    def norm_of(self, x) -> np.ndarray:
        return vector_norm(x, self.norm)

    def dual_norm_of(self, f) -> np.ndarray:
        return vector_norm(f, DUAL[self.norm])

    def distance(self, x, y):
        return vector_norm(np.asarray(x) - np.asarray(y), self.norm)

    def origin(self):
        return np.zeros(self.dim)

    def random_points(self, rng, n, scale=1.0):
        return rng.normal(scale=scale, size=(n, self.dim))


@dataclass(frozen=True)
class MaxPlus(MetricSpace):
    """R^d with the sup-metric, the natural home of topical maps."""

    dim: int
    kind = "maxplus"

    @property
    def point_shape(self):
        return (self.dim,)

    def distance(self, x, y):
        return np.max(np.abs(np.asarray(x) - np.asarray(y)), axis=-1)

    def validate(self, x):
        x = super().validate(x)
        if not np.all(np.isfinite(x)):
            raise DomainError("max-plus points must be finite")
        return x

    def origin(self):
        return np.zeros(self.dim)

    def random_points(self, rng, n, scale=1.0):
        return rng.normal(scale=scale, size=(n, self.dim))


@dataclass(frozen=True)
class HilbertCone(MetricSpace):
    """Interior of the positive orthant with Hilbert's projective metric.

    Points are positive vectors; the distance only depends on their rays.
    """

    dim: int
    kind = "hilbert_cone"

    @property
    def point_shape(self):
        return (self.dim,)

    def distance(self, x, y):
        lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
        r = lx - ly
        return np.max(r, axis=-1) - np.min(r, axis=-1)

    def validate(self, x):
        x = super().validate(x)
        if not np.all(x > 0) or not np.all(np.isfinite(x)):
            raise DomainError("Hilbert-cone points must have positive finite entries")
        return x

    def origin(self):
        return np.ones(self.dim)

    def random_points(self, rng, n, scale=1.0):
        return np.exp(rng.normal(scale=scale, size=(n, self.dim)))


@dataclass(frozen=True)
class PosDef(MetricSpace):
    """Symmetric positive definite d x d matrices with an invariant log metric.

    ``operator_log``: d(P, Q) = ||log(P^-1/2 Q P^-1/2)||_op;
    ``frobenius_log``: the same with the Frobenius norm (the affine-invariant
    Riemannian distance). Both are preserved by P -> g P g^T.
    """

    dim: int
    metric: str = "operator_log"
    kind = "posdef"

    def __post_init__(self):
        if self.metric not in ("operator_log", "frobenius_log"):
            raise SpecError(f"unknown posdef metric {self.metric!r}")

    @property
    def point_shape(self):
        return (self.dim, self.dim)

    def log_eigenvalues(self, P, Q) -> np.ndarray:
        """log of the eigenvalues of P^-1 Q, ascending."""
        P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
        try:
            L = np.linalg.cholesky(symmetrize(P))
        except np.linalg.LinAlgError as exc:
            raise DomainError("matrix is not positive definite") from exc
        Y = np.linalg.solve(L, symmetrize(Q))
        M = np.linalg.solve(L, np.swapaxes(Y, -1, -2))
        w = np.linalg.eigvalsh(symmetrize(M))
        if np.any(w <= 0):
            raise DomainError("matrix is not positive definite")
        return np.log(w)

    def distance(self, x, y):
        lw = self.log_eigenvalues(x, y)
        if self.metric == "operator_log":
            return np.max(np.abs(lw), axis=-1)
        return np.sqrt(np.sum(lw**2, axis=-1))

    def validate(self, x):
        x = super().validate(x)
        if np.max(np.abs(x - np.swapaxes(x, -1, -2)), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(x))):
            raise DomainError("posdef points must be symmetric")
        if np.any(np.linalg.eigvalsh(symmetrize(x)) <= 0):
            raise DomainError("posdef points must be positive definite")
        return x

    def origin(self):
        return np.eye(self.dim)

    def random_points(self, rng, n, scale=1.0):
        return random_spd(rng, self.dim, scale=scale, size=n)


@dataclass(frozen=True)
class PoincareDisk(MetricSpace):
    """The open unit disk with the curvature -1 Poincare metric."""

    kind = "poincare_disk"
    point_shape = ()
    dtype = complex

    def distance(self, z, w):
        z, w = np.asarray(z, complex), np.asarray(w, complex)
        az, aw = np.abs(z), np.abs(w)
        if np.any(az >= 1) or np.any(aw >= 1):
            raise DomainError("disk points must satisfy |z| < 1")
        a = np.abs(1 - np.conj(z) * w)
        b = np.abs(z - w)
        # a^2 - b^2 = (1 - |z|^2)(1 - |w|^2) avoids cancellation near the boundary
        return 2 * np.log(a + b) - np.log1p(-az**2) - np.log1p(-aw**2)

    def validate(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) >= 1) or not np.all(np.isfinite(z)):
            raise DomainError("disk points must satisfy |z| < 1")
        return z

    def origin(self):
        return np.complex128(0)

    def random_points(self, rng, n, scale=1.0):
        r = np.tanh(rng.exponential(scale=scale, size=n) / 2)
        return r * np.exp(2j * np.pi * rng.random(n))


def distance(space: MetricSpace, x, y):
    """Validated distance between two points of ``space``."""
    return space.distance(space.validate(x), space.validate(y))


def space_from_dict(d: dict) -> MetricSpace:
    kind = d.get("kind")
    if kind == "banach":
        return Banach(int(d["dim"]), d.get("norm", "l2"))
    if kind == "maxplus":
        return MaxPlus(int(d["dim"]))
    if kind == "hilbert_cone":
        return HilbertCone(int(d["dim"]))
    if kind == "posdef":
        return PosDef(int(d["dim"]), d.get("metric", "operator_log"))
    if kind == "poincare_disk":
        return PoincareDisk()
    raise SpecError(f"unknown space kind {kind!r}")
