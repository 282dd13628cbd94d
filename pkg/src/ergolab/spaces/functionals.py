"""Metric functionals h with h(x0) = 0 and |h(y) - h(z)| <= d(y, z)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError, SpecError
from .metrics import DUAL, MetricSpace, PoincareDisk, vector_norm

PROVENANCES = ("internal", "boundary_closed_form", "dual_vector", "trace_pairing")


@dataclass
class MetricFunctional:
    """An evaluable functional on a metric space, tagged with its origin."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    provenance: str
    basepoint: object
    space: MetricSpace | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise SpecError(f"unknown functional provenance {self.provenance!r}")

    def __call__(self, y):
        return self.evaluate(y)


def internal_functional(space: MetricSpace, x, basepoint=None) -> MetricFunctional:
    """h_x(y) = d(y, x) - d(x0, x)."""
    x = space.validate(x)
    x0 = space.origin() if basepoint is None else space.validate(basepoint)
    shift = float(space.distance(x0, x))

    def h(y):
        return space.distance(y, x) - shift

    return MetricFunctional(h, "internal", x0, space, {"x": x})


def disk_busemann(xi: complex, z) -> np.ndarray:
    """Busemann function of the Poincare disk at the boundary point xi.

    b(z) = log(|xi - z|^2 / (1 - |z|^2)), normalized so that b(0) = 0.
    """
    xi = complex(xi)
    if abs(abs(xi) - 1) > 1e-12:
        raise DomainError("boundary point must have modulus 1")
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) >= 1):
        raise DomainError("disk points must satisfy |z| < 1")
    return 2 * np.log(np.abs(xi - z)) - np.log1p(-np.abs(z) ** 2)


def busemann_functional(xi: complex) -> MetricFunctional:
    xi = complex(xi)
    return MetricFunctional(lambda z: disk_busemann(xi, z), "boundary_closed_form",
                            np.complex128(0), PoincareDisk(), {"xi": xi})


@dataclass(frozen=True)
class DualVector:
    """A linear functional y -> <f, y> on (R^d, norm), measured in the dual norm."""

    vector: np.ndarray
    norm: str

    def __call__(self, y):
        return np.asarray(y, dtype=float) @ np.asarray(self.vector, dtype=float)

    @property
    def dual_norm(self) -> float:
        return float(vector_norm(self.vector, DUAL[self.norm]))

    def normalized(self) -> DualVector:
        n = self.dual_norm
        if n == 0:
            raise DomainError("cannot normalize the zero functional")
        return DualVector(np.asarray(self.vector) / n, self.norm)

    def as_metric_functional(self, basepoint=None) -> MetricFunctional:
        """y -> -f(y - x0); a metric functional whenever the dual norm is at most 1."""
        v = np.asarray(self.vector, dtype=float)
        x0 = np.zeros_like(v) if basepoint is None else np.asarray(basepoint, dtype=float)
        return MetricFunctional(lambda y: -((np.asarray(y, dtype=float) - x0) @ v), "dual_vector", x0,
                                None, {"vector": v, "norm": self.norm})


def norming_functional(norm: str, x) -> DualVector:
    """A dual vector f of dual norm 1 with f(x) = ||x||; lowest index wins ties."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DomainError("the zero vector has no selected norming functional")
    if norm == "l2":
        y = x / np.max(np.abs(x))  # rescale first so tiny vectors do not underflow
        f = y / np.linalg.norm(y)
    elif norm == "l1":
        f = np.sign(x)
    elif norm == "linf":
        i = int(np.argmax(np.abs(x)))  # argmax returns the first maximal index
        f = np.zeros_like(x)
        f[i] = np.sign(x[i])
    else:
        raise SpecError(f"unknown norm {norm!r}")
    return DualVector(f, norm)


def lipschitz_excess(h: MetricFunctional, space: MetricSpace, y, z) -> float:
    """max over pairs of |h(y) - h(z)| - d(y, z); nonpositive means 1-Lipschitz."""
    return float(np.max(np.abs(h(y) - h(z)) - space.distance(y, z)))
