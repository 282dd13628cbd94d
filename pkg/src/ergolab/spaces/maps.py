"""Semicontractions, systems of them indexed by driver symbols, and orbits.

Maps act on batches of points (leading axes). Maps that are elements of a
matrix group acting on the left (affine maps, congruences, Mobius
transforms) expose ``matrix`` and a static ``act`` so that products along a
path can be composed once and reused: with prefix products
G_k = g_0 g_1 ... g_{k-1}, the suffix composition u(n - l, T^l w) equals
G_l^{-1} G_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..driver import OmegaPath
from ..errors import DomainError, SpecError
from .metrics import Banach, HilbertCone, MaxPlus, MetricSpace, PoincareDisk, PosDef, operator_norm

NONEXPANSIVE_SLACK = 1e-9
PREFIX_MAX_CONDITION = 1e6


class MapElement:
    """A map X -> X; subclasses implement batched ``__call__``."""

    space_kinds: tuple = ()
    group = False
    projective = False

    def __call__(self, x):
        raise NotImplementedError

    def check(self, space: MetricSpace) -> None:
        if space.kind not in self.space_kinds:
            raise SpecError(f"{type(self).__name__} cannot act on a {space.kind} space")


class Affine(MapElement):
    """x -> M x + b on R^d; nonexpansive when ||M|| <= 1 in the ambient norm."""

    space_kinds = ("banach", "maxplus")
    group = True

    def __init__(self, M, b):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        d = self.b.shape[0]
        if self.M.shape != (d, d):
            raise SpecError("affine map needs a d x d matrix and a length-d vector")
        self.is_translation = bool(np.array_equal(self.M, np.eye(d)))

    @classmethod
    def translation(cls, t) -> Affine:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return cls(np.eye(t.shape[0]), t)

    @classmethod
    def linear(cls, M) -> Affine:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros(M.shape[0]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_translation:
            return x + self.b
        return x @ self.M.T + self.b

    @property
    def matrix(self) -> np.ndarray:
        d = self.b.shape[0]
        G = np.eye(d + 1)
        G[:d, :d] = self.M
        G[:d, d] = self.b
        return G

    @staticmethod
    def act(G, x):
        d = G.shape[-1] - 1
        return np.einsum("...ij,...j->...i", G[..., :d, :d], x) + G[..., :d, d]

    def check(self, space):
        super().check(space)
        norm = space.norm if isinstance(space, Banach) else "linf"
        if self.b.shape[0] != space.dim:
            raise SpecError("affine map dimension does not match the space")
        if operator_norm(self.M, norm) > 1 + 1e-12:
            raise SpecError(f"linear part has {norm} operator norm above 1")


class MaxPlusMatrix(MapElement):
    """(A (x) x)_i = max_j (A_ij + x_j) with entries in R u {-inf}."""

    space_kinds = ("maxplus",)

    def __init__(self, A):
        A = np.asarray([[(-np.inf if a is None else a) for a in row] for row in A], dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SpecError("max-plus matrix must be square")
        if np.any(np.all(np.isneginf(A), axis=1)):
            raise SpecError("every row of a max-plus matrix needs a finite entry")
        if np.any(np.isposinf(A)) or np.any(np.isnan(A)):
            raise SpecError("max-plus entries must be finite or -inf")
        self.A = A

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(x[..., None, :] + self.A, axis=-1)

    def compose(self, other: MaxPlusMatrix) -> MaxPlusMatrix:
        """Max-plus product: (self o other)."""
        return MaxPlusMatrix(np.max(self.A[:, :, None] + other.A[None, :, :], axis=1))

    def check(self, space):
        super().check(space)
        if self.A.shape[0] != space.dim:
            raise SpecError("max-plus matrix dimension does not match the space")


class Topical(MapElement):
    """Black-box topical (monotone, additively homogeneous) map of R^d."""

    space_kinds = ("maxplus",)

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "topical"):
        self.fn = fn
        self.name = name

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


class ConeLinear(MapElement):
    """Entrywise positive matrix acting linearly, then projectively normalized."""

    space_kinds = ("hilbert_cone",)

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(A > 0):
            raise SpecError("cone map needs a square entrywise positive matrix")
        self.A = A

    def __call__(self, x):
        y = np.asarray(x, dtype=float) @ self.A.T
        return y / np.sum(y, axis=-1, keepdims=True)

    def check(self, space):
        super().check(space)
        if self.A.shape[0] != space.dim:
            raise SpecError("cone matrix dimension does not match the space")


class Congruence(MapElement):
    """P -> g P g^T; an isometry of both posdef log metrics."""

    space_kinds = ("posdef",)
    group = True

    def __init__(self, g):
        g = np.atleast_2d(np.asarray(g, dtype=float))
        if g.shape[0] != g.shape[1] or abs(np.linalg.det(g)) == 0:
            raise SpecError("congruence needs an invertible square matrix")
        self.g = g

    def __call__(self, P):
        P = np.asarray(P, dtype=float)
        return self.g @ P @ self.g.T

    @property
    def matrix(self):
        return self.g

    @staticmethod
    def act(G, P):
        return G @ P @ np.swapaxes(G, -1, -2)

    def check(self, space):
        super().check(space)
        if self.g.shape[0] != space.dim:
            raise SpecError("congruence dimension does not match the space")


class Mobius(MapElement):
    """z -> (a z + b) / (c z + d), a holomorphic map of the disk into itself.

    Stored as a 2 x 2 complex matrix normalized to determinant 1.
    """

    space_kinds = ("poincare_disk",)
    group = True
    projective = True

    def __init__(self, matrix, validate: bool = True):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise SpecError("Mobius transform needs a 2 x 2 matrix")
        det = np.linalg.det(m)
        if abs(det) < 1e-300:
            raise SpecError("Mobius matrix is singular")
        self.m = m / np.sqrt(det)
        if validate:
            self._check_self_map()

    def _check_self_map(self):
        (a, b), (c, d) = self.m
        gap = abs(d) ** 2 - abs(c) ** 2
        if gap <= 0:
            raise SpecError("Mobius transform has a pole in the closed disk")
        center = (b * np.conj(d) - a * np.conj(c)) / gap
        radius = abs(a * d - b * c) / gap
        if abs(center) + radius > 1 + 1e-12:
            raise SpecError("Mobius transform does not map the disk into itself")

    @classmethod
    def from_coefficients(cls, a, b, c, d) -> Mobius:
        return cls([[a, b], [c, d]])

    @classmethod
    def rotation(cls, theta: float) -> Mobius:
        return cls([[np.exp(0.5j * theta), 0], [0, np.exp(-0.5j * theta)]])

    @classmethod
    def parabolic(cls, xi: complex = 1.0, t: float = 1.0) -> Mobius:
        """Parabolic automorphism fixing the boundary point xi.

        Conjugate of w -> w + t under the Cayley map z -> i (xi + z) / (xi - z).
        """
        xi = complex(xi)
        S = np.array([[1j, 1j * xi], [-1, xi]])
        Sinv = np.array([[xi, -1j * xi], [1, 1j]])
        return cls(Sinv @ np.array([[1, t], [0, 1]]) @ S)

    @classmethod
    def hyperbolic(cls, attracting: complex, repelling: complex, multiplier: float) -> Mobius:
        """Hyperbolic automorphism with the given boundary fixed points.

        Defined by (f(z) - a)/(f(z) - r) = k (z - a)/(z - r) with 0 < k < 1;
        its translation length is -log k.
        """
        if not 0 < multiplier < 1:
            raise SpecError("hyperbolic multiplier must lie in (0, 1)")
        a, r = complex(attracting), complex(repelling)
        S = np.array([[1, -a], [1, -r]])
        return cls(np.linalg.inv(S) @ np.diag([multiplier, 1.0]) @ S)

    def __call__(self, z):
        (a, b), (c, d) = self.m
        z = np.asarray(z, dtype=complex)
        return (a * z + b) / (c * z + d)

    @property
    def matrix(self):
        return self.m

    @staticmethod
    def act(G, z):
        z = np.asarray(z, dtype=complex)
        return (G[..., 0, 0] * z + G[..., 0, 1]) / (G[..., 1, 0] * z + G[..., 1, 1])


class Blaschke(MapElement):
    """Finite Blaschke product e^{i theta} prod (z - a_k) / (1 - conj(a_k) z)."""

    space_kinds = ("poincare_disk",)

    def __init__(self, zeros, theta: float = 0.0):
        self.zeros = np.atleast_1d(np.asarray(zeros, dtype=complex))
        if np.any(np.abs(self.zeros) >= 1):
            raise SpecError("Blaschke zeros must lie in the open disk")
        self.theta = float(theta)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        a = self.zeros
        return np.exp(1j * self.theta) * np.prod((z - a) / (1 - np.conj(a) * z), axis=-1)


def check_nonexpansive(space: MetricSpace, f: MapElement, rng: np.random.Generator,
                       pairs: int = 100, scale: float = 1.0) -> float:
    """Largest observed d(fx, fy) - d(x, y) over random pairs (<= slack means pass)."""
    x = space.random_points(rng, pairs, scale)
    y = space.random_points(rng, pairs, scale)
    return float(np.max(space.distance(f(x), f(y)) - space.distance(x, y)))


def check_topical(f: Callable, dim: int, rng: np.random.Generator, samples: int = 100,
                  tol: float = 1e-9) -> bool:
    """Sampled check of monotonicity and additive homogeneity."""
    x = rng.normal(size=(samples, dim))
    y = x + np.abs(rng.normal(size=(samples, dim)))
    c = rng.normal(size=(samples, 1))
    fx = np.asarray(f(x))
    monotone = np.all(np.asarray(f(y)) >= fx - tol)
    homogeneous = np.all(np.abs(np.asarray(f(x + c)) - (fx + c)) <= tol)
    return bool(monotone and homogeneous)


@dataclass
class SemicontractionSystem:
    """A metric space, a symbol -> map assignment and a basepoint."""

    space: MetricSpace
    maps: Mapping[int, MapElement]
    basepoint: object = None
    validate: bool = True
    check_seed: int = 0

    def __post_init__(self):
        self.maps = {int(k): v for k, v in self.maps.items()}
        if self.basepoint is None:
            self.basepoint = self.space.origin()
        self.basepoint = self.space.validate(self.basepoint)
        if self.validate:
            rng = np.random.default_rng(self.check_seed)
            for s, f in self.maps.items():
                f.check(self.space)
                excess = check_nonexpansive(self.space, f, rng)
                if excess > NONEXPANSIVE_SLACK:
                    raise SpecError(f"map for symbol {s} expands distances by {excess:.3g}")

    @property
    def route(self) -> str:
        """How suffix compositions are computed: translation, matrix or direct."""
        maps = list(self.maps.values())
        if all(isinstance(f, Affine) and f.is_translation for f in maps):
            return "translation"
        if maps and all(f.group and type(f) is type(maps[0]) for f in maps):
            return "matrix"
        return "direct"

    def with_basepoint(self, x) -> SemicontractionSystem:
        return SemicontractionSystem(self.space, self.maps, x, validate=False)

    def map_for(self, symbol: int) -> MapElement:
        try:
            return self.maps[int(symbol)]
        except KeyError:
            raise SpecError(f"no map assigned to symbol {symbol}") from None

    def check_alphabet(self, alphabet_size: int):
        missing = [s for s in range(alphabet_size) if s not in self.maps]
        if missing:
            raise SpecError(f"no map assigned to symbols {missing}")

    # -- composed representations over a window of the path -----------------

    def translation_prefix(self, path: OmegaPath, lo: int, hi: int) -> np.ndarray:
        """B[k] = sum of translation vectors at times lo .. lo+k-1."""
        syms = path.symbols(lo, hi)
        table = np.array([self.maps[s].b for s in sorted(self.maps)])
        index = {s: i for i, s in enumerate(sorted(self.maps))}
        steps = table[np.vectorize(index.__getitem__, otypes=[int])(syms)] if len(syms) else table[:0]
        B = np.zeros((hi - lo + 1, table.shape[1]))
        np.cumsum(steps, axis=0, out=B[1:])
        return B

    def matrix_prefix(self, path: OmegaPath, lo: int, hi: int) -> np.ndarray:
        """G[k] = g(lo) g(lo+1) ... g(lo+k-1) (forward composition order)."""
        syms = path.symbols(lo, hi)
        first = next(iter(self.maps.values()))
        m = first.matrix.shape[0]
        G = np.empty((hi - lo + 1, m, m), dtype=first.matrix.dtype)
        G[0] = np.eye(m)
        mats = {s: f.matrix for s, f in self.maps.items()}
        projective = first.projective
        for k, s in enumerate(syms):
            nxt = G[k] @ mats[int(s)]
            if projective:
                nxt = nxt / np.max(np.abs(nxt))
            G[k + 1] = nxt
        return G

    def suffix_points(self, path: OmegaPath, ns: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Points u(n, T^o w) x0 for paired arrays of lengths n and offsets o."""
        ns = np.asarray(ns, dtype=np.int64)
        offsets = np.broadcast_to(np.asarray(offsets, dtype=np.int64), ns.shape)
        if ns.size == 0:
            return np.empty((0,) + self.space.point_shape, dtype=self.space.dtype)
        if np.any(ns < 0):
            raise DomainError("composition length must be nonnegative")
        lo, hi = int(offsets.min()), int((offsets + ns).max())
        x0 = self.basepoint
        route = self.route
        if route == "translation":
            B = self.translation_prefix(path, lo, hi)
            return x0 + B[offsets + ns - lo] - B[offsets - lo]
        if route == "matrix":
            G = self.matrix_prefix(path, lo, hi)
            act = type(next(iter(self.maps.values()))).act
            if np.all(offsets == lo):
                return act(G[ns + offsets - lo], x0)
            # G_o^{-1} G_{o+n} loses accuracy once prefixes become ill-conditioned
            starts = np.unique(offsets - lo)
            if np.max(np.linalg.cond(G[starts])) < PREFIX_MAX_CONDITION:
                U = np.linalg.solve(G[offsets - lo], G[offsets + ns - lo])
                return act(U, x0)
        syms = path.symbols(lo, hi)
        flat = []
        for n, o in zip(ns.ravel(), offsets.ravel()):
            x = x0
            for k in range(o + n - 1, o - 1, -1):
                x = self.maps[int(syms[k - lo])](x)
            flat.append(x)
        return np.asarray(flat, dtype=self.space.dtype).reshape(ns.shape + self.space.point_shape)


@dataclass
class Orbit:
    """Points x_0 .. x_n of a random orbit in a given composition order.

    forward: x_k = u(k, w) x0 = phi(w) phi(Tw) ... phi(T^{k-1} w) x0.
    reverse: x_{k+1} = phi(T^k w) x_k.
    """

    points: np.ndarray
    order: str
    system: SemicontractionSystem
    path: OmegaPath
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.points) - 1

    @property
    def basepoint(self):
        return self.points[0]

    def distances(self) -> np.ndarray:
        return self.system.space.distance(self.points[0], self.points)

    def rows(self):
        """CSV rows: step, flattened coordinates, distance from the basepoint."""
        d = self.distances()
        pts = self.points.reshape(len(self.points), -1)
        for k in range(len(self.points)):
            coords = []
            for c in pts[k]:
                if np.iscomplexobj(pts):
                    coords.extend([c.real, c.imag])
                else:
                    coords.append(c)
            yield [k, *coords, d[k]]

    def header(self):
        pts = self.points.reshape(len(self.points), -1)
        if np.iscomplexobj(pts):
            names = [f"{p}{i}" for i in range(pts.shape[1]) for p in ("re", "im")]
        else:
            names = [f"x{i}" for i in range(pts.shape[1])]
        return ["step", *names, "distance"]


def orbit(system: SemicontractionSystem, path: OmegaPath, n: int, order: str = "forward") -> Orbit:
    if n < 0:
        raise DomainError("orbit length must be nonnegative")
    x0 = system.basepoint
    space = system.space
    pts = np.empty((n + 1,) + space.point_shape, dtype=space.dtype)
    pts[0] = x0
    syms = path.symbols(0, n)
    if order == "reverse":
        x = x0
        for k in range(n):
            x = system.map_for(syms[k])(x)
            pts[k + 1] = x
        return Orbit(pts, order, system, path)
    if order != "forward":
        raise SpecError(f"unknown composition order {order!r}")
    route = system.route
    if route == "translation":
        pts[:] = x0 + system.translation_prefix(path, 0, n)
    elif route == "matrix":
        act = type(next(iter(system.maps.values()))).act
        pts[:] = act(system.matrix_prefix(path, 0, n), x0)
    else:
        # buf[k] holds u(k - l, T^l w) x0 after processing time l; O(n^2) work.
        pts[n] = x0
        for ell in range(n - 1, -1, -1):
            pts[ell + 1:] = system.map_for(syms[ell])(pts[ell + 1:])
            pts[ell] = x0
    return Orbit(pts, order, system, path)


def make_map(spec: dict) -> MapElement:
    """Build a map element from its config dictionary."""
    t = spec.get("type")
    cx = _complex
    if t == "translation":
        return Affine.translation(spec["vector"])
    if t == "affine":
        return Affine(spec["matrix"], spec.get("vector", np.zeros(len(spec["matrix"]))))
    if t == "linear":
        return Affine.linear(spec["matrix"])
    if t == "maxplus":
        return MaxPlusMatrix(spec["matrix"])
    if t == "cone_linear":
        return ConeLinear(spec["matrix"])
    if t == "congruence":
        return Congruence(spec["matrix"])
    if t == "mobius":
        return Mobius([[cx(v) for v in row] for row in spec["matrix"]])
    if t == "parabolic":
        return Mobius.parabolic(cx(spec.get("xi", 1.0)), float(spec.get("t", 1.0)))
    if t == "hyperbolic":
        return Mobius.hyperbolic(cx(spec["attracting"]), cx(spec["repelling"]), float(spec["multiplier"]))
    if t == "disk_rotation":
        return Mobius.rotation(float(spec["theta"]))
    if t == "blaschke":
        return Blaschke([cx(z) for z in spec["zeros"]], float(spec.get("theta", 0.0)))
    raise SpecError(f"unknown map type {t!r}")


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise SpecError("complex numbers are written as [re, im]")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


__all__ = [
    "Affine", "Blaschke", "ConeLinear", "Congruence", "MapElement", "MaxPlusMatrix", "Mobius",
    "Orbit", "SemicontractionSystem", "Topical", "check_nonexpansive", "check_topical", "make_map",
    "orbit", "Banach", "HilbertCone", "MaxPlus", "PoincareDisk", "PosDef",
]
