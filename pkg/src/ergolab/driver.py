"""Stationary ergodic drivers realized as two-sided symbol streams.

A driver is a shift-invariant measure on bi-infinite symbol sequences. An
:class:`OmegaPath` is one sample point together with the shift map, realized
lazily in both time directions so that negative shifts are always available.

Every symbol is a pure function of ``(spec, seed, index)``: uniforms are drawn
block-wise from a :class:`numpy.random.SeedSequence` keyed by the seed and the
block number, so the realized values never depend on query order.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SpecError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BLOCK = 4096
_TOL = 1e-12


def _zigzag(b: int) -> int:
    return 2 * b if b >= 0 else -2 * b - 1


def _block_uniforms(seed: int, block: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed & (2**64 - 1), _zigzag(block)])
    return np.random.Generator(np.random.Philox(ss)).random(BLOCK)


@dataclass(frozen=True)
class DriverSpec:
    """Description of a stationary ergodic symbol process.

    Use the ``iid``, ``markov``, ``rotation`` and ``deterministic``
    constructors rather than filling fields by hand.
    """

    kind: str
    alphabet_size: int
    probabilities: tuple[float, ...] | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None
    stationary: bool = True
    angle: float | None = None
    breakpoints: tuple[float, ...] | None = None
    x0: float | None = None
    sequence: tuple[int, ...] | None = None

    def __post_init__(self):
        validators = {
            "iid": self._check_iid,
            "markov": self._check_markov,
            "rotation": self._check_rotation,
            "deterministic": self._check_deterministic,
        }
        if self.kind not in validators:
            raise SpecError(f"unknown driver kind {self.kind!r}")
        if self.alphabet_size < 1:
            raise SpecError("empty alphabet")
        validators[self.kind]()

    @classmethod
    def iid(cls, probabilities: Sequence[float]) -> DriverSpec:
        p = tuple(float(x) for x in probabilities)
        return cls("iid", len(p), probabilities=p)

    @classmethod
    def markov(cls, matrix, stationary: bool = True) -> DriverSpec:
        m = tuple(tuple(float(x) for x in row) for row in matrix)
        return cls("markov", len(m), matrix=m, stationary=stationary)

    @classmethod
    def rotation(cls, breakpoints: Sequence[float] = (0.0, 0.5), angle: float = GOLDEN,
                 x0: float | None = None) -> DriverSpec:
        bp = tuple(float(b) for b in breakpoints)
        return cls("rotation", len(bp), angle=float(angle), breakpoints=bp,
                   x0=None if x0 is None else float(x0))

    @classmethod
    def deterministic(cls, sequence: Sequence[int], alphabet_size: int | None = None) -> DriverSpec:
        seq = tuple(int(s) for s in sequence)
        if not seq:
            raise SpecError("deterministic driver needs a non-empty sequence")
        size = alphabet_size if alphabet_size is not None else max(seq) + 1
        return cls("deterministic", size, sequence=seq)

    def _check_iid(self):
        p = self.probabilities
        if p is None or len(p) != self.alphabet_size:
            raise SpecError("iid driver needs one probability per symbol")
        if min(p) < 0 or abs(math.fsum(p) - 1.0) > _TOL:
            raise SpecError(f"probabilities must be nonnegative and sum to 1, got {p}")

    def _check_markov(self):
        m = self.matrix
        if m is None or any(len(row) != self.alphabet_size for row in m):
            raise SpecError("markov driver needs a square transition matrix")
        for i, row in enumerate(m):
            if min(row) < 0 or abs(math.fsum(row) - 1.0) > _TOL:
                raise SpecError(f"row {i} of the transition matrix is not stochastic")
        if not _irreducible(np.array(m)):
            raise SpecError("transition matrix is not irreducible")

    def _check_rotation(self):
        bp = self.breakpoints
        if not bp or bp[0] != 0.0:
            raise SpecError("rotation breakpoints must start at 0")
        if any(b >= c for b, c in zip(bp, bp[1:])) or bp[-1] >= 1.0:
            raise SpecError("rotation breakpoints must be strictly increasing in [0, 1)")
        if self.angle is None or not 0.0 < self.angle < 1.0:
            raise SpecError("rotation angle must lie in (0, 1)")

    def _check_deterministic(self):
        if self.sequence is None or not self.sequence:
            raise SpecError("deterministic driver needs a non-empty sequence")
        if min(self.sequence) < 0 or max(self.sequence) >= self.alphabet_size:
            raise SpecError("sequence symbols outside the alphabet")


def _irreducible(P: np.ndarray) -> bool:
    n = P.shape[0]
    adj = P > 0
    for start in range(n):
        seen = {start}
        stack = [start]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        if len(seen) != n:
            return False
    return True


def stationary_distribution(spec: DriverSpec) -> np.ndarray:
    """Invariant symbol distribution (time-one marginal) of the driver."""
    if spec.kind == "iid":
        return np.array(spec.probabilities)
    if spec.kind == "markov":
        P = np.array(spec.matrix)
        n = P.shape[0]
        lhs = np.vstack([P.T - np.eye(n), np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()
    if spec.kind == "rotation":
        bp = np.array(spec.breakpoints + (1.0,))
        return np.diff(bp)
    counts = np.bincount(spec.sequence, minlength=spec.alphabet_size)
    return counts / counts.sum()


def asymptotic_variance(spec: DriverSpec, observable) -> float:
    """CLT variance of Birkhoff sums, sigma^2 = lim Var(S_n)/n.

    Only defined for iid and Markov drivers. For a chain with fundamental
    matrix Z = (I - P + 1 pi)^-1 and centered f, sigma^2 = 2<f, Zf>_pi - <f, f>_pi.
    """
    f = observable_table(spec, observable)
    pi = stationary_distribution(spec)
    fc = f - pi @ f
    if spec.kind == "iid":
        return float(pi @ fc**2)
    if spec.kind == "markov":
        P = np.array(spec.matrix)
        n = P.shape[0]
        Z = np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), pi))
        return float(2 * pi @ (fc * (Z @ fc)) - pi @ fc**2)
    raise SpecError(f"no CLT variance for driver kind {spec.kind!r}")


class _Realization:
    """Lazily realized symbols for one (spec, seed); shared by all shifts."""

    def __init__(self, spec: DriverSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._lock = threading.Lock()
        self._blocks: dict[int, np.ndarray] = {}
        # Markov chains are realized contiguously outward from index 0.
        self._fwd = np.empty(0, dtype=np.int64)
        self._bwd = np.empty(0, dtype=np.int64)  # _bwd[j] is the symbol at -(j+1)
        if spec.kind == "rotation":
            self._x0 = spec.x0 if spec.x0 is not None else float(self._uniforms(-1, 0)[0])
        if spec.kind == "markov":
            P = np.array(spec.matrix)
            pi = stationary_distribution(spec)
            rev = (P.T * pi[None, :]) / np.where(pi[:, None] > 0, pi[:, None], 1.0)
            self._cum_fwd = [list(np.cumsum(row)) for row in P]
            self._cum_bwd = [list(np.cumsum(row)) for row in rev]
            self._cum_init = list(np.cumsum(pi)) if spec.stationary else None

    def _uniforms(self, start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        b0, b1 = start // BLOCK, (stop - 1) // BLOCK
        for b in range(b0, b1 + 1):
            blk = self._blocks.get(b)
            if blk is None:
                blk = self._blocks[b] = _block_uniforms(self.seed, b)
            lo, hi = max(start, b * BLOCK), min(stop, (b + 1) * BLOCK)
            out[lo - start:hi - start] = blk[lo - b * BLOCK:hi - b * BLOCK]
        return out

    def symbols(self, start: int, stop: int) -> np.ndarray:
        if stop <= start:
            return np.empty(0, dtype=np.int64)
        spec = self.spec
        k = np.arange(start, stop)
        if spec.kind == "deterministic":
            return np.asarray(spec.sequence, dtype=np.int64)[k % len(spec.sequence)]
        if spec.kind == "rotation":
            x = np.mod(self._x0 + k * spec.angle, 1.0)
            return np.searchsorted(spec.breakpoints, x, side="right").astype(np.int64) - 1
        with self._lock:
            if spec.kind == "iid":
                u = self._uniforms(start, stop)
                cum = np.cumsum(spec.probabilities)
                return np.minimum(np.searchsorted(cum, u, side="right"), spec.alphabet_size - 1)
            self._extend_markov(start, stop)
            out = np.empty(stop - start, dtype=np.int64)
            pos = k >= 0
            out[pos] = self._fwd[k[pos]]
            out[~pos] = self._bwd[-k[~pos] - 1]
            return out

    def _extend_markov(self, start: int, stop: int):
        last = self.spec.alphabet_size - 1
        if stop > len(self._fwd):
            need = max(stop, len(self._fwd) + BLOCK)
            new = np.empty(need, dtype=np.int64)
            new[:len(self._fwd)] = self._fwd
            u = self._uniforms(len(self._fwd), need)
            i0 = len(self._fwd)
            if i0 == 0:
                cum0 = self._cum_init
                new[0] = min(bisect.bisect_right(cum0, u[0]), last) if cum0 is not None else 0
                i0 = 1
            x = int(new[i0 - 1])
            cum = self._cum_fwd
            for i in range(i0, need):
                x = min(bisect.bisect_right(cum[x], u[i - len(self._fwd)]), last)
                new[i] = x
            self._fwd = new
        if start < 0 and -start > len(self._bwd):
            if len(self._fwd) == 0:
                self._extend_markov(0, 1)
            need = max(-start, len(self._bwd) + BLOCK)
            new = np.empty(need, dtype=np.int64)
            new[:len(self._bwd)] = self._bwd
            j0 = len(self._bwd)
            u = self._uniforms(-need, -j0)[::-1]  # u[i] is the uniform at index -(j0+i+1)
            x = int(self._bwd[j0 - 1]) if j0 else int(self._fwd[0])
            cum = self._cum_bwd
            for i in range(need - j0):
                x = min(bisect.bisect_right(cum[x], u[i]), last)
                new[j0 + i] = x
            self._bwd = new


class OmegaPath:
    """A sample point of the driver, shifted by ``offset``.

    ``path.symbol(i)`` is the symbol at time ``offset + i`` of the underlying
    realization, so ``path.shift(k).symbol(i) == path.symbol(i + k)``.
    """

    def __init__(self, spec: DriverSpec, seed: int, offset: int = 0,
                 _store: _Realization | None = None):
        self.spec = spec
        self.seed = int(seed)
        self.offset = int(offset)
        self._store = _store if _store is not None else _Realization(spec, seed)

    @property
    def key(self) -> tuple:
        """Identity of the underlying realization, independent of the shift."""
        return (self.spec, self.seed)

    def symbol(self, i: int) -> int:
        return int(self.symbols(i, i + 1)[0])

    def symbols(self, start: int, stop: int) -> np.ndarray:
        """Symbols at times ``start, ..., stop - 1`` relative to this path."""
        return self._store.symbols(self.offset + start, self.offset + stop)

    def shift(self, k: int) -> OmegaPath:
        return OmegaPath(self.spec, self.seed, self.offset + k, self._store)

    def __eq__(self, other):
        if not isinstance(other, OmegaPath):
            return NotImplemented
        return self.key == other.key and self.offset == other.offset

    def __hash__(self):
        return hash((self.key, self.offset))

    def __repr__(self):
        return f"OmegaPath(kind={self.spec.kind!r}, seed={self.seed}, offset={self.offset})"


def sample_path(spec: DriverSpec, seed: int, horizon: int) -> OmegaPath:
    """Realize a path with window at least ``[-horizon, horizon]``."""
    if horizon < 1:
        raise SpecError("horizon must be at least 1")
    path = OmegaPath(spec, seed)
    path.symbols(-horizon, horizon + 1)
    return path


def shift(path: OmegaPath, k: int) -> OmegaPath:
    return path.shift(k)


def observable_table(spec: DriverSpec, observable) -> np.ndarray:
    """Values of ``observable`` on the alphabet, as a float array."""
    if callable(observable):
        return np.array([float(observable(s)) for s in range(spec.alphabet_size)])
    table = np.asarray(observable, dtype=float)
    if table.shape != (spec.alphabet_size,):
        raise SpecError("observable table must have one value per symbol")
    return table


def birkhoff_average(path: OmegaPath, observable: Callable[[int], float] | Sequence[float],
                     n: int) -> float:
    """(1/n) * sum_{k<n} observable(symbol(k))."""
    if n < 1:
        raise SpecError("n must be at least 1")
    f = observable_table(path.spec, observable)
    return float(f[path.symbols(0, n)].sum() / n)
