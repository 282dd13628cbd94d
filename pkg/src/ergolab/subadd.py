"""Subadditive cocycles: evaluation, drift, reversal, good times, decompositions.

A cocycle a(n, w) satisfies a(n + m, w) <= a(n, w) + a(m, T^n w) and
a(0, w) = 0. Throughout, ``a(n, path, offset)`` means a(n, T^offset w).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .driver import DriverSpec, OmegaPath, observable_table, sample_path
from .errors import ContractViolation, DomainError, OutOfRange, SpecError
from .spaces.maps import SemicontractionSystem, orbit

SUBADDITIVE_TOL = 1e-9
RECHECK_TOL = 1e-9
DETECT_TOL = 1e-10


class SubadditiveCocycle:
    """Base class; subclasses implement the vectorized ``values``."""

    source = "abstract"

    def __init__(self):
        self._cache: dict = {}
        self._lock = threading.Lock()

    def values(self, ns, path: OmegaPath, offsets=0) -> np.ndarray:
        """a(n_i, T^{o_i} w) for paired arrays, bypassing the cache."""
        raise NotImplementedError

    def evaluate(self, n: int, path: OmegaPath, offset: int = 0) -> float:
        n = int(n)
        if n < 0:
            raise DomainError("n must be nonnegative")
        if n == 0:
            return 0.0
        key = (n, path.key, path.offset + int(offset))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = float(self.values(np.array([n]), path, np.array([int(offset)]))[0])
        with self._lock:
            self._cache[key] = v
        return v

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def prefix(self, path: OmegaPath, N: int) -> np.ndarray:
        """a(n, w) for n = 0..N."""
        return self._zeroed(self.values(np.arange(N + 1), path, np.zeros(N + 1, dtype=np.int64)),
                            np.arange(N + 1))

    def column(self, path: OmegaPath, n: int) -> np.ndarray:
        """a(n - l, T^l w) for l = 0..n."""
        ell = np.arange(n + 1)
        return self._zeroed(self.values(n - ell, path, ell), n - ell)

    def columns(self, path: OmegaPath, ns) -> Iterator[tuple[int, np.ndarray]]:
        """Yield (n, column(path, n)) for each n in ``ns``; subclasses may share work across n."""
        for n in ns:
            yield int(n), self.column(path, int(n))

    def sweep(self, path: OmegaPath, N: int) -> Iterator[tuple[int, np.ndarray]]:
        """Yield (l, row) for l = N..0 with row[j] = a(j, T^l w), j = 0..N-l."""
        for ell in range(N, -1, -1):
            js = np.arange(N - ell + 1)
            yield ell, self._zeroed(self.values(js, path, np.full(js.shape, ell)), js)

    @staticmethod
    def _zeroed(v, ns) -> np.ndarray:
        v = np.asarray(v, dtype=float).copy()
        v[np.asarray(ns) == 0] = 0.0
        return v


def _window_sums(path: OmegaPath, table: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """P[k] = sum of table[symbol(j)] over j = lo .. lo+k-1."""
    P = np.zeros(hi - lo + 1)
    if hi > lo:
        np.cumsum(table[path.symbols(lo, hi)], out=P[1:])
    return P


class TableCocycle(SubadditiveCocycle):
    """A cocycle independent of w given by a finite sequence a(0..L-1)."""

    source = "table"

    def __init__(self, values: Sequence[float]):
        super().__init__()
        self.table = np.asarray(values, dtype=float)
        if self.table.ndim != 1 or len(self.table) == 0 or self.table[0] != 0:
            raise SpecError("a cocycle table must start with a(0) = 0")

    def values(self, ns, path, offsets=0):
        ns = np.asarray(ns, dtype=np.int64)
        if np.any(ns < 0):
            raise DomainError("n must be nonnegative")
        if ns.size and ns.max() >= len(self.table):
            raise OutOfRange(f"table cocycle has {len(self.table)} entries, asked for n = {ns.max()}")
        return self.table[ns]

    def sweep(self, path, N):
        if N >= len(self.table):
            raise OutOfRange(f"table cocycle has {len(self.table)} entries, asked for n = {N}")
        for ell in range(N, -1, -1):
            yield ell, self.table[:N - ell + 1]


class ClosedFormCocycle(SubadditiveCocycle):
    """Cocycle given by a vectorized evaluator fn(ns, path, offsets)."""

    source = "closed_form"

    def __init__(self, fn: Callable, name: str = "closed_form"):
        super().__init__()
        self.fn = fn
        self.name = name

    def values(self, ns, path, offsets=0):
        ns = np.asarray(ns, dtype=np.int64)
        if np.any(ns < 0):
            raise DomainError("n must be nonnegative")
        offsets = np.broadcast_to(np.asarray(offsets, dtype=np.int64), ns.shape)
        if ns.size == 0:
            return np.empty(ns.shape)
        return np.asarray(self.fn(ns, path, offsets), dtype=float)


def additive_cocycle(c: float) -> ClosedFormCocycle:
    """a(n, w) = c n."""
    return ClosedFormCocycle(lambda ns, path, offs: float(c) * ns, name=f"additive({c})")


class IncrementCocycle(ClosedFormCocycle):
    """a(n, w) = S_n or |S_n| for partial sums S_n of f(symbol(k)), k < n."""

    def __init__(self, spec: DriverSpec, observable, absolute: bool, name: str):
        self.table = observable_table(spec, observable)
        self.absolute = absolute
        super().__init__(self._fn, name)

    def _finish(self, v):
        return np.abs(v) if self.absolute else v

    def _fn(self, ns, path, offs):
        lo, hi = int(offs.min()), int((offs + ns).max())
        P = _window_sums(path, self.table, lo, hi)
        return self._finish(P[offs + ns - lo] - P[offs - lo])

    def sweep(self, path, N):
        P = _window_sums(path, self.table, 0, N)
        for ell in range(N, -1, -1):
            yield ell, self._finish(P[ell:] - P[ell])


def birkhoff_cocycle(spec: DriverSpec, observable) -> ClosedFormCocycle:
    """Additive cocycle a(n, w) = sum_{k<n} f(symbol(k))."""
    return IncrementCocycle(spec, observable, absolute=False, name="birkhoff")


def walk_cocycle(spec: DriverSpec, steps) -> ClosedFormCocycle:
    """a(n, w) = |S_n| for the walk with increments steps[symbol(k)]."""
    return IncrementCocycle(spec, steps, absolute=True, name="walk")


class OrbitCocycle(SubadditiveCocycle):
    """a(n, w) = d(x0, u(n, w) x0) for a system of semicontractions."""

    source = "orbit"

    def __init__(self, system: SemicontractionSystem):
        super().__init__()
        self.system = system

    def _dist(self, pts):
        return np.asarray(self.system.space.distance(self.system.basepoint, pts), dtype=float)

    def values(self, ns, path, offsets=0):
        ns = np.asarray(ns, dtype=np.int64)
        offsets = np.broadcast_to(np.asarray(offsets, dtype=np.int64), ns.shape)
        if ns.size == 0:
            return np.empty(ns.shape)
        return self._dist(self.system.suffix_points(path, ns, offsets))

    def prefix(self, path, N):
        return self._zeroed(orbit(self.system, path, N, "forward").distances(), np.arange(N + 1))

    def column(self, path, n):
        # y_l = u(n - l, T^l w) x0 built from the right: y_n = x0, y_l = phi(T^l w) y_{l+1}
        syms = path.symbols(0, n)
        space, x0 = self.system.space, self.system.basepoint
        pts = np.empty((n + 1,) + space.point_shape, dtype=space.dtype)
        pts[n] = x0
        for ell in range(n - 1, -1, -1):
            pts[ell] = self.system.map_for(syms[ell])(pts[ell + 1])
        return self._zeroed(self._dist(pts), n - np.arange(n + 1))

    def columns(self, path, ns):
        ns = [int(n) for n in ns]
        if self.system.route != "translation" or not ns:
            yield from super().columns(path, ns)
            return
        B = self.system.translation_prefix(path, 0, max(ns))
        x0 = self.system.basepoint
        for n in ns:
            yield n, self._zeroed(self._dist(x0 + B[n] - B[:n + 1]), n - np.arange(n + 1))

    def sweep(self, path, N):
        space, x0 = self.system.space, self.system.basepoint
        if self.system.route == "translation":
            B = self.system.translation_prefix(path, 0, N)
            for ell in range(N, -1, -1):
                yield ell, self._zeroed(self._dist(x0 + B[ell:] - B[ell]), np.arange(N - ell + 1))
            return
        # buf[k] = u(k - l, T^l w) x0 for k >= l after processing time l
        syms = path.symbols(0, N)
        buf = np.empty((N + 1,) + space.point_shape, dtype=space.dtype)
        buf[N] = x0
        yield N, np.zeros(1)
        for ell in range(N - 1, -1, -1):
            buf[ell + 1:] = self.system.map_for(syms[ell])(buf[ell + 1:])
            buf[ell] = x0
            yield ell, self._zeroed(self._dist(buf[ell:]), np.arange(N - ell + 1))


class ReversedCocycle(SubadditiveCocycle):
    """b(n, w) = a(n, T^{-n} w); subadditive for the inverse shift."""

    source = "reversed"

    def __init__(self, inner: SubadditiveCocycle):
        super().__init__()
        self.inner = inner

    def values(self, ns, path, offsets=0):
        ns = np.asarray(ns, dtype=np.int64)
        offsets = np.broadcast_to(np.asarray(offsets, dtype=np.int64), ns.shape)
        return self.inner.values(ns, path, offsets - ns)


def reverse(c: SubadditiveCocycle) -> SubadditiveCocycle:
    if isinstance(c, ReversedCocycle):
        return c.inner
    return ReversedCocycle(c)


# -- subadditivity and drift ---------------------------------------------------

def check_subadditivity(c: SubadditiveCocycle, path: OmegaPath, n_max: int, trials: int = 200,
                        seed: int = 0, tol: float = SUBADDITIVE_TOL, step: int = 1) -> list:
    """Triples (n, m, excess) violating a(n+m) <= a(n) + a(m, T^n w) + tol.

    All pairs with n, m <= 3 are always included; the rest are drawn from a
    seeded generator. ``step = -1`` checks subadditivity for the inverse shift,
    as appropriate for reversed cocycles.
    """
    if n_max < 2:
        raise SpecError("n_max must be at least 2")
    small = [(n, m) for n in range(1, 4) for m in range(1, 4) if n + m <= n_max]
    rng = np.random.default_rng(seed)
    n = rng.integers(1, n_max, size=trials)
    m = np.array([rng.integers(1, n_max - k + 1) for k in n])
    pairs = np.array(small + list(zip(n.tolist(), m.tolist())), dtype=np.int64)
    n, m = pairs[:, 0], pairs[:, 1]
    zeros = np.zeros_like(n)
    lhs = c.values(n + m, path, zeros)
    rhs = c.values(n, path, zeros) + c.values(m, path, step * n)
    excess = lhs - rhs
    bad = np.nonzero(excess > tol)[0]
    return [(int(n[i]), int(m[i]), float(excess[i])) for i in bad]


@dataclass(frozen=True)
class DriftEstimate:
    A_hat_as: float
    A_hat_inf: float
    stderr: float
    horizon: int
    per_seed: tuple = ()
    curve_ns: np.ndarray = field(default=None, repr=False, compare=False)
    curve: np.ndarray = field(default=None, repr=False, compare=False)  # mean a(n)/n over paths

    def summary(self) -> dict:
        return {"A_hat_as": self.A_hat_as, "A_hat_inf": self.A_hat_inf, "stderr": self.stderr,
                "horizon": self.horizon, "per_seed": list(self.per_seed)}


def estimate_drift(c: SubadditiveCocycle, spec: DriverSpec, seeds: Sequence[int], n_max: int,
                   bootstrap: int = 200, bootstrap_seed: int = 0) -> DriftEstimate:
    """Both estimators of the asymptotic average, with a bootstrap standard error."""
    if n_max < 1 or len(seeds) < 1:
        raise SpecError("need n_max >= 1 and at least one seed")
    ratios = np.empty((len(seeds), n_max))
    ns = np.arange(1, n_max + 1)
    for i, s in enumerate(seeds):
        ratios[i] = c.prefix(OmegaPath(spec, s), n_max)[1:] / ns
    final = ratios[:, -1]
    rng = np.random.default_rng(bootstrap_seed)
    if len(seeds) > 1:
        idx = rng.integers(0, len(seeds), size=(bootstrap, len(seeds)))
        stderr = float(np.std(final[idx].mean(axis=1), ddof=1))
    else:
        stderr = 0.0
    mean = ratios.mean(axis=0)
    grid = np.unique(np.append(np.geomspace(1, n_max, 200).astype(np.int64), n_max))
    return DriftEstimate(float(final.mean()), float(mean.min()), stderr, n_max,
                         tuple(float(v) for v in final), grid, mean[grid - 1])


# -- delta schedules -------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSchedule:
    """Tolerances delta_1, delta_2, ...; beyond the tabulated range
    delta_l = min(delta_L, cap / log(l + 1))."""

    values: tuple = ()
    cap: float | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.fn is None:
            if len(self.values) == 0:
                raise SpecError("a tabulated schedule needs at least one value")
            if any(v < 0 or not math.isfinite(v) for v in self.values):
                raise SpecError("delta values must be finite and nonnegative")

    @classmethod
    def from_function(cls, fn: Callable) -> DeltaSchedule:
        return cls(fn=fn)

    @classmethod
    def constant(cls, value: float) -> DeltaSchedule:
        value = float(value)
        return cls(fn=lambda ell: np.full(np.shape(ell), value))

    @classmethod
    def harmonic(cls, scale: float) -> DeltaSchedule:
        """delta_l = scale / l."""
        return cls(fn=lambda ell: float(scale) / np.asarray(ell, dtype=float))

    @classmethod
    def log_harmonic(cls, scale: float) -> DeltaSchedule:
        """delta_l = scale log(l + 1) / l, allowing logarithmic defects."""
        return cls(fn=lambda ell: float(scale) * np.log1p(ell) / np.asarray(ell, dtype=float))

    @classmethod
    def tabulated(cls, values: Sequence[float], cap: float | None = None) -> DeltaSchedule:
        values = tuple(float(v) for v in values)
        if cap is None and values:
            cap = values[-1] * math.log(len(values) + 1)
        return cls(values=values, cap=cap)

    def __call__(self, ell) -> np.ndarray:
        ell = np.asarray(ell, dtype=np.int64)
        if np.any(ell < 1):
            raise DomainError("delta is indexed from l = 1")
        if self.fn is not None:
            return np.asarray(self.fn(ell), dtype=float) * np.ones(ell.shape)
        tab = np.asarray(self.values)
        L = len(tab)
        cap = self.cap if self.cap is not None else tab[-1] * math.log(L + 1)
        tail = np.minimum(tab[-1], cap / np.log(ell + 1.0))
        return np.where(ell <= L, tab[np.minimum(ell, L) - 1], tail)

    def to_list(self, L: int) -> list:
        return self(np.arange(1, L + 1)).tolist()


def calibrate_delta(c: SubadditiveCocycle, spec: DriverSpec, seeds: Sequence[int], N: int,
                    rho: float, eps0: float = 1e-9, method: str = "envelope",
                    samples_per_path: int = 16, A_hat: float | None = None) -> DeltaSchedule:
    """Empirical delta schedule from training paths.

    ``marginal``: delta_l = eps0 + quantile_{1-rho/2} over paths of |a(l)/l - A|,
    made non-increasing. ``envelope``: residuals |a(n) - a(n-l, T^l w) - A l| / l
    are collected at sampled times n in [N/2, N]; their pointwise quantile gives
    a non-increasing shape s_l, which is then inflated by the factor kappa >= 1
    needed for the whole family of constraints to hold simultaneously on a
    (1 - rho/2) fraction of training paths.
    """
    if len(seeds) < 5:
        raise SpecError("calibration needs at least 5 training seeds")
    if not 0 < rho < 1:
        raise SpecError("rho must lie in (0, 1)")
    q = 1 - rho / 2
    if A_hat is None:
        A_hat = estimate_drift(c, spec, seeds, N).A_hat_as
    ell = np.arange(1, N + 1)
    if method == "marginal":
        res = np.array([np.abs(c.prefix(OmegaPath(spec, s), N)[1:] / ell - A_hat) for s in seeds])
        shape = _nonincreasing(np.quantile(res, q, axis=0))
        return DeltaSchedule.tabulated(eps0 + shape)
    if method != "envelope":
        raise SpecError(f"unknown calibration method {method!r}")
    times = np.unique(np.linspace(max(1, N // 2), N, samples_per_path).astype(np.int64))
    # res[i, j, l-1] is the residual at suffix length l of path i at time times[j]; 0 where l > n
    res = np.zeros((len(seeds), len(times), N), dtype=np.float32)
    for i, s in enumerate(seeds):
        path = OmegaPath(spec, s)
        for j, n in enumerate(times):
            col = c.column(path, int(n))
            inc = col[0] - col[1:]
            res[i, j, :n] = np.abs(inc - A_hat * ell[:n]) / ell[:n]
    lengths = np.tile(times, len(seeds))
    shape = _nonincreasing(_ragged_quantile(res.reshape(-1, N), lengths, q))
    worst = np.max(res / np.maximum(shape, eps0).astype(np.float32), axis=2)  # per path and sampled time
    per_path = np.quantile(worst, q, axis=1)
    kappa = max(1.0, float(np.quantile(per_path, q, method="higher")))
    return DeltaSchedule.tabulated(eps0 + kappa * shape)


def _ragged_quantile(rows: np.ndarray, lengths: np.ndarray, q: float) -> np.ndarray:
    """Column quantiles where row r is only defined on its first lengths[r] columns."""
    out = np.empty(rows.shape[1])
    prev = 0
    for t in np.unique(lengths):
        out[prev:t] = np.quantile(rows[lengths >= t, prev:t].astype(float), q, axis=0)
        prev = t
    return out


def _nonincreasing(v: np.ndarray) -> np.ndarray:
    """Smallest non-increasing majorant: running max from the right."""
    return np.maximum.accumulate(np.asarray(v)[::-1])[::-1]


# -- good times ------------------------------------------------------------------

@dataclass
class GoodTimeReport:
    horizon: int
    good_times: np.ndarray
    lower_margin: np.ndarray
    upper_margin: np.ndarray
    density_prefix: np.ndarray
    A: float
    mode: str
    deltas: np.ndarray
    complete: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def good(self) -> np.ndarray:
        flags = np.zeros(self.horizon + 1, dtype=bool)
        flags[self.good_times] = True
        return flags

    @property
    def density(self) -> float:
        """Card(good times in [0, N-1]) / N; NaN for a partial scan."""
        if not self.complete:
            return float("nan")
        return float(self.density_prefix[-1])

    def error(self, ell) -> np.ndarray:
        """The allowed deviation at suffix length l: l delta_l, or delta_l in strict mode."""
        ell = np.asarray(ell, dtype=np.int64)
        d = self.deltas[ell - 1]
        return d if self.mode == "strict" else ell * d

    def last_good_times(self, count: int = 3) -> np.ndarray:
        return self.good_times[-count:]

    def csv_header(self):
        return ["n", "good", "lower_margin", "upper_margin", "density"]

    def csv_rows(self):
        good = self.good
        for n in range(self.horizon + 1):
            dens = self.density_prefix[n - 1] if n >= 1 and self.complete else float("nan")
            yield [n, bool(good[n]), self.lower_margin[n], self.upper_margin[n], dens]

    def summary(self) -> dict:
        out = {"horizon": self.horizon, "mode": self.mode, "A": self.A, "complete": self.complete,
               "count": len(self.good_times), "last_good_times": self.last_good_times().tolist()}
        if self.complete:
            out["density"] = self.density
            out["upper_density"] = upper_density(self.good_times, self.horizon).sup
        out.update(self.meta)
        return out


def detect_good_times(c: SubadditiveCocycle, path: OmegaPath, N: int, deltas: DeltaSchedule, A: float,
                      mode: str = "paper", tol: float = DETECT_TOL) -> GoodTimeReport:
    """Times n <= N with |a(n) - a(n-l, T^l w) - A l| <= err(l) for all 1 <= l <= n.

    err(l) = l delta_l in ``paper`` mode. ``strict`` mode uses err(l) = delta_l
    and only the lower inequality a(n) - a(n-l, T^l w) >= A l - delta_l; the
    two-sided version could never hold at l = n for a cocycle with a(n) bounded
    away from A n. Margins are the worst slack over l (+inf at n = 0).
    """
    if not math.isfinite(A):
        raise SpecError("A must be finite")
    if N < 1:
        raise SpecError("N must be at least 1")
    if mode not in ("paper", "strict"):
        raise SpecError(f"unknown mode {mode!r}")
    ell = np.arange(1, N + 1)
    dl = deltas(ell)
    err = np.concatenate([[0.0], dl if mode == "strict" else ell * dl])
    a = c.prefix(path, N)
    lower = np.full(N + 1, np.inf)
    upper = np.full(N + 1, np.inf)
    for l, row in c.sweep(path, N):
        if l == 0:
            continue
        D = a[l:] - row - A * l
        np.minimum(lower[l:], D + err[l], out=lower[l:])
        np.minimum(upper[l:], err[l] - D, out=upper[l:])
    good = lower >= -tol
    if mode == "paper":
        good &= upper >= -tol
    counts = np.cumsum(good[:N])
    return GoodTimeReport(N, np.nonzero(good)[0], lower, upper, counts / np.arange(1, N + 1), float(A),
                          mode, dl)


def scan_good_times(c: SubadditiveCocycle, path: OmegaPath, N: int, deltas: DeltaSchedule, A: float,
                    mode: str = "paper", count: int = 3, max_scan: int | None = None,
                    tol: float = DETECT_TOL) -> GoodTimeReport:
    """Test the candidates N, N-1, ... one at a time until ``count`` good times are found.

    Each candidate costs O(n) evaluations, so this reaches horizons where the
    full O(N^2) detection is out of budget. The result is a partial report.
    """
    if not math.isfinite(A):
        raise SpecError("A must be finite")
    if mode not in ("paper", "strict"):
        raise SpecError(f"unknown mode {mode!r}")
    dl = deltas(np.arange(1, N + 1))
    lower = np.full(N + 1, np.nan)
    upper = np.full(N + 1, np.nan)
    stop = 0 if max_scan is None else max(0, N - max_scan)
    found, scanned = [], 0
    for n, col in c.columns(path, range(N, stop, -1)):
        scanned += 1
        ell = np.arange(1, n + 1)
        D = col[0] - col[1:] - A * ell
        err = dl[:n] if mode == "strict" else ell * dl[:n]
        lower[n] = np.min(D + err)
        upper[n] = np.min(err - D)
        if lower[n] >= -tol and (mode == "strict" or upper[n] >= -tol):
            found.append(n)
            if len(found) == count:
                break
    return GoodTimeReport(N, np.array(sorted(found), dtype=np.int64), lower, upper, np.empty(0), float(A),
                          mode, dl, complete=False, meta={"scanned": scanned})


def recheck_good_times(c: SubadditiveCocycle, path: OmegaPath, report: GoodTimeReport,
                       tol: float = RECHECK_TOL) -> list:
    """Recompute both sides at every reported good time without the cache or the sweep.

    Returns (n, l, excess) for each violated inequality; empty means sound.
    """
    c.clear_cache()
    violations = []
    for n in report.good_times:
        n = int(n)
        if n == 0:
            continue
        col = c.column(path, n)
        ell = np.arange(1, n + 1)
        D = col[0] - col[1:] - report.A * ell
        err = report.error(ell)
        excess = -(D + err)
        if report.mode == "paper":
            excess = np.maximum(excess, D - err)
        for i in np.nonzero(excess > tol)[0]:
            violations.append((n, int(ell[i]), float(excess[i])))
    return violations


@dataclass(frozen=True)
class UpperDensity:
    sup: float
    at_horizon: float


def upper_density(times, N: int) -> UpperDensity:
    """max_k Card(times in [0, k-1]) / k over k <= N, and the value at k = N."""
    if N < 1:
        raise SpecError("N must be at least 1")
    flags = np.zeros(N, dtype=bool)
    t = np.asarray(list(times), dtype=np.int64)
    t = t[(t >= 0) & (t < N)]
    flags[t] = True
    dens = np.cumsum(flags) / np.arange(1, N + 1)
    return UpperDensity(float(dens.max()), float(dens[-1]))


# -- greedy decomposition ----------------------------------------------------------

@dataclass(frozen=True)
class DecompositionRecord:
    """Breakpoints N = n_0 > n_1 > ... > n_K = 0 with one tag per interval [n_{i+1}, n_i)."""

    breakpoints: tuple
    tags: tuple  # ("unit_step", 1) or ("bad_jump", l)

    @property
    def intervals(self) -> list:
        b = self.breakpoints
        return [(b[i + 1], b[i]) for i in range(len(b) - 1)]

    def covers(self, N: int) -> bool:
        """Intervals are disjoint and their union is [0, N)."""
        hit = np.zeros(N, dtype=np.int64)
        for lo, hi in self.intervals:
            if not 0 <= lo < hi <= N:
                return False
            hit[lo:hi] += 1
        return bool(np.all(hit == 1))


def greedy_decompose(bad: Callable[[int], int | None] | Mapping[int, int], N: int) -> DecompositionRecord:
    """n_{i+1} = n_i - 1 if n_i is not bad, else n_i - l_i; stop at 0."""
    if N < 0:
        raise SpecError("N must be nonnegative")
    lookup = bad.get if isinstance(bad, Mapping) else bad
    points, tags = [N], []
    n = N
    while n > 0:
        ell = lookup(n)
        if ell is None:
            n -= 1
            tags.append(("unit_step", 1))
        else:
            ell = int(ell)
            if not 1 <= ell <= n:
                raise ContractViolation(f"bad({n}) = {ell} lies outside [1, {n}]")
            n -= ell
            tags.append(("bad_jump", ell))
        points.append(n)
    return DecompositionRecord(tuple(points), tuple(tags))


def bad_map(b: SubadditiveCocycle, path: OmegaPath, N: int, A: float, c: float) -> dict:
    """n -> smallest l in [1, n] with b(n) - b(n - l) <= (A - c) l, for the times where one exists."""
    B = b.prefix(path, N)
    out = {}
    for n in range(1, N + 1):
        ell = np.arange(1, n + 1)
        hit = np.nonzero(B[n] - B[n - ell] <= (A - c) * ell)[0]
        if hit.size:
            out[n] = int(ell[hit[0]])
    return out


@dataclass(frozen=True)
class DecompositionBound:
    value: float  # b(N, w)
    bound: float  # unit terms b(1, tau^{n_{i+1}} w) plus telescoped jumps
    unit_total: float
    jump_total: float

    @property
    def holds(self) -> bool:
        return self.value <= self.bound + SUBADDITIVE_TOL


def decomposition_bound(b: SubadditiveCocycle, path: OmegaPath, record: DecompositionRecord) -> DecompositionBound:
    """b(N) <= sum over unit steps of b(1, tau^{n_{i+1}} w) + sum over jumps of b(n_i) - b(n_{i+1}).

    Here tau is the inverse shift, so tau^m w is ``path.shift(-m)``.
    """
    N = record.breakpoints[0]
    B = b.prefix(path, N)
    unit = jump = 0.0
    for (lo, hi), (kind, _) in zip(record.intervals, record.tags):
        if kind == "unit_step":
            unit += b.evaluate(1, path, -lo)
        else:
            jump += B[hi] - B[lo]
    return DecompositionBound(float(B[N]), unit + jump, unit, jump)


__all__ = [
    "ClosedFormCocycle", "DecompositionBound", "DecompositionRecord", "DeltaSchedule", "DriftEstimate",
    "GoodTimeReport", "IncrementCocycle", "OrbitCocycle", "ReversedCocycle", "SubadditiveCocycle", "TableCocycle",
    "UpperDensity", "additive_cocycle", "bad_map", "birkhoff_cocycle", "calibrate_delta",
    "check_subadditivity", "decomposition_bound", "detect_good_times", "estimate_drift",
    "greedy_decompose", "recheck_good_times", "reverse", "sample_path", "scan_good_times", "upper_density", "walk_cocycle",
]
