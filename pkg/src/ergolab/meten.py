"""Functionals along random orbits: metric functionals at good times, linear
directions in normed spaces, random mean ergodic sums and boundary limits in
the disk."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .driver import OmegaPath
from .errors import DomainError, NoGoodTimes, SpecError
from .spaces.functionals import DualVector, MetricFunctional, internal_functional, norming_functional
from .spaces.maps import Affine, Orbit, SemicontractionSystem, orbit
from .spaces.metrics import Banach, PoincareDisk, operator_norm, vector_norm
from .subadd import DeltaSchedule, GoodTimeReport, OrbitCocycle, scan_good_times

CHAIN_TOL = 1e-9
DRIFT_THRESHOLD = 0.01
RADIAL_THRESHOLD = 1 - 1e-6
ANGULAR_AGREEMENT = 1e-3


@dataclass
class ConvergenceReport:
    """Estimates of a limit along n, with a verdict on the final residual."""

    target: float
    ns: np.ndarray
    estimates: np.ndarray
    horizon: int
    tol: float
    trivial: bool = False
    reference: np.ndarray | None = None

    @property
    def final_residual(self) -> float:
        return float(abs(self.estimates[-1] - self.target))

    @property
    def verdict(self) -> bool:
        return self.final_residual < self.tol

    def csv_header(self):
        return ["n", "estimate", "residual"]

    def csv_rows(self):
        for n, e in zip(self.ns, self.estimates):
            yield [int(n), float(e), float(abs(e - self.target))]

    def summary(self) -> dict:
        return {"target": self.target, "final_estimate": float(self.estimates[-1]),
                "final_residual": self.final_residual, "horizon": self.horizon, "tol": self.tol,
                "verdict": self.verdict, "trivial": self.trivial}


def _grid(N: int, points: int = 200) -> np.ndarray:
    """Roughly log-spaced times in [1, N], always ending at N."""
    g = np.unique(np.geomspace(1, N, points).astype(np.int64))
    return g if g[-1] == N else np.append(g, N)


# -- metric functionals ----------------------------------------------------------

@dataclass
class MetricFunctionalEstimate:
    functional: MetricFunctional
    good_time: int
    source_times: np.ndarray
    probes: np.ndarray | None
    probe_values: np.ndarray | None  # one row per source time
    chain_margin: float  # min over l <= n* of (-A l + err(l)) - h(x_l); >= -tol certifies the bound
    residuals: np.ndarray  # |-h(x_n)/n - A| on the residual grid
    residual_ns: np.ndarray

    @property
    def chain_holds(self) -> bool:
        return self.chain_margin >= -CHAIN_TOL

    @property
    def probe_stability(self) -> float:
        """Largest disagreement on the probes between functionals at the last good times."""
        if self.probe_values is None or len(self.probe_values) < 2:
            return 0.0
        return float(np.max(np.ptp(self.probe_values, axis=0)))


def extract_functional(orb: Orbit, report: GoodTimeReport, probes=None) -> MetricFunctionalEstimate:
    """Freeze h = h_{x_{n*}} at the largest good time n* and certify its bound.

    At a good time, nonexpansiveness gives h(x_l) <= a(n*-l, T^l w) - a(n*, w)
    <= -A l + err(l) for every l <= n*; this is rechecked pointwise.
    """
    if orb.order != "forward":
        raise SpecError("functional extraction needs a forward-order orbit")
    times = np.asarray([t for t in report.good_times if 0 < t <= orb.n], dtype=np.int64)
    if times.size == 0:
        raise NoGoodTimes("no positive good time on this orbit; recalibrate the delta schedule")
    space, pts = orb.system.space, orb.points
    x0 = pts[0]
    last = times[-3:]
    nstar = int(last[-1])
    h = internal_functional(space, pts[nstar], x0)
    ell = np.arange(1, nstar + 1)
    bound = -report.A * ell + report.error(ell)
    chain_margin = float(np.min(bound - h(pts[1:nstar + 1])))
    probe_values = None
    if probes is not None:
        probes = space.validate(probes)
        probe_values = np.array([internal_functional(space, pts[int(t)], x0)(probes) for t in last])
    ns = _grid(orb.n)
    residuals = np.abs(-h(pts[ns]) / ns - report.A)
    return MetricFunctionalEstimate(h, nstar, last, probes, probe_values, chain_margin, residuals, ns)


def verify_met(orb: Orbit, h: MetricFunctional, A: float, N: int | None = None,
               tol: float = 0.02) -> ConvergenceReport:
    """-h(x_n)/n against the target A, with d(x0, x_n)/n as the reference curve."""
    N = orb.n if N is None else int(N)
    if N > orb.n or N < 1:
        raise SpecError("horizon must lie in [1, orbit length]")
    ns = _grid(N)
    pts = orb.points
    est = -np.asarray(h(pts[ns]), dtype=float) / ns
    ref = np.asarray(orb.system.space.distance(pts[0], pts[ns]), dtype=float) / ns
    return ConvergenceReport(float(A), ns, est, N, tol, trivial=(A == 0), reference=ref)


# -- linear functionals in normed spaces --------------------------------------------

@dataclass
class BanachDirection:
    functional: DualVector
    report: ConvergenceReport
    trivial: bool
    chain_margin: float  # min over l <= last good time of f(x_l - x0) - (A l - err(l))
    averaged: bool  # False when the single functional at the last good time was used
    source_times: np.ndarray

    @property
    def chain_holds(self) -> bool:
        return self.chain_margin >= -CHAIN_TOL


def banach_direction(orb: Orbit, report: GoodTimeReport, tol: float = 0.02,
                     zero_drift: float = DRIFT_THRESHOLD) -> BanachDirection:
    """Norm-one functional f with f(x_n - x0)/n -> A, built from norming functionals.

    Norming functionals f_i of x_{n_i} - x0 at good times satisfy
    f_i(x_l - x0) >= A l - err(l) for all l <= n_i. Their average over the last
    half of the good times is renormalized; if that average breaks the chain at
    some l up to the last good time, the functional at the last good time is
    used instead.
    """
    space = orb.system.space
    if not isinstance(space, Banach):
        raise SpecError("linear directions need a normed space")
    A = report.A
    pts = orb.points
    x0 = pts[0]
    ns = _grid(orb.n)
    if A <= zero_drift:
        f = DualVector(np.eye(space.dim)[0], space.norm)
        est = np.asarray(f(pts[ns] - x0)) / ns
        return BanachDirection(f, ConvergenceReport(float(A), ns, est, orb.n, tol, trivial=True), True,
                               float("nan"), False, np.empty(0, dtype=np.int64))
    times = np.asarray([t for t in report.good_times if 0 < t <= orb.n], dtype=np.int64)
    if times.size == 0:
        raise NoGoodTimes("no positive good time on this orbit; recalibrate the delta schedule")
    used = times[len(times) // 2:]
    fs = np.array([norming_functional(space.norm, pts[t] - x0).vector for t in used])
    nlast = int(times[-1])
    ell = np.arange(1, nlast + 1)
    bound = A * ell - report.error(ell)

    def margin(f):
        return float(np.min(f(pts[1:nlast + 1] - x0) - bound))

    averaged = True
    try:
        f = DualVector(fs.mean(axis=0), space.norm).normalized()
        m = margin(f)
    except DomainError:
        m = -np.inf
    if m < -CHAIN_TOL:
        f = DualVector(fs[-1], space.norm)
        m = margin(f)
        averaged = False
    est = np.asarray(f(pts[ns] - x0)) / ns
    return BanachDirection(f, ConvergenceReport(float(A), ns, est, orb.n, tol), False, m, averaged, used)


@dataclass(frozen=True)
class DominationReport:
    holds: bool
    worst_gap: float  # max over samples of f(y) - h(y)


def dominate_check(f: DualVector, h: MetricFunctional, samples, tol: float = CHAIN_TOL) -> DominationReport:
    """Whether f(y) <= h(y) + tol on every sample."""
    if f.dual_norm > 1 + 1e-12:
        raise SpecError("the linear functional must have dual norm at most 1")
    samples = np.asarray(samples, dtype=float)
    gap = np.asarray(f(samples)) - np.asarray(h(samples))
    worst = float(np.max(gap))
    return DominationReport(worst <= tol, worst)


# -- random mean ergodic sums ----------------------------------------------------------

@dataclass
class MeanErgodicResult:
    sums: np.ndarray  # S_0..S_N
    report: ConvergenceReport  # ||S_n|| / n
    functional: DualVector
    trivial: bool
    consistency: float  # max relative gap between ||S_n|| and the isometric-model distance
    max_norm: float

    @property
    def limit(self) -> float:
        return float(self.report.estimates[-1])


def mean_ergodic_run(U: Mapping[int, np.ndarray], path: OmegaPath, v, N: int, norm: str = "l2",
                     target: float = 0.0, tol: float = 0.02, deltas: DeltaSchedule | None = None,
                     zero_drift: float = DRIFT_THRESHOLD) -> MeanErgodicResult:
    """S_n = sum_{k<n} U(w) U(Tw) ... U(T^{k-1} w) v and the limit of ||S_n|| / n.

    S_n is also the orbit of 0 under the affine maps w -> v + U w, composed in
    forward order; both computations are carried out and compared.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = v.shape[0]
    mats = {int(s): np.atleast_2d(np.asarray(M, dtype=float)) for s, M in U.items()}
    for s, M in mats.items():
        if M.shape != (d, d):
            raise SpecError(f"operator for symbol {s} has the wrong shape")
        if operator_norm(M, norm) > 1 + 1e-12:
            raise SpecError(f"operator for symbol {s} has norm above 1")
    syms = path.symbols(0, N)
    S = np.zeros((N + 1, d))
    P = np.eye(d)
    for k in range(N):
        S[k + 1] = S[k] + P @ v
        P = P @ mats[int(syms[k])]
    space = Banach(d, norm)
    system = SemicontractionSystem(space, {s: Affine(M, v) for s, M in mats.items()}, np.zeros(d))
    orb = orbit(system, path, N, "forward")
    norms = vector_norm(S, norm)
    dist = orb.distances()
    consistency = float(np.max(np.abs(norms - dist) / np.maximum(1.0, norms)))
    ns = _grid(N)
    report = ConvergenceReport(float(target), ns, norms[ns] / ns, N, tol)
    trivial = norms[N] / N <= zero_drift
    if deltas is not None and not trivial:
        gt = scan_good_times(OrbitCocycle(system), path, N, deltas, float(norms[N] / N))
        f = banach_direction(orb, gt, tol).functional
    elif trivial:
        f = DualVector(np.eye(d)[0], norm)
    else:
        f = norming_functional(norm, S[N])
    return MeanErgodicResult(S, report, f, bool(trivial), consistency, float(norms.max()))


# -- boundary limits in the disk ------------------------------------------------------------

@dataclass
class WolffDenjoyResult:
    status: str  # "converged", "no_drift" or "inconclusive"
    xi: complex | None
    xi_second: complex | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def start_independent(self) -> bool:
        return self.xi is not None and self.xi_second is not None and abs(self.xi - self.xi_second) < ANGULAR_AGREEMENT


def _radial_limit(points: np.ndarray, window: int, radial: float, agree: float):
    tail = points[-window:]
    r = float(np.abs(points[-1]))
    mod = np.abs(tail)
    if np.any(mod == 0):
        return None, r, float("inf")
    dirs = tail / mod
    spread = float(np.max(np.abs(dirs - dirs[-1])))
    ok = r > radial and spread <= agree
    return (complex(dirs[-1]) if ok else None), r, spread


def wolff_denjoy_limit(orb: Orbit, A_hat: float, z2: complex = 0.5 + 0.25j,
                       drift_threshold: float = DRIFT_THRESHOLD, radial: float = RADIAL_THRESHOLD,
                       agree: float = ANGULAR_AGREEMENT, window: int = 10) -> WolffDenjoyResult:
    """Boundary point approached by a disk orbit, read off from x_N / |x_N|.

    The orbit counts as converged once |x_N| exceeds the radial threshold and the
    last ``window`` directions agree. The read-off is repeated from a second
    start point. Orbits that do not reach the boundary are reported as
    ``no_drift`` when A_hat is at most the drift threshold and as
    ``inconclusive`` otherwise.
    """
    if not isinstance(orb.system.space, PoincareDisk):
        raise SpecError("boundary limits are only available for disk orbits")
    xi, r, spread = _radial_limit(orb.points, window, radial, agree)
    diag = {"A_hat": float(A_hat), "radius": r, "spread": spread, "horizon": orb.n}
    if xi is None:
        status = "no_drift" if A_hat <= drift_threshold else "inconclusive"
        return WolffDenjoyResult(status, None, None, diag)
    second = orbit(orb.system.with_basepoint(z2), orb.path, orb.n, orb.order)
    xi2, r2, spread2 = _radial_limit(second.points, window, radial, agree)
    diag.update({"radius_second": r2, "spread_second": spread2, "second_start": complex(z2)})
    if xi2 is None or abs(xi - xi2) >= agree:
        return WolffDenjoyResult("inconclusive", xi, xi2, diag)
    return WolffDenjoyResult("converged", xi, xi2, diag)


__all__ = [
    "BanachDirection", "ConvergenceReport", "DominationReport", "MeanErgodicResult",
    "MetricFunctionalEstimate", "WolffDenjoyResult", "banach_direction", "dominate_check",
    "extract_functional", "mean_ergodic_run", "verify_met", "wolff_denjoy_limit",
]
