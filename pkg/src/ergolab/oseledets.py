"""Matrix cocycles in reverse order, v(n, w) = A(T^{n-1} w) ... A(w).

The positive part p_n = (v^T v)^{1/2} is tracked without forming v: the
product is kept as v = Q diag(e^s) R with Q orthogonal and R unit upper
triangular, so growth lives in the log-scale vector s. The cocycle
a_n = ||log p_n||_op is subadditive; its trace-pairing functional and a
QR (treppeniteration) Lyapunov spectrum serve as cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .driver import DriverSpec, OmegaPath
from .errors import NumericalError, SpecError
from .meten import ConvergenceReport, _grid
from .spaces.spd import MAX_CONDITION
from .subadd import SubadditiveCocycle

CLUSTER_GAP = 18.0
REBALANCE_AT = 1e100
OVERFLOW_GUARD = 1e150
TIE_RTOL = 1e-9


def _assignment(assignment: Mapping[int, np.ndarray]) -> tuple[dict, int]:
    mats = {int(k): np.atleast_2d(np.asarray(v, dtype=float)) for k, v in assignment.items()}
    if not mats:
        raise SpecError("empty matrix assignment")
    d = next(iter(mats.values())).shape[0]
    for k, M in mats.items():
        if M.shape != (d, d):
            raise SpecError(f"matrix for symbol {k} is not {d} x {d}")
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] == 0 or s[0] / s[-1] > MAX_CONDITION:
            raise SpecError(f"matrix for symbol {k} is singular or too ill-conditioned")
    return mats, d


@dataclass
class LogPositivePart:
    """Spectral data of log p_n: log p_n = V diag(lam) V^T."""

    n: int
    lam: np.ndarray
    V: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return (self.V * self.lam) @ self.V.T

    @property
    def a(self) -> float:
        return float(np.max(np.abs(self.lam)))


class _GradedProduct:
    """v = Q diag(exp(s)) R, updated by left multiplication."""

    def __init__(self, d: int):
        self.Q = np.eye(d)
        self.s = np.zeros(d)
        self.R = np.eye(d)

    def push(self, A: np.ndarray) -> None:
        Q2, R2 = np.linalg.qr(A @ self.Q)
        r = np.diag(R2).copy()
        if np.any(np.abs(r) < 1e-300):
            raise NumericalError("degenerate factor during re-orthogonalization")
        sign = np.sign(r)
        self.Q = Q2 * sign
        U = (R2 * sign[:, None]) / np.abs(r)[:, None]  # unit upper triangular
        # (D^-1 U D)_ij = U_ij exp(s_j - s_i), applied with the old scales
        scale = np.exp(np.clip(self.s[None, :] - self.s[:, None], -745.0, 700.0))
        self.R = np.triu(U * scale) @ self.R
        self.s = self.s + np.log(np.abs(r))
        if np.max(np.abs(self.R)) > REBALANCE_AT:
            self._rebalance()

    def _rebalance(self) -> None:
        top = np.max(self.s)
        X = np.exp(self.s - top)[:, None] * self.R
        Q2, R2 = np.linalg.qr(X)
        r = np.diag(R2).copy()
        if np.any(np.abs(r) < 1e-300):
            raise NumericalError("product too ill-conditioned to represent")
        sign = np.sign(r)
        self.Q = self.Q @ (Q2 * sign)
        self.R = (R2 * sign[:, None]) / np.abs(r)[:, None]
        self.s = top + np.log(np.abs(r))
        if np.max(np.abs(self.R)) > OVERFLOW_GUARD:
            raise NumericalError("product factor exceeds 1e150 after re-orthogonalization")

    def dense(self) -> np.ndarray:
        """The product itself; only meaningful while it is representable."""
        return self.Q @ (np.exp(self.s)[:, None] * self.R)

    def log_positive_part(self, n: int) -> LogPositivePart:
        """Eigen-decomposition of log (v^T v)^{1/2} from the graded factors."""
        d = len(self.s)
        order = np.argsort(-self.s, kind="stable")
        s = self.s[order]
        B = self.R[order]  # v^T v = B^T diag(e^{2s}) B
        W, T = np.linalg.qr(B.T)  # B = L W^T with L = T^T lower triangular
        L = T.T
        lam = np.empty(d)
        V = np.empty((d, d))
        breaks = [0] + [i + 1 for i in range(d - 1) if s[i] - s[i + 1] > CLUSTER_GAP] + [d]
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            sbar = s[lo:hi].mean()
            # rows k >= lo of L scaled by e^{s_k - sbar}; lower clusters add O(e^-gap)
            F = np.exp(np.clip(s[lo:] - sbar, -745.0, 700.0))[:, None] * L[lo:, lo:hi]
            _, sig, Yt = np.linalg.svd(F, full_matrices=False)
            if np.any(sig <= 0):
                raise NumericalError("lost a singular value of the product")
            lam[lo:hi] = sbar + np.log(sig)
            V[:, lo:hi] = W[:, lo:hi] @ Yt.T
        idx = np.argsort(-lam, kind="stable")
        return LogPositivePart(n, lam[idx], V[:, idx])


@dataclass
class OperatorCocycleRun:
    dim: int
    checkpoints: list  # LogPositivePart per checkpoint
    horizon: int
    order: str = "reverse"

    @property
    def ns(self) -> np.ndarray:
        return np.array([c.n for c in self.checkpoints], dtype=np.int64)

    @property
    def a(self) -> np.ndarray:
        return np.array([c.a for c in self.checkpoints])

    @property
    def final(self) -> LogPositivePart:
        return self.checkpoints[-1]


def operator_run(assignment: Mapping[int, np.ndarray], path: OmegaPath, N: int,
                 checkpoints: Sequence[int] | None = None) -> OperatorCocycleRun:
    """Accumulate v(n, w) and record log p_n at the checkpoints (N always included)."""
    mats, d = _assignment(assignment)
    if N < 1:
        raise SpecError("N must be at least 1")
    cps = set(int(c) for c in (checkpoints if checkpoints is not None else _grid(N, 60)) if 1 <= c <= N)
    cps.add(N)
    prod = _GradedProduct(d)
    syms = path.symbols(0, N)
    out = []
    for k in range(N):
        try:
            prod.push(mats[int(syms[k])])
        except KeyError:
            raise SpecError(f"no matrix assigned to symbol {syms[k]}") from None
        if k + 1 in cps:
            out.append(prod.log_positive_part(k + 1))
    return OperatorCocycleRun(d, out, N)


class OperatorNormCocycle(SubadditiveCocycle):
    """a(n, w) = ||log p_n(w)||_op for the reverse-order product."""

    source = "closed_form"

    def __init__(self, assignment: Mapping[int, np.ndarray]):
        super().__init__()
        self.mats, self.dim = _assignment(assignment)

    def values(self, ns, path, offsets=0):
        ns = np.asarray(ns, dtype=np.int64)
        offsets = np.broadcast_to(np.asarray(offsets, dtype=np.int64), ns.shape)
        out = np.zeros(ns.shape)
        for idx in np.ndindex(ns.shape):
            n = int(ns[idx])
            if n > 0:
                out[idx] = operator_run(self.mats, path.shift(int(offsets[idx])), n, [n]).final.a
        return out

    def prefix(self, path, N):
        run = operator_run(self.mats, path, N, range(1, N + 1))
        return np.concatenate([[0.0], run.a])


# -- trace pairing -------------------------------------------------------------------

@dataclass
class TracePairing:
    """F(M) = Tr(Q M); Q has trace norm 1, so F has norm 1 against the operator norm."""

    Q: np.ndarray
    trivial: bool
    report: ConvergenceReport

    def __call__(self, M) -> float:
        return float(np.trace(self.Q @ np.asarray(M, dtype=float)))

    @property
    def trace_norm(self) -> float:
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)))))


def operator_functional(run: OperatorCocycleRun, tol: float = 0.03) -> TracePairing:
    """Trace-pairing functional frozen at the final checkpoint.

    Q averages sign(lam_i) v_i v_i^T over the eigenvalues of log p_N tied at the
    largest modulus, so Tr(Q log p_N) = ||log p_N||_op exactly.
    """
    if len(run.checkpoints) < 2:
        raise SpecError("need at least two checkpoints")
    fin = run.final
    aN = fin.a
    d = run.dim
    if aN == 0:
        Q = np.zeros((d, d))
        Q[0, 0] = 1.0
        trivial = True
    else:
        top = np.abs(fin.lam) >= aN * (1 - TIE_RTOL)
        Vt = fin.V[:, top]
        Q = (Vt * np.sign(fin.lam[top])) @ Vt.T / int(top.sum())
        trivial = False
    est = np.array([np.trace(Q @ c.matrix) / c.n for c in run.checkpoints])
    report = ConvergenceReport(aN / run.horizon, run.ns, est, run.horizon, tol, trivial=trivial)
    return TracePairing(Q, trivial, report)


# -- QR oracle -------------------------------------------------------------------------

@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray  # descending
    horizon: int
    stderr: np.ndarray | None = None
    running: dict = field(default_factory=dict)  # checkpoint n -> exponents at n

    @property
    def top(self) -> float:
        return float(self.exponents[0])

    @property
    def bottom(self) -> float:
        return float(self.exponents[-1])


def lyapunov_qr(assignment: Mapping[int, np.ndarray], path: OmegaPath, N: int,
                checkpoints: Sequence[int] = ()) -> LyapunovSpectrum:
    """Treppeniteration: Q_{k+1} R_k = A(T^k w) Q_k; exponents = sum log|diag R_k| / N."""
    mats, d = _assignment(assignment)
    if N < d:
        raise SpecError("N must be at least the dimension")
    cps = set(int(c) for c in checkpoints)
    syms = path.symbols(0, N)
    Q = np.eye(d)
    acc = np.zeros(d)
    running = {}
    for k in range(N):
        Q, R = np.linalg.qr(mats[int(syms[k])] @ Q)
        r = np.abs(np.diag(R))
        if np.any(r < 1e-300):
            raise NumericalError("degenerate diagonal in the QR iteration")
        acc += np.log(r)
        if k + 1 in cps:
            running[k + 1] = np.sort(acc / (k + 1))[::-1]
    return LyapunovSpectrum(np.sort(acc / N)[::-1], N, None, running)


def lyapunov_spectrum(assignment: Mapping[int, np.ndarray], spec: DriverSpec, seeds: Sequence[int],
                      N: int) -> LyapunovSpectrum:
    """Mean QR spectrum over seeds with its standard error."""
    ex = np.array([lyapunov_qr(assignment, OmegaPath(spec, s), N).exponents for s in seeds])
    stderr = ex.std(axis=0, ddof=1) / np.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros(ex.shape[1])
    return LyapunovSpectrum(ex.mean(axis=0), N, stderr)


def log_det_average(assignment: Mapping[int, np.ndarray], path: OmegaPath, N: int) -> float:
    """(1/N) sum_{k<N} log|det A(T^k w)|."""
    mats, _ = _assignment(assignment)
    lookup = np.full(max(mats) + 1, np.nan)
    for k, M in mats.items():
        lookup[k] = np.linalg.slogdet(M)[1]
    return float(lookup[path.symbols(0, N)].mean())


# -- verification --------------------------------------------------------------------------

@dataclass
class OperatorMETReport:
    a_rate: float  # a_N / N
    norm_of_limit: float  # max(lambda_1, -lambda_d)
    eig_rate: np.ndarray  # eigenvalues of (1/N) log p_N, descending
    spectrum: np.ndarray
    functional_rate: float  # F(log p_N) / N
    tol_norm: float
    tol_eig: float
    tol_functional: float

    @property
    def norm_residual(self) -> float:
        return abs(self.a_rate - self.norm_of_limit)

    @property
    def eig_residual(self) -> float:
        return float(np.max(np.abs(self.eig_rate - self.spectrum)))

    @property
    def functional_residual(self) -> float:
        return abs(self.functional_rate - self.a_rate)

    @property
    def checks(self) -> dict:
        return {"norm": self.norm_residual <= self.tol_norm,
                "eigenvalues": self.eig_residual <= self.tol_eig,
                "functional": self.functional_residual <= self.tol_functional}

    @property
    def verdict(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return {"a_rate": self.a_rate, "norm_of_limit": self.norm_of_limit, "eig_rate": self.eig_rate,
                "spectrum": self.spectrum, "functional_rate": self.functional_rate,
                "residuals": {"norm": self.norm_residual, "eigenvalues": self.eig_residual,
                              "functional": self.functional_residual},
                "checks": self.checks, "verdict": self.verdict}


def verify_operator_met(run: OperatorCocycleRun, spectrum: LyapunovSpectrum, tol_norm: float = 0.03,
                        tol_eig: float = 0.05, tol_functional: float = 0.03) -> OperatorMETReport:
    if spectrum.horizon != run.horizon:
        raise SpecError("run and spectrum must share the horizon")
    N = run.horizon
    F = operator_functional(run)
    lam = spectrum.exponents
    return OperatorMETReport(run.final.a / N, float(max(lam[0], -lam[-1])), run.final.lam / N, lam,
                             F(run.final.matrix) / N, tol_norm, tol_eig, tol_functional)


def checkpoint_rows(run: OperatorCocycleRun, spectrum: LyapunovSpectrum | None = None):
    """CSV header and rows: n, a_n/n, eigenvalues of (1/n) log p_n, QR exponents."""
    d = run.dim
    header = ["n", "a_rate"] + [f"eig{i}" for i in range(d)] + [f"qr{i}" for i in range(d)]
    rows = []
    for c in run.checkpoints:
        qr = spectrum.running.get(c.n) if spectrum is not None else None
        qr = qr if qr is not None else np.full(d, np.nan)
        rows.append([c.n, c.a / c.n, *(c.lam / c.n), *qr])
    return header, rows


__all__ = [
    "LogPositivePart", "LyapunovSpectrum", "OperatorCocycleRun", "OperatorMETReport", "OperatorNormCocycle",
    "TracePairing", "checkpoint_rows", "log_det_average", "lyapunov_qr", "lyapunov_spectrum",
    "operator_functional", "operator_run", "verify_operator_met",
]
