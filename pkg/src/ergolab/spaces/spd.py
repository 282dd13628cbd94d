"""Spectral calculus on symmetric and positive definite matrices."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

MAX_CONDITION = 1e12
EIG_FLOOR = 1e-300


def symmetrize(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _spd_eigh(P: np.ndarray, what: str = "matrix"):
    P = np.asarray(P, dtype=float)
    if P.shape[-1] != P.shape[-2]:
        raise DomainError(f"{what} is not square")
    scale = np.max(np.abs(P)) if P.size else 0.0
    if np.max(np.abs(P - np.swapaxes(P, -1, -2)), initial=0.0) > 1e-8 * max(scale, 1.0):
        raise DomainError(f"{what} is not symmetric")
    w, V = np.linalg.eigh(symmetrize(P))
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DomainError(f"{what} is not positive definite")
    if np.any(w[..., -1] / np.maximum(w[..., 0], EIG_FLOOR) > MAX_CONDITION):
        raise DomainError(f"{what} has condition number above {MAX_CONDITION:g}")
    return np.maximum(w, EIG_FLOOR), V


def _from_eig(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    return symmetrize((V * w[..., None, :]) @ np.swapaxes(V, -1, -2))


def sym_log(P: np.ndarray) -> np.ndarray:
    """Principal logarithm of an SPD matrix via its spectral decomposition."""
    w, V = _spd_eigh(P)
    return _from_eig(np.log(w), V)


def sym_exp(S: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix."""
    w, V = np.linalg.eigh(symmetrize(S))
    return _from_eig(np.exp(w), V)


def sym_sqrt(P: np.ndarray) -> np.ndarray:
    w, V = _spd_eigh(P)
    return _from_eig(np.sqrt(w), V)


def positive_part(v: np.ndarray) -> np.ndarray:
    """The SPD square root of v^T v for an invertible matrix v."""
    v = np.asarray(v, dtype=float)
    # From the SVD v = U diag(s) W^T, [v] = W diag(s) W^T without squaring s.
    _, s, Wt = np.linalg.svd(v)
    if s[-1] == 0 or s[0] / s[-1] > MAX_CONDITION:
        raise DomainError("matrix is singular or too ill-conditioned")
    return symmetrize((Wt.T * s) @ Wt)


def op_norm_sym(S: np.ndarray) -> np.ndarray:
    """Operator norm of symmetric matrices (largest absolute eigenvalue)."""
    return np.max(np.abs(np.linalg.eigvalsh(symmetrize(S))), axis=-1)


def random_spd(rng: np.random.Generator, d: int, scale: float = 1.0, size=()) -> np.ndarray:
    return sym_exp(random_sym(rng, d, scale, size))


def random_sym(rng: np.random.Generator, d: int, scale: float = 1.0, size=()) -> np.ndarray:
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    X = rng.normal(scale=scale, size=shape + (d, d))
    return symmetrize(X)
