"""Shared linear-algebra helpers for the column-stacking (vec) convention.

Throughout the package ``vec`` stacks matrix columns, so entry (m, j) of a
d x d matrix sits at flat index ``j*d + m``.  The d^2 x d^2 covariance of
vec(L) therefore holds the covariance between components L^(m,j) and
L^(n,l) at position (j*d+m, l*d+n).
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "vec", "unvec", "op_norm", "fro_norm", "psd_factor", "log_abs_det",
]


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a d x d matrix."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape(d, d, order="F")


def op_norm(a: np.ndarray) -> float:
    """Operator (spectral) 2-norm."""
    return float(np.linalg.norm(a, 2))


def fro_norm(a: np.ndarray) -> float:
    """Frobenius norm, i.e. the Euclidean norm of vec(a)."""
    return float(np.linalg.norm(a))


def psd_factor(sigma: np.ndarray) -> np.ndarray:
    """A factor A with A @ A.T = sigma for symmetric PSD sigma.

    Uses a symmetric eigendecomposition with negative eigenvalues clipped at
    zero, so rank-deficient covariances (common here: pure-drift and
    trace-constrained Gaussian parts) are handled exactly.
    """
    w, v = np.linalg.eigh(np.asarray(sigma, dtype=float))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def log_abs_det(a: np.ndarray) -> tuple[float, float]:
    """(sign, log|det a|) via pivoted LU; safe against overflow/underflow."""
    sign, logabs = np.linalg.slogdet(a)
    return float(sign), float(logabs)
