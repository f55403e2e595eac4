"""Small dense linear-algebra helpers used across the package."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def sym(M: np.ndarray) -> np.ndarray:
    """Symmetric part (M + M.T) / 2."""
    return 0.5 * (M + M.T)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def check_symmetric(M: np.ndarray, name: str, rel_tol: float = 1e-12) -> np.ndarray:
    """Verify M is symmetric within rel_tol * ||M|| and return its symmetric part."""
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > rel_tol * max(scale, 1e-300):
        raise ValueError(f"{name} is not symmetric within {rel_tol:g} relative tolerance")
    return sym(M)


def check_psd(M: np.ndarray, name: str, rel_tol: float = 1e-9) -> np.ndarray:
    """Verify M is symmetric PSD (min eigenvalue >= -rel_tol * ||M||)."""
    S = check_symmetric(M, name)
    if S.size:
        w = np.linalg.eigvalsh(S)
        if w[0] < -rel_tol * max(w[-1], 1.0):
            raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:g})")
    return S

def check_pd(M: np.ndarray, name: str) -> np.ndarray:
    """Verify M is symmetric positive definite."""
    S = check_symmetric(M, name)
    if np.any(np.diag(S) <= 0.0):
        raise ValueError(f"{name} must have strictly positive diagonal")
    w = np.linalg.eigvalsh(S)
    if w[0] <= 0.0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {w[0]:g})")
    return S


def cov_sqrt(C: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Lower-triangular-style square root L with L @ L.T == C.

    Uses Cholesky when C is positive definite; falls back to an
    eigendecomposition square root for PSD-but-singular C (e.g. C = 0).
    """
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        return C.copy()
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(sym(C))
    if w[0] < -1e-9 * max(w[-1], 1.0):
        raise NumericalError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:g})")
    return V * np.sqrt(np.clip(w, 0.0, None))
