"""Observability (Kalman) decomposition w.r.t. a measurement subset.

Given the transition matrix A and the rows H_s of the measurement map that
belong to the suspicious channels, the state space splits into a part
observable through those channels and its orthogonal complement. The
transform T is orthogonal: its first n1 rows are a singular-vector basis
of the row space of the observability matrix, the remaining rows span the
null space. Orthogonality keeps T perfectly conditioned, which matters
because the d metric downstream is a norm in transformed coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def observability_matrix(A: np.ndarray, H_s: np.ndarray) -> np.ndarray:
    """Stack [H_s; H_s A; ...; H_s A^(n-1)] by repeated multiplication."""
    A = np.asarray(A, dtype=float)
    H_s = np.atleast_2d(np.asarray(H_s, dtype=float))
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    if H_s.shape[1] != n:
        raise ValueError(f"H_s must have {n} columns, got {H_s.shape}")
    if H_s.shape[0] < 1:
        raise ValueError("H_s needs at least one row")
    blocks = [H_s]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def numerical_rank(M: np.ndarray, rel_tol: float | None = None) -> int:
    """Count of singular values above rel_tol * sigma_max.

    Default rel_tol is max(rows, cols) * 1e-12. The zero matrix has rank 0.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValueError("matrix is empty")
    if rel_tol is None:
        rel_tol = max(M.shape) * 1e-12
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))


@dataclass(frozen=True)
class ObservabilityDecomposition:
    """Orthogonal transform T and the partitioned canonical-form system.

    In transformed coordinates X = T x, the transition matrix A_cal is
    block lower triangular: the leading n1 coordinates are observable
    through the suspicious channels, the trailing n - n1 are not.
    structural_residual records the largest entry actually measured in the
    blocks that are zero in exact arithmetic (upper-right block of A_cal
    and trailing columns of H_cal); nothing is zeroed by hand.
    """

    T: np.ndarray
    T_inv: np.ndarray
    n1: int
    A_cal: np.ndarray
    H_cal: np.ndarray
    Q_cal: np.ndarray | None
    A_o: np.ndarray
    A_21: np.ndarray
    A_u: np.ndarray
    H_so: np.ndarray
    structural_residual: float

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def fully_observable(self) -> bool:
        return self.n1 == self.n


def build_transform(
    A: np.ndarray,
    H_s: np.ndarray,
    Q: np.ndarray | None = None,
    rel_tol: float | None = None,
) -> ObservabilityDecomposition:
    """Construct the decomposition for the pair (A, H_s).

    Raises ValueError if H_s is numerically zero (rank 0: nothing is
    observable, so no meaningful transform exists). rel_tol is the rank
    tolerance forwarded to :func:`numerical_rank`.
    """
    O = observability_matrix(A, H_s)
    n = A.shape[0]
    sv, Vt = np.linalg.svd(O, full_matrices=True)[1:]
    if rel_tol is None:
        rel_tol = max(O.shape) * 1e-12
    n1 = int(np.count_nonzero(sv > rel_tol * sv[0])) if sv[0] > 0 else 0
    if n1 == 0:
        raise ValueError("suspicious measurement map is numerically zero; no observable subspace")
    T = Vt
    A_cal = T @ A @ T.T
    H_cal = np.atleast_2d(H_s) @ T.T
    Q_cal = T @ np.asarray(Q, dtype=float) @ T.T if Q is not None else None
    upper_right = A_cal[:n1, n1:]
    h_tail = H_cal[:, n1:]
    structural_residual = max(
        float(np.max(np.abs(upper_right), initial=0.0)),
        float(np.max(np.abs(h_tail), initial=0.0)),
    )
    return ObservabilityDecomposition(
        T=T,
        T_inv=T.T,
        n1=n1,
        A_cal=A_cal,
        H_cal=H_cal,
        Q_cal=Q_cal,
        A_o=A_cal[:n1, :n1],
        A_21=A_cal[n1:, :n1],
        A_u=A_cal[n1:, n1:],
        H_so=H_cal[:, :n1],
        structural_residual=structural_residual,
    )


def transform_estimates(dec: ObservabilityDecomposition, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split T x into observable and unobservable parts (X_o, X_u)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dec.n:
        raise ValueError(f"state has length {x.size}, expected {dec.n}")
    X = dec.T @ x
    return X[: dec.n1], X[dec.n1 :]


def dump_decomposition_text(dec: ObservabilityDecomposition) -> str:
    """Audit dump in the same plain-text matrix style as the model format."""

    def block(M: np.ndarray) -> str:
        return "\n".join(" ".join(format(v, ".17g") for v in row) for row in np.atleast_2d(M))

    parts = [
        f"{dec.n} {dec.n1} {dec.H_cal.shape[0]}",
        block(dec.T),
        "",
        block(dec.A_o) if dec.A_o.size else "",
        "",
        block(dec.A_21) if dec.A_21.size else "",
        "",
        block(dec.A_u) if dec.A_u.size else "",
        "",
        block(dec.H_so) if dec.H_so.size else "",
        "",
        f"structural_residual {format(dec.structural_residual, '.17g')}",
    ]
    return "\n".join(parts) + "\n"
