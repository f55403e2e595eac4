"""Discrete-time Kalman filter with a full per-step trace.

The filter is always run against the model it is *given* (the assumed
model); measurements may come from a different plant or be manipulated,
and nothing here may know that. Innovation covariances are handled through
Cholesky solves, never by forming an explicit inverse, and covariances are
re-symmetrized after every update to control drift over long horizons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError
from .linalg import check_psd, sym
from .model import SystemModel

#: condition-number estimate above which S counts as numerically singular
S_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class FilterState:
    """Posterior estimate (x_hat, P) at step k."""

    x_hat: np.ndarray
    P: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class StepRecord:
    """Everything one predict+correct cycle produced at step k."""

    k: int
    x_pred: np.ndarray
    P_pred: np.ndarray
    z_tilde: np.ndarray
    S: np.ndarray
    K_gain: np.ndarray
    x_post: np.ndarray
    P_post: np.ndarray


def kf_init(x0_mean: np.ndarray, P0: np.ndarray) -> FilterState:
    """Initial filter state from a mean and a symmetric PSD covariance."""
    x0 = np.array(x0_mean, dtype=float).reshape(-1)
    P0 = check_psd(np.array(P0, dtype=float), "P0")
    if P0.shape != (x0.size, x0.size):
        raise ValueError(f"P0 must be {x0.size}x{x0.size}, got {P0.shape}")
    return FilterState(x_hat=x0, P=P0, k=0)


def kf_predict(state: FilterState, model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    """One prediction step: x_pred = A x_hat, P_pred = A P A^T + Q."""
    if state.x_hat.size != model.n:
        raise ValueError(f"state dimension {state.x_hat.size} != model n={model.n}")
    x_pred = model.A @ state.x_hat
    P_pred = sym(model.A @ state.P @ model.A.T + model.Q)
    return x_pred, P_pred


def _factor_S(S: np.ndarray, k: int | None):
    w = np.linalg.eigvalsh(S)
    if w[0] <= 0.0 or w[-1] / w[0] > S_CONDITION_LIMIT:
        raise NumericalError(
            f"innovation covariance numerically singular (eigenvalues in [{w[0]:g}, {w[-1]:g}])",
            step=k,
        )
    return cho_factor(S, lower=True)


def kf_correct(
    x_pred: np.ndarray,
    P_pred: np.ndarray,
    z: np.ndarray,
    model: SystemModel,
    k: int = 0,
) -> StepRecord:
    """One correction step against measurement z.

    The gain solves S K^T = H P_pred instead of forming S^{-1}; P_post is
    (I - K H) P_pred, symmetrized.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != model.m:
        raise ValueError(f"measurement has length {z.size}, expected {model.m}")
    H = model.H
    z_tilde = z - H @ x_pred
    S = sym(H @ P_pred @ H.T + model.R)
    factor = _factor_S(S, k)
    K_gain = cho_solve(factor, H @ P_pred).T
    x_post = x_pred + K_gain @ z_tilde
    P_post = sym((np.eye(model.n) - K_gain @ H) @ P_pred)
    return StepRecord(
        k=k,
        x_pred=x_pred,
        P_pred=P_pred,
        z_tilde=z_tilde,
        S=S,
        K_gain=K_gain,
        x_post=x_post,
        P_post=P_post,
    )


def run_filter(
    model: SystemModel,
    x0_mean: np.ndarray,
    P0: np.ndarray,
    measurements: np.ndarray,
) -> list[StepRecord]:
    """Filter a measurement stream; returns one record per filtered step.

    Row k of ``measurements`` is the measurement at time k. Row 0 belongs
    to the initialization instant (its estimate is x0_mean) and is not
    filtered: records are produced for k = 1 .. K-1.
    """
    measurements = np.asarray(measurements, dtype=float)
    if measurements.ndim != 2 or measurements.shape[1] != model.m:
        raise ValueError(f"measurements must be K x {model.m}, got {measurements.shape}")
    state = kf_init(x0_mean, P0)
    records: list[StepRecord] = []
    for k in range(1, measurements.shape[0]):
        x_pred, P_pred = kf_predict(state, model)
        record = kf_correct(x_pred, P_pred, measurements[k], model, k=k)
        records.append(record)
        state = FilterState(x_hat=record.x_post, P=record.P_post, k=k)
    return records
