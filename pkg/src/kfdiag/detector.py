"""Chi-squared bad-data detection on filter innovation records.

The aggregate statistic c = z~^T S^{-1} z~ is tested against the inverse
chi-squared CDF at a configured confidence; per-channel residuals are
standardized by sqrt(S_ii) and channels above TH_r form the ordered
suspicious set handed to the diagnosis stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chi2 import chi2_threshold
from .errors import NumericalError
from .estimator import StepRecord


@dataclass(frozen=True)
class Chi2Config:
    """Detector settings.

    dof is "all" (use the number of measurement channels) or an explicit
    positive integer. th_r is the per-channel threshold in standard
    deviations of the innovation.
    """

    confidence: float = 0.99
    dof: int | str = "all"
    th_r: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie strictly in (0, 1)")
        if self.dof != "all" and (int(self.dof) != self.dof or int(self.dof) < 1):
            raise ValueError('dof must be "all" or a positive integer')
        if not self.th_r > 0:
            raise ValueError("th_r must be > 0")

    def resolve_dof(self, m: int) -> int:
        return m if self.dof == "all" else int(self.dof)


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of the chi-squared test at one step."""

    k: int
    c: float
    th_chi: float
    triggered: bool
    r: np.ndarray
    suspicious: tuple[int, ...]
    th_r: float


def chi2_statistic(z_tilde: np.ndarray, S: np.ndarray) -> float:
    """c = z~^T S^{-1} z~ via a Cholesky solve (no explicit inverse)."""
    z_tilde = np.asarray(z_tilde, dtype=float).reshape(-1)
    S = np.asarray(S, dtype=float)
    try:
        factor = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"innovation covariance not positive definite: {exc}") from None
    return max(float(z_tilde @ cho_solve(factor, z_tilde)), 0.0)


def normalized_residuals(z_tilde: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Per-channel |z~_i| / sqrt(S_ii), the residual in standard deviations."""
    z_tilde = np.asarray(z_tilde, dtype=float).reshape(-1)
    diag = np.diag(np.asarray(S, dtype=float))
    if np.any(diag <= 0.0):
        raise NumericalError("innovation covariance has a non-positive diagonal entry")
    return np.abs(z_tilde) / np.sqrt(diag)


def detect(step: StepRecord, cfg: Chi2Config) -> DetectionResult:
    """Run the chi-squared test on one step record."""
    c = chi2_statistic(step.z_tilde, step.S)
    m = step.z_tilde.size
    th_chi = chi2_threshold(cfg.confidence, cfg.resolve_dof(m))
    r = normalized_residuals(step.z_tilde, step.S)
    order = np.argsort(-r, kind="stable")
    suspicious = tuple(int(i) for i in order if r[i] > cfg.th_r)
    return DetectionResult(
        k=step.k,
        c=c,
        th_chi=th_chi,
        triggered=c > th_chi,
        r=r,
        suspicious=suspicious,
        th_r=cfg.th_r,
    )
