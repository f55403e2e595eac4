"""Diagnosis of a triggered detector: malicious data vs modeling error.

When the chi-squared detector fires, the state space is decomposed with
respect to the suspicious channels. Manipulated measurement data can only
move the estimates of states observable through those channels, so a large
discrepancy d between the posterior unobservable estimate and its
model-propagated prediction implicates the model instead of the data. When
the suspicious channels leave the whole state observable, the cardinality
of the suspicious set decides: too many simultaneously suspicious channels
point at the model.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .decomposition import ObservabilityDecomposition, build_transform, transform_estimates
from .detector import Chi2Config, DetectionResult, detect
from .estimator import StepRecord, run_filter
from .model import SystemModel
from .scenario import ScenarioRun, simulate_trajectory

#: steps excluded from calibration pools and verdict summaries while the
#: filter covariance converges
DEFAULT_BURN_IN = 20


class Outcome(str, enum.Enum):
    NO_ANOMALY = "no_anomaly"
    MALICIOUS_DATA = "malicious_data"
    MODELING_ERROR = "modeling_error"
    UNDECIDED = "undecided"

    def __str__(self) -> str:  # CSV / report friendliness
        return self.value


#: deterministic tie-break order for majority verdicts
_OUTCOME_ORDER = {o: i for i, o in enumerate(Outcome)}


@dataclass(frozen=True)
class CalibrationSpec:
    """Monte Carlo settings for the empirical d threshold."""

    runs: int = 100
    quantile: float = 0.99
    seed: int = 0
    steps: int = 240

    def __post_init__(self):
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie strictly in (0, 1)")
        if self.runs < 30:
            raise ValueError("calibration needs at least 30 runs")
        if self.steps <= DEFAULT_BURN_IN + 1:
            raise ValueError(f"calibration horizon must exceed the {DEFAULT_BURN_IN}-step burn-in")


@dataclass(frozen=True)
class DiagnosisConfig:
    """Thresholds for the decision algorithm.

    th_d None means "calibrate": the threshold is computed per suspicious
    set as an empirical quantile of d under normal operation of the
    assumed model. n_critical None resolves to ceil(m/2).
    """

    th_d: float | None = None
    n_critical: int | None = None
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    burn_in: int = DEFAULT_BURN_IN
    rank_rel_tol: float | None = None

    def __post_init__(self):
        if self.th_d is not None and not self.th_d > 0:
            raise ValueError("th_d must be > 0 when given")
        if self.n_critical is not None and self.n_critical < 1:
            raise ValueError("n_critical must be >= 1 when given")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")

    def resolve_n_critical(self, m: int) -> int:
        return self.n_critical if self.n_critical is not None else math.ceil(m / 2)


@dataclass(frozen=True)
class ThresholdsUsed:
    th_chi: float
    th_r: float
    th_d: float | None
    n_critical: int


@dataclass(frozen=True)
class DiagnosisVerdict:
    """Per-step outcome with the evidence that produced it.

    d and n1 are None when the rank-deficient branch was not reached (not
    triggered, empty suspicious set, or full-rank observability for n1 only
    when not triggered).
    """

    k: int
    outcome: Outcome
    suspicious: tuple[int, ...]
    d: float | None
    n1: int | None
    thresholds: ThresholdsUsed
    note: str | None = None


def d_metric(
    X_u_post: np.ndarray,
    X_o_pred: np.ndarray,
    X_u_pred: np.ndarray,
    A_21: np.ndarray,
    A_u: np.ndarray,
) -> float:
    """d = || X_u_post - A_21 X_o_pred - A_u X_u_pred ||_2."""
    X_u_post = np.asarray(X_u_post, dtype=float).reshape(-1)
    if X_u_post.size == 0:
        raise ValueError("unobservable partition is empty; d is undefined")
    X_o_pred = np.asarray(X_o_pred, dtype=float).reshape(-1)
    X_u_pred = np.asarray(X_u_pred, dtype=float).reshape(-1)
    return float(np.linalg.norm(X_u_post - A_21 @ X_o_pred - A_u @ X_u_pred))


def d_from_record(dec: ObservabilityDecomposition, record: StepRecord) -> float:
    """Evaluate the d metric for one step record under a fixed decomposition."""
    X_o_pred, X_u_pred = transform_estimates(dec, record.x_pred)
    X_u_post = transform_estimates(dec, record.x_post)[1]
    return d_metric(X_u_post, X_o_pred, X_u_pred, dec.A_21, dec.A_u)


def d_series(records: list[StepRecord], dec: ObservabilityDecomposition) -> np.ndarray:
    """d per record, e.g. for monitoring plots against a fixed channel set."""
    return np.array([d_from_record(dec, rec) for rec in records])


def empirical_quantile(samples, q: float) -> float:
    """Empirical quantile of a pooled sample (linear interpolation)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample pool")
    return float(np.quantile(samples, q))


def calibrate_th_d(
    assumed_model: SystemModel,
    suspicious: tuple[int, ...],
    x0: np.ndarray,
    P0: np.ndarray,
    cfg: DiagnosisConfig,
) -> float:
    """Empirical d threshold for one suspicious set under normal operation.

    Simulates ``cfg.calibration.runs`` independent normal-scenario runs of
    the assumed model, filters them with the assumed model, pools d over
    all post-burn-in steps and returns the configured quantile.
    Deterministic given the calibration seed. Raises ValueError when the
    suspicious set leaves the system fully observable (there is no
    unobservable partition to calibrate).
    """
    suspicious = tuple(sorted(set(int(i) for i in suspicious)))
    if not suspicious:
        raise ValueError("suspicious set is empty")
    H_s = assumed_model.H[list(suspicious)]
    dec = build_transform(assumed_model.A, H_s, assumed_model.Q, rel_tol=cfg.rank_rel_tol)
    if dec.fully_observable:
        raise ValueError(
            "observability matrix has full rank for this suspicious set; d cannot be calibrated"
        )
    cal = cfg.calibration
    seeds = np.random.SeedSequence(cal.seed).generate_state(cal.runs)
    pool: list[float] = []
    for seed in seeds:
        _, meas = simulate_trajectory(assumed_model, x0, cal.steps, int(seed))
        for rec in run_filter(assumed_model, x0, P0, meas):
            if rec.k >= cfg.burn_in:
                pool.append(d_from_record(dec, rec))
    return empirical_quantile(pool, cal.quantile)


class Diagnoser:
    """Stateful executor of the decision algorithm.

    Caches one decomposition and one calibrated threshold per suspicious
    set, so a timeline (or a whole Monte Carlo batch against the same
    assumed model) pays the construction cost once. The cached values are
    pure functions of (assumed model, suspicious set, config), so sharing
    a Diagnoser never changes results.
    """

    def __init__(
        self,
        assumed_model: SystemModel,
        cfg: DiagnosisConfig,
        x0: np.ndarray | None = None,
        P0: np.ndarray | None = None,
    ):
        self.model = assumed_model
        self.cfg = cfg
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
        self.P0 = None if P0 is None else np.asarray(P0, dtype=float)
        self._decomps: dict[tuple[int, ...], ObservabilityDecomposition] = {}
        self._thresholds: dict[tuple[int, ...], float] = {}

    def decomposition_for(self, suspicious: tuple[int, ...]) -> ObservabilityDecomposition:
        key = tuple(sorted(set(suspicious)))
        if key not in self._decomps:
            H_s = self.model.H[list(key)]
            self._decomps[key] = build_transform(
                self.model.A, H_s, self.model.Q, rel_tol=self.cfg.rank_rel_tol
            )
        return self._decomps[key]

    def th_d_for(self, suspicious: tuple[int, ...]) -> float:
        if self.cfg.th_d is not None:
            return self.cfg.th_d
        key = tuple(sorted(set(suspicious)))
        if key not in self._thresholds:
            if self.x0 is None or self.P0 is None:
                raise ValueError(
                    "th_d is not fixed and no (x0, P0) was provided for calibration"
                )
            self._thresholds[key] = calibrate_th_d(self.model, key, self.x0, self.P0, self.cfg)
        return self._thresholds[key]

    def diagnose(self, step: StepRecord, detection: DetectionResult) -> DiagnosisVerdict:
        if step.k != detection.k:
            raise ValueError(f"step {step.k} does not match detection {detection.k}")
        m = self.model.m
        n_critical = self.cfg.resolve_n_critical(m)
        thresholds = ThresholdsUsed(
            th_chi=detection.th_chi, th_r=detection.th_r, th_d=None, n_critical=n_critical
        )
        if not detection.triggered:
            return DiagnosisVerdict(
                k=step.k,
                outcome=Outcome.NO_ANOMALY,
                suspicious=(),
                d=None,
                n1=None,
                thresholds=thresholds,
            )
        suspicious = detection.suspicious
        if not suspicious:
            return DiagnosisVerdict(
                k=step.k,
                outcome=Outcome.UNDECIDED,
                suspicious=(),
                d=None,
                n1=None,
                thresholds=thresholds,
                note="aggregate statistic triggered but no channel crossed th_r",
            )
        dec = self.decomposition_for(suspicious)
        if dec.fully_observable:
            outcome = Outcome.MODELING_ERROR if len(suspicious) > n_critical else Outcome.UNDECIDED
            return DiagnosisVerdict(
                k=step.k,
                outcome=outcome,
                suspicious=suspicious,
                d=None,
                n1=dec.n1,
                thresholds=thresholds,
            )
        th_d = self.th_d_for(suspicious)
        d = d_from_record(dec, step)
        thresholds = ThresholdsUsed(
            th_chi=detection.th_chi, th_r=detection.th_r, th_d=th_d, n_critical=n_critical
        )
        outcome = Outcome.MODELING_ERROR if d > th_d else Outcome.MALICIOUS_DATA
        return DiagnosisVerdict(
            k=step.k,
            outcome=outcome,
            suspicious=suspicious,
            d=d,
            n1=dec.n1,
            thresholds=thresholds,
        )


def diagnose(
    step: StepRecord,
    detection: DetectionResult,
    assumed_model: SystemModel,
    cfg: DiagnosisConfig,
    x0: np.ndarray | None = None,
    P0: np.ndarray | None = None,
) -> DiagnosisVerdict:
    """One-shot diagnosis of a single step (see :class:`Diagnoser`)."""
    return Diagnoser(assumed_model, cfg, x0=x0, P0=P0).diagnose(step, detection)


@dataclass(frozen=True)
class RunDiagnosis:
    """Verdict timeline for one run plus phase summaries."""

    verdicts: tuple[DiagnosisVerdict, ...]
    anomaly_window: tuple[int, int] | None
    burn_in: int
    summary: dict

    def majority_verdict(self) -> Outcome:
        """Most common outcome inside the anomaly window (whole run if none).

        Steps before the burn-in are ignored; ties break toward the outcome
        declared first in :class:`Outcome`. An empty window counts as
        NO_ANOMALY.
        """
        counts = self._window_counts()
        if not counts:
            return Outcome.NO_ANOMALY
        return sorted(counts.items(), key=lambda kv: (-kv[1], _OUTCOME_ORDER[kv[0]]))[0][0]

    def _window_counts(self) -> Counter:
        lo, hi = self.anomaly_window if self.anomaly_window else (0, math.inf)
        return Counter(
            v.outcome for v in self.verdicts if v.k >= self.burn_in and lo <= v.k <= hi
        )


def diagnose_run(
    run: ScenarioRun,
    assumed_model: SystemModel,
    x0: np.ndarray,
    P0: np.ndarray,
    detector_cfg: Chi2Config,
    diagnosis_cfg: DiagnosisConfig,
    diagnoser: Diagnoser | None = None,
) -> tuple[RunDiagnosis, list[StepRecord]]:
    """Filter, detect and diagnose every step of a scenario run.

    Returns the diagnosis and the filter records (the harness reuses the
    records for CSV artifacts and monitoring series). Passing a shared
    ``diagnoser`` reuses decomposition and threshold caches across runs of
    the same assumed model.
    """
    if diagnoser is None:
        diagnoser = Diagnoser(assumed_model, diagnosis_cfg, x0=x0, P0=P0)
    records = run_filter(assumed_model, x0, P0, run.measurements_delivered)
    verdicts = []
    for rec in records:
        detection = detect(rec, detector_cfg)
        verdicts.append(diagnoser.diagnose(rec, detection))
    if run.kind == "malicious":
        window = run.attack_window
    elif run.kind == "model_error":
        onset = run.onset_step
        window = (onset if onset is not None else 0, run.steps - 1)
    else:
        window = None
    burn_in = diagnosis_cfg.burn_in
    lo, hi = window if window else (0, math.inf)
    pre = Counter(v.outcome.value for v in verdicts if v.k >= burn_in and v.k < lo)
    inside = Counter(v.outcome.value for v in verdicts if v.k >= burn_in and lo <= v.k <= hi)
    summary = {"pre_window": dict(pre), "window": dict(inside)}
    diagnosis = RunDiagnosis(
        verdicts=tuple(verdicts), anomaly_window=window, burn_in=burn_in, summary=summary
    )
    return diagnosis, records
