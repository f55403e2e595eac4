"""Ground-truth trajectory generation for the three experiment scenarios.

A scenario produces the true state sequence, the clean measurements, and
the measurements actually delivered to the estimator. Delivered data
differs from clean data only under an attack (additive manipulation); a
modeling-error scenario instead switches the plant to a different model at
an onset step while the estimator keeps the stale one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import cov_sqrt
from .model import SystemModel

SCENARIO_KINDS = ("normal", "malicious", "model_error")
ATTACK_WAVEFORMS = ("gaussian", "constant_bias")


@dataclass(frozen=True)
class AttackSpec:
    """Additive measurement manipulation on selected channels.

    targets are 0-based measurement indices. Within window = (k_start,
    k_end), inclusive, each target channel t receives either independent
    gaussian draws with standard deviation magnitude_multiplier *
    sqrt(R[t, t]) or a constant bias of that size.
    """

    targets: tuple[int, ...]
    window: tuple[int, int]
    magnitude_multiplier: float
    waveform: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        targets = tuple(sorted(int(t) for t in self.targets))
        if not targets:
            raise ValueError("attack needs at least one target channel")
        if len(set(targets)) != len(targets):
            raise ValueError("duplicate attack targets")
        k0, k1 = int(self.window[0]), int(self.window[1])
        if k0 > k1:
            raise ValueError(f"empty attack window [{k0}, {k1}]")
        if k0 < 0:
            raise ValueError("attack window starts before step 0")
        if not float(self.magnitude_multiplier) > 0:
            raise ValueError("magnitude_multiplier must be > 0")
        if self.waveform not in ATTACK_WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "window", (k0, k1))
        object.__setattr__(self, "magnitude_multiplier", float(self.magnitude_multiplier))


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one simulated run.

    kind "normal" and "malicious" require true_model and assumed_model to
    be entrywise identical; "model_error" requires them to differ, with the
    plant switching from assumed_model to true_model at onset_step.
    """

    kind: str
    true_model: SystemModel
    assumed_model: SystemModel
    x0: np.ndarray
    P0: np.ndarray
    steps: int
    noise_seed: int = 0
    attack: AttackSpec | None = None
    onset_step: int | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.size != self.true_model.n:
            raise ValueError(f"x0 has length {x0.size}, expected {self.true_model.n}")
        P0 = np.array(self.P0, dtype=float)
        if P0.shape != (x0.size, x0.size):
            raise ValueError(f"P0 must be {x0.size}x{x0.size}")
        models_equal = self.true_model.same_matrices(self.assumed_model)
        if self.kind == "model_error":
            if models_equal:
                raise ValueError("model_error scenario requires true and assumed models to differ")
            if self.onset_step is None or not 0 <= self.onset_step < self.steps:
                raise ValueError("model_error scenario needs onset_step in [0, steps)")
        else:
            if not models_equal:
                raise ValueError(f"{self.kind} scenario requires true_model == assumed_model")
            if self.onset_step is not None:
                raise ValueError("onset_step only applies to model_error scenarios")
        if self.kind == "malicious":
            if self.attack is None:
                raise ValueError("malicious scenario needs an AttackSpec")
        elif self.attack is not None:
            raise ValueError(f"{self.kind} scenario must not carry an attack")
        if self.attack is not None:
            m = self.true_model.m
            if self.attack.targets[-1] >= m:
                raise ValueError(f"attack target {self.attack.targets[-1]} out of range for m={m}")
        x0.setflags(write=False)
        P0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "P0", P0)


@dataclass(frozen=True)
class ScenarioRun:
    """Produced trajectories: states (K x n), measurement streams (K x m).

    measurements_delivered == measurements_clean + attack_trace holds
    exactly; model_schedule[k] is 1 where the true (post-onset) model
    generated step k, 0 where the assumed (pre-onset) model did.
    """

    kind: str
    states: np.ndarray
    measurements_clean: np.ndarray
    measurements_delivered: np.ndarray
    attack_trace: np.ndarray
    model_schedule: np.ndarray

    @property
    def steps(self) -> int:
        return self.states.shape[0]

    @property
    def onset_step(self) -> int | None:
        """First step generated by the true model, if a switch happened."""
        switched = np.flatnonzero(self.model_schedule == 1)
        if switched.size and switched.size != self.model_schedule.size:
            return int(switched[0])
        return None

    @property
    def attack_window(self) -> tuple[int, int] | None:
        rows = np.flatnonzero(np.any(self.attack_trace != 0.0, axis=1))
        if rows.size == 0:
            return None
        return int(rows[0]), int(rows[-1])


def simulate_trajectory(
    model: SystemModel, x0: np.ndarray, K: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate K steps of x(k+1) = A x(k) + w, z(k) = H x(k) + v.

    x(0) = x0 exactly. Noise is drawn from a seeded generator through the
    covariance square roots (Cholesky, eigendecomposition fallback for
    singular PSD), one measurement draw then one process draw per step, so
    runs with equal seeds share noise realizations step by step.
    """
    return _simulate(model, model, 0, x0, K, seed)


def _simulate(
    pre_model: SystemModel,
    post_model: SystemModel,
    switch_step: int,
    x0: np.ndarray,
    K: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    if K < 1:
        raise ValueError("K must be >= 1")
    x0 = np.array(x0, dtype=float).reshape(-1)
    n, m = pre_model.n, pre_model.m
    if (post_model.n, post_model.m) != (n, m):
        raise ValueError("pre and post models must share dimensions")
    if x0.size != n:
        raise ValueError(f"x0 has length {x0.size}, expected {n}")
    roots = {id(pre_model): (cov_sqrt(pre_model.Q, "Q"), cov_sqrt(pre_model.R, "R"))}
    if id(post_model) not in roots:
        roots[id(post_model)] = (cov_sqrt(post_model.Q, "Q"), cov_sqrt(post_model.R, "R"))
    rng = np.random.default_rng(seed)
    states = np.empty((K, n))
    meas = np.empty((K, m))
    x = x0.copy()
    for k in range(K):
        mod = post_model if k >= switch_step else pre_model
        Lq, Lr = roots[id(mod)]
        states[k] = x
        meas[k] = mod.H @ x + Lr @ rng.standard_normal(m)
        if k + 1 < K:
            x = mod.A @ x + Lq @ rng.standard_normal(n)
    return states, meas


def inject_attack(
    measurements: np.ndarray, spec: AttackSpec, R: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Apply an attack to a measurement stream; returns (modified, trace)."""
    measurements = np.asarray(measurements, dtype=float)
    K, m = measurements.shape
    if spec.targets[-1] >= m:
        raise ValueError(f"attack target {spec.targets[-1]} out of range for m={m}")
    k0, k1 = spec.window
    k1 = min(k1, K - 1)
    trace = np.zeros_like(measurements)
    if k0 <= k1:
        rng = np.random.default_rng(spec.seed)
        width = k1 - k0 + 1
        for t in spec.targets:
            scale = spec.magnitude_multiplier * float(np.sqrt(R[t, t]))
            if spec.waveform == "gaussian":
                trace[k0 : k1 + 1, t] = scale * rng.standard_normal(width)
            else:
                trace[k0 : k1 + 1, t] = scale
    return measurements + trace, trace


def run_scenario(spec: ScenarioSpec) -> ScenarioRun:
    """Generate the trajectories described by a :class:`ScenarioSpec`."""
    K = spec.steps
    if spec.kind == "model_error":
        switch = spec.onset_step
        states, clean = _simulate(spec.assumed_model, spec.true_model, switch, spec.x0, K, spec.noise_seed)
        schedule = np.zeros(K, dtype=np.int8)
        schedule[switch:] = 1
    else:
        states, clean = _simulate(spec.true_model, spec.true_model, 0, spec.x0, K, spec.noise_seed)
        schedule = np.ones(K, dtype=np.int8)
    if spec.kind == "malicious":
        delivered, trace = inject_attack(clean, spec.attack, spec.true_model.R)
    else:
        delivered = clean.copy()
        trace = np.zeros_like(clean)
    return ScenarioRun(
        kind=spec.kind,
        states=states,
        measurements_clean=clean,
        measurements_delivered=delivered,
        attack_trace=trace,
        model_schedule=schedule,
    )


# ---------------------------------------------------------------------------
# CSV round-trip: one row per step with the full run, and a measurements-only
# stream for feeding external estimators / the replay interface.
# ---------------------------------------------------------------------------


def run_to_csv(run: ScenarioRun, path, header_comment: str | None = None) -> None:
    """Write a run as CSV: k, x_*, zc_* (clean), zd_* (delivered), a_* (attack)."""
    n = run.states.shape[1]
    m = run.measurements_clean.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["k"]
            + [f"x_{i}" for i in range(n)]
            + [f"zc_{j}" for j in range(m)]
            + [f"zd_{j}" for j in range(m)]
            + [f"a_{j}" for j in range(m)]
            + ["model"]
        )
        for k in range(run.steps):
            writer.writerow(
                [k]
                + [repr(v) for v in run.states[k]]
                + [repr(v) for v in run.measurements_clean[k]]
                + [repr(v) for v in run.measurements_delivered[k]]
                + [repr(v) for v in run.attack_trace[k]]
                + [int(run.model_schedule[k])]
            )


def run_from_csv(path, kind: str = "normal") -> ScenarioRun:
    """Reconstruct a run written by :func:`run_to_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(ln for ln in fh if not ln.startswith("#"))]
    header, data = rows[0], rows[1:]
    n = sum(1 for c in header if c.startswith("x_"))
    m = sum(1 for c in header if c.startswith("zc_"))
    K = len(data)
    states = np.empty((K, n))
    clean = np.empty((K, m))
    delivered = np.empty((K, m))
    trace = np.empty((K, m))
    schedule = np.empty(K, dtype=np.int8)
    for i, row in enumerate(data):
        vals = [float(v) for v in row[1 : 1 + n + 3 * m]]
        states[i] = vals[:n]
        clean[i] = vals[n : n + m]
        delivered[i] = vals[n + m : n + 2 * m]
        trace[i] = vals[n + 2 * m :]
        schedule[i] = int(row[1 + n + 3 * m])
    return ScenarioRun(
        kind=kind,
        states=states,
        measurements_clean=clean,
        measurements_delivered=delivered,
        attack_trace=trace,
        model_schedule=schedule,
    )


def measurements_to_csv(
    run: ScenarioRun, path, labels: tuple[str, ...] | None = None, header_comment: str | None = None
) -> None:
    """Write only the delivered measurement stream (header row names channels)."""
    m = run.measurements_delivered.shape[1]
    labels = labels or tuple(f"z{j}" for j in range(m))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(labels)
        for k in range(run.steps):
            writer.writerow([repr(v) for v in run.measurements_delivered[k]])
