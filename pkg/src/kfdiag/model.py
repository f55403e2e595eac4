"""Discrete-time LTI system models and builders.

A :class:`SystemModel` is the quadruple (A, H, Q, R): state transition,
measurement map, process-noise covariance and measurement-noise covariance.
Two builders are provided: a seeded random stable system, and a linearized
swing-dynamics model of a small power grid (generators coupled through line
susceptances) discretized by exact matrix exponential.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .linalg import check_pd, check_psd, spectral_radius as matrix_spectral_radius

#: quantities a grid measurement can select
MEAS_QUANTITIES = ("angle", "frequency")


@dataclass(frozen=True)
class SystemModel:
    """Immutable LTI model x(k+1) = A x(k) + w, z(k) = H x(k) + v.

    Q is the covariance of w (symmetric PSD), R the covariance of v
    (symmetric PD). Arrays are copied, validated and frozen on construction,
    so models can be shared freely across concurrent workers.
    """

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    state_labels: tuple[str, ...] = ()
    meas_labels: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        H = np.array(self.H, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if H.ndim != 2 or H.shape[1] != n:
            raise ValueError(f"H must have {n} columns, got shape {H.shape}")
        m = H.shape[0]
        Q = check_psd(np.array(self.Q, dtype=float), "Q")
        R = check_pd(np.array(self.R, dtype=float), "R")
        if Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise ValueError(f"R must be {m}x{m}, got {R.shape}")
        state_labels = tuple(self.state_labels) or tuple(f"x{i}" for i in range(n))
        meas_labels = tuple(self.meas_labels) or tuple(f"z{i}" for i in range(m))
        if len(state_labels) != n:
            raise ValueError(f"expected {n} state labels, got {len(state_labels)}")
        if len(meas_labels) != m:
            raise ValueError(f"expected {m} measurement labels, got {len(meas_labels)}")
        for arr in (A, H, Q, R):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "state_labels", state_labels)
        object.__setattr__(self, "meas_labels", meas_labels)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def same_matrices(self, other: "SystemModel", tol: float = 0.0) -> bool:
        """Entrywise comparison of (A, H, Q, R) against another model."""
        if (self.n, self.m) != (other.n, other.m):
            return False
        return all(
            np.max(np.abs(a - b), initial=0.0) <= tol
            for a, b in ((self.A, other.A), (self.H, other.H), (self.Q, other.Q), (self.R, other.R))
        )


@dataclass(frozen=True)
class GridTopology:
    """Buses, lines and generators of a small grid plus the sample time.

    lines are (bus_i, bus_j, susceptance) tuples with susceptance in
    per-unit; susceptance 0 represents an open (removed) line. generators
    are (bus, inertia, damping) tuples. Buses without a generator are
    treated as fixed-angle stiff nodes: a line from a generator to such a
    bus contributes pure diagonal synchronizing stiffness.
    """

    buses: tuple
    lines: tuple
    generators: tuple
    dt: float

    def __post_init__(self):
        buses = tuple(self.buses)
        if not buses:
            raise ValueError("topology needs at least one bus")
        if len(set(buses)) != len(buses):
            raise ValueError("duplicate bus ids")
        bus_set = set(buses)
        lines = []
        for bus_i, bus_j, b in self.lines:
            if bus_i == bus_j:
                raise ValueError(f"self-loop line at bus {bus_i}")
            if bus_i not in bus_set or bus_j not in bus_set:
                raise ValueError(f"line ({bus_i}, {bus_j}) references unknown bus")
            b = float(b)
            if b < 0:
                raise ValueError(f"line ({bus_i}, {bus_j}) has negative susceptance {b}")
            lines.append((bus_i, bus_j, b))
        generators = []
        for bus, inertia, damping in self.generators:
            if bus not in bus_set:
                raise ValueError(f"generator at unknown bus {bus}")
            inertia, damping = float(inertia), float(damping)
            if inertia <= 0:
                raise ValueError(f"generator at bus {bus} has non-positive inertia")
            if damping < 0:
                raise ValueError(f"generator at bus {bus} has negative damping")
            generators.append((bus, inertia, damping))
        if len({g[0] for g in generators}) != len(generators):
            raise ValueError("more than one generator on the same bus")
        if not float(self.dt) > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", tuple(lines))
        object.__setattr__(self, "generators", tuple(generators))
        object.__setattr__(self, "dt", float(self.dt))

    def line_index(self, bus_i, bus_j) -> int:
        """Index of the line between two buses, in either endpoint order."""
        key = {bus_i, bus_j}
        for idx, (a, b, _) in enumerate(self.lines):
            if {a, b} == key:
                return idx
        raise ValueError(f"no line between buses {bus_i} and {bus_j}")

    def with_line_susceptance(self, bus_i, bus_j, susceptance: float) -> "GridTopology":
        """Copy of the topology with one line's susceptance replaced."""
        idx = self.line_index(bus_i, bus_j)
        lines = list(self.lines)
        lines[idx] = (lines[idx][0], lines[idx][1], float(susceptance))
        return GridTopology(self.buses, tuple(lines), self.generators, self.dt)

    @property
    def gen_buses(self) -> tuple:
        return tuple(g[0] for g in self.generators)


def make_random_stable_system(
    n: int,
    m: int,
    spectral_radius: float,
    noise_scales: tuple[float, float] = (1e-4, 1e-2),
    seed: int = 0,
) -> SystemModel:
    """Seeded random system with A rescaled to the requested spectral radius.

    A is a standard-normal draw rescaled so its spectral radius equals
    ``spectral_radius`` exactly; H is a standard-normal m x n map;
    Q = q I and R = r I with (q, r) = noise_scales. Deterministic per seed.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    if not 0.0 < spectral_radius < 1.0:
        raise ValueError("spectral_radius must lie in (0, 1)")
    q, r = float(noise_scales[0]), float(noise_scales[1])
    if q < 0:
        raise ValueError("process noise scale q must be >= 0")
    if r <= 0:
        raise ValueError("measurement noise scale r must be > 0")
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((n, n))
        rho = matrix_spectral_radius(A)
        if rho > 0:
            break
    A *= spectral_radius / rho
    H = rng.standard_normal((m, n))
    return SystemModel(A=A, H=H, Q=q * np.eye(n), R=r * np.eye(m))


def _swing_jacobian(topology: GridTopology) -> np.ndarray:
    """Continuous-time Jacobian of the linearized swing dynamics.

    Per generator i: d(delta_i)/dt = omega_i and
    M_i d(omega_i)/dt = -D_i omega_i - sum_j b_ij (delta_i - delta_j),
    with b_ij the total susceptance of lines between the buses of
    generators i and j. Lines to non-generator buses add diagonal
    stiffness (the far end is held at fixed angle). State ordering is
    [delta_1..delta_g, omega_1..omega_g] in generator listing order.
    """
    gens = topology.generators
    g = len(gens)
    if g == 0:
        raise ValueError("topology has no generators")
    bus_to_gen = {bus: i for i, (bus, _, _) in enumerate(gens)}
    K = np.zeros((g, g))
    coupled = np.zeros((g, g), dtype=bool)
    for bus_i, bus_j, b in topology.lines:
        gi, gj = bus_to_gen.get(bus_i), bus_to_gen.get(bus_j)
        if gi is not None and gj is not None:
            K[gi, gi] += b
            K[gj, gj] += b
            K[gi, gj] -= b
            K[gj, gi] -= b
            if b > 0:
                coupled[gi, gj] = coupled[gj, gi] = True
        elif gi is not None:
            K[gi, gi] += b
        elif gj is not None:
            K[gj, gj] += b
    if g > 1 and not _connected(coupled):
        warnings.warn("generator coupling graph is disconnected", stacklevel=3)
    M_inv = np.diag([1.0 / M for _, M, _ in gens])
    D = np.diag([D for _, _, D in gens])
    J = np.zeros((2 * g, 2 * g))
    J[:g, g:] = np.eye(g)
    J[g:, :g] = -M_inv @ K
    J[g:, g:] = -M_inv @ D
    return J


def _connected(adjacency: np.ndarray) -> bool:
    g = adjacency.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(adjacency[i]):
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    return len(seen) == g


def make_swing_grid_model(
    topology: GridTopology,
    meas_selection: list[tuple],
    noise_scales: tuple[float, float] = (1e-6, 1e-4),
) -> SystemModel:
    """Linearized swing-dynamics model with selector measurements.

    The continuous Jacobian (see :func:`_swing_jacobian`) is discretized
    by scipy's matrix exponential (scaling-and-squaring Pade) over
    ``topology.dt``. Each entry of meas_selection is (bus, quantity) with
    quantity "angle" or "frequency"; the measured bus must host a
    generator. Q = q I and R = r I with (q, r) = noise_scales.
    """
    J = _swing_jacobian(topology)
    gens = topology.generators
    g = len(gens)
    bus_to_gen = {bus: i for i, (bus, _, _) in enumerate(gens)}
    if not meas_selection:
        raise ValueError("meas_selection must name at least one measurement")
    H = np.zeros((len(meas_selection), 2 * g))
    meas_labels = []
    for row, (bus, quantity) in enumerate(meas_selection):
        if quantity not in MEAS_QUANTITIES:
            raise ValueError(f"unknown measured quantity {quantity!r}")
        if bus not in bus_to_gen:
            raise ValueError(f"measured bus {bus} does not host a generator")
        col = bus_to_gen[bus] + (0 if quantity == "angle" else g)
        H[row, col] = 1.0
        meas_labels.append(f"{quantity}_{bus}")
    q, r = float(noise_scales[0]), float(noise_scales[1])
    if q < 0 or r <= 0:
        raise ValueError("need process noise >= 0 and measurement noise > 0")
    A = expm(J * topology.dt)
    state_labels = tuple(f"delta_{bus}" for bus, _, _ in gens) + tuple(
        f"omega_{bus}" for bus, _, _ in gens
    )
    return SystemModel(
        A=A,
        H=H,
        Q=q * np.eye(2 * g),
        R=r * np.eye(len(meas_selection)),
        state_labels=state_labels,
        meas_labels=tuple(meas_labels),
    )


def apply_topology_error(
    model: SystemModel, topology: GridTopology, removed_line: tuple
) -> SystemModel:
    """Post-fault model: the given line is opened, everything else kept.

    Rebuilds A from the topology with the line's susceptance set to 0;
    H, Q, R and labels are taken unchanged from ``model`` (selector
    measurements do not move with a line trip). Opening an already-open
    line returns an identical model.
    """
    bus_i, bus_j = removed_line
    faulted = topology.with_line_susceptance(bus_i, bus_j, 0.0)
    if model.n != 2 * len(topology.generators):
        raise ValueError(
            f"model has {model.n} states but topology implies {2 * len(topology.generators)}"
        )
    A = expm(_swing_jacobian(faulted) * faulted.dt)
    return SystemModel(
        A=A,
        H=model.H,
        Q=model.Q,
        R=model.R,
        state_labels=model.state_labels,
        meas_labels=model.meas_labels,
    )


# ---------------------------------------------------------------------------
# Plain-text model format: header "n m", then the A, H, Q, R blocks row-major,
# blocks separated by a blank line. Lines starting with '#' are comments.
# ---------------------------------------------------------------------------


def dump_model_text(model: SystemModel) -> str:
    """Serialize a model to the plain-text matrix format."""

    def block(M: np.ndarray) -> str:
        return "\n".join(" ".join(format(v, ".17g") for v in row) for row in M)

    parts = [f"{model.n} {model.m}", block(model.A), "", block(model.H), "", block(model.Q), "", block(model.R)]
    return "\n".join(parts) + "\n"


def parse_model_text(text: str) -> SystemModel:
    """Parse the plain-text matrix format produced by :func:`dump_model_text`."""
    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("#")]
    blocks: list[list[str]] = [[]]
    for ln in lines:
        if ln.strip():
            blocks[-1].append(ln)
        elif blocks[-1]:
            blocks.append([])
    if blocks and not blocks[-1]:
        blocks.pop()
    if not blocks or len(blocks[0]) < 1:
        raise ValueError("model text is empty")
    header = blocks[0][0].split()
    if len(header) != 2:
        raise ValueError(f"expected header 'n m', got {blocks[0][0]!r}")
    n, m = int(header[0]), int(header[1])
    rows = blocks[0][1:]
    for extra in blocks[1:]:
        rows.extend(extra)
    expected = 2 * n + 2 * m
    if len(rows) != expected:
        raise ValueError(f"expected {expected} matrix rows for n={n}, m={m}, got {len(rows)}")

    def take(count: int, width: int, start: int) -> np.ndarray:
        out = np.empty((count, width))
        for i in range(count):
            vals = rows[start + i].split()
            if len(vals) != width:
                raise ValueError(f"matrix row {start + i + 1} has {len(vals)} values, expected {width}")
            out[i] = [float(v) for v in vals]
        return out

    A = take(n, n, 0)
    H = take(m, n, n)
    Q = take(n, n, n + m)
    R = take(m, m, 2 * n + m)
    return SystemModel(A=A, H=H, Q=Q, R=R)


def write_model(model: SystemModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_model_text(model))


def read_model(path) -> SystemModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_model_text(fh.read())
    except FileNotFoundError:
        raise FileNotFoundError(f"model file not found: {path}") from None
