"""
Unitary evolution.

Grid states are propagated with the second-order split-operator scheme
(half kinetic step in momentum space, full potential step, half kinetic
step).  The grid is periodic, so packets should stay well away from the
edges.  Finite-dimensional states are evolved exactly by diagonalizing H.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .hilbert import FiniteKet, GridWavefunction, norm
from .rng import stream

POTENTIAL_KINDS = ("free", "harmonic", "double_well", "tabulated")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """External potential in internal units (hbar = 1).

    * ``free``: V = 0
    * ``harmonic``: V = sum_k m_k omega^2 q_k^2 / 2
    * ``double_well``: V = sum_k depth * ((q_k / a)^2 - 1)^2, minima at +-a
    * ``tabulated``: explicit values on the full configuration grid
    """

    kind: str = "free"
    omega: float = 1.0
    a: float = 1.0
    depth: float = 1.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        for name in ("omega", "a", "depth"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"potential parameter {name} must be finite")
        if self.kind == "double_well" and self.a <= 0:
            raise ValueError("double_well needs a > 0")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated potential needs a table")
            table = np.array(self.table, dtype=float)
            if not np.all(np.isfinite(table)):
                raise ValueError("tabulated potential must be finite")
            table.setflags(write=False)
            object.__setattr__(self, "table", table)

    @classmethod
    def free(cls) -> "PotentialSpec":
        return cls("free")

    @classmethod
    def harmonic(cls, omega: float) -> "PotentialSpec":
        return cls("harmonic", omega=omega)

    @classmethod
    def double_well(cls, a: float, depth: float) -> "PotentialSpec":
        return cls("double_well", a=a, depth=depth)

    @classmethod
    def tabulated(cls, table) -> "PotentialSpec":
        return cls("tabulated", table=table)

    def on_grid(self, psi: GridWavefunction) -> np.ndarray:
        shape = psi.amplitudes.shape
        if self.kind == "free":
            return np.zeros(shape)
        if self.kind == "tabulated":
            if self.table.shape != shape:
                raise ValueError(f"tabulated potential shape {self.table.shape} != grid {shape}")
            return self.table
        V = np.zeros(shape)
        for k in range(psi.n_particles):
            q = psi.axis(k)
            if self.kind == "harmonic":
                vk = 0.5 * psi.masses[k] * self.omega ** 2 * q ** 2
            else:
                vk = self.depth * ((q / self.a) ** 2 - 1.0) ** 2
            V = V + vk.reshape([-1 if a == k else 1 for a in range(psi.n_particles)])
        return V


def wavenumbers(psi: GridWavefunction, k: int) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(psi.points_per_axis, d=psi.spacings[k])


def kinetic_energy_grid(psi: GridWavefunction) -> np.ndarray:
    """sum_k p_k^2 / (2 m_k) on the FFT momentum grid."""
    n = psi.n_particles
    T = np.zeros(psi.amplitudes.shape)
    for k in range(n):
        kk = wavenumbers(psi, k)
        T = T + (kk ** 2 / (2.0 * psi.masses[k])).reshape([-1 if a == k else 1 for a in range(n)])
    return T


class SplitOperator:
    """Precomputed Strang-splitting propagator for fixed (grid, V, dt)."""

    def __init__(self, like: GridWavefunction, potential: PotentialSpec, dt: float):
        V = potential.on_grid(like)
        vmax = float(np.max(np.abs(V))) if V.size else 0.0
        if vmax * abs(dt) > np.pi:
            raise ValueError(
                f"max|V|*dt = {vmax * abs(dt):.3g} exceeds pi; reduce dt below {np.pi / vmax:.3g}")
        self.dt = dt
        self.like = like
        self._half_kinetic = np.exp(-0.5j * dt * kinetic_energy_grid(like))
        self._potential = np.exp(-1j * dt * V)

    def step(self, amps: np.ndarray, steps: int = 1) -> np.ndarray:
        kin = self._half_kinetic
        pot = self._potential
        phi = np.fft.fftn(amps)
        for i in range(steps):
            phi = phi * kin
            phi = np.fft.fftn(np.fft.ifftn(phi) * pot)
            phi = phi * kin
        return np.fft.ifftn(phi)

    def __call__(self, psi: GridWavefunction, steps: int = 1) -> GridWavefunction:
        return psi.with_amplitudes(self.step(psi.amplitudes, steps))


def evolve_grid(psi: GridWavefunction, V: PotentialSpec, dt: float, steps: int) -> GridWavefunction:
    """Propagate ``psi`` by ``steps`` split-operator steps of size ``dt``.

    Negative ``dt`` runs the propagation backwards.
    """
    if not np.isfinite(dt) or steps < 0:
        raise ValueError("dt must be finite and steps non-negative")
    if abs(norm(psi) - 1.0) > 1e-6:
        raise ValueError(f"psi must be normalized (norm = {norm(psi):.12g})")
    if steps == 0:
        return psi
    return SplitOperator(psi, V, dt)(psi, steps)


def evolve_finite(ket: FiniteKet, H, t: float, tol: float = 1e-10) -> FiniteKet:
    """exp(-i H t) |ket> through the eigendecomposition of ``H``."""
    H = np.asarray(H, dtype=complex)
    if H.shape != (ket.dim, ket.dim):
        raise ValueError(f"H has shape {H.shape}, state has dimension {ket.dim}")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol:
        raise ValueError("H is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    return FiniteKet(U @ (np.exp(-1j * w * t) * (U.conj().T @ ket.amplitudes)), ket.labels)


# ---------------------------------------------------------------------------
# measurement apparatus
# ---------------------------------------------------------------------------

# pointer positions: 0 = ready, 1 = "U", 2 = "D", 3.. = other readings
READY, POINTER_U, POINTER_D = 0, 1, 2


@dataclass(frozen=True)
class MeasurementUnitarySpec:
    """Family of system+apparatus unitaries indexed by a hidden parameter alpha.

    Basis ordering is system (2) x pointer (``pointer_positions``) x hidden
    (``hidden_dim``).
    """

    pointer_positions: int = 3
    hidden_dim: int = 4
    error_rate: float = 0.05
    seed: int = 0
    system_dim: int = 2

    def __post_init__(self):
        if self.system_dim != 2:
            raise ValueError("system_dim must be 2")
        if self.pointer_positions < 3:
            raise ValueError("need at least 3 pointer positions (ready, U, D)")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not (0.0 <= self.error_rate < 0.5):
            raise ValueError("error_rate must lie in [0, 0.5)")

    @property
    def apparatus_dim(self) -> int:
        return self.pointer_positions * self.hidden_dim

    @property
    def total_dim(self) -> int:
        return self.system_dim * self.apparatus_dim


@dataclass(frozen=True, eq=False)
class ApparatusDraw:
    """Everything that alpha fixes about one apparatus."""

    target_u: int
    target_d: int
    hidden_unitary: np.ndarray
    hidden_ready: np.ndarray


def apparatus_draw(spec: MeasurementUnitarySpec, alpha: int) -> ApparatusDraw:
    rng = stream(spec.seed, "apparatus", int(alpha))
    K, h = spec.pointer_positions, spec.hidden_dim
    err_u, err_d = rng.random(2) < spec.error_rate
    # wrong readings are drawn from every position except the correct one
    wrong_u = [p for p in range(K) if p != POINTER_U][rng.integers(K - 1)]
    wrong_d = [p for p in range(K) if p != POINTER_D][rng.integers(K - 1)]
    if h == 1:
        W = np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    else:
        W = unitary_group.rvs(h, random_state=rng)
    v = rng.normal(size=h) + 1j * rng.normal(size=h)
    return ApparatusDraw(
        target_u=int(wrong_u if err_u else POINTER_U),
        target_d=int(wrong_d if err_d else POINTER_D),
        hidden_unitary=W,
        hidden_ready=v / np.linalg.norm(v),
    )


def pointer_shift(K: int, shift: int) -> np.ndarray:
    """Cyclic pointer translation |p> -> |p + shift mod K>."""
    return np.roll(np.eye(K), shift, axis=0)


def ready_state(spec: MeasurementUnitarySpec, alpha: int) -> FiniteKet:
    """|A_R, alpha>: pointer at the ready position, alpha-dependent hidden part."""
    draw = apparatus_draw(spec, alpha)
    ptr = np.zeros(spec.pointer_positions)
    ptr[READY] = 1.0
    return FiniteKet(np.kron(ptr, draw.hidden_ready))


def build_measurement_unitary(spec: MeasurementUnitarySpec, alpha: int) -> np.ndarray:
    """Controlled pointer shift composed with an alpha-seeded hidden-sector unitary.

    The u component moves the pointer from the ready position to U and the
    d component to D, except for apparata whose alpha draws a malfunction
    (probability ``error_rate`` per branch), which land on a wrong reading.
    """
    draw = apparatus_draw(spec, alpha)
    K = spec.pointer_positions
    proj_u = np.diag([1.0, 0.0])
    proj_d = np.diag([0.0, 1.0])
    # cyclic shift by t maps READY (0) to t
    ctrl = (np.kron(proj_u, pointer_shift(K, draw.target_u))
            + np.kron(proj_d, pointer_shift(K, draw.target_d)))
    return np.kron(ctrl, draw.hidden_unitary).astype(complex)
