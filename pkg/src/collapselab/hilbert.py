"""
State representations and Hilbert-space geometry.

Two families of states live here:

* ``GridWavefunction``: amplitudes of n distinguishable particles in 1D,
  sampled on a uniform periodic grid of configuration space.
* ``FiniteKet`` / ``DensityOperator`` / ``WeightedEnsemble``: finite
  dimensional vectors, statistical operators and mixtures used by the
  measurement and decoherence models.

All objects are value-semantic: arrays are copied on construction and
marked read-only, and every operation returns a new object.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Desk-scale memory bound on the total number of configuration-space points.
MAX_GRID_POINTS = 2 ** 24
# Default sector separation tolerance; a convention, not a physical constant.
DEFAULT_ETA = 0.05


class StateSizeError(ValueError):
    """Raised when a composite state would exceed ``MAX_GRID_POINTS``."""


def _frozen(a, dtype=complex):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# grid states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridWavefunction:
    """Wavefunction of ``n`` particles on a uniform periodic 1D grid each.

    ``amplitudes`` has shape ``(points_per_axis,) * n``; axis ``k`` is the
    coordinate of particle ``k``.  Grid points are
    ``x_j = x_min + j * dx`` with ``dx = (x_max - x_min) / points_per_axis``
    (the right endpoint is the periodic image of the left one).
    """

    amplitudes: np.ndarray
    extents: tuple
    masses: tuple

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        ext = tuple((float(a), float(b)) for a, b in self.extents)
        masses = tuple(float(m) for m in np.atleast_1d(self.masses))
        n = amps.ndim
        if n < 1:
            raise ValueError("amplitudes must have at least one axis")
        if len(ext) != n or len(masses) != n:
            raise ValueError(
                f"need one extent and one mass per particle: got {len(ext)} extents, "
                f"{len(masses)} masses for {n} axes")
        npts = amps.shape[0]
        if any(s != npts for s in amps.shape):
            raise ValueError("all axes must share points_per_axis")
        if npts < 16 or npts & (npts - 1):
            raise ValueError(f"points_per_axis must be a power of two >= 16, got {npts}")
        if amps.size > MAX_GRID_POINTS:
            raise StateSizeError(f"{amps.size} grid points exceeds cap {MAX_GRID_POINTS}")
        for lo, hi in ext:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"extent ({lo}, {hi}) must be finite and ordered")
        if any(not (m > 0 and np.isfinite(m)) for m in masses):
            raise ValueError("masses must be positive and finite")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "masses", masses)

    @property
    def n_particles(self) -> int:
        return self.amplitudes.ndim

    @property
    def points_per_axis(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def spacings(self) -> np.ndarray:
        return np.array([(hi - lo) / self.points_per_axis for lo, hi in self.extents])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis(self, k: int = 0) -> np.ndarray:
        lo, hi = self.extents[k]
        return lo + np.arange(self.points_per_axis) * (hi - lo) / self.points_per_axis

    def density(self) -> np.ndarray:
        """|Psi|^2 on the grid (a probability density, not cell weights)."""
        return np.abs(self.amplitudes) ** 2

    def marginal(self, k: int) -> np.ndarray:
        """One-particle position density of particle ``k``."""
        rho = self.density()
        other = tuple(a for a in range(self.n_particles) if a != k)
        if not other:
            return rho
        dv = float(np.prod([self.spacings[a] for a in other]))
        return rho.sum(axis=other) * dv

    def with_amplitudes(self, amps) -> "GridWavefunction":
        return GridWavefunction(amps, self.extents, self.masses)

    def normalize(self) -> "GridWavefunction":
        n = norm(self)
        if n == 0:
            raise ValueError("cannot normalize a zero state")
        return self.with_amplitudes(self.amplitudes / n)


def gaussian_packet(x, center=0.0, width=1.0, k0=0.0):
    """Unnormalized Gaussian with position spread ``width`` (std of |psi|^2)."""
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - center) ** 2) / (4.0 * width ** 2) + 1j * k0 * x)


def grid_state(factors: Sequence[np.ndarray], extents, masses=None) -> GridWavefunction:
    """Normalized product state from per-particle 1D amplitude arrays."""
    amps = factors[0]
    for f in factors[1:]:
        amps = np.multiply.outer(amps, f)
    if masses is None:
        masses = (1.0,) * len(factors)
    return GridWavefunction(amps, extents, masses).normalize()


def gaussian_state(npts, extent, center=0.0, width=1.0, k0=0.0, mass=1.0) -> GridWavefunction:
    """Single-particle normalized Gaussian packet on ``[extent[0], extent[1])``."""
    lo, hi = extent
    x = lo + np.arange(npts) * (hi - lo) / npts
    return grid_state([gaussian_packet(x, center, width, k0)], [extent], [mass])


# ---------------------------------------------------------------------------
# finite-dimensional states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteKet:
    amplitudes: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size == 0:
            raise ValueError("FiniteKet needs a non-empty 1D amplitude vector")
        if amps.size > MAX_GRID_POINTS:
            raise StateSizeError(f"dimension {amps.size} exceeds cap {MAX_GRID_POINTS}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != amps.size:
                raise ValueError("one label per basis vector required")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(norm(self) - 1.0) <= tol

    def normalize(self) -> "FiniteKet":
        n = norm(self)
        if n == 0:
            raise ValueError("cannot normalize a zero vector")
        return FiniteKet(self.amplitudes / n, self.labels)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __add__(self, other: "FiniteKet") -> "FiniteKet":
        return FiniteKet(self.amplitudes + other.amplitudes)

    def __sub__(self, other: "FiniteKet") -> "FiniteKet":
        return FiniteKet(self.amplitudes - other.amplitudes)

    def __mul__(self, c) -> "FiniteKet":
        return FiniteKet(self.amplitudes * c, self.labels)

    __rmul__ = __mul__


def basis_ket(dim: int, index: int) -> FiniteKet:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return FiniteKet(v)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density operator must be a square matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def check(self, herm_tol=1e-12, pos_tol=1e-10, trace_tol=1e-12) -> None:
        """Raise ``ValueError`` unless Hermitian, positive and of unit trace."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            raise ValueError("density operator is not Hermitian")
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace()} differs from 1")
        if self.eigenvalues().min() < -pos_tol:
            raise ValueError("density operator has negative eigenvalues")

    @classmethod
    def from_ket(cls, ket: FiniteKet) -> "DensityOperator":
        return cls(ket.projector())


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Statistical ensemble of pure states with probability weights."""

    members: tuple

    def __post_init__(self):
        members = tuple((m[0], float(m[1])) for m in self.members)
        if not members:
            raise ValueError("ensemble is empty")
        weights = np.array([w for _, w in members])
        if np.any(weights < 0):
            raise ValueError("ensemble weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights sum to {weights.sum()}, not 1")
        dims = {k.dim for k, _ in members}
        if len(dims) != 1:
            raise ValueError("ensemble members live in different spaces")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_lists(cls, kets, weights) -> "WeightedEnsemble":
        return cls(tuple(zip(kets, weights)))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _vector(psi) -> np.ndarray:
    if isinstance(psi, (FiniteKet, GridWavefunction)):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex)


def norm(psi) -> float:
    """L2 norm; grid states include the cell-volume weight."""
    if isinstance(psi, GridWavefunction):
        return float(np.sqrt(np.sum(psi.density()) * psi.cell_volume))
    v = _vector(psi)
    if v.size == 0:
        raise ValueError("empty state")
    return float(np.linalg.norm(v))


def inner(a, b) -> complex:
    """<a|b>, with the grid measure for grid states."""
    va, vb = _vector(a), _vector(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    w = a.cell_volume if isinstance(a, GridWavefunction) else 1.0
    return complex(np.vdot(va, vb) * w)


def vec_distance(a, b) -> float:
    """Hilbert-space distance ||a - b|| between two states of the same space."""
    va, vb = _vector(a), _vector(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    if isinstance(a, GridWavefunction):
        return float(np.sqrt(np.sum(np.abs(va - vb) ** 2) * a.cell_volume))
    return float(np.linalg.norm(va - vb))


def tensor(a, b, cap: int = MAX_GRID_POINTS):
    """Kronecker product of kets or density operators."""
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        if a.dim * b.dim > cap:
            raise StateSizeError(f"composite dimension {a.dim * b.dim} exceeds cap {cap}")
        return DensityOperator(np.kron(a.matrix, b.matrix))
    va, vb = _vector(a), _vector(b)
    if va.size * vb.size > cap:
        raise StateSizeError(f"composite dimension {va.size * vb.size} exceeds cap {cap}")
    labels = None
    if isinstance(a, FiniteKet) and isinstance(b, FiniteKet) and a.labels and b.labels:
        labels = tuple(f"{x},{y}" for x in a.labels for y in b.labels)
    return FiniteKet(np.kron(va, vb), labels)


def partial_trace(rho, partition: Sequence[int], keep) -> DensityOperator:
    """Trace out every subsystem of ``partition`` not listed in ``keep``.

    ``rho`` may be a ``DensityOperator`` or a pure ``FiniteKet``; for a ket
    the reduced operator is built without forming the full projector.
    """
    dims = [int(d) for d in partition]
    if any(d < 1 for d in dims):
        raise ValueError(f"bad partition {dims}")
    keep = sorted({int(k) for k in np.atleast_1d(keep)})
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    traced = [k for k in range(len(dims)) if k not in keep]
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    total = int(np.prod(dims))

    if isinstance(rho, FiniteKet):
        if rho.dim != total:
            raise ValueError(f"partition {dims} does not match dimension {rho.dim}")
        psi = rho.amplitudes.reshape(dims).transpose(keep + traced).reshape(d_keep, -1)
        return DensityOperator(psi @ psi.conj().T)

    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    if m.shape != (total, total):
        raise ValueError(f"partition {dims} does not match dimension {m.shape[0]}")
    n = len(dims)
    t = m.reshape(dims + dims)
    perm = keep + traced
    t = t.transpose(perm + [p + n for p in perm])
    d_tr = total // d_keep
    t = t.reshape(d_keep, d_tr, d_keep, d_tr)
    return DensityOperator(np.einsum("ajbj->ab", t))


def ensemble_to_operator(ens: WeightedEnsemble, tol: float = 1e-12) -> DensityOperator:
    """sum_k w_k |psi_k><psi_k|."""
    dim = ens.members[0][0].dim
    out = np.zeros((dim, dim), dtype=complex)
    for ket, w in ens.members:
        if not ket.is_normalized(tol):
            raise ValueError(f"ensemble member has norm {norm(ket)}, expected 1")
        out += w * ket.projector()
    return DensityOperator(out)


def operator_distance(r1, r2) -> float:
    """Trace distance (1/2)||r1 - r2||_1."""
    m1 = r1.matrix if isinstance(r1, DensityOperator) else np.asarray(r1)
    m2 = r2.matrix if isinstance(r2, DensityOperator) else np.asarray(r2)
    if m1.shape != m2.shape:
        raise ValueError(f"dimension mismatch: {m1.shape} vs {m2.shape}")
    d = m1 - m2
    ev = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
    return float(0.5 * np.sum(np.abs(ev)))
