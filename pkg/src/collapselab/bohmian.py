"""
Bohmian trajectories guided by a co-evolving grid wavefunction.

Velocities follow v_k = (hbar / m_k) Im[psi* d_k psi] / |psi|^2 = (1/m_k) d_k S,
with S the phase of psi.  On the grid the phase gradient is taken as a
centered difference of the phase, angle(psi[j+1] conj(psi[j-1])) / (2 dx),
which is second order in general and exact for plane waves and for
quadratic phases.  Values are interpolated multilinearly between grid
points.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from .evolver import PotentialSpec, SplitOperator
from .hilbert import GridWavefunction
from .rng import as_generator

NODE_FLOOR = 1e-12       # relative to peak density
STALL_WARN_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    positions: np.ndarray      # (M, n)
    time: float = 0.0
    seed: int | None = None
    stalls: int = 0            # velocity evaluations that touched a node cell
    evaluations: int = 0
    clamped: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.shape[0] < 1:
            raise ValueError("need at least one trajectory")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def stall_fraction(self) -> float:
        return self.stalls / self.evaluations if self.evaluations else 0.0


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Per-particle velocities on the grid plus the node mask used for fallback."""

    velocities: tuple
    nodes: np.ndarray
    axes: tuple


def velocity_grid(psi: GridWavefunction, node_floor: float = NODE_FLOOR) -> VelocityGrid:
    amps = psi.amplitudes
    rho = np.abs(amps) ** 2
    nodes = rho < node_floor * rho.max()
    vels = []
    for k in range(psi.n_particles):
        fwd = np.roll(amps, -1, axis=k)
        bwd = np.roll(amps, 1, axis=k)
        v = np.angle(fwd * np.conj(bwd)) / (2.0 * psi.spacings[k] * psi.masses[k])
        vels.append(v)
    if nodes.any() and not nodes.all():
        # velocity at a node cell is taken from the nearest above-floor cell
        idx = ndimage.distance_transform_edt(nodes, return_distances=False, return_indices=True)
        vels = [v[tuple(idx)] for v in vels]
    return VelocityGrid(tuple(vels), nodes, tuple(psi.axis(k) for k in range(psi.n_particles)))


def _interp(vg: VelocityGrid, Q: np.ndarray):
    """Multilinear interpolation of all velocity components at points Q (M, n)."""
    M, n = Q.shape
    if n == 1:
        x = vg.axes[0]
        v = np.interp(Q[:, 0], x, vg.velocities[0])[:, None]
        dx = x[1] - x[0]
        j = np.clip(((Q[:, 0] - x[0]) // dx).astype(int), 0, len(x) - 1)
        touched = vg.nodes[j] | vg.nodes[np.minimum(j + 1, len(x) - 1)]
        return v, touched
    lo_idx, frac = [], []
    for k in range(n):
        x = vg.axes[k]
        dx = x[1] - x[0]
        s = np.clip((Q[:, k] - x[0]) / dx, 0.0, len(x) - 1.0)
        j = np.minimum(np.floor(s).astype(int), len(x) - 2)
        lo_idx.append(j)
        frac.append(s - j)
    out = np.zeros((M, n))
    touched = np.zeros(M, dtype=bool)
    for corner in range(2 ** n):
        bits = [(corner >> k) & 1 for k in range(n)]
        w = np.ones(M)
        idx = []
        for k, b in enumerate(bits):
            w *= frac[k] if b else 1.0 - frac[k]
            idx.append(lo_idx[k] + b)
        idx = tuple(idx)
        touched |= vg.nodes[idx]
        for k in range(n):
            out[:, k] += w * vg.velocities[k][idx]
    return out, touched


def velocity_field(psi: GridWavefunction, Q) -> np.ndarray:
    """Guidance velocity at configuration point(s) Q; shape matches Q."""
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    pts = Q.reshape(1, -1) if single else Q
    if pts.shape[1] != psi.n_particles:
        raise ValueError(f"Q has {pts.shape[1]} coordinates, psi has {psi.n_particles} particles")
    v, _ = _interp(velocity_grid(psi), pts)
    return v[0] if single else v


# ---------------------------------------------------------------------------
# sampling and the reference distribution
# ---------------------------------------------------------------------------

def _cell_probabilities(p: np.ndarray) -> np.ndarray:
    s = p.sum(axis=-1, keepdims=True)
    return np.divide(p, s, out=np.full_like(p, 1.0 / p.shape[-1]), where=s > 0)


def sample_initial_positions(psi: GridWavefunction, M: int, seed) -> TrajectoryEnsemble:
    """M i.i.d. configurations from |psi|^2, cell-uniform within grid cells.

    Particle 0 is drawn from its marginal, then each following particle from
    its conditional given the cells already chosen.
    """
    rng = as_generator(seed, "bohm-init")
    n = psi.n_particles
    P = psi.density()
    cells = np.zeros((M, n), dtype=int)
    for k in range(n):
        # joint weight of (axes 0..k), summed over later axes
        Pk = P.sum(axis=tuple(range(k + 1, n))) if k + 1 < n else P
        u = rng.random(M)
        if k == 0:
            j = np.searchsorted(np.cumsum(_cell_probabilities(Pk)), u, side="left")
        else:
            rows = Pk[tuple(cells[:, a] for a in range(k))]
            cdf = np.cumsum(_cell_probabilities(rows), axis=-1)
            j = (cdf < u[:, None]).sum(axis=-1)
        cells[:, k] = np.minimum(j, psi.points_per_axis - 1)
    jitter = rng.random((M, n)) - 0.5
    pos = np.empty((M, n))
    for k in range(n):
        pos[:, k] = psi.axis(k)[cells[:, k]] + jitter[:, k] * psi.spacings[k]
    return TrajectoryEnsemble(pos, 0.0, seed if isinstance(seed, int) else None)


def marginal_cdf(psi: GridWavefunction, k: int = 0):
    """CDF of particle k's position for the cell-constant density."""
    x = psi.axis(k)
    dx = psi.spacings[k]
    w = psi.marginal(k) * dx
    w = w / w.sum()
    edges = np.concatenate([x - 0.5 * dx, [x[-1] + 0.5 * dx]])
    F = np.concatenate([[0.0], np.cumsum(w)])
    return lambda q: np.interp(q, edges, F)


def ks_statistic(samples, cdf) -> float:
    return float(stats.kstest(np.asarray(samples), cdf).statistic)


def equivariance_statistic(ens: TrajectoryEnsemble, psi_t: GridWavefunction) -> float:
    """Largest per-particle KS distance between trajectories and |psi_t|^2."""
    return max(ks_statistic(ens.positions[:, k], marginal_cdf(psi_t, k))
               for k in range(psi_t.n_particles))


def ks_critical(M: int, c: float = 1.63) -> float:
    """Asymptotic one-sample KS critical value; c = 1.63 is the 1% level."""
    return c / np.sqrt(M)


# ---------------------------------------------------------------------------
# wavefunction sources
# ---------------------------------------------------------------------------

class StaticSource:
    """A wavefunction whose velocity field does not change in time."""

    def __init__(self, psi: GridWavefunction):
        self.psi = psi
        self._vg = velocity_grid(psi)

    def at(self, t: float) -> GridWavefunction:
        return self.psi

    def velocity(self, t: float) -> VelocityGrid:
        return self._vg


class SchrodingerSource:
    """Wavefunction propagated on demand in substeps of ``dt_sub``.

    Snapshots must be requested at (near-)integer multiples of ``dt_sub``
    and in non-decreasing order; only the most recent ones are cached.
    """

    def __init__(self, psi0: GridWavefunction, potential: PotentialSpec, dt_sub: float, keep: int = 3):
        self.dt_sub = dt_sub
        self._prop = SplitOperator(psi0, potential, dt_sub)
        self._index = 0
        self._amps = psi0.amplitudes
        self._like = psi0
        self._keep = keep
        self._cache: dict[int, tuple] = {}

    def _index_of(self, t: float) -> int:
        s = t / self.dt_sub
        i = int(round(s))
        if abs(s - i) > 1e-6:
            raise ValueError(f"t={t} is not on the snapshot lattice dt_sub={self.dt_sub}")
        return i

    def _snapshot(self, i: int):
        if i in self._cache:
            return self._cache[i]
        if i < self._index:
            raise ValueError("snapshots must be requested in time order")
        self._amps = self._prop.step(self._amps, i - self._index)
        self._index = i
        psi = self._like.with_amplitudes(self._amps)
        entry = (psi, velocity_grid(psi))
        self._cache[i] = entry
        for old in [j for j in self._cache if j < i - self._keep]:
            del self._cache[old]
        return entry

    def at(self, t: float) -> GridWavefunction:
        return self._snapshot(self._index_of(t))[0]

    def velocity(self, t: float) -> VelocityGrid:
        return self._snapshot(self._index_of(t))[1]


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def advance_trajectories(ens: TrajectoryEnsemble, source, dt: float, steps: int,
                         warn: bool = True) -> TrajectoryEnsemble:
    """RK4 integration of dQ/dt = v(Q, t) over ``steps`` steps of ``dt``.

    ``source`` supplies velocity grids at t, t + dt/2 and t + dt.
    """
    Q = ens.positions.copy()
    n = Q.shape[1]
    t = ens.time
    stalls, evals, clamped = ens.stalls, ens.evaluations, ens.clamped
    vg0 = source.velocity(t)
    lo = np.array([ax[0] for ax in vg0.axes])
    hi = np.array([ax[-1] for ax in vg0.axes])

    def f(x, tt):
        nonlocal stalls, evals
        v, touched = _interp(source.velocity(tt), x)
        stalls += int(touched.sum())
        evals += x.shape[0]
        return v

    for _ in range(steps):
        k1 = f(Q, t)
        k2 = f(Q + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = f(Q + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = f(Q + dt * k3, t + dt)
        Q = Q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + dt
        out = (Q < lo) | (Q > hi)
        if out.any():
            clamped += int(out.sum())
            Q = np.clip(Q, lo, hi)
    new = TrajectoryEnsemble(Q, t, ens.seed, stalls, evals, clamped)
    if warn:
        _warn_health(new, ens.clamped)
    return new


def _warn_health(ens: TrajectoryEnsemble, clamped_before: int = 0):
    if ens.clamped > clamped_before:
        warnings.warn(f"{ens.clamped - clamped_before} trajectory coordinates clamped at the grid edge")
    if ens.stall_fraction > STALL_WARN_FRACTION:
        warnings.warn(f"node fallback used in {ens.stall_fraction:.2%} of velocity evaluations")


def run_equivariance(psi0: GridWavefunction, potential: PotentialSpec, dt: float,
                     checkpoints, M: int, seed, record: int = 0) -> dict:
    """Sample from |psi0|^2, co-evolve, and KS-test at each checkpoint time.

    Returns checkpoint rows (t, ks, critical), the final ensemble and, when
    ``record`` > 0, the first ``record`` trajectories sampled at every step.
    """
    ens = sample_initial_positions(psi0, M, seed)
    source = SchrodingerSource(psi0, potential, dt / 2.0)
    rows, path, snapshots = [], [], []
    t_now = 0.0
    if record:
        path.append((0.0, ens.positions[:record].copy()))
    for tc in sorted(checkpoints):
        nsteps = int(round((tc - t_now) / dt))
        if abs(nsteps * dt - (tc - t_now)) > 1e-9 * max(1.0, tc):
            raise ValueError(f"checkpoint {tc} is not a multiple of dt={dt}")
        for _ in range(nsteps):
            ens = advance_trajectories(ens, source, dt, 1, warn=False)
            if record:
                path.append((ens.time, ens.positions[:record].copy()))
        t_now = tc
        psi_t = source.at(ens.time)
        rows.append({"t": tc, "ks": equivariance_statistic(ens, psi_t), "critical": ks_critical(M)})
        snapshots.append((tc, psi_t, ens.positions.copy()))
    _warn_health(ens)
    return {"checkpoints": rows, "ensemble": ens, "paths": path, "snapshots": snapshots}


def pointer_model(npts: int = 256, extent: float = 16.0, separation: float = 3.0,
                  c_up: float = np.sqrt(0.7), coupling: float = 0.5,
                  system_width: float = 0.5, pointer_width: float = 1.0,
                  system_mass: float = 20.0):
    """Two-particle system + pointer model.

    The system (particle 0) is in a superposition of packets at
    +-``separation`` with amplitudes (c_up, sqrt(1 - c_up^2)); the pointer
    (particle 1) feels V = -coupling * q_sys * q_ptr, so each system branch
    pushes the pointer in its own direction.  The system is heavy so the
    back-reaction of the pointer on it stays small.
    """
    from .hilbert import gaussian_packet, grid_state
    ext = (-extent, extent)
    x = -extent + np.arange(npts) * 2 * extent / npts
    c_dn = np.sqrt(1.0 - c_up ** 2)
    sys = (c_up * gaussian_packet(x, separation, system_width)
           + c_dn * gaussian_packet(x, -separation, system_width))
    ptr = gaussian_packet(x, 0.0, pointer_width)
    psi = grid_state([sys, ptr], [ext, ext], [system_mass, 1.0])
    V = PotentialSpec.tabulated(-coupling * np.multiply.outer(x, x))
    return psi, V
