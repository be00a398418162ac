"""
GRW spontaneous localization.

Each particle i suffers localizations at the jump times of a Poisson process
of rate lambda_i.  A localization around x multiplies the wavefunction by

    Lambda_i(x) = (pi sigma^2)^(-1/4) exp(-(q_i - x)^2 / (2 sigma^2))

and renormalizes.  The prefactor makes int Lambda_i(x)^2 dx the identity,
so ||Lambda_i(x) Psi||^2 is a probability density for the collapse center.
Distances are taken with the minimum-image convention on the periodic grid.

The ensemble-averaged dynamics is the semigroup

    d rho/dt = -i[H, rho] + lambda (int dx Lambda(x) rho Lambda(x) - rho),

integrated independently by ``grw_master_step`` as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .evolver import PotentialSpec, SplitOperator, kinetic_energy_grid
from .hilbert import GridWavefunction, norm
from .rng import as_generator

# squared-norm floor below which a collapse center is rejected
ZERO_NORM_FLOOR = 1e-300


class CollapseRejected(ValueError):
    """The localization operator annihilated the state (numerically)."""


@dataclass(frozen=True)
class GrwParams:
    lambda_per_nucleon: float
    sigma: float
    mass_proportional: bool = False
    nucleon_mass: float = 1.0

    def __post_init__(self):
        if not self.lambda_per_nucleon >= 0 or not np.isfinite(self.lambda_per_nucleon):
            raise ValueError("lambda must be finite and non-negative")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError("sigma must be positive")
        if self.nucleon_mass <= 0:
            raise ValueError("nucleon_mass must be positive")

    def rates(self, masses) -> np.ndarray:
        m = np.atleast_1d(np.asarray(masses, dtype=float))
        if self.mass_proportional:
            return self.lambda_per_nucleon * m / self.nucleon_mass
        return np.full(m.shape, float(self.lambda_per_nucleon))


@dataclass(frozen=True)
class CollapseEvent:
    t: float
    particle: int
    center: float


@dataclass(frozen=True, eq=False)
class MassDensityField:
    x: np.ndarray
    values: np.ndarray
    time: float = 0.0

    def integral(self) -> float:
        return float(self.values.sum() * (self.x[1] - self.x[0]))


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

def sample_collapse_schedule(params: GrwParams, masses, T: float, seed) -> list[tuple]:
    """Merged, time-sorted (t, particle) jump times on [0, T)."""
    if not T > 0:
        raise ValueError("horizon T must be positive")
    rng = as_generator(seed, "grw-schedule")
    rates = params.rates(masses)
    times, who = [], []
    for i, r in enumerate(rates):
        k = rng.poisson(r * T) if r > 0 else 0
        times.append(rng.uniform(0.0, T, size=k))
        who.append(np.full(k, i))
    t = np.concatenate(times) if times else np.zeros(0)
    p = np.concatenate(who) if who else np.zeros(0, dtype=int)
    order = np.argsort(t, kind="stable")
    return [(float(t[j]), int(p[j])) for j in order]


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------

def periodic_offset(q, x, extent) -> np.ndarray:
    """q - x wrapped into [-L/2, L/2)."""
    L = extent[1] - extent[0]
    return (np.asarray(q) - x + 0.5 * L) % L - 0.5 * L


def localization_profile(psi: GridWavefunction, i: int, x: float, sigma: float) -> np.ndarray:
    """Lambda_i(x) evaluated on particle i's axis."""
    d = periodic_offset(psi.axis(i), x, psi.extents[i])
    return (np.pi * sigma ** 2) ** -0.25 * np.exp(-d ** 2 / (2.0 * sigma ** 2))


def _along(arr: np.ndarray, i: int, n: int) -> np.ndarray:
    return arr.reshape([-1 if a == i else 1 for a in range(n)])


def localization_weight(psi: GridWavefunction, i: int, x: float, sigma: float) -> GridWavefunction:
    """Lambda_i(x) Psi, not renormalized."""
    lo, hi = psi.extents[i]
    if not (lo <= x <= hi):
        raise ValueError(f"center {x} outside extent ({lo}, {hi})")
    g = _along(localization_profile(psi, i, x, sigma), i, psi.n_particles)
    # bypass normalization checks: the result is deliberately unnormalized
    return psi.with_amplitudes(psi.amplitudes * g)


def collapse_center_distribution(psi: GridWavefunction, i: int, sigma: float,
                                 x=None) -> tuple[np.ndarray, np.ndarray]:
    """(x, p(x)) with p(x) = ||Lambda_i(x) Psi||^2.

    Computed as the convolution of particle i's marginal with a Gaussian of
    variance sigma^2 / 2; ``x`` defaults to the grid points.
    """
    q = psi.axis(i)
    dq = psi.spacings[i]
    marg = psi.marginal(i)
    xs = q if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    d = periodic_offset(q[None, :], xs[:, None], psi.extents[i])
    kern = np.exp(-d ** 2 / sigma ** 2) / np.sqrt(np.pi * sigma ** 2)
    return xs, kern @ marg * dq


def sample_collapse_center(psi: GridWavefunction, i: int, sigma: float, rng) -> float:
    """Draw x from ||Lambda_i(x) Psi||^2.

    Since that density is the particle-i marginal convolved with
    N(0, sigma^2/2), draw q from the (cell-constant) marginal and add noise.
    """
    q = psi.axis(i)
    dq = psi.spacings[i]
    w = psi.marginal(i)
    w = w / w.sum()
    j = min(int(np.searchsorted(np.cumsum(w), rng.random())), len(q) - 1)
    xq = q[j] + (rng.random() - 0.5) * dq
    xs = xq + rng.normal(0.0, sigma / np.sqrt(2.0))
    lo, hi = psi.extents[i]
    return float(lo + (xs - lo) % (hi - lo))


def apply_collapse(psi: GridWavefunction, i: int, x: float, sigma: float) -> GridWavefunction:
    """Lambda_i(x) Psi / ||Lambda_i(x) Psi||."""
    w = localization_weight(psi, i, x, sigma)
    n = norm(w)
    if not n ** 2 > ZERO_NORM_FLOOR:
        raise CollapseRejected(f"||Lambda(x) psi|| vanished at x={x}")
    return w.with_amplitudes(w.amplitudes / n)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

class _Propagators:
    """Split-operator propagators cached by step size."""

    def __init__(self, like: GridWavefunction, V: PotentialSpec):
        self.like, self.V = like, V
        self._cache: dict[float, SplitOperator] = {}

    def evolve(self, amps: np.ndarray, duration: float, dt: float) -> np.ndarray:
        if duration <= 0:
            return amps
        n = max(1, int(np.ceil(duration / dt - 1e-9)))
        h = duration / n
        prop = self._cache.get(h)
        if prop is None:
            prop = SplitOperator(self.like, self.V, h)
            if len(self._cache) < 8:
                self._cache[h] = prop
        return prop.step(amps, n)


def run_grw_trajectory(psi0: GridWavefunction, V: PotentialSpec, params: GrwParams, T: float,
                       seed, dt: float = 0.01, max_resample: int = 100):
    """One stochastic GRW realization on [0, T].

    Between jumps the state follows the split-operator Schroedinger flow with
    steps of at most ``dt``; each jump is applied at its exact time with a
    center drawn from the current collapse-center density.
    Returns (final state, list of CollapseEvent).
    """
    rng = as_generator(seed, "grw-run")
    schedule = sample_collapse_schedule(params, psi0.masses, T, rng)
    props = _Propagators(psi0, V)
    amps = psi0.amplitudes
    t_now = 0.0
    events = []
    for t_ev, i in schedule:
        amps = props.evolve(amps, t_ev - t_now, dt)
        t_now = t_ev
        psi = psi0.with_amplitudes(amps)
        for _ in range(max_resample):
            x = sample_collapse_center(psi, i, params.sigma, rng)
            try:
                psi = apply_collapse(psi, i, x, params.sigma)
                break
            except CollapseRejected:
                continue
        else:
            raise CollapseRejected(f"no admissible collapse center after {max_resample} draws")
        amps = psi.amplitudes
        events.append(CollapseEvent(t_ev, i, x))
    amps = props.evolve(amps, T - t_now, dt)
    return psi0.with_amplitudes(amps), events


# ---------------------------------------------------------------------------
# master equation
# ---------------------------------------------------------------------------

def hamiltonian_matrix(like: GridWavefunction, V: PotentialSpec) -> np.ndarray:
    """Dense single-particle H = T + V on the grid (spectral kinetic term)."""
    if like.n_particles != 1:
        raise ValueError("dense Hamiltonian only for one particle")
    N = like.points_per_axis
    F = np.fft.fft(np.eye(N), axis=0)
    Tk = kinetic_energy_grid(like)
    Tmat = np.fft.ifft(Tk[:, None] * F, axis=0)
    H = Tmat + np.diag(V.on_grid(like))
    return 0.5 * (H + H.conj().T)


def decoherence_kernel(like: GridWavefunction, sigma: float) -> np.ndarray:
    """G(q, q') = sum_x Lambda(x)(q) Lambda(x)(q') dx over grid centers x."""
    if like.n_particles != 1:
        raise ValueError("master equation is implemented for one particle")
    q = like.axis(0)
    dq = like.spacings[0]
    d = periodic_offset(q[None, :], q[:, None], like.extents[0])
    lam = (np.pi * sigma ** 2) ** -0.25 * np.exp(-d ** 2 / (2.0 * sigma ** 2))  # [x, q]
    return (lam.T @ lam) * dq


class GrwMasterEquation:
    """Strang-split integrator for the GRW semigroup on a small 1D grid.

    Half-step unitaries surround an exact dissipator step.  The dissipator
    acts elementwise, rho(q, q') -> rho(q, q') exp(lambda dt (G(q, q') - 1)),
    which is a completely positive map, so positivity is kept up to
    round-off.
    """

    MAX_CELLS = 64

    def __init__(self, like: GridWavefunction, H, params: GrwParams, dt: float):
        if like.n_particles != 1 or like.points_per_axis > self.MAX_CELLS:
            raise ValueError(f"master equation needs one particle on <= {self.MAX_CELLS} cells")
        self.params = params
        self.dt = dt
        N = like.points_per_axis
        if H is None:
            H = np.zeros((N, N))
        elif isinstance(H, PotentialSpec):
            H = hamiltonian_matrix(like, H)
        H = np.asarray(H, dtype=complex)
        if H.shape != (N, N) or np.max(np.abs(H - H.conj().T)) > 1e-10:
            raise ValueError("H must be a Hermitian matrix matching the grid")
        self.U_half = expm(-0.5j * dt * H)
        self.G = decoherence_kernel(like, params.sigma)
        rate = params.rates(like.masses)[0]
        self.damp = np.exp(rate * dt * (self.G - 1.0))

    def step(self, rho: np.ndarray, trace_tol: float = 1e-10, check_positivity: bool = False) -> np.ndarray:
        tr0 = np.trace(rho).real
        r = self.U_half @ rho @ self.U_half.conj().T
        r = r * self.damp
        r = self.U_half @ r @ self.U_half.conj().T
        r = 0.5 * (r + r.conj().T)
        if abs(np.trace(r).real - tr0) > trace_tol:
            raise ValueError(f"trace drift {np.trace(r).real - tr0:.3e} exceeds {trace_tol}; reduce dt")
        if check_positivity and np.linalg.eigvalsh(r).min() < -1e-8:
            raise ValueError("master step lost positivity; reduce dt")
        return r

    def evolve(self, rho: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            rho = self.step(rho)
        return rho


def grw_master_step(rho, like: GridWavefunction, H, params: GrwParams, dt: float):
    """One step of the GRW master equation (see ``GrwMasterEquation``).

    ``H`` is a dense matrix, a ``PotentialSpec`` (kinetic + potential) or
    None for no Hamiltonian.
    """
    return GrwMasterEquation(like, H, params, dt).step(np.asarray(rho, dtype=complex), check_positivity=True)


def coherence_decay_rate(distance: float, params: GrwParams) -> float:
    """Analytic decay rate lambda (1 - exp(-d^2 / (4 sigma^2))) of rho(q, q + d)."""
    return params.lambda_per_nucleon * (1.0 - np.exp(-distance ** 2 / (4.0 * params.sigma ** 2)))


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def mass_density(psi: GridWavefunction, mass_weighted: bool = False, time: float = 0.0) -> MassDensityField:
    """Sum over particles of the one-particle marginals, on a shared axis.

    The default is the unweighted sum; ``mass_weighted`` multiplies each
    marginal by its particle mass.
    """
    ext0 = psi.extents[0]
    if any(e != ext0 for e in psi.extents):
        raise ValueError("mass density needs all particles on the same spatial grid")
    vals = np.zeros(psi.points_per_axis)
    for i in range(psi.n_particles):
        w = psi.masses[i] if mass_weighted else 1.0
        vals = vals + w * psi.marginal(i)
    return MassDensityField(psi.axis(0), vals, time)


def trigger_report(events, N: int, params: GrwParams, T: float, n_runs: int = 1, masses=None) -> dict:
    """Empirical collapse rate of an N-constituent body against sum of rates."""
    masses = np.ones(N) if masses is None else masses
    expected = float(params.rates(masses).sum())
    exposure = n_runs * T
    count = len(events)
    rate = count / exposure
    se = np.sqrt(expected / exposure) if expected > 0 else 0.0
    return {
        "N": int(N),
        "n_runs": int(n_runs),
        "horizon": float(T),
        "events": int(count),
        "empirical_rate": rate,
        "expected_rate": expected,
        "standard_error": float(se),
        "z_score": float((rate - expected) / se) if se > 0 else 0.0,
        "relative_error": float((rate - expected) / expected) if expected > 0 else 0.0,
    }
