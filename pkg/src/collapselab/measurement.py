"""
A general (imperfect) measurement model and the superposition no-go check.

An ensemble of apparata is indexed by a hidden parameter alpha.  Each
apparatus starts in a ready state, is coupled to a two-level system through
a unitary, and ends with its pointer in one of several macroscopically
distinct sectors.  Sectors are subspaces of the system+apparatus space; the
distance of a state from a sector is its distance from the nearest
normalized state in that subspace.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolver import (POINTER_D, POINTER_U, READY, MeasurementUnitarySpec, apparatus_draw,
                      build_measurement_unitary, ready_state)
from .hilbert import DEFAULT_ETA, FiniteKet, basis_ket, tensor, vec_distance
from .rng import stream

SQRT2 = np.sqrt(2.0)


class AmbiguousPointerError(RuntimeError):
    """A state was within the membership radius of two sectors."""


class BrokenLinearityError(RuntimeError):
    """The apparatus map failed the superposition identity."""


@dataclass(frozen=True, eq=False)
class PointerSector:
    """A set of states perceived as one pointer reading.

    ``reference_states`` span the sector (columns are orthonormalized on
    construction).
    """

    label: str
    reference_states: np.ndarray
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        refs = np.atleast_2d(np.asarray(self.reference_states, dtype=complex))
        q, r = np.linalg.qr(refs)
        keep = np.abs(np.diag(r)) > 1e-12
        basis = q[:, keep]
        basis.setflags(write=False)
        object.__setattr__(self, "reference_states", basis)

    @property
    def membership_radius(self) -> float:
        return (SQRT2 - self.eta) / 2.0

    def nearest(self, state: FiniteKet) -> FiniteKet:
        """Closest normalized state of the sector."""
        B = self.reference_states
        p = B @ (B.conj().T @ state.amplitudes)
        n = np.linalg.norm(p)
        if n == 0:
            return FiniteKet(B[:, 0])
        return FiniteKet(p / n)

    def distance(self, state: FiniteKet) -> float:
        B = self.reference_states
        overlap = np.linalg.norm(B.conj().T @ state.amplitudes)
        return float(np.sqrt(max(2.0 - 2.0 * overlap, 0.0)))


def sector_separation(a: PointerSector, b: PointerSector) -> float:
    """inf ||x - y|| over unit vectors x in a, y in b."""
    s = np.linalg.svd(a.reference_states.conj().T @ b.reference_states, compute_uv=False)
    return float(np.sqrt(max(2.0 - 2.0 * s.max(initial=0.0), 0.0)))


def check_sectors(sectors) -> None:
    for i, a in enumerate(sectors):
        for b in sectors[i + 1:]:
            eta = max(a.eta, b.eta)
            if sector_separation(a, b) < SQRT2 - eta:
                raise ValueError(f"sectors {a.label} and {b.label} closer than sqrt(2) - eta")


def pointer_label(position: int) -> str:
    return {READY: "R", POINTER_U: "U", POINTER_D: "D"}.get(position, f"X{position}")


def pointer_sectors(spec: MeasurementUnitarySpec, eta: float = DEFAULT_ETA) -> list[PointerSector]:
    """One sector per pointer position: R, U, D, X3, X4, ..."""
    K, h = spec.pointer_positions, spec.hidden_dim
    sectors = []
    for p in range(K):
        ptr = np.zeros((K, 1))
        ptr[p] = 1.0
        # any system state, pointer at p, any hidden state
        B = np.kron(np.eye(2), np.kron(ptr, np.eye(h)))
        sectors.append(PointerSector(pointer_label(p), B, eta))
    check_sectors(sectors)
    return sectors


def classify_pointer(state: FiniteKet, sectors) -> str | None:
    """Label of the unique sector containing ``state``, or None."""
    hits = [s.label for s in sectors if s.distance(state) < s.membership_radius]
    if len(hits) > 1:
        raise AmbiguousPointerError(f"state belongs to sectors {hits}")
    return hits[0] if hits else None


@dataclass(frozen=True, eq=False)
class ApparatusEnsemble:
    """Apparata {|A_R, alpha>, p(alpha)} with alpha uniform over 64-bit seeds."""

    spec: MeasurementUnitarySpec = field(default_factory=MeasurementUnitarySpec)

    def ready_state(self, alpha: int) -> FiniteKet:
        return ready_state(self.spec, alpha)

    def unitary(self, alpha: int) -> np.ndarray:
        return build_measurement_unitary(self.spec, alpha)

    def sample_alphas(self, n: int, seed: int) -> np.ndarray:
        rng = stream(seed, "alpha")
        return rng.integers(0, 2 ** 63, size=n, dtype=np.uint64)

    def final_states(self, alpha: int):
        """(|F,u,alpha>, |F,d,alpha>, U, |A_R,alpha>)."""
        U = self.unitary(alpha)
        A = self.ready_state(alpha)
        fu = FiniteKet(U @ tensor(basis_ket(2, 0), A).amplitudes)
        fd = FiniteKet(U @ tensor(basis_ket(2, 1), A).amplitudes)
        return fu, fd, U, A


def _binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


def reliability_measures(ens: ApparatusEnsemble, sectors, n_samples: int, seed: int) -> dict:
    """Monte Carlo estimates of mu(J_U^-), mu(J_D^-) and mu(J_U^+ & J_D^+)."""
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    bad_u = bad_d = good_both = 0
    for alpha in ens.sample_alphas(n_samples, seed):
        fu, fd, _, _ = ens.final_states(int(alpha))
        ok_u = classify_pointer(fu, sectors) == "U"
        ok_d = classify_pointer(fd, sectors) == "D"
        bad_u += not ok_u
        bad_d += not ok_d
        good_both += ok_u and ok_d
    mu = {
        "mu_U_minus": bad_u / n_samples,
        "mu_D_minus": bad_d / n_samples,
        "mu_joint_plus": good_both / n_samples,
    }
    se = {f"{k}_se": _binomial_se(v, n_samples) for k, v in mu.items()}
    return {**mu, **se, "n_samples": n_samples, "seed": seed}


def branch_distance_bound(a: FiniteKet, b: FiniteKet) -> float:
    """|| a/sqrt2 + (1 - 1/sqrt2) b ||, bounded by 1 for unit a, b."""
    return float(np.linalg.norm(a.amplitudes / SQRT2 + (1.0 - 1.0 / SQRT2) * b.amplitudes))


def nogo_check(ens: ApparatusEnsemble, sectors, n_samples: int, seed: int,
               limit: int | None = None) -> dict:
    """Trigger every reliable apparatus with (|u> + |d>)/sqrt2.

    ``n_samples`` alphas are drawn; with ``limit`` set, drawing stops once
    that many reliable apparata have been checked.

    For each sampled alpha that registers both |u> and |d> correctly the
    superposed input must (a) map linearly onto the superposed outputs,
    (b) end within distance 1 of the d-branch output and (c) fall in no
    pointer sector.  As a control arm, the readings of the definite inputs
    must agree with the pointer targets the apparatus actually drew, for
    every sampled alpha (reliable or not).
    """
    plus = FiniteKet(np.array([1.0, 1.0]) / SQRT2)
    n_reliable = n_pass = 0
    worst_linearity = 0.0
    worst_distance = 0.0
    control_ok = True
    for alpha in ens.sample_alphas(n_samples, seed):
        fu, fd, U, A = ens.final_states(int(alpha))
        lab_u = classify_pointer(fu, sectors)
        lab_d = classify_pointer(fd, sectors)
        draw = apparatus_draw(ens.spec, int(alpha))
        control_ok &= (lab_u == pointer_label(draw.target_u) and lab_d == pointer_label(draw.target_d))
        if lab_u != "U" or lab_d != "D":
            continue
        if limit is not None and n_reliable >= limit:
            break
        n_reliable += 1
        out = FiniteKet(U @ tensor(plus, A).amplitudes)
        residual = vec_distance(out, (fu + fd) * (1.0 / SQRT2))
        if residual >= 1e-12:
            raise BrokenLinearityError(f"alpha={alpha}: linearity residual {residual:.3e}")
        dist = vec_distance(out, fd)
        label = classify_pointer(out, sectors)
        worst_linearity = max(worst_linearity, residual)
        worst_distance = max(worst_distance, dist)
        if dist <= 1.0 + 1e-9 and label is None:
            n_pass += 1
    return {
        "n_samples": int(n_samples),
        "seed": int(seed),
        "n_reliable": n_reliable,
        "pass_fraction": n_pass / n_reliable if n_reliable else float("nan"),
        "worst_linearity_residual": worst_linearity,
        "worst_distance": worst_distance,
        "control_ok": bool(control_ok),
    }


def measurement_report(spec: MeasurementUnitarySpec, eta: float, n_samples: int, seed: int) -> dict:
    """Combined reliability and no-go report (the ``measure`` CLI payload)."""
    ens = ApparatusEnsemble(spec)
    sectors = pointer_sectors(spec, eta)
    mu = reliability_measures(ens, sectors, n_samples, seed)
    ng = nogo_check(ens, sectors, n_samples, seed)
    return {
        "mu_estimates": {k: mu[k] for k in ("mu_U_minus", "mu_D_minus", "mu_joint_plus")},
        "mu_standard_errors": {k: mu[k + "_se"] for k in ("mu_U_minus", "mu_D_minus", "mu_joint_plus")},
        "pass_fraction": ng["pass_fraction"],
        "worst_distance": ng["worst_distance"],
        "worst_linearity_residual": ng["worst_linearity_residual"],
        "n_reliable": ng["n_reliable"],
        "control_ok": ng["control_ok"],
        "n_samples": int(n_samples),
        "seed": int(seed),
        "error_rate": spec.error_rate,
        "eta": eta,
    }
