"""
Environment-induced decoherence of a two-branch superposition.

The environment is ``n_env`` qubits.  In the M branch every qubit stays in
|0>; in the N branch every qubit is rotated to cos(theta)|0> + sin(theta)|1>.
The two environment states therefore overlap by cos(theta)**n_env, which is
what suppresses the off-diagonal terms of the reduced operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import (DensityOperator, FiniteKet, WeightedEnsemble, basis_ket,
                      ensemble_to_operator, operator_distance, partial_trace)

# beyond this many qubits the joint state is not materialized
EXPLICIT_ENV_LIMIT = 24


@dataclass(frozen=True, eq=False)
class BranchingModel:
    alpha: complex
    beta: complex
    n_env: int = 0
    theta: float = 0.0
    M: FiniteKet = field(default_factory=lambda: basis_ket(2, 0))
    N: FiniteKet = field(default_factory=lambda: basis_ket(2, 1))

    def __post_init__(self):
        if self.n_env < 0:
            raise ValueError("n_env must be >= 0")
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1.0) > 1e-12:
            raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
        if abs(np.vdot(self.M.amplitudes, self.N.amplitudes)) > 1e-12:
            raise ValueError("system states M and N must be orthogonal")
        if not (self.M.is_normalized() and self.N.is_normalized()):
            raise ValueError("system states M and N must be normalized")

    def qubit_states(self):
        e_m = np.array([1.0, 0.0])
        e_n = np.array([np.cos(self.theta), np.sin(self.theta)])
        return e_m, e_n


def _product(vec: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, vec)
    return out


def environment_states(model: BranchingModel):
    """(|E_M>, |E_N>) as explicit vectors of dimension 2**n_env."""
    if model.n_env > EXPLICIT_ENV_LIMIT:
        raise ValueError(f"n_env={model.n_env} too large to materialize (limit {EXPLICIT_ENV_LIMIT})")
    e_m, e_n = model.qubit_states()
    return _product(e_m, model.n_env), _product(e_n, model.n_env)


def environment_branching(model: BranchingModel) -> FiniteKet:
    """alpha |M>|E_M> + beta |N>|E_N>."""
    E_M, E_N = environment_states(model)
    joint = (model.alpha * np.kron(model.M.amplitudes, E_M)
             + model.beta * np.kron(model.N.amplitudes, E_N))
    return FiniteKet(joint)


def env_overlap(model: BranchingModel, tol: float = 1e-12) -> float:
    """<E_M|E_N> = cos(theta)**n_env, cross-checked by an explicit inner product.

    The explicit check forms the full vectors when they fit and otherwise
    multiplies the per-qubit overlaps one factor at a time.
    """
    closed = float(np.cos(model.theta) ** model.n_env)
    if model.n_env <= 20:
        E_M, E_N = environment_states(model)
        explicit = float(np.real(np.vdot(E_M, E_N)))
    else:
        e_m, e_n = model.qubit_states()
        explicit = 1.0
        for _ in range(model.n_env):
            explicit *= float(np.dot(e_m, e_n))
    if abs(closed - explicit) > tol:
        raise ArithmeticError(f"overlap mismatch: {closed} vs {explicit}")
    return closed


def reduced_system_operator(joint: FiniteKet, n_env: int) -> DensityOperator:
    """Partial trace of the joint pure state over the environment qubits."""
    if not joint.is_normalized(1e-10):
        raise ValueError("joint state must be normalized")
    return partial_trace(joint, [2, 2 ** n_env], keep=[0])


def effective_reduced_operator(model: BranchingModel) -> DensityOperator:
    """Reduced operator from the closed-form overlap (any n_env)."""
    a, b = model.alpha, model.beta
    c = env_overlap(model)
    M, N = model.M.amplitudes, model.N.amplitudes
    rho = (abs(a) ** 2 * np.outer(M, M.conj()) + abs(b) ** 2 * np.outer(N, N.conj())
           + a * np.conj(b) * c * np.outer(M, N.conj())
           + np.conj(a) * b * c * np.outer(N, M.conj()))
    return DensityOperator(rho)


def system_operator(model: BranchingModel) -> DensityOperator:
    """Reduced operator, explicit up to ``EXPLICIT_ENV_LIMIT`` qubits."""
    if model.n_env <= EXPLICIT_ENV_LIMIT:
        return reduced_system_operator(environment_branching(model), model.n_env)
    return effective_reduced_operator(model)


def off_diagonal(rho: DensityOperator, model: BranchingModel) -> complex:
    """<M| rho |N>."""
    return complex(np.vdot(model.M.amplitudes, rho.matrix @ model.N.amplitudes))


def ambiguity_demo(alpha, beta, M: FiniteKet | None = None, N: FiniteKet | None = None):
    """Two different mixtures with the same statistical operator.

    Returns (rho_15, rho_16, trace distance) for the ensemble
    {M, N; |a|^2, |b|^2} and the ensemble
    {(M+N)/sqrt2, (M-N)/sqrt2, M; |b|^2, |b|^2, |a|^2 - |b|^2}.
    """
    M = basis_ket(2, 0) if M is None else M
    N = basis_ket(2, 1) if N is None else N
    pa, pb = abs(alpha) ** 2, abs(beta) ** 2
    if abs(pa + pb - 1.0) > 1e-12:
        raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
    if pa < pb:
        raise ValueError(
            f"|alpha|^2 = {pa} < |beta|^2 = {pb}: the three-state mixture would need a "
            "negative weight |alpha|^2 - |beta|^2")
    s = 1.0 / np.sqrt(2.0)
    diag = ensemble_to_operator(WeightedEnsemble.from_lists([M, N], [pa, pb]))
    third = max(1.0 - 2.0 * pb, 0.0)
    alt = ensemble_to_operator(WeightedEnsemble.from_lists(
        [(M + N) * s, (M - N) * s, M], [pb, pb, third]))
    return diag, alt, operator_distance(diag, alt)


def decoherence_sweep(alpha, beta, theta, n_values) -> list[dict]:
    """Rows of (n_env, |off-diagonal|, purity) for the ``decohere`` scenario."""
    rows = []
    for n in n_values:
        model = BranchingModel(alpha, beta, int(n), theta)
        rho = system_operator(model)
        rows.append({
            "n_env": int(n),
            "off_diagonal_magnitude": abs(off_diagonal(rho, model)),
            "purity": rho.purity(),
        })
    return rows
