"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are collected in
the "acceptance criteria" section of the terminal summary.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from collapselab.config import parse_config
from collapselab.decoherence import BranchingModel, ambiguity_demo, off_diagonal, system_operator
from collapselab.evolver import MeasurementUnitarySpec, PotentialSpec, evolve_grid
from collapselab.grw import (GrwMasterEquation, GrwParams, coherence_decay_rate, run_grw_trajectory,
                             sample_collapse_schedule, trigger_report)
from collapselab.hilbert import gaussian_packet, gaussian_state, grid_state, norm, vec_distance
from collapselab.measurement import ApparatusEnsemble, nogo_check, pointer_sectors, reliability_measures
from collapselab.rng import stream
from collapselab.scenarios import run_scenario
from collapselab.units import headline_numbers

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
BUNDLED = sorted(SCENARIOS.glob("*.json"))

pytestmark = pytest.mark.slow


@pytest.fixture
def report(record_property):
    def _report(n, title, ok, detail):
        record_property("acceptance", f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
        return ok
    return _report


@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory):
    """Every bundled scenario run once; reused by the equivariance and determinism checks."""
    root = tmp_path_factory.mktemp("bundled")
    out = {}
    for path in BUNDLED:
        summary, _ = run_scenario(parse_config(path), root / path.stem)
        out[path.stem] = (root / path.stem, summary)
    return out


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).iterdir()) if p.is_file()}


# 1 ---------------------------------------------------------------------------

def test_criterion_01_headline_numbers(report):
    h = headline_numbers(1e-16, 1e23)
    years = h["single_interval_yr"]
    ok = (h["single_interval_s"] == pytest.approx(1e16, rel=1e-15)
          and f"{years:.2e}" == "3.17e+08"
          and h["macro_interval_s"] == pytest.approx(1e-7, rel=1e-15))
    report(1, "headline collapse intervals", ok,
           f"1/lambda = {h['single_interval_s']:.3g} s = {years:.3g} yr; N=1e23: {h['macro_interval_s']:.3g} s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_02_equivariance(report, bundled_runs):
    rows = []
    ok = True
    for name in ("bohm_free_gaussian", "bohm_double_packet"):
        _, s = bundled_runs[name]
        assert s["trajectories"] == 100_000 and len(s["checkpoints"]) == 3
        crit = 1.63 / np.sqrt(s["trajectories"])
        ok &= all(c["ks"] < crit for c in s["checkpoints"]) and s["clamped"] == 0
        rows.append(f"{name}: " + ", ".join(f"t={c['t']:g} KS={c['ks']:.5f}" for c in s["checkpoints"]))
    report(2, "equivariance, M=1e5, KS < 1.63/sqrt(M) = 0.00515", ok, "; ".join(rows))
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_03_unraveling(report):
    lam, sigma, T, runs = 1.0, 1.0, 5.0, 10_000
    extent = (-8.0, 8.0)
    x = extent[0] + np.arange(32) * 16.0 / 32
    psi0 = grid_state([gaussian_packet(x, -4.0, 0.7) + 0.8 * gaussian_packet(x, 4.0, 0.7)], [extent])
    params = GrwParams(lam, sigma)
    free = PotentialSpec.free()
    dV = psi0.cell_volume
    s1 = np.zeros((32, 32), dtype=complex)
    s2 = np.zeros((32, 32))
    for r in range(runs):
        # the free propagator is exact in one split step, so dt = T loses nothing
        final, _ = run_grw_trajectory(psi0, free, params, T, stream(123, "unravel", r), dt=T)
        P = np.outer(final.amplitudes, final.amplitudes.conj()) * dV
        s1 += P
        s2 += P.real ** 2 + P.imag ** 2
    mean = s1 / runs
    var = (s2 / runs - np.abs(mean) ** 2) * runs / (runs - 1)
    se = np.sqrt(np.maximum(var, 0.0) / runs)
    rho = np.outer(psi0.amplitudes, psi0.amplitudes.conj()) * dV
    me = GrwMasterEquation(psi0, free, params, 0.001)
    rho = me.evolve(rho, 5000)
    z = np.abs(mean - rho) / np.maximum(se, 1e-300)
    resolved = se > 1e-12
    ok = bool(np.all(z[resolved] < 3.0) and np.all(np.abs(mean - rho)[~resolved] < 1e-10))
    report(3, "GRW unraveling vs master equation (32 cells, 1e4 runs, t = 5/lambda)", ok,
           f"max |mean - rho|/SE = {z[resolved].max():.2f} over {resolved.sum()} elements")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_04_decay_oracle(report):
    sigma, lam, t, dt = 1.0, 0.5, 2.0, 0.01
    params = GrwParams(lam, sigma)
    extent = (-16.0, 16.0)
    x = extent[0] + np.arange(64) * 0.5

    def oracle_rate(d):
        # independent: quadrature of the localization sandwich int Lambda(y) Lambda(y + d) dy
        def prof(y):
            return (np.pi * sigma ** 2) ** -0.25 * np.exp(-y ** 2 / (2 * sigma ** 2))
        overlap, _ = integrate.quad(lambda y: prof(y) * prof(y + d), -np.inf, np.inf)
        return lam * (1.0 - overlap)

    worst = 0.0
    details = []
    steps = int(round(t / dt))
    for d in (4.0, 6.0, 8.0):
        want = oracle_rate(d)
        assert want == pytest.approx(coherence_decay_rate(d, params), rel=1e-10)
        # pure localization term on a flat coherent state
        like = gaussian_state(64, extent, 0.0, 1.0)
        flat = np.full((64, 64), 1.0 / 64, dtype=complex)
        out = GrwMasterEquation(like, None, params, dt).evolve(flat, steps)
        i, j = 24, 24 + int(d / 0.5)
        rates = [-np.log(abs(out[i, j]) / abs(flat[i, j])) / t]
        # two packets of a moving particle (m = 10), normalized by the lambda = 0 evolution
        psi = grid_state([gaussian_packet(x, -d / 2, 1.0) + gaussian_packet(x, d / 2, 1.0)], [extent], [10.0])
        rho = np.outer(psi.amplitudes, psi.amplitudes.conj()) * psi.cell_volume
        on = GrwMasterEquation(psi, PotentialSpec.free(), params, dt).evolve(rho, steps)
        off = GrwMasterEquation(psi, PotentialSpec.free(), GrwParams(0.0, sigma), dt).evolve(rho, steps)
        i, j = int(np.argmin(abs(x + d / 2))), int(np.argmin(abs(x - d / 2)))
        rates.append(-np.log(abs(on[i, j]) / abs(off[i, j])) / t)
        worst = max(worst, *(abs(r / want - 1.0) for r in rates))
        details.append(f"d={d:g}: {rates[0]:.5f}/{rates[1]:.5f} vs {want:.5f}")
    ok = worst < 0.02
    report(4, "coherence decay rate vs lambda(1 - exp(-d^2/4 sigma^2))", ok,
           f"worst relative error {worst:.1e}; " + ", ".join(details))
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_05_trigger(report):
    lam, T, N, runs = 1.0, 1.0, 10, 1000
    params = GrwParams(lam, 1.0)
    events = []
    for r in range(runs):
        events.extend(sample_collapse_schedule(params, np.ones(N), T, stream(2024, "trigger", r)))
    rep = trigger_report(events, N, params, T, runs)
    ok = rep["expected_rate"] == N * lam and abs(rep["z_score"]) < 3
    report(5, "trigger mechanism, N = 10", ok,
           f"rate {rep['empirical_rate']:.4f} vs {rep['expected_rate']:.1f}, z = {rep['z_score']:.2f}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_06_nogo(report):
    spec = MeasurementUnitarySpec(pointer_positions=3, hidden_dim=4, error_rate=0.05, seed=0)
    r = nogo_check(ApparatusEnsemble(spec), pointer_sectors(spec, 0.05), 2000, 6, limit=1000)
    ok = (r["n_reliable"] == 1000 and r["pass_fraction"] == 1.0 and r["control_ok"]
          and r["worst_linearity_residual"] < 1e-12 and r["worst_distance"] <= 1 + 1e-9)
    report(6, "superposition no-go over 1e3 reliable apparata", ok,
           f"pass fraction {r['pass_fraction']}, residual {r['worst_linearity_residual']:.1e}, "
           f"max distance {r['worst_distance']:.4f}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_07_reliability(report):
    eps = 0.05
    spec = MeasurementUnitarySpec(pointer_positions=3, hidden_dim=4, error_rate=eps, seed=0)
    mu = reliability_measures(ApparatusEnsemble(spec), pointer_sectors(spec, 0.05), 10_000, 7)
    est, se = mu["mu_joint_plus"], mu["mu_joint_plus_se"]
    ok = est >= 1 - 2 * eps - 3 * se
    report(7, "reliability mu(J_U+ & J_D+) >= 1 - 2 eps", ok, f"{est:.4f} +- {se:.4f} vs {1 - 2 * eps:.2f}")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_08_decoherence(report):
    a, b = np.sqrt(0.7), np.sqrt(0.3) * np.exp(0.9j)
    theta = 0.3
    worst_off = 0.0
    for n in range(21):
        m = BranchingModel(a, b, n, theta)
        got = abs(off_diagonal(system_operator(m), m))
        worst_off = max(worst_off, abs(got - abs(a * np.conj(b)) * np.cos(theta) ** n))
    worst_amb = 0.0
    for pa in np.linspace(0.5, 1.0, 20):
        _, _, d = ambiguity_demo(np.sqrt(pa), np.sqrt(1 - pa))
        worst_amb = max(worst_amb, d)
    ok = worst_off < 1e-12 and worst_amb < 1e-12
    report(8, "decoherence off-diagonal law and ensemble ambiguity", ok,
           f"off-diagonal error {worst_off:.1e} (n <= 20), ambiguity distance {worst_amb:.1e} (20 points)")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_criterion_09_propagator(report):
    worst_var = 0.0
    for s0 in (0.7, 1.0, 1.5):
        t = 2 * s0 ** 2
        out = evolve_grid(gaussian_state(1024, (-40, 40), 0.0, s0), PotentialSpec.free(), t / 400, 400)
        xg = out.axis(0)
        w = out.density() * out.cell_volume
        var = np.sum(w * xg ** 2) - np.sum(w * xg) ** 2
        worst_var = max(worst_var, abs(var / (s0 ** 2 * (1 + t ** 2 / (4 * s0 ** 4))) - 1))
    worst_drift = worst_rev = 0.0
    for V in (PotentialSpec.free(), PotentialSpec.harmonic(0.5), PotentialSpec.double_well(3.0, 1.0)):
        psi = gaussian_state(512, (-10, 10), -1.0, 0.8, k0=0.5)
        fwd = evolve_grid(psi, V, 0.005, 1000)
        back = evolve_grid(fwd, V, -0.005, 1000)
        worst_drift = max(worst_drift, abs(norm(fwd) - 1.0))
        worst_rev = max(worst_rev, vec_distance(back, psi))
    ok = worst_var < 0.01 and worst_drift < 1e-9 and worst_rev < 1e-6
    report(9, "propagator quality", ok,
           f"variance law {worst_var:.1e}, norm drift {worst_drift:.1e}/1e3 steps, reversal {worst_rev:.1e}")
    assert ok


# 10 --------------------------------------------------------------------------

def test_criterion_10_determinism(report, bundled_runs, tmp_path):
    mismatched = []
    for path in BUNDLED:
        first_dir, _ = bundled_runs[path.stem]
        run_scenario(parse_config(path), tmp_path / path.stem)
        a, b = digests(first_dir), digests(tmp_path / path.stem)
        data = {k for k in a if k.endswith((".csv", ".json"))}
        if not data or a != b:
            mismatched.append(path.stem)
    ok = not mismatched
    report(10, "byte-identical reruns of every bundled scenario", ok,
           f"{len(BUNDLED)} scenarios" + (f", mismatched: {mismatched}" if mismatched else ""))
    assert ok
