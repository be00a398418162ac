"""
Scenario runners behind the command-line interface.

Each runner takes a validated ``ScenarioConfig``, writes its data tables
(and optionally figures) into the output directory and returns a summary
dict.  Data files depend only on the configuration and seed.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bohmian, decoherence, grw, measurement
from .config import ScenarioConfig
from .evolver import MeasurementUnitarySpec, PotentialSpec, SplitOperator
from .hilbert import GridWavefunction, gaussian_packet, grid_state, norm
from .io import emit_json, emit_rows
from .rng import stream


def build_state(cfg: ScenarioConfig, packets) -> GridWavefunction:
    g = cfg.grid
    lo, hi = g.extent
    x = lo + np.arange(g.points) * (hi - lo) / g.points
    amps = np.zeros(g.points, dtype=complex)
    for p in packets:
        amps = amps + p.amplitude * gaussian_packet(x, p.center, p.width, p.k0)
    return grid_state([amps], [(lo, hi)], [g.mass])


def build_potential(cfg: ScenarioConfig) -> PotentialSpec:
    p = cfg.potential
    return PotentialSpec(p.kind, omega=p.omega, a=p.a, depth=p.depth)


def _moments(psi: GridWavefunction):
    x = psi.axis(0)
    w = psi.density() * psi.cell_volume
    mean = float(np.sum(w * x))
    return mean, float(np.sum(w * (x - mean) ** 2))


# ---------------------------------------------------------------------------

def run_evolve(cfg: ScenarioConfig, out: Path) -> dict:
    c = cfg.evolve
    psi0 = build_state(cfg, c.packets)
    prop = SplitOperator(psi0, build_potential(cfg), c.dt)
    marks = sorted({int(round(k * c.steps / c.snapshots)) for k in range(c.snapshots + 1)})
    psi, done, snaps = psi0, 0, []
    for m in marks:
        psi = prop(psi, m - done)
        done = m
        snaps.append((m * c.dt, psi))
    x = psi0.axis(0)
    rows = [{"t": t, "x": xi, "density": d} for t, s in snaps for xi, d in zip(x, s.density())]
    emit_rows(rows, ["t", "x", "density"], out / "density", cfg.output.format)
    mean, var = _moments(psi)
    summary = {
        "scenario": "evolve",
        "seed": cfg.seed,
        "final_time": c.steps * c.dt,
        "norm_drift": abs(norm(psi) - 1.0),
        "final_mean": mean,
        "final_variance": var,
        "key_statistic": {"norm_drift": abs(norm(psi) - 1.0)},
    }
    if cfg.output.figures:
        from . import plotting
        plotting.density_snapshots(x, [(t, s.density()) for t, s in snaps], out / "density.png")
    return summary


def _histogram_rows(t, psi, positions, bins):
    lo, hi = psi.extents[0]
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(positions, bins=edges)
    width = edges[1] - edges[0]
    F = bohmian.marginal_cdf(psi, 0)(edges)
    emp = counts / (len(positions) * width)
    quantum = np.diff(F) / width
    centers = 0.5 * (edges[1:] + edges[:-1])
    return [{"t": t, "x": c, "empirical": e, "quantum": q} for c, e, q in zip(centers, emp, quantum)]


def run_bohm(cfg: ScenarioConfig, out: Path) -> dict:
    c = cfg.bohm
    psi0 = build_state(cfg, c.packets)
    res = bohmian.run_equivariance(psi0, build_potential(cfg), c.dt, c.checkpoints,
                                   c.trajectories, stream(cfg.seed, "bohm"), record=c.record)
    fmt = cfg.output.format
    emit_rows(res["checkpoints"], ["t", "ks", "critical"], out / "checkpoints", fmt)
    hist = []
    for t, psi_t, pos in res["snapshots"]:
        hist.extend(_histogram_rows(t, psi_t, pos[:, 0], c.bins))
    emit_rows(hist, ["t", "x", "empirical", "quantum"], out / "histogram", fmt)
    traj = [{"t": t, "index": i, "x": float(p[i, 0])} for t, p in res["paths"] for i in range(p.shape[0])]
    emit_rows(traj, ["t", "index", "x"], out / "trajectories", fmt)
    ens = res["ensemble"]
    max_ks = max(r["ks"] for r in res["checkpoints"])
    summary = {
        "scenario": "bohm",
        "seed": cfg.seed,
        "trajectories": c.trajectories,
        "checkpoints": res["checkpoints"],
        "max_ks": max_ks,
        "ks_critical": bohmian.ks_critical(c.trajectories),
        "equivariance_pass": bool(max_ks < bohmian.ks_critical(c.trajectories)),
        "stall_fraction": ens.stall_fraction,
        "clamped": ens.clamped,
        "key_statistic": {"max_ks": max_ks},
    }
    if cfg.output.figures:
        from . import plotting
        plotting.bohm_report(res["paths"], hist, res["checkpoints"], out / "bohm.png")
    return summary


def _grw_realization(args):
    psi0, V, params, T, dt, seed, index = args
    final, events = grw.run_grw_trajectory(psi0, V, params, T, stream(seed, "grw", index), dt=dt)
    return final, events


def _weight_above(psi: GridWavefunction, split: float, values=None) -> float:
    """Fraction of the axis-0 density above ``split``; a cell at the split counts half."""
    x = psi.axis(0)
    v = psi.marginal(0) if values is None else values
    w = np.where(x > split, 1.0, np.where(x == split, 0.5, 0.0))
    return float(np.sum(w * v) * psi.spacings[0])


def _born_right_weight(psi: GridWavefunction, sigma: float, split: float) -> float:
    _, p = grw.collapse_center_distribution(psi, 0, sigma)
    return _weight_above(psi, split, p)


def run_grw(cfg: ScenarioConfig, out: Path) -> dict:
    c = cfg.grw
    psi0 = build_state(cfg, c.packets)
    V = build_potential(cfg)
    per_particle = grw.GrwParams(c.lambda_, c.sigma, c.mass_proportional)
    rate = float(per_particle.rates([cfg.grid.mass])[0]) * c.n_particles
    # the centre-of-mass coordinate collapses at the summed constituent rate
    com = grw.GrwParams(rate, c.sigma)
    jobs = [(psi0, V, com, c.horizon, c.dt, cfg.seed, r) for r in range(c.realizations)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_grw_realization, jobs, chunksize=8))
    else:
        results = [_grw_realization(j) for j in jobs]

    fmt = cfg.output.format
    first_final, first_events = results[0]
    emit_rows([{"t": e.t, "particle": e.particle, "x": e.center} for e in first_events],
              ["t", "particle", "x"], out / "flashes", fmt)
    md = grw.mass_density(first_final, time=c.horizon)
    emit_rows([{"x": xi, "mass_density": v} for xi, v in zip(md.x, md.values)],
              ["x", "mass_density"], out / "density", fmt)

    centers = [p.center for p in c.packets]
    split = float(np.mean(centers)) if len(centers) > 1 else centers[0]
    outcome_rows = []
    right = decided = 0
    for r, (final, events) in enumerate(results):
        w_right = _weight_above(final, split)
        # a run without localizations has not picked a side
        if events:
            decided += 1
            right += w_right > 0.5
        outcome_rows.append({"run": r, "events": len(events), "weight_right": w_right})
    emit_rows(outcome_rows, ["run", "events", "weight_right"], out / "outcomes", fmt)

    d = abs(centers[1] - centers[0]) if len(centers) > 1 else 4.0 * c.sigma
    ts = np.linspace(0.0, c.horizon, 51)
    coh = [{"t": float(t), "analytic": float(np.exp(-grw.coherence_decay_rate(d, com) * t))} for t in ts]
    schema = ["t", "analytic"]
    if c.master_check and psi0.points_per_axis <= grw.GrwMasterEquation.MAX_CELLS:
        q = psi0.axis(0)
        i0, i1 = int(np.argmin(abs(q - centers[0]))), int(np.argmin(abs(q - (centers[0] + d))))
        dt_m = float(ts[1] - ts[0])
        sub = max(1, int(np.ceil(dt_m * com.lambda_per_nucleon / 0.01)))
        me = grw.GrwMasterEquation(psi0, None, com, dt_m / sub)
        rho = np.outer(psi0.amplitudes, psi0.amplitudes.conj()) * psi0.cell_volume
        r0 = abs(rho[i0, i1])
        for k, row in enumerate(coh):
            if k:
                rho = me.evolve(rho, sub)
            row["master"] = float(abs(rho[i0, i1]) / r0)
        schema.append("master")
    emit_rows(coh, schema, out / "coherence", fmt)

    all_events = [e for _, evs in results for e in evs]
    trig = grw.trigger_report(all_events, c.n_particles, per_particle, c.horizon, c.realizations,
                              masses=np.full(c.n_particles, cfg.grid.mass))
    born = _born_right_weight(psi0, c.sigma, split) if len(centers) > 1 else None
    n = decided
    frac = right / n if n else None
    if frac is None:
        born = None
    summary = {
        "scenario": "grw",
        "seed": cfg.seed,
        "realizations": c.realizations,
        "decided_runs": decided,
        "com_rate": rate,
        "trigger": trig,
        "fraction_right": frac,
        "born_weight_right": born,
        "born_z_score": (frac - born) / np.sqrt(max(born * (1 - born), 1e-300) / n) if born is not None else None,
        "mass_integral": md.integral(),
        "key_statistic": {"events": trig["events"], "rate_z": trig["z_score"]},
    }
    if cfg.output.figures:
        from . import plotting
        plotting.grw_report(md.x, md.values, [{"x": e.center} for e in first_events], coh, out / "grw.png")
    return summary


def run_decohere(cfg: ScenarioConfig, out: Path) -> dict:
    c = cfg.decohere
    beta = c.beta if c.beta is not None else float(np.sqrt(max(1.0 - c.alpha ** 2, 0.0)))
    rows = decoherence.decoherence_sweep(c.alpha, beta, c.theta, c.n_env)
    emit_rows(rows, ["n_env", "off_diagonal_magnitude", "purity"], out / "decoherence", cfg.output.format)
    a, b = (c.alpha, beta) if c.alpha >= beta else (beta, c.alpha)
    _, _, amb = decoherence.ambiguity_demo(a, b)
    summary = {
        "scenario": "decohere",
        "seed": cfg.seed,
        "alpha": c.alpha,
        "beta": beta,
        "theta": c.theta,
        "rows": len(rows),
        "ambiguity_distance": amb,
        "key_statistic": {"min_off_diagonal": min(r["off_diagonal_magnitude"] for r in rows)},
    }
    if cfg.output.figures:
        from . import plotting
        plotting.decoherence_report(rows, out / "decoherence.png")
    return summary


def run_measure(cfg: ScenarioConfig, out: Path) -> dict:
    c = cfg.measure
    spec = MeasurementUnitarySpec(c.pointer_positions, c.hidden_dim, c.error_rate, seed=cfg.seed)
    report = measurement.measurement_report(spec, c.eta, c.n_samples, cfg.seed)
    emit_json(report, out / "report.json")
    summary = {"scenario": "measure", **report,
               "key_statistic": {"pass_fraction": report["pass_fraction"]}}
    if cfg.output.figures:
        from . import plotting
        plotting.measurement_report(report, out / "measure.png")
    return summary


RUNNERS = {
    "evolve": run_evolve,
    "bohm": run_bohm,
    "grw": run_grw,
    "decohere": run_decohere,
    "measure": run_measure,
}


def run_scenario(cfg: ScenarioConfig, out=None) -> tuple[dict, float]:
    """Run one scenario; returns (summary, wall seconds).  Writes summary.json."""
    out = Path(out if out is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = RUNNERS[cfg.subcommand](cfg, out)
    emit_json(summary, out / "summary.json")
    return summary, time.perf_counter() - t0
