"""Figure rendering for scenario reports (PNG files next to the tables)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "lines.linewidth": 1.2,
}
# strip version strings so repeated runs write identical PNGs
PNG_METADATA = {"Software": None}


def figsize(scale: float = 1.0, ratio: float | None = None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    width = 6.4 * scale
    return width, width * (ratio or golden)


def new(nrows: int = 1, ncols: int = 1, scale: float = 1.0, ratio: float | None = None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(nrows, ncols, figsize=figsize(scale, ratio), squeeze=False)
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.tight_layout()
        fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def density_snapshots(x, snapshots, path, title="|psi(x, t)|^2"):
    """``snapshots``: list of (t, density)."""
    fig, ax = new()
    a = ax[0, 0]
    for t, rho in snapshots:
        a.plot(x, rho, label=f"t = {t:g}")
    a.set_xlabel("x")
    a.set_ylabel("density")
    a.set_title(title)
    a.legend(frameon=False)
    return save(fig, path)


def bohm_report(paths, hist_rows, checkpoints, path):
    """Sampled trajectories (left) and histograms against |psi|^2 (right)."""
    fig, ax = new(1, 2, scale=1.5, ratio=0.4)
    left, right = ax[0]
    if paths:
        t = np.array([p[0] for p in paths])
        X = np.stack([p[1][:, 0] for p in paths])
        left.plot(X, t, color="k", lw=0.5, alpha=0.7)
    left.set_xlabel("x")
    left.set_ylabel("t")
    left.set_title("trajectories")
    for c in checkpoints:
        rows = [r for r in hist_rows if r["t"] == c["t"]]
        xs = np.array([r["x"] for r in rows])
        line, = right.plot(xs, [r["quantum"] for r in rows], lw=1.0)
        right.step(xs, [r["empirical"] for r in rows], where="mid", color=line.get_color(),
                   lw=0.6, alpha=0.7, label=f"t = {c['t']:g}, KS = {c['ks']:.2e}")
    right.set_xlabel("x")
    right.set_ylabel("density")
    right.legend(frameon=False)
    return save(fig, path)


def grw_report(x, density, flashes, coherence, path):
    fig, ax = new(1, 2, scale=1.5, ratio=0.4)
    left, right = ax[0]
    left.plot(x, density, color="k", label="mass density (final)")
    for f in flashes:
        left.axvline(f["x"], color="C3", lw=0.6, alpha=0.6)
    left.set_xlabel("x")
    left.set_ylabel("m(x)")
    left.set_title("flashes (red) and final mass density")
    t = [r["t"] for r in coherence]
    right.semilogy(t, [max(r["analytic"], 1e-300) for r in coherence], label="analytic")
    if coherence and "master" in coherence[0]:
        right.semilogy(t, [max(r["master"], 1e-300) for r in coherence], "--", label="master equation")
    right.set_xlabel("t")
    right.set_ylabel("|rho(q, q')| / |rho_0(q, q')|")
    right.legend(frameon=False)
    return save(fig, path)


def decoherence_report(rows, path):
    fig, ax = new()
    a = ax[0, 0]
    n = [r["n_env"] for r in rows]
    a.semilogy(n, [max(r["off_diagonal_magnitude"], 1e-300) for r in rows], "o-", label="|<M|rho|N>|")
    a.semilogy(n, [r["purity"] for r in rows], "s-", label="purity")
    a.set_xlabel("environment qubits")
    a.legend(frameon=False)
    return save(fig, path)


def measurement_report(report, path):
    fig, ax = new(scale=0.8)
    a = ax[0, 0]
    labels = list(report["mu_estimates"])
    vals = [report["mu_estimates"][k] for k in labels]
    errs = [report["mu_standard_errors"][k] for k in labels]
    a.bar(labels, vals, yerr=errs, color=["C3", "C3", "C0"])
    a.axhline(1 - 2 * report["error_rate"], color="k", ls="--", lw=0.8, label="1 - 2 eps")
    a.set_ylabel("measure")
    a.set_title(f"pass fraction {report['pass_fraction']:.3f}")
    a.legend(frameon=False)
    return save(fig, path)
