"""Plot run artifacts (needs matplotlib).

Usage: plot_figures.py [OUT_ROOT]   expects OUT_ROOT/figure3 and OUT_ROOT/figure4
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from mediprobe.dynamics import TimeSeries  # noqa: E402
from mediprobe.tomography import read_sweep_csv  # noqa: E402

if __name__ == "__main__":
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    fig3 = root / "figure3"
    if fig3.exists():
        full = TimeSeries.from_csv(fig3 / "timeseries.csv")
        eff = TimeSeries.from_csv(fig3 / "timeseries_effective.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(full.times, full.values, lw=0.6, label="full model")
        ax.plot(eff.times, eff.values, lw=1.5, label="effective model")
        ax.set_xlabel(r"$\tau_{\rm eff}$")
        ax.set_ylabel(r"$P_e$")
        ax.legend()
        fig.tight_layout()
        fig.savefig(root / "figure3.png", dpi=150)
    fig4 = root / "figure4"
    if fig4.exists():
        rows = read_sweep_csv(fig4 / "sweep.csv")
        dp = [r.delta_p for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(dp, [r.eps_rho12 for r in rows], label=r"$\epsilon_{12}$")
        ax.plot(dp, [r.eps_rho22 for r in rows], label=r"$\epsilon_{22}$")
        ax.plot(dp, [r.infidelity for r in rows], label=r"$1-F$")
        ax.set_xlabel(r"$\Delta P$")
        ax.legend()
        fig.tight_layout()
        fig.savefig(root / "figure4.png", dpi=150)
