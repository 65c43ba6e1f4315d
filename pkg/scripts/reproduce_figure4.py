"""Sweep the probe population inversion and print reconstruction errors."""
import sys
from pathlib import Path

from mediprobe.cli import main
from mediprobe.tomography import read_sweep_csv

ROOT = Path(__file__).resolve().parent.parent


def fmt(x):
    return "undefined" if x is None else f"{x:.3e}"


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/figure4")
    code = main(["run", str(ROOT / "configs" / "figure4.ini"), "--out", str(out)])
    if code:
        sys.exit(code)
    print(f"{'delta_p':>8s} {'eps_rho12':>10s} {'eps_rho22':>10s} {'1-F':>10s}")
    for r in read_sweep_csv(out / "sweep.csv"):
        print(f"{r.delta_p:8.2f} {fmt(r.eps_rho12):>10s} {fmt(r.eps_rho22):>10s} {fmt(r.infidelity):>10s}")
