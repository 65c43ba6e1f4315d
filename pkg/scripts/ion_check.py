"""Compare the full trapped-ion dynamics with the Jaynes-Cummings reduction."""
import json
import sys
from pathlib import Path

from mediprobe.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/ion_check")
    code = main(["run", str(ROOT / "configs" / "ion_check.ini"), "--out", str(out)])
    if code:
        sys.exit(code)
    for eta, row in json.loads((out / "ion_check.json").read_text()).items():
        print(f"eta = {eta:5s}  max |dP_D| = {row['max_deviation']:.3e}  norm drift = {row['norm_drift']:.1e}")
