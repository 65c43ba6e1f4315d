"""Run the dispersive-readout experiment and print the second-derivative summary."""
import json
import sys
from pathlib import Path

from mediprobe.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(out: str = "out/figure3") -> dict:
    code = main(["run", str(ROOT / "configs" / "figure3.ini"), "--out", out])
    if code:
        sys.exit(code)
    return json.loads((Path(out) / "derivatives.json").read_text())["summary"]


if __name__ == "__main__":
    for key, value in sorted(run(*sys.argv[1:]).items()):
        print(f"{key:28s} {value:.6f}")
