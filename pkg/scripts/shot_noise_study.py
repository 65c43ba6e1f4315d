"""Spread of the fitted second derivative under projection noise.

Usage: shot_noise_study.py [SHOTS ...]
"""
import sys

import numpy as np

from mediprobe.experiments import figure3
from mediprobe.shorttime import estimate_derivatives, sample_projection_noise

if __name__ == "__main__":
    shots_list = [int(s) for s in sys.argv[1:]] or [10_000, 100_000, 1_000_000]
    series = figure3().series_effective
    for window_hi in (0.3, 0.6, 1.0):
        n = int(np.sum(series.times <= window_hi))
        for shots in shots_list:
            fits = [
                estimate_derivatives(sample_projection_noise(series, shots, seed), 4, (0.0, window_hi))[2]
                for seed in range(100)
            ]
            print(f"window [0, {window_hi}] ({n} points)  shots {shots:>8d}  "
                  f"mean {np.mean(fits):.3f}  std {np.std(fits, ddof=1):.4f}")
