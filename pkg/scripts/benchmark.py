"""Timing of the analytical engine and of one training pass per network.

Usage: python3 scripts/benchmark.py [--configs 200]
"""
import argparse
import time

import numpy as np

from msfnet.core import AngularGrid, MsfConfig, PhysicalParams, SeededRng
from msfnet.farfield import compute_pattern, compute_pattern_fast
from msfnet.measures import measures_from_pattern
from msfnet.neural import CnnModel, MlpModel


def timed(fn, repeat):
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", type=int, default=200)
    args = ap.parse_args()
    params, grid = PhysicalParams(), AngularGrid()
    rng = SeededRng(0)
    configs = [MsfConfig.random(rng.child(k)) for k in range(args.configs)]
    it = iter(configs * 2)
    print(f"naive pattern      {1e3 * timed(lambda: compute_pattern(next(it), params, grid), 10):8.2f} ms")
    it = iter(configs * 2)
    print(f"fast pattern       {1e3 * timed(lambda: compute_pattern_fast(next(it), params, grid), args.configs):8.2f} ms")
    pats = [compute_pattern_fast(c, params, grid) for c in configs[:20]]
    it = iter(pats * 2)
    print(f"measures           {1e3 * timed(lambda: measures_from_pattern(next(it)), 20):8.2f} ms")
    x = np.random.default_rng(0).integers(0, 8, size=(256, 12, 12)) / 7.0
    y = np.zeros((256, 5))
    mlp, cnn = MlpModel(seed=0), CnnModel(seed=0)
    print(f"mlp grad, 256 rows {1e3 * timed(lambda: mlp.loss_and_grad(x.reshape(256, -1), y, 0.8), 20):8.2f} ms")
    print(f"cnn grad, 256 rows {1e3 * timed(lambda: cnn.loss_and_grad(x, y, 0.0), 5):8.2f} ms")


if __name__ == "__main__":
    main()
