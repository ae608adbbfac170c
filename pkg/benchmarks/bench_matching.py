#!/usr/bin/env python3
"""Benchmark the compiled matching kernel against the pure-Python twin.

The workload mirrors what evaluation actually does: thousands of small
per-image greedy matches (a handful of detections against a handful of
truths), plus a few large dense instances. Run after building the extension:

    pip install -e .
    python benchmarks/bench_matching.py
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from logomine._kernels import _matchpy  # noqa: E402

try:
    from logomine._kernels import _matchc
except ImportError:
    _matchc = None


def random_boxes(rng, n):
    x = rng.uniform(0, 600, size=(n, 1))
    y = rng.uniform(0, 600, size=(n, 1))
    w = rng.uniform(4, 120, size=(n, 1))
    h = rng.uniform(4, 120, size=(n, 1))
    return np.hstack([x, y, x + w, y + h])


def make_workload(rng, n_images, max_dets, max_truths):
    out = []
    for _ in range(n_images):
        dets = random_boxes(rng, int(rng.integers(0, max_dets + 1)))
        truths = random_boxes(rng, int(rng.integers(0, max_truths + 1)))
        out.append((dets, truths))
    return out


def run_workload(module, workload, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for dets, truths in workload:
            module.greedy_match(dets, truths, 0.5, False)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(99)
    scenarios = [
        ("eval-like: 5000 images, <=6 dets, <=3 truths", make_workload(rng, 5000, 6, 3), 3),
        ("mixed: 500 images, <=40 dets, <=20 truths", make_workload(rng, 500, 40, 20), 3),
        ("dense: 20 images, 500 dets, 200 truths",
         [(random_boxes(rng, 500), random_boxes(rng, 200)) for _ in range(20)], 3),
    ]
    print(f"{'scenario':<50} {'pure':>10} {'compiled':>10} {'speedup':>8}")
    for name, workload, repeats in scenarios:
        pure = run_workload(_matchpy, workload, repeats)
        if _matchc is None:
            print(f"{name:<50} {pure * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>8}")
            continue
        compiled = run_workload(_matchc, workload, repeats)
        # identical outputs are part of the contract, spot-check one instance
        for dets, truths in workload[:25]:
            tp_a, m_a = _matchpy.greedy_match(dets, truths, 0.5, False)
            tp_b, m_b = _matchc.greedy_match(dets, truths, 0.5, False)
            assert np.array_equal(tp_a, tp_b) and np.array_equal(m_a, m_b)
        print(
            f"{name:<50} {pure * 1e3:>8.1f}ms {compiled * 1e3:>8.1f}ms "
            f"{pure / compiled:>7.1f}x"
        )
    if _matchc is None:
        print("\ncompiled kernel not built; run `pip install -e .` first")


if __name__ == "__main__":
    main()
