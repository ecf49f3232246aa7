"""Monte-Carlo rejection rate of the paired bootstrap on a planted shift.

Each trial draws a_i ~ N(0, 1) and b_i ~ N(shift, 1) independently, runs a
paired bootstrap (indices with replacement, two-sided p from the empirical
tail) and rejects when p < alpha. Writes tests/fixtures/bootstrap_mc.json.
"""
import json
import os

import numpy as np

ALPHA = 0.05
RESAMPLES = 1000
CASES = [
    {"name": "shift_0.2_n100", "n": 100, "shift": 0.2, "trials": 10000},
    {"name": "shift_0.2_n1000", "n": 1000, "shift": 0.2, "trials": 1000},
    {"name": "null_n100", "n": 100, "shift": 0.0, "trials": 4000},
]


def p_value(a, b, rng):
    idx = rng.integers(0, len(a), size=(RESAMPLES, len(a)))
    ma = a[idx].mean(axis=1)
    mb = b[idx].mean(axis=1)
    le = np.count_nonzero(ma <= mb) / RESAMPLES
    ge = np.count_nonzero(ma >= mb) / RESAMPLES
    return min(1.0, 2 * min(le, ge))


def main():
    rng = np.random.default_rng(20240611)
    out = []
    for case in CASES:
        rejections = 0
        for _ in range(case["trials"]):
            a = rng.normal(0.0, 1.0, case["n"])
            b = rng.normal(case["shift"], 1.0, case["n"])
            rejections += p_value(a, b, rng) < ALPHA
        rate = rejections / case["trials"]
        out.append({**case, "alpha": ALPHA, "resamples": RESAMPLES, "rejection_rate": rate})
        print(case["name"], rate)
    path = os.path.join(os.path.dirname(__file__), "..", "fixtures", "bootstrap_mc.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
