#!/usr/bin/env python3
"""Freeze reference values for the two-sample statistics from scipy/numpy.

Usage: python3 scripts/gen_stats_fixture.py > tests/fixtures/stats_fixture.json
"""
import json
import sys

import numpy as np
import scipy
from scipy import stats


def cohens_d(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n1, n2 = len(xs), len(ys)
    pooled = ((n1 - 1) * xs.var(ddof=1) + (n2 - 1) * ys.var(ddof=1)) / (n1 + n2 - 2)
    return float((xs.mean() - ys.mean()) / np.sqrt(pooled))


def welch_df(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    a = xs.var(ddof=1) / len(xs)
    b = ys.var(ddof=1) / len(ys)
    return float((a + b) ** 2 / (a * a / (len(xs) - 1) + b * b / (len(ys) - 1)))


def two_sample(xs, ys):
    res = stats.ttest_ind(xs, ys, equal_var=False)
    values = np.concatenate([xs, ys])
    labels = np.concatenate([np.ones(len(xs)), np.zeros(len(ys))])
    pb = stats.pointbiserialr(labels, values)
    return {
        "xs": [float(v) for v in xs],
        "ys": [float(v) for v in ys],
        "cohens_d": cohens_d(xs, ys),
        "welch_t": float(res.statistic),
        "welch_df": welch_df(xs, ys),
        "welch_p": float(res.pvalue),
        "point_biserial": float(pb.statistic),
    }


def main():
    rng = np.random.default_rng(20251015)
    samples = [two_sample(np.array([1.1, 2.3, 2.9, 3.8]), np.array([0.2, 0.9, 1.4]))]
    while len(samples) < 20:
        k = len(samples)
        n1 = int(rng.integers(2, 40))
        n2 = int(rng.integers(2, 40))
        shift = float(rng.normal(0.0, 1.5))
        s1 = float(rng.uniform(0.1, 2.0))
        s2 = float(rng.uniform(0.1, 2.0))
        xs = rng.normal(shift, s1, n1)
        ys = rng.normal(0.0, s2, n2)
        if k % 5 == 4:
            # far tail: large separation, p near 1e-15 and below
            xs = rng.normal(3.0, 0.3, 60)
            ys = rng.normal(0.0, 0.3, 60)
        samples.append(two_sample(np.round(xs, 6), np.round(ys, 6)))

    before = np.array([5.24, 5.61, 4.87])
    after = np.array([4.71, 4.98, 4.44])
    paired = stats.ttest_rel(after, before)
    out = {
        "reference": "scipy " + scipy.__version__,
        "two_sample": samples,
        "paired": {
            "baseline": before.tolist(),
            "condition": after.tolist(),
            "t": float(paired.statistic),
            "p": float(paired.pvalue),
        },
    }
    json.dump(out, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
