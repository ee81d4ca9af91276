"""Regenerate tests/fixtures/toy.csv: a small tabular task with a planted
label signal and a sensitive attribute correlated with one feature."""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=400)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/fixtures/toy.csv"))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.rows
    group = rng.random(n) < 0.4
    age = np.round(rng.normal(38 + 4 * group, 9, n).clip(18, 80))
    hours = np.round(rng.normal(40, 8, n).clip(5, 80))
    edu = rng.choice(["hs", "college", "grad"], n, p=[0.5, 0.35, 0.15])
    logit = 0.08 * (age - 38) + 0.06 * (hours - 40) + np.select(
        [edu == "college", edu == "grad"], [0.8, 1.6], 0.0) - 0.3 * group - 0.4
    label = rng.random(n) < 1 / (1 + np.exp(-logit))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["age", "hours", "edu", "race", "label"])
        for i in range(n):
            w.writerow([int(age[i]), int(hours[i]), edu[i], "B" if group[i] else "A",
                        "yes" if label[i] else "no"])


if __name__ == "__main__":
    main()
