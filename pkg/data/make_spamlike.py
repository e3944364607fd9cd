"""Regenerate data/spamlike.csv, the bundled binary-classification fixture.

Spambase-flavoured synthetic table: zero-inflated exponential "frequency"
features whose rates shift with the label, a few gaussian size features, and
pure-noise columns. Deterministic; the CSV is committed, this script exists
for provenance.
"""

import csv
from pathlib import Path

import numpy as np

N_ROWS = 1200
N_FREQ = 12          # zero-inflated frequency-style features
N_SIZE = 5           # gaussian size/length-style features
N_NOISE = 3
SEED = 20240611


def main() -> None:
    rng = np.random.default_rng(SEED)
    y = (rng.random(N_ROWS) < 0.42).astype(int)
    cols = {}

    lifts = rng.uniform(0.5, 3.0, size=N_FREQ) * rng.choice([-1, 1], size=N_FREQ, p=[0.3, 0.7])
    for j in range(N_FREQ):
        base_rate = rng.uniform(0.15, 0.55)
        rate = np.clip(base_rate + 0.25 * np.tanh(lifts[j]) * (2 * y - 1), 0.02, 0.95)
        present = rng.random(N_ROWS) < rate
        scale = rng.uniform(0.3, 2.5)
        vals = np.where(present, rng.exponential(scale, size=N_ROWS), 0.0)
        vals += np.where(present, 0.05 * lifts[j] * y, 0.0)
        cols[f"freq_{j:02d}"] = np.round(vals, 4)

    for j in range(N_SIZE):
        shift = rng.uniform(0.4, 1.6)
        mu0, sd = rng.uniform(2, 40), rng.uniform(0.5, 6)
        vals = rng.normal(mu0, sd, size=N_ROWS) + shift * sd * y
        cols[f"size_{j}"] = np.round(vals, 4)

    for j in range(N_NOISE):
        cols[f"noise_{j}"] = np.round(rng.normal(0, 1, size=N_ROWS), 4)

    out = Path(__file__).parent / "spamlike.csv"
    names = list(cols)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["label"])
        for i in range(N_ROWS):
            w.writerow([format(cols[c][i], "g") for c in names] + [int(y[i])])
    print(f"wrote {out} ({N_ROWS} rows, {len(names)} features, "
          f"positive rate {y.mean():.3f})")


if __name__ == "__main__":
    main()
