"""Writes tests/data/nhanes_synthetic.csv: a fixed synthetic dataset with the
column layout of the fish/mercury analysis (234 treated, 873 controls)."""
import csv
import sys

import numpy as np

N_TREATED, N_CONTROL = 234, 873
rng = np.random.default_rng(20131214)


def draw(n, fish):
    shift = 0.35 if fish else 0.0
    gender = rng.integers(1, 3, n)
    age = np.clip(np.round(rng.normal(47 + 8 * shift, 17, n)), 18, 80)
    income_missing = (rng.random(n) < 0.07).astype(int)
    income = np.clip(np.round(rng.gamma(2.2, 1.2 + shift, n), 2), 0, 5)
    income[income_missing == 1] = 2.3
    race = rng.choice([1, 2, 3, 4, 6, 7], n, p=[0.14, 0.1, 0.38, 0.2, 0.14, 0.04])
    education = rng.integers(1, 6, n) + (rng.random(n) < shift).astype(int)
    education = np.clip(education, 1, 5)
    smoking_ever = (rng.random(n) < 0.45 - 0.1 * shift).astype(int)
    smoking_now = np.where(smoking_ever == 1, rng.poisson(4, n) * (rng.random(n) < 0.5), 0)
    mean = (-0.4 + 1.9 * fish + 0.012 * (age - 47) + 0.15 * income
            + 0.25 * (race == 6) + 0.08 * education - 0.05 * (gender - 1))
    log2_hg = mean + rng.normal(0, 1.1, n)
    return np.column_stack([gender, age, income, income_missing, race, education,
                            smoking_ever, smoking_now, np.full(n, int(fish)), log2_hg])


rows = np.vstack([draw(N_TREATED, True), draw(N_CONTROL, False)])
rows = rows[rng.permutation(len(rows))]
out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/nhanes_synthetic.csv"
with open(out, "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["gender", "age", "income", "income.missing", "race", "education",
                "smoking.ever", "smoking.now", "fish.level", "o.LBXTHG"])
    for r in rows:
        w.writerow([int(r[0]), int(r[1]), f"{r[2]:.2f}", int(r[3]), int(r[4]), int(r[5]),
                    int(r[6]), int(r[7]), int(r[8]), f"{r[9]:.4f}"])
