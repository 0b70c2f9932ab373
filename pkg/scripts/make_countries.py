"""Regenerate the bundled synthetic 29-country dataset.

The committed CSV is the output of this script; rerunning it with the same
seed reproduces the file byte-for-byte.
"""

import csv
import sys
from pathlib import Path

import numpy as np

COUNTRIES = [
    "Brazil", "Mexico", "Thailand", "South Africa", "Congo", "Kenya",
    "Myanmar", "Iran", "United Kingdom", "Japan", "Pakistan", "South Korea",
    "Indonesia", "Germany", "Philippines", "United States", "Italy", "Egypt",
    "Vietnam", "China", "Russia", "India", "Turkiye", "France", "Bangladesh",
    "Tanzania", "Colombia", "Ethiopia", "Nigeria",
]
FEATURES = [
    "mortality_20_24", "sex_ratio_birth", "aid_norway_usd", "remittances_usd",
    "urban_pop_pct", "gdp_per_capita", "life_expectancy", "health_exp_pct",
    "female_labour_pct", "alcohol_litres",
]
SEED = 20230110


def generate():
    rng = np.random.default_rng(SEED)
    n = len(COUNTRIES)
    mortality = rng.uniform(0.5, 4.0, n)
    sex_ratio = rng.uniform(1.02, 1.13, n)
    aid = rng.lognormal(2.0, 1.0, n)
    remit = rng.lognormal(3.0, 1.2, n)
    urban = rng.uniform(20, 90, n)
    gdp = rng.lognormal(8.8, 1.0, n)
    life = 55 + 25 * (np.log(gdp) - 6) / 6 + rng.normal(0, 2, n)
    health = rng.uniform(2, 12, n)
    female = rng.uniform(15, 75, n)
    alcohol = rng.uniform(0.1, 12, n)
    smoking = (14 + 55 * (sex_ratio - 1.05) - 2.4 * (mortality - 2)
               + 0.06 * (urban - 50) + 0.5 * alcohol + rng.normal(0, 4, n))
    smoking = np.clip(smoking, 3.0, 45.0)
    cols = [mortality, sex_ratio, aid, remit, urban, gdp, life, health,
            female, alcohol]
    return [[c] + [round(float(col[i]), 4) for col in cols] + [round(float(smoking[i]), 1)]
            for i, c in enumerate(COUNTRIES)]


def main(out):
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", *FEATURES, "smoking_rate"])
        w.writerows(generate())


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src/axilkit/data/countries.csv"
    main(sys.argv[1] if len(sys.argv) > 1 else default)
