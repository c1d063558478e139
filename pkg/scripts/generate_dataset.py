"""Regenerate the bundled housing-style demo dataset.

Produces data/housing.csv (506 rows, 13 features scaled to [0, 1], one binary
column, a +/-1 label) and its feature-spec sidecar data/housing.spec.json.
The generator is deterministic; the files in data/ are committed so tests and
examples never depend on running this script.

Usage: python3 scripts/generate_dataset.py [output_dir]
"""

import json
import os
import sys

import numpy as np

N_ROWS = 506
SEED = 2024

FEATURES = [
    "crime_rate", "residential_zoning", "industrial_share", "riverfront",
    "nox_level", "rooms_avg", "built_before_1940", "employment_distance",
    "highway_access", "property_tax", "pupil_teacher_ratio",
    "residential_density", "lower_status_share",
]

# ground-truth score used to draw the labels (positive class = "high value")
LABEL_WEIGHTS = {
    "crime_rate": -1.6, "industrial_share": -0.7, "riverfront": 0.5,
    "nox_level": -1.1, "rooms_avg": 2.4, "built_before_1940": -0.4,
    "employment_distance": 0.6, "property_tax": -0.9,
    "pupil_teacher_ratio": -1.0, "lower_status_share": -2.2,
}


def _scale01(col):
    lo, hi = col.min(), col.max()
    return (col - lo) / (hi - lo)


def generate():
    rng = np.random.default_rng(SEED)
    n = N_ROWS
    # two latent town-level factors drive the correlations
    urban = rng.beta(2.0, 2.5, size=n)       # density / industry factor
    wealth = rng.beta(2.5, 2.0, size=n)      # prosperity factor

    cols = {
        "crime_rate": _scale01(np.exp(2.2 * urban - 1.8 * wealth
                                      + rng.normal(0, 0.5, n))),
        "residential_zoning": _scale01((1 - urban) ** 2
                                       + rng.normal(0, 0.08, n)),
        "industrial_share": _scale01(urban + rng.normal(0, 0.15, n)),
        "riverfront": (rng.random(n) < 0.07).astype(float),
        "nox_level": _scale01(0.8 * urban + rng.normal(0, 0.1, n)),
        "rooms_avg": _scale01(0.9 * wealth + rng.normal(0, 0.18, n)),
        "built_before_1940": _scale01(0.6 * urban - 0.3 * wealth
                                      + rng.normal(0, 0.2, n)),
        "employment_distance": _scale01((1 - urban)
                                        + rng.normal(0, 0.12, n)),
        "highway_access": _scale01(np.round(8 * urban
                                            + rng.normal(0, 1.0, n))),
        "property_tax": _scale01(0.7 * urban - 0.2 * wealth
                                 + rng.normal(0, 0.12, n)),
        "pupil_teacher_ratio": _scale01(0.5 * urban - 0.6 * wealth
                                        + rng.normal(0, 0.15, n)),
        "residential_density": _scale01(urban ** 1.5
                                        + rng.normal(0, 0.1, n)),
        "lower_status_share": _scale01(0.8 * urban - 0.9 * wealth
                                       + rng.normal(0, 0.15, n)),
    }
    x = np.column_stack([cols[name] for name in FEATURES])
    score = sum(w * cols[name] for name, w in LABEL_WEIGHTS.items())
    score = score - np.median(score) + rng.normal(0, 0.25, n) + 0.35
    labels = np.where(score >= 0, 1, -1)
    return x, labels


def write(out_dir):
    x, labels = generate()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "housing.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(FEATURES + ["label"]) + "\n")
        for row, lab in zip(x, labels):
            cells = [format(v, ".17g") for v in row] + [str(int(lab))]
            fh.write(",".join(cells) + "\n")
    spec = {
        "label": "label",
        "features": [
            {"name": name,
             "kind": "binary" if name == "riverfront" else "continuous",
             "lower": "auto", "upper": "auto"}
            for name in FEATURES
        ],
    }
    spec_path = os.path.join(out_dir, "housing.spec.json")
    with open(spec_path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=1)
        fh.write("\n")
    pos = int((labels == 1).sum())
    print(f"wrote {csv_path} ({len(labels)} rows, {pos} positive, "
          f"{len(labels) - pos} negative) and {spec_path}")


if __name__ == "__main__":
    write(sys.argv[1] if len(sys.argv) > 1 else
          os.path.join(os.path.dirname(__file__), "..", "data"))
