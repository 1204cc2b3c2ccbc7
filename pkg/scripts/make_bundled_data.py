"""Regenerate the small labelled CSV tables in src/llmad/data/.

    python scripts/make_bundled_data.py
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "llmad" / "data"


def table(seed: int, n_rows: int, n_cols: int, contamination: float, discrete_cols: int = 0):
    rng = np.random.default_rng(seed)
    labels = (rng.random(n_rows) < contamination).astype(int)
    labels[:2] = [0, 1]  # both classes present in the full table
    mu = rng.uniform(-50, 50, n_cols)
    sd = rng.uniform(0.5, 5, n_cols)
    x = rng.normal(mu, sd, size=(n_rows, n_cols))
    for i in np.flatnonzero(labels):
        cols = rng.choice(n_cols, size=rng.integers(1, 5), replace=False)
        x[i, cols] = rng.normal(mu[cols], 10 * sd[cols])
    for j in range(discrete_cols):
        levels = rng.integers(2, 5)
        x[:, j] = rng.integers(0, levels, n_rows)
        x[labels == 1, j] = np.where(rng.random(labels.sum()) < 0.5, levels + rng.integers(0, 3, labels.sum()), x[labels == 1, j])
    return np.round(x, 3), labels


def write(path: Path, x, labels, names=None):
    names = names or [f"f{j + 1}" for j in range(x.shape[1])]
    lines = [",".join(names + ["label"])]
    for row, lab in zip(x, labels):
        lines.append(",".join(f"{v:g}" for v in row) + f",{lab}")
    path.write_text("\n".join(lines) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    specs = [
        ("synth_clutter", 11, 300, 12, 0.08, 0),
        ("synth_mixed", 12, 240, 10, 0.10, 3),
        ("synth_wide", 13, 400, 15, 0.05, 0),
        ("synth_small", 14, 90, 6, 0.12, 1),
        ("synth_discrete", 15, 200, 8, 0.10, 8),
    ]
    for name, seed, n, k, c, d in specs:
        x, y = table(seed, n, k, c, d)
        write(OUT / f"{name}.csv", x, y)
    x = np.array([
        [10.1, 5.0, 1.0], [9.8, 5.2, 1.0], [10.0, 4.9, 2.0], [10.3, 5.1, 1.0],
        [9.9, 25.0, 1.0], [10.2, 5.0, 2.0], [55.0, 5.1, 1.0], [9.7, 4.8, 1.0],
        [10.0, 5.0, 9.0], [10.1, 5.3, 2.0], [9.9, 4.9, 1.0], [10.0, 5.0, 2.0],
    ])
    y = np.array([0, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0])
    write(OUT / "toy.csv", x, y)


if __name__ == "__main__":
    main()
