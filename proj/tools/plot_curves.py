#!/usr/bin/env python3
"""Plot accuracy-vs-cost curves emitted by `quee sweep`.

Usage: plot_curves.py SWEEP_DIR [-o curves.png]
"""

import argparse
import csv
import pathlib
import sys


def read_tsv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("sweep_dir")
    parser.add_argument("-o", "--output", default="curves.png")
    args = parser.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    base = pathlib.Path(args.sweep_dir)
    fig, ax = plt.subplots(figsize=(6, 4.5))

    styles = {
        "curve_quee.tsv": dict(label="quee", marker="o"),
        "curve_oracle.tsv": dict(label="oracle", marker="^", linestyle="--"),
        "curve_threshold.tsv": dict(label="threshold", marker="s"),
    }
    for name, style in styles.items():
        path = base / name
        if not path.exists():
            continue
        rows = read_tsv(path)
        costs = [float(r["cost"]) for r in rows]
        accs = [float(r["accuracy"]) for r in rows]
        errs = [float(r["accuracy_ci95"]) for r in rows]
        order = sorted(range(len(costs)), key=lambda i: costs[i])
        ax.errorbar([costs[i] for i in order], [accs[i] for i in order],
                    yerr=[errs[i] for i in order], capsize=2, **style)

    fixed = base / "fixed_paths.tsv"
    if fixed.exists():
        rows = read_tsv(fixed)
        ax.scatter([float(r["cost"]) for r in rows],
                   [float(r["accuracy"]) for r in rows],
                   marker="x", color="gray", label="fixed paths")

    ax.set_xlabel("normalized cost (BitOPS)")
    ax.set_ylabel("accuracy")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    sys.exit(main())
