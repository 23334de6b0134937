"""Render trace and trajectory CSVs written by `ndgd run`.

Usage: python scripts/plot_traces.py results/quartic [--repeat 0] [--out figures]

Needs the `plot` extra (matplotlib).
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ndgd.results import read_trace_csv

ALGORITHMS = ("dgd", "ndgd", "gdq")


def load_trajectory(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """(k per row, positions with shape (records, m, n))."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    ks = np.unique(data[:, 0]).astype(int)
    m = int(data[:, 1].max()) + 1
    positions = data[:, 2:].reshape(len(ks), m, -1)
    return ks, positions


def plot_distances(directory: Path, repeat: int, ax) -> None:
    for alg in ALGORITHMS:
        path = directory / f"{alg}_r{repeat:02d}_trace.csv"
        if not path.exists():
            continue
        records = read_trace_csv(path)
        ks = [r.k for r in records]
        worst = [max(r.distances) for r in records]
        ax.semilogy(ks, worst, label=alg.upper())
    ax.set_xlabel("iteration k")
    ax.set_ylabel("max agent distance to minimizers")
    ax.legend()


def plot_trajectories(directory: Path, repeat: int, ax) -> None:
    for alg in ALGORITHMS:
        path = directory / f"{alg}_r{repeat:02d}_trajectory.csv"
        if not path.exists():
            continue
        _, positions = load_trajectory(path)
        if positions.shape[2] < 2:
            continue
        ax.plot(positions[:, 0, 0], positions[:, 0, 1], label=f"{alg.upper()} agent 0")
    ax.plot([0], [0], "k*", markersize=12)
    ax.set_xlabel("x_0")
    ax.set_ylabel("x_1")
    ax.legend()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory", type=Path)
    parser.add_argument("--repeat", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("figures"))
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4.5))
    plot_trajectories(args.directory, args.repeat, left)
    plot_distances(args.directory, args.repeat, right)
    fig.tight_layout()
    target = args.out / f"{args.directory.name}_r{args.repeat:02d}.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
