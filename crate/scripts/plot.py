#!/usr/bin/env python3
"""Plots for run directories written by the `courtesy` binary.

    plot.py traj RUN_DIR [--out FILE]     trajectories from every step log
    plot.py sweep RUN_DIR [--out FILE]    metrics against lambda from sweep_summary.csv
    plot.py curve RUN_DIR [--out FILE]    IRL training curves
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def traj(run: Path):
    logs = sorted(p for p in run.glob("*.csv") if "summary" not in p.name)
    fig, axes = plt.subplots(len(logs), 1, figsize=(8, 2.2 * len(logs)), squeeze=False)
    for ax, path in zip(axes[:, 0], logs):
        df = pd.read_csv(path)
        ax.plot(df.robot_x, df.robot_y, "o-", ms=2, label="robot")
        ax.plot(df.human_x, df.human_y, "s-", ms=2, label="human")
        for col in df.columns:
            if col.startswith("other") and col.endswith("_x"):
                ax.plot(df[col], df[col[:-2] + "_y"], "k.", ms=2)
        ax.set_title(path.stem, fontsize=9)
        ax.set_aspect("equal")
    axes[0, 0].legend(fontsize=8)
    return fig


def sweep(run: Path):
    df = pd.read_csv(run / "sweep_summary.csv")
    df = df[df.error.isna()]
    x = df["lambda"].replace(0, 0.1)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3))
    for ax, col in zip(axes, ["min_gap", "human_min_accel", "inconvenience"]):
        ax.semilogx(x, df[col], "o-")
        ax.set_xlabel("lambda_c (0 shown at 0.1)")
        ax.set_ylabel(col)
    fig.tight_layout()
    return fig


def curve(run: Path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for path in sorted(run.glob("curve_*.csv")):
        df = pd.read_csv(path)
        ax.plot(df.epoch, df.negative_log_likelihood, label=path.stem.removeprefix("curve_"))
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative log-likelihood")
    ax.legend()
    fig.tight_layout()
    return fig


def main():
    p = argparse.ArgumentParser()
    p.add_argument("kind", choices=["traj", "sweep", "curve"])
    p.add_argument("run", type=Path)
    p.add_argument("--out", type=Path)
    a = p.parse_args()
    fig = {"traj": traj, "sweep": sweep, "curve": curve}[a.kind](a.run)
    out = a.out or a.run / f"{a.kind}.png"
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
