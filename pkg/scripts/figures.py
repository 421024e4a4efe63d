"""Run the CLI workflows on the bundled data and plot the results.

    python3 scripts/figures.py --out figures/

Needs matplotlib (``pip install -e .[plot]``).  Each panel is built from the
CSV/JSON files the CLI writes, so the figures are exactly what a user would
get from the command line.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from cqed.cli import bundled  # noqa: E402
from cqed.fitters import finesse_decay_model  # noqa: E402
from cqed.io import read_csv  # noqa: E402


def cli(*args):
    subprocess.run([sys.executable, "-m", "cqed.cli", *args], check=True)


def backaction(out: Path):
    run = out / "backaction"
    cli("backaction", "--out", str(run))
    d = read_csv(run / "backaction.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(d["delta_c_MHz"], d["r_c_over_r0"], label="cavity")
    ax.plot(d["delta_c_MHz"], d["r_fs_over_r0"], label="free space")
    ax.axhline(1.0, color="0.6", lw=0.8)
    ax.set_xlabel("cavity detuning / 2pi (MHz)")
    ax.set_ylabel("emission rate / bare rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "backaction.png", dpi=150)


def g2(out: Path):
    run = out / "g2"
    cli("g2", "--out", str(run), "--bins", "2", "--tau-max", "400")
    h = read_csv(run / "g2_histogram.csv")
    band = read_csv(run / "g2_band.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(h["tau_s"] * 1e9, h["g2"], h["g2_err"], fmt=".", ms=3, lw=0.5, label="histogram")
    ax.plot(band["tau_s"] * 1e9, band["g2"], "k", lw=1, label="fit")
    ax.fill_between(band["tau_s"] * 1e9, band["lower"], band["upper"], color="0.7", alpha=0.6)
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("g2")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "g2.png", dpi=150)


def finesse(out: Path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, law in zip(axes, ("exponential", "depletion")):
        run = out / f"finesse_{law}"
        cli("finesse", "--law", law, "--out", str(run))
        d = read_csv(bundled(f"finesse_{law}.csv"))
        fit = json.loads((run / "finesse_fit.json").read_text())
        t = np.linspace(d["t_days"].min(), d["t_days"].max(), 400)
        t_total = json.loads((run / "summary.json").read_text())["t_total"]
        model = finesse_decay_model(law, t_total)
        ax.errorbar(d["t_days"], d["finesse"], d["sigma"], fmt=".", ms=3, lw=0.5)
        ax.plot(t, model(list(fit["params"].values()), t), "k", lw=1)
        ax.set_xlabel("time (days)")
        ax.set_title(law)
    axes[0].set_ylabel("finesse")
    fig.tight_layout()
    fig.savefig(out / "finesse.png", dpi=150)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    out = Path(ap.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)
    for fn in (backaction, g2, finesse):
        fn(out)
        print("wrote", fn.__name__)


if __name__ == "__main__":
    main()
