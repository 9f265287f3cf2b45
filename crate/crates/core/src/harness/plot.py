#!/usr/bin/env python3
"""Plot sweep CSVs produced by `fasloc simulate`.

Usage: python plot.py [file.csv ...]

With no arguments, plots every sweep CSV sitting next to this script
(trial logs are skipped). For each input the script writes
<stem>_angles.png (angle RMSEs with their bounds, log scale) and
<stem>_position.png (position RMSE with its bound) beside the CSV.
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


ANGLE_SERIES = [
    ("rmse_theta_ub_el", "crb_theta_ub_el", "tab:blue", "user-BS elevation"),
    ("rmse_theta_ub_az", "crb_theta_ub_az", "tab:orange", "user-BS azimuth"),
    ("rmse_theta_ur_el", "crb_theta_ur_el", "tab:green", "user-surface elevation"),
    ("rmse_theta_ur_az", "crb_theta_ur_az", "tab:red", "user-surface azimuth"),
]


def read_rows(path):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def plot_file(path):
    rows = read_rows(path)
    if not rows:
        print(f"{path}: empty, skipped")
        return
    x = [r["sweep_value"] for r in rows]

    fig, ax = plt.subplots(figsize=(7, 5))
    for rmse_key, crb_key, color, label in ANGLE_SERIES:
        ax.semilogy(x, [r[rmse_key] for r in rows], "o-", color=color, label=f"RMSE {label}")
        ax.semilogy(x, [r[crb_key] for r in rows], "--", color=color, label=f"bound {label}")
    ax.set_xlabel("sweep value")
    ax.set_ylabel("angle RMSE (rad)")
    ax.set_title(path.stem)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = path.with_name(path.stem + "_angles.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    print(f"wrote {out}")

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.semilogy(x, [r["rmse_pu"] for r in rows], "o-", color="tab:blue", label="position RMSE")
    ax.semilogy(x, [r["peb"] for r in rows], "--", color="tab:blue", label="position bound")
    ax.set_xlabel("sweep value")
    ax.set_ylabel("position error (m)")
    ax.set_title(path.stem)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = path.with_name(path.stem + "_position.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    print(f"wrote {out}")


def main(argv):
    if len(argv) > 1:
        paths = [Path(a) for a in argv[1:]]
    else:
        here = Path(__file__).resolve().parent
        paths = sorted(
            p for p in here.glob("*.csv") if not p.name.startswith("trials_")
        )
    if not paths:
        print("no sweep CSVs found")
        return 1
    for path in paths:
        plot_file(path)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
