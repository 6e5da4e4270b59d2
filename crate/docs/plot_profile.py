"""Plot weak-type profiles written by `bessel-harmonics weaktype --format csv`.

usage: python plot_profile.py profiles.csv [out.png]

Rows of both spike centres share an h value and are drawn as one series.
"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def main():
    src = sys.argv[1]
    rows = defaultdict(list)
    with open(src, newline="") as fh:
        for r in csv.DictReader(fh):
            rows[r["h"]].append((float(r["gamma"]), float(r["gamma_times_measure"])))
    fig, ax = plt.subplots()
    for h, pts in sorted(rows.items(), key=lambda kv: -float(kv[0])):
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], marker=".", label=f"h = {h}")
    ax.set_xlabel("gamma")
    ax.set_ylabel("gamma * m{|T f_h| > gamma}")
    ax.legend()
    if len(sys.argv) > 2:
        fig.savefig(sys.argv[2], dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
