"""Stability windows at fixed rotating-frame spring constants.

For each k' pair, prints the closed-form window set and checks it against a
dense omega sweep of the generic spectral classifier.  Rows of the sweep go to
a CSV for plotting.
"""

import csv
from dataclasses import dataclass

import numpy as np

from _config import output_path, parse_config
from rotquad import cli
from rotquad import quadcore as qc
from rotquad import rotor2d as r2
from rotquad.errors import IndeterminateStructureError


@dataclass(frozen=True)
class StabilityScanConfig:
    cases: tuple = ((2.0, 1.0), (1.0, -0.5), (1.0, -2.0), (1.0, 1.0), (-1.0, -2.0))
    omega_hi: float = 2.5
    points: int = 501
    out: str = "results/stability_scan.csv"


def main():
    cfg = parse_config(StabilityScanConfig, __doc__.splitlines()[0])
    path = output_path(cfg.out)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kpx", "kpy", "omega", "window", "generic"])
        for kpx, kpy in cfg.cases:
            ws = r2.stability_windows(r2.PotentialParams.rotating(kpx, kpy, 0.0))
            text = ", ".join(
                f"{'[' if iv.lo_closed else '('}{iv.lo:.6g}, {iv.hi:.6g}{']' if iv.hi_closed else ')'} {iv.kind}"
                for iv in ws.intervals)
            agree = total = 0
            for w in np.linspace(0.0, cfg.omega_hi, cfg.points):
                p = r2.PotentialParams.rotating(kpx, kpy, float(w))
                try:
                    rep = qc.classify_structure(qc.spectral(r2.build_form(p).generator))
                    generic = "stable" if rep.dynamically_stable else "unstable"
                except IndeterminateStructureError:
                    generic = "indeterminate"
                window = ws.kind_at(float(w))
                writer.writerow([cli.fmt(kpx), cli.fmt(kpy), cli.fmt(float(w)), window, generic])
                if generic != "indeterminate":
                    total += 1
                    agree += window == generic
            print(f"k'=({kpx:g}, {kpy:g}): {text}")
            print(f"  sweep agreement {agree}/{total}")
    print(f"wrote sweep to {path}")


if __name__ == "__main__":
    main()
