"""Secular growth at the non-separable points.

Compares the closed-form propagator at each degenerate point against the
reference exponential and fits the growth of the matrix norm: linear at the
j point, cubic at the point with a single four-dimensional block.
"""

import csv
from dataclasses import dataclass

import numpy as np

from _config import output_path, parse_config
from rotquad import cli
from rotquad import oracle as orc
from rotquad import rotor2d as r2


@dataclass(frozen=True)
class DegenerateEvolutionConfig:
    points: tuple = ((-1.0, -4.0, 1.5), (-1.0, -4.0, 0.5), (-1.0, 0.0, 0.5))
    t_lo: float = 10.0
    t_hi: float = 100.0
    samples: int = 46
    out: str = "results/degenerate_evolution.csv"


def main():
    cfg = parse_config(DegenerateEvolutionConfig, __doc__.splitlines()[0])
    ts = np.linspace(cfg.t_lo, cfg.t_hi, cfg.samples)
    path = output_path(cfg.out)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kx", "ky", "omega", "case", "t", "norm", "rel_err_vs_reference"])
        for kx, ky, w in cfg.points:
            p = r2.PotentialParams.magnetic(kx, ky, w)
            df = r2.degenerate_form(p)
            G = r2.build_form(p).generator
            norms, errs = [], []
            for t in ts:
                E = r2.closed_propagator(p, float(t))
                ref = orc.reference_expm(G, float(t))
                err = float(np.max(np.abs(E - ref)) / np.max(np.abs(ref)))
                norms.append(np.linalg.norm(E, 2))
                errs.append(err)
                writer.writerow([cli.fmt(kx), cli.fmt(ky), cli.fmt(w), df.case, cli.fmt(float(t)),
                                 cli.fmt(float(norms[-1])), cli.fmt(err)])
            line = f"case {df.case} at k=({kx:g}, {ky:g}), omega={w:g}: max rel err {max(errs):.1e}"
            if abs(df.lam.imag) == 0:
                slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
                line += f", log-log norm slope {slope:.3f}"
            else:
                # the 2x2 blocks contribute a linear prefactor t e^{a t}
                rate = np.polyfit(ts, np.log(np.array(norms) / ts), 1)[0]
                line += f", exponential rate {rate:.4f} (|Im lam| = {abs(df.lam.imag):.4f})"
            print(line)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
