"""Eigenfrequencies against omega at fixed magnetic spring constants.

Writes one CSV row per omega and reports where the spectrum changes type,
located by bisection on the characteristic-polynomial roots and compared with
the closed-form critical frequencies.
"""

import csv
from dataclasses import dataclass

import numpy as np

from _config import output_path, parse_config
from rotquad import cli
from rotquad import oracle as orc
from rotquad import rotor2d as r2


@dataclass(frozen=True)
class FrequencyCurveConfig:
    kx: float = -1.0
    ky: float = -0.25
    omega_lo: float = 0.0
    omega_hi: float = 1.5
    points: int = 301
    bisect_tol: float = 1e-13
    out: str = "results/frequency_curves.csv"


def spectrum_type(p):
    lam = orc.char_poly_eigs(r2.build_form(p).generator)
    re, im = np.abs(lam.real) > 0, np.abs(lam.imag) > 0
    if np.all(re & im):
        return "complex"
    if not np.any(re):
        return "imaginary"
    if not np.any(im):
        return "real"
    return "mixed"


def bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) == flo else (lo, mid)
    return 0.5 * (lo + hi)


def main():
    cfg = parse_config(FrequencyCurveConfig, __doc__.splitlines()[0])
    ws = np.linspace(cfg.omega_lo, cfg.omega_hi, cfg.points)
    rows, kinds = [], []
    for w in ws:
        p = r2.PotentialParams.magnetic(cfg.kx, cfg.ky, float(w))
        fp = r2.eigenfrequencies(p)
        kind = spectrum_type(p)
        kinds.append(kind)
        rows.append([w, fp.lambda_plus.real, fp.lambda_plus.imag, fp.lambda_minus.real,
                     fp.lambda_minus.imag, fp.delta_sq, kind])
    path = output_path(cfg.out)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus",
                         "im_lambda_minus", "delta_sq", "spectrum"])
        for r in rows:
            writer.writerow([cli.fmt(x) if not isinstance(x, str) else x for x in r])
    print(f"wrote {len(rows)} rows to {path}")

    crit = r2.critical_frequencies(r2.PotentialParams.magnetic(cfg.kx, cfg.ky, 0.0))
    print(f"closed-form critical frequencies: {crit}")
    for i in range(1, len(ws)):
        if kinds[i] != kinds[i - 1]:
            w = bisect(lambda x: spectrum_type(r2.PotentialParams.magnetic(cfg.kx, cfg.ky, x)),
                       float(ws[i - 1]), float(ws[i]), cfg.bisect_tol)
            near = min(crit, key=lambda c: abs(c - w)) if crit else float("nan")
            print(f"  {kinds[i - 1]:>9} -> {kinds[i]:<9} at omega = {w:.13f}"
                  f"  (|diff| to closed form {abs(w - near):.1e})")


if __name__ == "__main__":
    main()
