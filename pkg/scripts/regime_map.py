"""Regime map over the (kx, ky) plane at fixed omega.

Uses the same evaluation as ``rotquad map`` and adds a summary: tag counts,
which regimes touch, and the tags on the coordinate axes and at the points
where one spring constant vanishes and the other equals -4 omega^2.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from _config import output_path, parse_config
from rotquad import cli
from rotquad import rotor2d as r2


@dataclass(frozen=True)
class RegimeMapConfig:
    omega: float = 0.5
    lo: float = -2.0
    hi: float = 1.0
    points: int = 201
    out: str = "results/regime_map.csv"


def main():
    cfg = parse_config(RegimeMapConfig, __doc__.splitlines()[0])
    grid = cli.GridSpec.from_json({
        "axes": [{"name": "kx", "lo": cfg.lo, "hi": cfg.hi, "n": cfg.points},
                 {"name": "ky", "lo": cfg.lo, "hi": cfg.hi, "n": cfg.points}],
        "fixed": {"omega": cfg.omega},
    })
    rows = cli.map_rows(grid)
    columns = ["kx", "ky", "regime", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus",
               "im_lambda_minus", "stable", "separable"]
    path = output_path(cfg.out)
    path.write_text(cli.csv_text([f"regime map omega={cli.fmt(cfg.omega)}"], columns, rows),
                    encoding="utf-8")
    print(f"wrote {len(rows)} rows to {path}")

    tags = np.array([r[2] for r in rows]).reshape(cfg.points, cfg.points)
    print("tag counts:", {str(k): v for k, v in sorted(Counter(tags.ravel()).items())})
    touching = set()
    for a, b in ((tags[1:], tags[:-1]), (tags[:, 1:], tags[:, :-1])):
        for x, y in zip(a.ravel(), b.ravel()):
            if x != y:
                touching.add("|".join(sorted((x, y))))
    print("adjacent regimes:", sorted(touching))

    w2 = cfg.omega**2
    probes = {"origin": (0.0, 0.0), "kx=-4w^2": (-4 * w2, 0.0), "ky=-4w^2": (0.0, -4 * w2),
              "axis k>0": (0.5, 0.0), "axis between": (-2 * w2, 0.0), "axis below": (-6 * w2, 0.0),
              "diagonal vertex": (-w2, -w2)}
    for name, (kx, ky) in probes.items():
        label = r2.classify_region(r2.PotentialParams.magnetic(kx, ky, cfg.omega))
        print(f"  {name:>16} k=({kx:g}, {ky:g}): {label.tag}")


if __name__ == "__main__":
    main()
