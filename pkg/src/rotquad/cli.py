"""Command-line front end: ``report``, ``map`` and ``evolve``.

Exit codes: 0 success, 2 input error, 3 I/O error, 4 numeric overflow.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import quadcore as qc
from . import rotor2d as r2
from .errors import (
    IndeterminateStructureError,
    NoDiscreteSpectrumError,
    PropagatorOverflowError,
)

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_OVERFLOW = 0, 2, 3, 4
REPORT_LEVELS = 10
FORMAT_VERSION = 1

_AXIS_FIELD = {  # axis name -> (frame or None, PotentialParams field)
    "kx": ("magnetic", "kx"),
    "ky": ("magnetic", "ky"),
    "k'x": ("rotating", "kx"),
    "k'y": ("rotating", "ky"),
    "kpx": ("rotating", "kx"),
    "kpy": ("rotating", "ky"),
    "omega": (None, "omega"),
}


class InputError(ValueError):
    """Bad user input, reported with exit code 2."""


def fmt(x) -> str:
    """Shortest round-trip decimal for floats, lowercase booleans."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x + 0.0)  # folds -0.0
    return str(x)


def _cplx(z) -> dict:
    z = complex(z)
    return {"re": z.real + 0.0, "im": z.imag + 0.0}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# ---------------------------------------------------------------------------
# input specs


def _require_number(obj, key, where):
    if key not in obj:
        raise InputError(f"{where}: missing field '{key}'")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InputError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


@dataclass(frozen=True)
class GridAxis:
    name: str
    lo: float
    hi: float
    n: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class GridSpec:
    """One or two swept axes plus fixed values for the remaining parameters."""

    frame: str
    axes: tuple
    fixed: dict

    @classmethod
    def from_json(cls, obj) -> "GridSpec":
        if not isinstance(obj, dict):
            raise InputError("grid: expected a JSON object")
        unknown = sorted(set(obj) - {"axes", "fixed"})
        if unknown:
            raise InputError(f"grid: unknown field(s) {', '.join(unknown)}")
        raw_axes = obj.get("axes")
        if not isinstance(raw_axes, list) or not 1 <= len(raw_axes) <= 2:
            raise InputError("grid.axes: expected a list of one or two axis objects")
        axes, frames = [], set()
        for i, a in enumerate(raw_axes):
            where = f"grid.axes[{i}]"
            if not isinstance(a, dict):
                raise InputError(f"{where}: expected an object")
            name = a.get("name")
            if name not in _AXIS_FIELD:
                raise InputError(f"{where}.name: must be one of {sorted(_AXIS_FIELD)}, got {name!r}")
            lo, hi = _require_number(a, "lo", where), _require_number(a, "hi", where)
            n = a.get("n")
            if isinstance(n, bool) or not isinstance(n, int) or n < 2:
                raise InputError(f"{where}.n: expected an integer >= 2, got {n!r}")
            axes.append(GridAxis(name, lo, hi, n))
            if _AXIS_FIELD[name][0]:
                frames.add(_AXIS_FIELD[name][0])
        fixed_raw = obj.get("fixed", {})
        if not isinstance(fixed_raw, dict):
            raise InputError("grid.fixed: expected an object")
        fixed = {}
        for key in fixed_raw:
            if key == "frame":
                continue
            if key not in _AXIS_FIELD:
                raise InputError(f"grid.fixed: unknown parameter {key!r}")
            fixed[key] = _require_number(fixed_raw, key, "grid.fixed")
            if _AXIS_FIELD[key][0]:
                frames.add(_AXIS_FIELD[key][0])
        if "frame" in fixed_raw:
            if fixed_raw["frame"] not in r2.FRAMES:
                raise InputError(f"grid.fixed.frame: must be one of {r2.FRAMES}")
            frames.add(fixed_raw["frame"])
        if len(frames) > 1:
            raise InputError("grid: mixes magnetic (kx, ky) and rotating (k'x, k'y) parameters")
        frame = frames.pop() if frames else "magnetic"
        fields = [_AXIS_FIELD[a.name][1] for a in axes] + [_AXIS_FIELD[k][1] for k in fixed]
        for f in ("kx", "ky", "omega"):
            if fields.count(f) == 0:
                raise InputError(f"grid: parameter '{f}' is neither an axis nor fixed")
            if fields.count(f) > 1:
                raise InputError(f"grid: parameter '{f}' given more than once")
        return cls(frame=frame, axes=tuple(axes), fixed=fixed)

    def points(self):
        """Row-major parameter points with their axis coordinates."""
        grids = [a.values() for a in self.axes]
        base = {_AXIS_FIELD[k][1]: v for k, v in self.fixed.items()}
        if len(grids) == 1:
            combos = ((x,) for x in grids[0])
        else:
            combos = ((x, y) for x in grids[0] for y in grids[1])
        for coords in combos:
            vals = dict(base)
            for a, v in zip(self.axes, coords):
                vals[_AXIS_FIELD[a.name][1]] = float(v)
            yield coords, r2.PotentialParams(self.frame, vals["kx"], vals["ky"], vals["omega"])


@dataclass(frozen=True)
class TrajectorySpec:
    params: r2.PotentialParams
    mean0: np.ndarray
    cov0: np.ndarray
    t0: float
    t1: float
    dt: float
    basis: str
    method: str

    @classmethod
    def from_json(cls, obj) -> "TrajectorySpec":
        if not isinstance(obj, dict):
            raise InputError("traj: expected a JSON object")
        allowed = {"params", "mean0", "cov0", "t0", "t1", "dt", "basis", "method"}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise InputError(f"traj: unknown field(s) {', '.join(unknown)}")
        try:
            params = r2.PotentialParams.from_json(obj.get("params"))
        except ValueError as exc:
            raise InputError(f"traj.params: {exc}") from exc
        mean0 = _vector(obj.get("mean0", [0, 0, 0, 0]), "traj.mean0")
        cov0 = _matrix(obj.get("cov0", (0.5 * np.eye(4)).tolist()), "traj.cov0")
        if np.max(np.abs(cov0 - cov0.T)) > 1e-12 * max(1.0, np.max(np.abs(cov0))):
            raise InputError("traj.cov0: covariance must be symmetric")
        t0 = _require_number(obj, "t0", "traj") if "t0" in obj else 0.0
        t1 = _require_number(obj, "t1", "traj")
        dt = _require_number(obj, "dt", "traj")
        if dt <= 0:
            raise InputError("traj.dt: step must be > 0")
        if t1 < t0:
            raise InputError("traj.t1: must be >= t0")
        basis = obj.get("basis", "original")
        if basis not in ("original", "canonical"):
            raise InputError("traj.basis: must be 'original' or 'canonical'")
        method = obj.get("method", "auto")
        if method not in ("auto", "closed", "exp"):
            raise InputError("traj.method: must be 'auto', 'closed' or 'exp'")
        if basis == "canonical" and method == "exp":
            raise InputError("traj: the canonical basis needs the closed-form path")
        return cls(params, mean0, cov0, t0, t1, dt, basis, method)

    def times(self) -> np.ndarray:
        steps = int(math.floor((self.t1 - self.t0) / self.dt * (1 + 1e-12) + 1e-9))
        return self.t0 + self.dt * np.arange(steps + 1)


def _vector(v, where):
    arr = np.asarray(v, dtype=float) if _is_numeric(v) else None
    if arr is None or arr.shape != (4,) or not np.all(np.isfinite(arr)):
        raise InputError(f"{where}: expected 4 finite numbers")
    return arr


def _matrix(v, where):
    arr = np.asarray(v, dtype=float) if _is_numeric(v) else None
    if arr is None or arr.shape != (4, 4) or not np.all(np.isfinite(arr)):
        raise InputError(f"{where}: expected a 4x4 array of finite numbers")
    return arr


def _is_numeric(v):
    try:
        arr = np.asarray(v)
    except Exception:
        return False
    return arr.dtype.kind in "iuf"


# ---------------------------------------------------------------------------
# commands


def build_report(p: r2.PotentialParams, tol: float = qc.DEFAULT_TOL,
                 band: float = r2.DEFAULT_BAND) -> dict:
    label = r2.classify_region(p, band)
    fp = r2.eigenfrequencies(p)
    windows = r2.stability_windows(p, band)
    out = {
        "format": FORMAT_VERSION,
        "params": p.to_json(),
        "omega_reflected": p.omega < 0,
        "k": list(p.k),
        "kprime": list(p.kprime),
        "regime": {"tag": label.tag, "boundary": label.boundary},
        "lambda_plus": _cplx(fp.lambda_plus),
        "lambda_minus": _cplx(fp.lambda_minus),
        "delta_sq": fp.delta_sq,
        "critical_frequencies": r2.critical_frequencies(p),
        "stability_windows": windows.to_json(),
        "stable": label.stable,
        "separable": label.separable,
    }
    try:
        dec = qc.spectral(r2.build_form(p).generator, tol)
        rep = qc.classify_structure(dec)
        out["structure"] = {
            "diagonalizable": rep.diagonalizable,
            "real_spectrum": rep.real_spectrum,
            "dynamically_stable": rep.dynamically_stable,
            "separable": rep.separable,
            "block_profile": [{**_cplx(lam), "d": d} for lam, d in rep.block_profile],
        }
    except IndeterminateStructureError as exc:
        out["structure"] = {"indeterminate": str(exc)}
    out["levels"] = None
    if label.stable:
        sf = r2.separable_decomposition(p, band)
        try:
            out["levels"] = [
                {"quanta": list(q), "energy": e}
                for q, e in qc.lowest_levels(sf.modes, REPORT_LEVELS)
            ]
        except NoDiscreteSpectrumError as exc:
            out["levels_note"] = str(exc)
    return out


def map_rows(grid: GridSpec, band: float = r2.DEFAULT_BAND):
    """Evaluate every grid point; rows come back in row-major order."""
    rows = []
    for coords, p in grid.points():
        label = r2.classify_region(p, band)
        fp = r2.eigenfrequencies(p)
        lp, lm = fp.lambda_plus, fp.lambda_minus
        rows.append([*coords, label.tag, lp.real, lp.imag, lm.real, lm.imag,
                     label.stable, label.separable])
    return rows


def csv_text(header_comments, columns, rows) -> str:
    buf = io.StringIO()
    for line in header_comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, str):
            buf.write(row + "\n")
        else:
            w.writerow([fmt(x) for x in row])
    return buf.getvalue()


_ORIG = ("qx", "qy", "px", "py")
_CANON = ("q+", "q-", "p+", "p-")


def evolve_rows(spec: TrajectorySpec, band: float = r2.DEFAULT_BAND):
    """Returns (method, rows, overflow) where overflow is None or (t, horizon)."""
    p = spec.params
    G = r2.build_form(p).generator
    method = spec.method
    if method == "auto":
        method = "closed"
    if method == "closed":
        if spec.basis == "canonical":
            label = r2.classify_region(p, band)
            U = (r2.separable_decomposition(p, band).transform if label.separable
                 else r2.degenerate_form(p, band).transform)
            if np.iscomplexobj(U):
                raise InputError("traj.basis: canonical coordinates are not hermitian here")

        def prop(t):
            return r2.closed_propagator(p, t, band, basis=spec.basis)
    else:
        def prop(t):
            return qc.propagator(G, t)
    rows = []
    iu = np.triu_indices(4)
    for t in spec.times():
        try:
            E = prop(t)
        except PropagatorOverflowError as exc:
            return method, rows, (float(t), exc.horizon)
        with np.errstate(over="ignore", invalid="ignore"):
            m = E @ spec.mean0
            c = E @ spec.cov0 @ E.T
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            return method, rows, (float(t), qc.overflow_horizon(0.0))
        rows.append([float(t), *m.tolist(), *c[iu].tolist()])
    return method, rows, None


def evolve_columns(basis: str):
    names = _ORIG if basis == "original" else _CANON
    cols = ["t"] + [f"mean_{n}" for n in names]
    for i in range(4):
        for j in range(i, 4):
            cols.append(f"cov_{names[i]}_{names[j]}")
    return cols


# ---------------------------------------------------------------------------
# plumbing


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from exc


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _params_from_args(args) -> r2.PotentialParams:
    if args.params is not None:
        obj = _read_json(args.params) if not args.params.lstrip().startswith("{") \
            else _loads(args.params)
        try:
            return r2.PotentialParams.from_json(obj)
        except ValueError as exc:
            raise InputError(f"params: {exc}") from exc
    missing = [f"--{n}" for n in ("kx", "ky", "omega") if getattr(args, n) is None]
    if missing:
        raise InputError(f"report needs --params or all of --kx --ky --omega (missing {' '.join(missing)})")
    try:
        return r2.PotentialParams(args.frame, args.kx, args.ky, args.omega)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _loads(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"params: malformed JSON ({exc.msg} at column {exc.colno})") from exc


def cmd_report(args) -> int:
    p = _params_from_args(args)
    rep = build_report(p, args.tol, args.band)
    _emit(json.dumps(rep, indent=2, default=_num) + "\n", args.out)
    return EXIT_OK


def cmd_map(args) -> int:
    if args.grid is None:
        raise InputError("map needs --grid <json-file>")
    grid = GridSpec.from_json(_read_json(args.grid))
    rows = map_rows(grid, args.band)
    comments = [
        f"rotquad map format={FORMAT_VERSION}",
        f"frame={grid.frame} band={fmt(args.band)}",
        "grid=" + json.dumps({"axes": [a.__dict__ for a in grid.axes], "fixed": grid.fixed},
                             sort_keys=True),
    ]
    columns = [a.name for a in grid.axes] + [
        "regime", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus",
        "stable", "separable",
    ]
    _emit(csv_text(comments, columns, rows), args.out)
    return EXIT_OK


def cmd_evolve(args) -> int:
    if args.traj is None:
        raise InputError("evolve needs --traj <json-file>")
    spec = TrajectorySpec.from_json(_read_json(args.traj))
    method, rows, overflow = evolve_rows(spec, args.band)
    label = r2.classify_region(spec.params, args.band)
    comments = [
        f"rotquad evolve format={FORMAT_VERSION}",
        "params=" + json.dumps(spec.params.to_json(), sort_keys=True),
        f"regime={label.tag} method={method} basis={spec.basis}",
    ]
    if overflow is not None:
        rows.append(f"# OVERFLOW t={fmt(overflow[0])} horizon={fmt(overflow[1])}")
    _emit(csv_text(comments, evolve_columns(spec.basis), rows), args.out)
    if overflow is not None:
        print(f"rotquad: propagator overflow at t={fmt(overflow[0])} "
              f"(representable horizon {fmt(overflow[1])})", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive finite number")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--tol", type=_positive, default=qc.DEFAULT_TOL,
                        help="spectral clustering/rank tolerance (default 1e-8)")
    common.add_argument("--band", type=_positive, default=r2.DEFAULT_BAND,
                        help="relative regime-boundary band (default 1e-9)")
    parser = argparse.ArgumentParser(prog="rotquad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    rep = sub.add_parser("report", parents=[common], help="classify one parameter point (JSON)")
    rep.add_argument("--frame", choices=r2.FRAMES, default="magnetic")
    rep.add_argument("--kx", type=float)
    rep.add_argument("--ky", type=float)
    rep.add_argument("--omega", type=float)
    rep.add_argument("--params", help="JSON file (or inline object) with frame, kx, ky, omega")
    rep.set_defaults(func=cmd_report)
    mp = sub.add_parser("map", parents=[common], help="regime map over a grid (CSV)")
    mp.add_argument("--grid", help="GridSpec JSON file")
    mp.set_defaults(func=cmd_map)
    ev = sub.add_parser("evolve", parents=[common], help="moment trajectory (CSV)")
    ev.add_argument("--traj", help="TrajectorySpec JSON file")
    ev.set_defaults(func=cmd_evolve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"rotquad: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"rotquad: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PropagatorOverflowError as exc:
        print(f"rotquad: overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW


if __name__ == "__main__":
    sys.exit(main())
