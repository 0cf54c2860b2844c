"""Particle in a rotating quadratic potential, or in a magnetic field.

The dimensionless two-dimensional problem is

    h = 1/2 (p_x^2 + p_y^2) + 1/2 (k'_x q_x^2 + k'_y q_y^2) - omega l_z,

with ``k'_mu = k_mu + omega^2``.  ``k`` are the "magnetic" spring constants and
``k'`` the constants of the rotating potential.  Canonical coordinates are
ordered ``R = (q_x, q_y, p_x, p_y)``; transformed coordinates as
``R' = (q_+, q_-, p_+, p_-)``.

Only ``|omega|`` matters for spectra and regimes.  Transforms for negative
``omega`` are obtained from the positive case through the reflection
``y -> -y``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import quadcore as qc
from .errors import DegenerateRegimeError, NotDegenerateError, PropagatorOverflowError

DEFAULT_BAND = 1e-9
FRAMES = ("magnetic", "rotating")
TAGS = ("A", "B", "C", "D", "E", "F", "g", "h", "i", "j", "k", "L")
STABLE_TAGS = frozenset("ABF")
NON_SEPARABLE_TAGS = frozenset("jkL")
BOUNDARY_TAGS = frozenset("FghijkL")

# ((q_x, q_y, p_x, p_y) <- rotated coordinates): a 90 degree rotation swapping the axes
_ROT90 = np.array(
    [[0.0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]]
)
# y -> -y, which maps omega -> -omega
_REFLECT = np.diag([1.0, -1.0, 1.0, -1.0])


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class PotentialParams:
    """Spring constants in a given frame plus the scaled rotation frequency.

    ``frame="magnetic"`` stores ``k``; ``frame="rotating"`` stores ``k'``.
    """

    frame: str
    kx: float
    ky: float
    omega: float
    _source: "PotentialParams | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        for name in ("kx", "ky", "omega"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite real number, got {v!r}")
            object.__setattr__(self, name, float(v))

    @classmethod
    def magnetic(cls, kx, ky, omega) -> "PotentialParams":
        return cls("magnetic", kx, ky, omega)

    @classmethod
    def rotating(cls, kpx, kpy, omega) -> "PotentialParams":
        return cls("rotating", kpx, kpy, omega)

    @property
    def w(self) -> float:
        """``|omega|``."""
        return abs(self.omega)

    @property
    def k(self) -> tuple[float, float]:
        """Magnetic-frame spring constants."""
        if self.frame == "magnetic":
            return self.kx, self.ky
        w2 = self.omega * self.omega
        return self.kx - w2, self.ky - w2

    @property
    def kprime(self) -> tuple[float, float]:
        """Rotating-frame spring constants ``k + omega^2``."""
        if self.frame == "rotating":
            return self.kx, self.ky
        w2 = self.omega * self.omega
        return self.kx + w2, self.ky + w2

    def to_frame(self, frame: str) -> "PotentialParams":
        """Same physical system expressed in ``frame``.

        Converting back returns the original values bit for bit.
        """
        if frame == self.frame:
            return self
        if frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {frame!r}")
        if self._source is not None and self._source.frame == frame:
            return self._source
        kx, ky = self.kprime if frame == "rotating" else self.k
        return PotentialParams(frame, kx, ky, self.omega, _source=self)

    def canonical(self) -> "PotentialParams":
        """Copy with ``omega >= 0``."""
        if self.omega >= 0:
            return self
        return PotentialParams(self.frame, self.kx, self.ky, -self.omega)

    def to_json(self) -> dict:
        return {"frame": self.frame, "kx": self.kx, "ky": self.ky, "omega": self.omega}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "PotentialParams":
        """Parse ``{frame, kx, ky, omega}``; ``frame`` defaults to magnetic."""
        if not isinstance(obj, Mapping):
            raise ValueError("params must be a JSON object with keys frame, kx, ky, omega")
        allowed = {"frame", "kx", "ky", "omega"}
        extra = sorted(set(obj) - allowed)
        if extra:
            raise ValueError(f"unknown params field(s): {', '.join(extra)}")
        missing = [f for f in ("kx", "ky", "omega") if f not in obj]
        if missing:
            raise ValueError(f"missing params field(s): {', '.join(missing)}")
        return cls(obj.get("frame", "magnetic"), obj["kx"], obj["ky"], obj["omega"])


def build_form(p: PotentialParams) -> qc.QuadraticForm:
    """``T = I``, ``V = diag(k'_x, k'_y)``, ``U = -omega [[0, 1], [-1, 0]]``."""
    kpx, kpy = p.kprime
    w = p.omega
    return qc.assemble(np.eye(2), np.diag([kpx, kpy]), np.array([[0.0, -w], [w, 0.0]]))


# ---------------------------------------------------------------------------
# eigenfrequencies and critical points


@dataclass(frozen=True)
class FrequencyPair:
    lambda_plus: complex
    lambda_minus: complex
    delta: complex
    delta_sq: float

    @property
    def real(self) -> bool:
        return self.lambda_plus.imag == 0 and self.lambda_minus.imag == 0


def _delta_sq(kpx, kpy, w) -> float:
    d = kpx - kpy
    return 0.25 * d * d + 2.0 * w * w * (kpx + kpy)


def eigenfrequencies(p: PotentialParams) -> FrequencyPair:
    """``lam_+- = sqrt(S +- Delta)`` with ``S = (k'_x + k'_y)/2 + omega^2``.

    The smaller of ``S +- Delta`` is recovered from the product
    ``lam_+^2 lam_-^2 = k_x k_y`` to avoid cancellation.
    """
    kpx, kpy = p.kprime
    w = p.w
    # k from k' (not p.k) so both frames give identical floats
    kx, ky = kpx - w * w, kpy - w * w
    S = 0.5 * (kpx + kpy) + w * w
    dsq = _delta_sq(kpx, kpy, w)
    delta = cmath.sqrt(dsq)
    prod = kx * ky
    if dsq >= 0:
        D = delta.real
        if S >= 0:
            big = S + D
            plus_sq = big
            minus_sq = prod / big if big != 0 else 0.0
        else:
            big = S - D
            minus_sq = big
            plus_sq = prod / big
        plus_sq, minus_sq = complex(plus_sq), complex(minus_sq)
    else:
        plus_sq, minus_sq = S + delta, S - delta
    lp = qc.canonical_frequency(cmath.sqrt(plus_sq))
    lm = qc.canonical_frequency(cmath.sqrt(minus_sq))
    return FrequencyPair(lambda_plus=lp, lambda_minus=lm, delta=delta, delta_sq=dsq)


def critical_frequencies(p: PotentialParams) -> list[float]:
    """Values of ``|omega| >= 0`` where ``Delta = 0``, sorted.

    Magnetic frame (fixed ``k``): ``1/2 |sqrt(-k_x) +- sqrt(-k_y)|`` when both
    ``k <= 0``.  Rotating frame (fixed ``k'``):
    ``|k'_x - k'_y| / sqrt(-8 (k'_x + k'_y))`` when ``k'_x + k'_y < 0``.
    Empty when no such frequency exists.  ``k' = (0, 0)`` has
    ``Delta = 0`` for every ``omega`` and also returns an empty list.
    """
    if p.frame == "magnetic":
        kx, ky = p.kx, p.ky
        if kx > 0 or ky > 0:
            return []
        a, b = math.sqrt(-kx), math.sqrt(-ky)
        return sorted({0.5 * abs(a - b), 0.5 * (a + b)})
    kpx, kpy = p.kx, p.ky
    s2 = kpx + kpy
    if s2 >= 0:
        return []
    return [abs(kpx - kpy) / math.sqrt(-8.0 * s2)]


# ---------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class RegimeLabel:
    tag: str
    boundary: bool

    @property
    def stable(self) -> bool:
        return self.tag in STABLE_TAGS

    @property
    def separable(self) -> bool:
        return self.tag not in NON_SEPARABLE_TAGS

    @property
    def diagonalizable(self) -> bool:
        return self.tag in "ABCDEF"


def _omega_c(kx, ky):
    a, b = math.sqrt(-kx), math.sqrt(-ky)
    return 0.5 * abs(a - b), 0.5 * (a + b)


def classify_region(p: PotentialParams, band: float = DEFAULT_BAND) -> RegimeLabel:
    """Regime tag of the point, with ``band`` the relative width of boundary detection."""
    if not band > 0:
        raise ValueError("band must be positive")
    kx, ky = p.k
    w = p.w
    scale = max(1.0, abs(kx), abs(ky), w * w)
    eps = band * scale
    zx, zy = abs(kx) <= eps, abs(ky) <= eps
    if zx and zy:
        return RegimeLabel("F", True)
    if zx or zy:
        other = ky if zx else kx
        if other > 0:
            return RegimeLabel("g", True)
        if abs(other + 4.0 * w * w) <= eps:
            return RegimeLabel("L", True)
        return RegimeLabel("h" if other + 4.0 * w * w > 0 else "i", True)
    if kx > 0 and ky > 0:
        return RegimeLabel("A", False)
    if kx * ky < 0:
        return RegimeLabel("D", False)
    dsq = 0.25 * (kx - ky) ** 2 + 2.0 * w * w * (kx + ky) + 4.0 * w**4
    wm, wp = _omega_c(kx, ky)
    if abs(dsq) <= band * scale * scale:
        if w == 0:
            # isotropic static maximum: Delta vanishes but the generator is diagonal
            return RegimeLabel("C", True)
        return RegimeLabel("j" if abs(w - wp) <= abs(w - wm) else "k", True)
    if dsq < 0:
        return RegimeLabel("E", False)
    return RegimeLabel("B" if w > wp else "C", False)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    kind: str
    lo_closed: bool
    hi_closed: bool

    def contains(self, x: float) -> bool:
        above = x > self.lo or (self.lo_closed and x == self.lo)
        below = x < self.hi or (self.hi_closed and x == self.hi)
        return above and below


@dataclass(frozen=True)
class WindowSet:
    """Disjoint sorted intervals covering ``|omega| >= 0``."""

    frame: str
    intervals: tuple

    def kind_at(self, omega: float) -> str:
        w = abs(omega)
        for iv in self.intervals:
            if iv.contains(w):
                return iv.kind
        raise ValueError(f"omega={omega} not covered")

    def of_kind(self, kind: str) -> list:
        return [iv for iv in self.intervals if iv.kind == kind]

    def to_json(self) -> list:
        return [
            {"lo": iv.lo, "hi": iv.hi if math.isfinite(iv.hi) else "inf", "kind": iv.kind,
             "lo_closed": iv.lo_closed, "hi_closed": iv.hi_closed}
            for iv in self.intervals
        ]


def _breakpoints(p: PotentialParams) -> list[float]:
    pts = {0.0}
    if p.frame == "rotating":
        kpx, kpy = p.kx, p.ky
        for kp in (kpx, kpy):
            if kp > 0:
                pts.add(math.sqrt(kp))
    else:
        kx, ky = p.kx, p.ky
        for a, b in ((kx, ky), (ky, kx)):
            if a == 0 and b < 0:
                pts.add(0.5 * math.sqrt(-b))
    pts.update(critical_frequencies(p))
    return sorted(pts)


def stability_windows(p: PotentialParams, band: float = DEFAULT_BAND) -> WindowSet:
    """Stable and unstable ranges of ``|omega|`` with the frame's constants held fixed.

    Each open interval between consecutive thresholds and each threshold itself
    is classified, and neighbouring pieces of the same kind are merged.
    """
    pts = _breakpoints(p)
    pieces = []  # (lo, hi, kind) with lo == hi for points

    def kind(w):
        q = PotentialParams(p.frame, p.kx, p.ky, w)
        return "stable" if classify_region(q, band).stable else "unstable"

    for i, a in enumerate(pts):
        pieces.append((a, a, kind(a)))
        b = pts[i + 1] if i + 1 < len(pts) else math.inf
        mid = 0.5 * (a + b) if math.isfinite(b) else 2.0 * a + 1.0
        pieces.append((a, b, kind(mid)))
    merged = []
    for lo, hi, k in pieces:
        point = lo == hi
        if merged and merged[-1]["kind"] == k:
            merged[-1]["hi"] = hi
            merged[-1]["hi_closed"] = point
        else:
            if merged:
                # the previous piece ends where this one starts
                merged[-1]["hi_closed"] = merged[-1]["hi_closed"] and not point
            merged.append({"lo": lo, "hi": hi, "kind": k, "lo_closed": point, "hi_closed": point})
    out = tuple(
        Interval(m["lo"], m["hi"], m["kind"], m["lo_closed"], m["hi_closed"] and math.isfinite(m["hi"]))
        for m in merged
    )
    return WindowSet(frame=p.frame, intervals=out)


# ---------------------------------------------------------------------------
# separable decomposition


@dataclass(frozen=True, eq=False)
class SeparableForm:
    """``h = 1/2 sum_nu (alpha_nu p_nu^2 + beta_nu q_nu^2)`` and its coordinates.

    ``modes.transform`` maps ``R' = (q_+, q_-, p_+, p_-)`` to ``R``.
    ``normalized`` holds the ``1/2 lam (p'^2 + q'^2)`` rescaling when both
    frequencies are non-zero.  ``gamma`` and ``eta`` are the mixing parameters
    of the generic construction (``None`` where it is bypassed).
    """

    params: PotentialParams
    gamma: complex | None
    eta: complex | None
    alpha: tuple
    beta: tuple
    modes: qc.ModeDecomposition
    normalized: qc.ModeDecomposition | None
    rotated: bool
    reflected: bool

    @property
    def transform(self) -> np.ndarray:
        return self.modes.transform

    @property
    def lambdas(self) -> tuple:
        return tuple(m.lam for m in self.modes.modes)

    @property
    def hermitian(self) -> bool:
        return self.modes.hermitian

    def evolution(self) -> qc.ExpPolyMatrix:
        """Exact propagator in the original coordinates."""
        return _mode_evolution(self.modes.modes).conjugated(self.transform)


def _pair_transform(kpx, kpy, w):
    """Generic mixing for ``k'_x >= k'_y`` and ``w >= 0``: (gamma, eta, alpha, beta, U)."""
    d = kpx - kpy
    s2 = kpx + kpy
    if d == 0:
        # isotropic: factor w out so tiny w cannot underflow Delta to zero
        delta = w * cmath.sqrt(2.0 * s2)
    else:
        delta = cmath.sqrt(_delta_sq(kpx, kpy, w))
    D2 = 2.0 * delta + d
    gamma = 2.0 * w * s2 / D2
    eta = 4.0 * w / D2
    alpha = ((D2 + 4 * w * w) / (4 * delta), (D2 - 4 * w * w) / (4 * delta))
    beta = (delta * (2 * s2 / D2 + 1), delta * (2 * s2 / D2 - 1))
    c = 1.0 + gamma * eta
    # inverse of p+ = px + g qy, p- = py + g qx, q+ = (qx - e py)/c, q- = (qy - e px)/c
    U = np.zeros((4, 4), dtype=complex)
    U[0, 0] = 1.0
    U[0, 3] = eta / c
    U[1, 1] = 1.0
    U[1, 2] = eta / c
    U[2, 2] = 1.0 / c
    U[2, 1] = -gamma
    U[3, 3] = 1.0 / c
    U[3, 0] = -gamma
    return gamma, eta, alpha, beta, U


def _rescale(U, k, c):
    """Canonical rescale of mode ``k``: ``alpha -> alpha c^2``, ``beta -> beta / c^2``."""
    U = U.astype(np.result_type(U.dtype, type(c)))
    U[:, k] = U[:, k] / c
    U[:, 2 + k] = U[:, 2 + k] * c
    return U


def _swap_qp(U, k):
    """``(q, p) -> (-p', q')`` for mode ``k``: exchanges alpha and beta."""
    U = U.copy()
    u, v = U[:, k].copy(), U[:, 2 + k].copy()
    U[:, k] = v
    U[:, 2 + k] = -u
    return U


def _maybe_real(U, tol=1e-13):
    if np.iscomplexobj(U) and np.max(np.abs(U.imag)) <= tol * max(1.0, np.max(np.abs(U))):
        return U.real.copy()
    return U


def _modes_from(alpha, beta, zero_tol):
    modes = []
    for a, b in zip(alpha, beta):
        kind = qc.classify_mode(a, b, zero_tol)
        if kind in (qc.ModeKind.FREE, qc.ModeKind.VANISHING):
            a = 0.0 if abs(a) <= zero_tol else a
            b = 0.0 if abs(b) <= zero_tol else b
        a, b = _tidy(a), _tidy(b)
        modes.append(qc.Mode(alpha=a, beta=b, lam=qc.mode_lambda(a, b, kind), kind=kind))
    return tuple(modes)


def _tidy(z):
    z = complex(z)
    return z.real if abs(z.imag) <= 1e-15 * max(1.0, abs(z.real)) else z


def separable_decomposition(p: PotentialParams, band: float = DEFAULT_BAND) -> SeparableForm:
    """Split ``h`` into two independent single-mode terms.

    Raises
    ------
    DegenerateRegimeError
        At ``Delta = 0`` with ``omega != 0`` (regimes j, k, L); use
        :func:`degenerate_form` there.
    """
    label = classify_region(p, band)
    if not label.separable:
        raise DegenerateRegimeError(
            f"regime {label.tag} has Delta = 0 and is not separable; use degenerate_form"
        )
    reflected = p.omega < 0
    w = p.w
    kpx, kpy = p.kprime
    kx, ky = p.k
    rotated = kpx < kpy
    if rotated:
        kpx, kpy = kpy, kpx
        kx, ky = ky, kx
    zero_tol = band * max(1.0, abs(kpx), abs(kpy), w * w)

    if w == 0 and kpx == kpy:
        gamma = eta = None
        alpha, beta = (1.0, 1.0), (kpx, kpy)
        U = np.eye(4)
    else:
        gamma, eta, alpha, beta, U = _pair_transform(kpx, kpy, w)

    alpha, beta = list(alpha), list(beta)
    if label.tag in "ghi":
        U, alpha, beta = _axis_shape(U, alpha, beta, kx if abs(ky) <= abs(kx) else ky, zero_tol)

    if rotated:
        U = _ROT90 @ U
    if reflected:
        U = _REFLECT @ U
    U = _maybe_real(U)
    modes = _modes_from(alpha, beta, zero_tol)
    dec = qc.ModeDecomposition(modes=modes, transform=U)
    normalized = None
    if all(m.lam != 0 for m in modes):
        Un = U
        nmodes = []
        for k, m in enumerate(modes):
            s = cmath.sqrt(complex(m.beta) / m.lam)
            Un = _rescale(Un, k, s)
            nmodes.append(qc.Mode(alpha=_tidy(m.lam), beta=_tidy(m.lam), lam=m.lam, kind=m.kind))
        normalized = qc.ModeDecomposition(modes=tuple(nmodes), transform=_maybe_real(Un))
    return SeparableForm(
        params=p, gamma=None if gamma is None else _tidy(gamma),
        eta=None if eta is None else _tidy(eta),
        alpha=tuple(m.alpha for m in modes), beta=tuple(m.beta for m in modes),
        modes=dec, normalized=normalized, rotated=rotated, reflected=reflected,
    )


def _axis_shape(U, alpha, beta, k_nonzero, zero_tol):
    """Bring a k = 0 point to ``1/2 (p_+^2 + lam_+^2 q_+^2) + 1/2 (k / lam_+^2) p_-^2``."""
    prods = [abs(a * b) for a, b in zip(alpha, beta)]
    if prods[0] < prods[1]:
        # the generic labels put the zero frequency first: swap the modes
        perm = [1, 0, 3, 2]
        U = U[:, perm]
        alpha, beta = alpha[::-1], beta[::-1]
    lam2 = alpha[0] * beta[0]
    c = 1.0 / cmath.sqrt(alpha[0])
    U = _rescale(U, 0, c)
    alpha[0], beta[0] = 1.0, lam2
    if abs(alpha[1]) <= abs(beta[1]):
        U = _swap_qp(U, 1)
        alpha[1], beta[1] = beta[1], alpha[1]
    target = k_nonzero / lam2
    c = cmath.sqrt(target / alpha[1])
    U = _rescale(U, 1, c)
    alpha[1], beta[1] = target, 0.0
    return U, alpha, beta


# ---------------------------------------------------------------------------
# closed evolutions


class _TableBuilder:
    """Accumulates ``exp(s t) t^m C`` terms into an :class:`ExpPolyMatrix`."""

    def __init__(self, size=4, degree=4):
        self.size, self.degree = size, degree
        self.terms: dict = {}

    def add(self, s, power, i, j, value):
        key = complex(s)
        if key not in self.terms:
            self.terms[key] = np.zeros((self.degree, self.size, self.size), dtype=complex)
        self.terms[key][power, i, j] += value

    def add_block(self, s, power, rows, cols, block):
        for a, i in enumerate(rows):
            for b, j in enumerate(cols):
                if block[a][b] != 0:
                    self.add(s, power, i, j, block[a][b])

    def build(self) -> qc.ExpPolyMatrix:
        keys = list(self.terms)
        if not keys:
            keys = [0j]
            self.terms[0j] = np.zeros((self.degree, self.size, self.size), dtype=complex)
        return qc.ExpPolyMatrix(np.array(keys), np.array([self.terms[k] for k in keys]))


def _mode_evolution(modes) -> qc.ExpPolyMatrix:
    """Block propagator of independent modes in ``(q_1..q_n, p_1..p_n)`` order."""
    n = len(modes)
    tb = _TableBuilder(2 * n, 2)
    for k, m in enumerate(modes):
        idx = (k, n + k)
        a, b, lam = complex(m.alpha), complex(m.beta), complex(m.lam)
        if lam == 0:
            tb.add_block(0, 0, idx, idx, [[1, 0], [0, 1]])
            tb.add_block(0, 1, idx, idx, [[0, a], [-b, 0]])
            continue
        # cos(lam t) and sin(lam t) split over exp(+-i lam t)
        for sgn in (1, -1):
            s = sgn * 1j * lam
            sin_c = sgn / (2j)
            tb.add_block(s, 0, idx, idx, [[0.5, a / lam * sin_c], [-b / lam * sin_c, 0.5]])
    return tb.build()


@dataclass(frozen=True, eq=False)
class DegenerateForm:
    """Canonical form at a ``Delta = 0`` point.

    ``target`` is the matrix of ``h`` in ``R' = (q_+, q_-, p_+, p_-)``,
    ``transform`` maps ``R'`` to ``R`` and ``closed_evolution`` is the exact
    ``R'(t) = E'(t) R'(0)`` table.
    """

    case: str
    lam: complex
    omega: float
    transform: np.ndarray
    target: np.ndarray
    closed_evolution: qc.ExpPolyMatrix
    rotated: bool
    reflected: bool

    def evolution(self) -> qc.ExpPolyMatrix:
        """Exact propagator in the original coordinates."""
        return self.closed_evolution.conjugated(self.transform)


def _jk_rows(kx, ky, case):
    """Rows of ``R' = M R`` at ``omega = omega_c^+-``; requires ``k_x >= k_y``."""
    wm, wp = _omega_c(kx, ky)
    wa, wb = (wp, wm) if case == "j" else (wm, wp)
    lam2 = wa * wa - wb * wb
    kk = (-kx, -ky)
    labels = ((0, 1), (1, 0)) if case == "j" else ((1, 0), (0, 1))
    M = np.zeros((4, 4))
    for i, (a, b) in enumerate(labels):
        f = kk[a] ** 0.25
        s = -1.0 if (case == "k" and i == 1) else 1.0
        M[2 + i, 2 + a] = s * math.sqrt(wa) / f
        M[2 + i, b] = -s * math.sqrt(wa) / f * wb
        c = s * f / math.sqrt(wa) * (wa * wa + lam2) / (2 * lam2)
        M[i, a] = c
        M[i, 2 + b] = -c * wb / (wa * wa + lam2)
    return M, wa, math.sqrt(abs(lam2))


def _l_rows(w):
    """Rows of ``R' = M R`` at ``k_y = 0``, ``k_x = -4 omega^2``."""
    M = np.zeros((4, 4))
    for i, (a, b) in enumerate(((0, 1), (1, 0))):
        delta = (1.0, 2.0)[i]
        M[2 + i, 2 + a] = delta
        M[2 + i, b] = delta * w
        M[i, a] = 3.0 / (4 * delta)
        M[i, 2 + b] = -1.0 / (4 * delta * w)
    return M


def _j_table(lam):
    tb = _TableBuilder()
    for sgn in (1, -1):
        # Rot(lam t) = [[cos, sin], [-sin, cos]] split over exp(+-i lam t)
        R = np.array([[0.5, sgn / 2j], [-sgn / 2j, 0.5]])
        s = sgn * 1j * lam
        tb.add_block(s, 0, (0, 1), (0, 1), R)
        tb.add_block(s, 0, (2, 3), (2, 3), R)
        tb.add_block(s, 1, (0, 1), (2, 3), R)
    return tb.build()


def _k_table(a):
    tb = _TableBuilder()
    Pm = np.array([[0.5, -0.5], [-0.5, 0.5]])
    Pp = np.array([[0.5, 0.5], [0.5, 0.5]])
    sz = np.diag([1.0, -1.0])
    # q block evolves with B(-a t), p block with B(a t), coupling t B(-a t) sz
    for s, Bq, Bp in ((a, Pm, Pp), (-a, Pp, Pm)):
        tb.add_block(s, 0, (0, 1), (0, 1), Bq)
        tb.add_block(s, 0, (2, 3), (2, 3), Bp)
        tb.add_block(s, 1, (0, 1), (2, 3), Bq @ sz)
    return tb.build()


def _l_table(w):
    tb = _TableBuilder()
    for i in range(4):
        tb.add(0, 0, i, i, 1.0)
    qp, qm, pp, pm = 0, 1, 2, 3
    tb.add(0, 1, pp, pm, w)
    tb.add(0, 1, qp, pp, 1.0)
    tb.add(0, 2, qp, pm, 0.5 * w)
    tb.add(0, 1, qm, qp, -w)
    tb.add(0, 2, qm, pp, -0.5 * w)
    tb.add(0, 3, qm, pm, -(w * w) / 6)
    return tb.build()


def degenerate_form(p: PotentialParams, band: float = DEFAULT_BAND) -> DegenerateForm:
    """Non-separable canonical form in regimes j, k and L.

    The construction uses the exact degenerate frequency implied by ``k``
    (``omega_c^+-``, or ``sqrt(-k)/2`` at L), which lies within ``band`` of the
    given ``|omega|``.

    Raises
    ------
    NotDegenerateError
        Outside regimes j, k and L.
    """
    label = classify_region(p, band)
    if label.tag not in NON_SEPARABLE_TAGS:
        raise NotDegenerateError(f"regime {label.tag} is separable; use separable_decomposition")
    kx, ky = p.k
    reflected = p.omega < 0
    if label.tag == "L":
        rotated = abs(kx) < abs(ky)
        kn = ky if rotated else kx
        w = 0.5 * math.sqrt(-kn)
        M = _l_rows(w)
        target = np.zeros((4, 4))
        target[2, 2] = 1.0
        target[0, 3] = target[3, 0] = -w
        table = _l_table(w)
        lam = 0j
    else:
        rotated = kx < ky
        if rotated:
            kx, ky = ky, kx
        M, w, a = _jk_rows(kx, ky, label.tag)
        target = np.zeros((4, 4))
        if label.tag == "j":
            target[2, 2] = target[3, 3] = 1.0
            target[0, 3] = target[3, 0] = -a
            target[1, 2] = target[2, 1] = a
            table = _j_table(a)
            lam = complex(a)
        else:
            target[2, 2], target[3, 3] = 1.0, -1.0
            target[0, 3] = target[3, 0] = -a
            target[1, 2] = target[2, 1] = -a
            table = _k_table(a)
            lam = complex(0.0, a)
    U = np.linalg.inv(M)
    if rotated:
        U = _ROT90 @ U
    if reflected:
        U = _REFLECT @ U
    return DegenerateForm(
        case=label.tag, lam=lam, omega=-w if reflected else w, transform=U, target=target,
        closed_evolution=table, rotated=rotated, reflected=reflected,
    )


def closed_evolution(p: PotentialParams, band: float = DEFAULT_BAND) -> qc.ExpPolyMatrix:
    """Regime-dispatched exact propagator table in the original coordinates."""
    if classify_region(p, band).separable:
        return separable_decomposition(p, band).evolution()
    return degenerate_form(p, band).evolution()


def closed_propagator(p: PotentialParams, t: float, band: float = DEFAULT_BAND,
                      basis: str = "original") -> np.ndarray:
    """``E(t)`` from the closed-form evolution of the point's regime.

    ``basis="canonical"`` returns the propagator in the transformed
    coordinates ``R' = (q_+, q_-, p_+, p_-)`` instead.
    """
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    label = classify_region(p, band)
    if label.separable:
        sf = separable_decomposition(p, band)
        table = _mode_evolution(sf.modes.modes)
        U = sf.transform
    else:
        df = degenerate_form(p, band)
        table, U = df.closed_evolution, df.transform
    if basis == "original":
        table = table.conjugated(U)
    elif basis != "canonical":
        raise ValueError(f"unknown basis {basis!r}; use 'original' or 'canonical'")
    horizon = qc.overflow_horizon(table.growth_rate)
    if abs(t) > horizon:
        raise PropagatorOverflowError(
            f"|t|={abs(t):g} exceeds representable horizon {horizon:g}", horizon
        )
    with np.errstate(over="ignore", invalid="ignore"):
        E = table(t)
    if not np.all(np.isfinite(E)):
        raise PropagatorOverflowError(f"propagator overflowed at t={t}", horizon)
    if basis == "original":
        return E.real
    return _maybe_real(E, 1e-12)
