"""Independent reference computations used to check the main code paths.

Nothing here calls into :mod:`rotquad.quadcore` spectral or propagator code:
eigenvalues come from the characteristic polynomial, block sizes from
pivoted-QR ranks, spectra from an explicit truncated Fock matrix and the
exponential from a compensated Taylor series.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FockConvergenceError, IndeterminateStructureError, PropagatorOverflowError

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# characteristic polynomial


def char_poly(G) -> np.ndarray:
    """Coefficients ``c`` of ``det(x I - G) = sum_k c[k] x^(m-k)`` (``c[0] = 1``).

    Faddeev-LeVerrier: ``M_k = G M_{k-1} + c_{k-1} I``, ``c_k = -tr(G M_k) / k``.
    """
    G = np.asarray(G)
    m = G.shape[0]
    c = np.zeros(m + 1, dtype=np.result_type(G.dtype, float))
    c[0] = 1.0
    Mk = np.zeros_like(G, dtype=c.dtype)
    eye = np.eye(m, dtype=c.dtype)
    for k in range(1, m + 1):
        Mk = G @ Mk + c[k - 1] * eye
        c[k] = -np.trace(G @ Mk) / k
    return c


def char_poly_lambda(G) -> np.ndarray:
    """Monic polynomial in ``lam = i mu``: ``sum_k a[k] lam^(m-k)`` with ``a_k = i^k c_k``."""
    c = char_poly(G)
    return np.array([c[k] * (1j**k) for k in range(len(c))])


def _cbrt(z: complex) -> complex:
    if z == 0:
        return 0j
    r, phi = abs(z), cmath.phase(z)
    return r ** (1 / 3) * cmath.exp(1j * phi / 3)


def _cubic_roots(a, b, c, d):
    """Roots of ``a x^3 + b x^2 + c x + d`` (Cardano on complex coefficients)."""
    b, c, d = b / a, c / a, d / a
    P = c - b * b / 3
    Q = 2 * b**3 / 27 - b * c / 3 + d
    disc = cmath.sqrt(Q * Q / 4 + P**3 / 27)
    w1, w2 = -Q / 2 + disc, -Q / 2 - disc
    u = _cbrt(w1 if abs(w1) >= abs(w2) else w2)
    zeta = complex(-0.5, math.sqrt(3) / 2)
    roots = []
    for k in range(3):
        uk = u * zeta**k
        t = uk - P / (3 * uk) if uk != 0 else 0j
        roots.append(t - b / 3)
    return roots


def _quadratic_roots(b, c):
    """Roots of ``x^2 + b x + c`` without cancellation."""
    disc = cmath.sqrt(b * b - 4 * c)
    if (b.conjugate() * disc).real < 0 if isinstance(b, complex) else b < 0:
        disc = -disc
    q = -0.5 * (b + disc)
    if q == 0:
        return [0j, 0j]
    return [q, c / q]


def _polish(coeffs, x, steps=4):
    dp = np.polyder(coeffs)
    for _ in range(steps):
        f = np.polyval(coeffs, x)
        g = np.polyval(dp, x)
        if g == 0 or f == 0:
            break
        step = f / g
        if not np.isfinite(step) or abs(step) > 1e-3 * max(1.0, abs(x)):
            break
        x = x - step
    return x


def _quartic_roots(coeffs):
    """Ferrari on a monic quartic ``x^4 + b x^3 + c x^2 + d x + e``."""
    _, b, c, d, e = (complex(v) for v in coeffs)
    p = c - 3 * b * b / 8
    q = d - b * c / 2 + b**3 / 8
    r = e - b * d / 4 + b * b * c / 16 - 3 * b**4 / 256
    scale = max(1.0, abs(p), abs(q) ** 0.5, abs(r) ** 0.25)
    if abs(q) <= 1e-14 * scale**3:
        ys = []
        for y2 in _quadratic_roots(p, r):
            s = cmath.sqrt(y2)
            ys += [s, -s]
    else:
        ms = _cubic_roots(8.0, 8 * p, 2 * p * p - 8 * r, -q * q)
        m = max(ms, key=abs)
        s = cmath.sqrt(2 * m)
        ys = []
        for sgn in (1, -1):
            # y^2 + p/2 + m = sgn (s y - q / (2 s))
            ys += _quadratic_roots(-sgn * s, p / 2 + m + sgn * q / (2 * s))
    xs = [y - b / 4 for y in ys]
    return [_polish(np.array(coeffs, dtype=complex), x) for x in xs]


def _canonical(lam, tol=0.0):
    re, im = lam.real, lam.imag
    if abs(re) <= tol:
        re = 0.0
    if abs(im) <= tol:
        im = 0.0
    return complex(re + 0.0, im + 0.0)


def char_poly_eigs(G) -> np.ndarray:
    """The four eigenfrequencies ``lam = i mu`` of a 4x4 generator.

    The polynomial in ``lam`` is solved as a quadratic in ``lam^2`` when its odd
    coefficients vanish and by a general quartic otherwise.  Result sorted by
    ``(-Re, -Im)``.
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (4, 4):
        raise ValueError(f"expected a 4x4 generator, got {G.shape}")
    a = char_poly_lambda(G)
    scale = max(1.0, float(np.max(np.abs(G))))
    odd = max(abs(a[1]) / scale, abs(a[3]) / scale**3)
    if odd <= 1e-13:
        a2, a4 = complex(a[2]), complex(a[4])
        if abs(a2.imag) < 1e-13 * scale**2:
            a2 = complex(a2.real)
        if abs(a4.imag) < 1e-13 * scale**4:
            a4 = complex(a4.real)
        lams = []
        for y in _quadratic_roots(a2, a4):
            s = cmath.sqrt(y)
            lams += [s, -s]
    else:
        mus = _quartic_roots(char_poly(G))
        lams = [1j * mu for mu in mus]
    tiny = 1e-14 * scale
    lams = [_canonical(complex(l), tiny) for l in lams]
    return np.array(sorted(lams, key=lambda z: (-round(z.real, 12), -round(z.imag, 12))))


# ---------------------------------------------------------------------------
# Jordan structure


def qr_rank(M, tol_abs: float) -> int:
    """Numerical rank from the diagonal of a column-pivoted QR.

    Raises :class:`IndeterminateStructureError` when a pivot magnitude falls
    within a factor 10 of ``tol_abs``.
    """
    M = np.asarray(M)
    if M.size == 0:
        return 0
    _, R, _ = scipy.linalg.qr(M, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    amb = (diag > tol_abs / 10) & (diag < tol_abs * 10)
    if np.any(amb):
        raise IndeterminateStructureError(
            f"pivot {diag[amb][0]:.3g} within 10x of rank tolerance {tol_abs:.3g}"
        )
    return int(np.sum(diag > tol_abs))


@dataclass(frozen=True)
class StaircaseResult:
    """Block profile plus the rank sequence behind it, per eigenvalue cluster."""

    profile: tuple
    ranks: dict

    def __iter__(self):
        return iter(self.profile)

    def __len__(self):
        return len(self.profile)


def _clusters(mu, radius):
    groups = []
    for i, z in enumerate(mu):
        for g in groups:
            if any(abs(z - mu[j]) <= radius for j in g):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def staircase_jordan(G, tol: float = 1e-8, eigenvalues=None) -> StaircaseResult:
    """Jordan block sizes from the ranks of ``(G - mu I)^m``, m = 1, 2, ...

    ``eigenvalues`` (as ``mu``) may be supplied; otherwise 4x4 inputs use
    :func:`char_poly_eigs` and larger ones ``numpy.linalg.eigvals``.
    The result profile holds ``(lam, d)`` pairs with ``lam = i mu``.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    scale = max(1.0, float(np.linalg.norm(G, 2)))
    if eigenvalues is None:
        if m == 4:
            mu = [-1j * l for l in char_poly_eigs(G)]
        else:
            mu = list(np.linalg.eigvals(G))
    else:
        mu = list(eigenvalues)
    # spread of a d-fold defective root ~ eps^(1/d); 4 is the largest block here
    radius = scale * max(tol, 10 * _EPS ** 0.25)
    profile, ranks = [], {}
    for g in _clusters(mu, radius):
        center = complex(np.mean([mu[i] for i in g]))
        if abs(center.real) <= tol * scale:
            center = complex(0.0, center.imag)
        if abs(center.imag) <= tol * scale:
            center = complex(center.real, 0.0)
        A = G - center.real * np.eye(m) if center.imag == 0 else G - center * np.eye(m)
        seq = [m]
        P = np.eye(m, dtype=A.dtype)
        for k in range(1, len(g) + 2):
            P = P @ A
            seq.append(qr_rank(P, tol * scale**k))
            if seq[-1] == seq[-2]:
                break
        null = [m - r for r in seq]
        if null[-1] != len(g):
            raise IndeterminateStructureError(
                f"cluster of {len(g)} eigenvalues has generalized nullity {null[-1]}"
            )
        null.append(null[-1])
        lam = _canonical(1j * center)
        for d in range(1, len(null) - 1):
            count = (null[d] - null[d - 1]) - (null[d + 1] - null[d])
            profile += [(lam, d)] * count
        ranks[lam] = tuple(seq)
    profile.sort(key=lambda b: (-round(b[0].real, 12), -round(b[0].imag, 12), -b[1]))
    return StaircaseResult(profile=tuple(profile), ranks=ranks)


# ---------------------------------------------------------------------------
# truncated Fock spectrum


@dataclass(frozen=True)
class TruncationSpec:
    n_per_mode: int = 40
    levels: int = 10

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.n_per_mode < self.levels:
            raise ValueError("n_per_mode must be at least levels")


def _fock_matrix(A, Bp, Bm, N):
    n = A.shape[0]
    b1 = np.diag(np.sqrt(np.arange(1, N, dtype=float)), k=1)
    eye = np.eye(N)
    ops = []
    for i in range(n):
        factors = [b1 if j == i else eye for j in range(n)]
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    real = not (np.iscomplexobj(A) and np.any(A.imag)) and not (
        np.iscomplexobj(Bp) and np.any(Bp.imag))
    dtype = float if real else complex
    dim = N**n
    h = np.zeros((dim, dim), dtype=dtype)
    for i in range(n):
        for j in range(n):
            bi_d, bj = ops[i].T, ops[j]
            h += (A[i, j].real if real else A[i, j]) * (bi_d @ bj)
            if i == j:
                h += 0.5 * (A[i, i].real if real else A[i, i]) * np.eye(dim)
            h += 0.5 * (Bp[i, j].real if real else Bp[i, j]) * (bi_d @ ops[j].T)
            h += 0.5 * (Bm[i, j].real if real else Bm[i, j]) * (ops[i] @ bj)
    return 0.5 * (h + h.conj().T)


def fock_spectrum(rep, spec: TruncationSpec = TruncationSpec(), check: bool = True,
                  tol: float = 1e-6) -> np.ndarray:
    """Lowest eigenvalues of the number-basis truncation of ``h``.

    ``rep`` is a boson representation with ``A``, ``Bplus`` and ``Bminus``.
    With ``check`` the levels are recomputed at ``n_per_mode + 5`` and a shift
    above ``tol`` raises :class:`FockConvergenceError`.
    """
    A = np.asarray(rep.A)
    Bp, Bm = np.asarray(rep.Bplus), np.asarray(rep.Bminus)

    def levels(N):
        H = _fock_matrix(A, Bp, Bm, N)
        return scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=[0, spec.levels - 1])

    E = levels(spec.n_per_mode)
    if check:
        E2 = levels(spec.n_per_mode + 5)
        shift = float(np.max(np.abs(E2 - E)))
        if shift > tol:
            raise FockConvergenceError(
                f"levels moved by {shift:.3g} between cutoffs {spec.n_per_mode} "
                f"and {spec.n_per_mode + 5}"
            )
    return E


# ---------------------------------------------------------------------------
# reference exponential


def _neumaier_add(s, c, x):
    t = s + x
    big = np.abs(s) >= np.abs(x)
    c = c + np.where(big, (s - t) + x, (x - t) + s)
    return t, c


def reference_expm(G, t: float = 1.0) -> np.ndarray:
    """``exp(G t)`` by scaling, a compensated Taylor sum and repeated squaring."""
    G = np.asarray(G, dtype=float)
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    A = G * t
    norm = float(np.max(np.sum(np.abs(A), axis=0))) if A.size else 0.0
    squarings = max(0, math.ceil(math.log2(norm / 0.125))) if norm > 0.125 else 0
    A = A / 2.0**squarings
    m = A.shape[0]
    s = np.eye(m)
    c = np.zeros((m, m))
    term = np.eye(m)
    for k in range(1, 40):
        term = term @ A / k
        s, c = _neumaier_add(s, c, term)
        if np.max(np.abs(term)) <= 1e-3 * _EPS * np.max(np.abs(s)):
            break
    E = s + c
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(squarings):
            E = E @ E
    if not np.all(np.isfinite(E)):
        rate = float(np.max(np.abs(np.linalg.eigvals(G).real)))
        horizon = 700.0 / rate if rate > 0 else math.inf
        raise PropagatorOverflowError(f"reference exponential overflowed at t={t}", horizon)
    return E
