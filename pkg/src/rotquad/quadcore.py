"""Quadratic forms in coordinates and momenta.

A form ``h = 1/2 R^t Hc R`` with ``R = (q_1..q_n, p_1..p_n)`` and
``Hc = [[V, U], [U^t, T]]`` evolves linearly, ``dR/dt = G R`` with the real
generator ``G = J Hc``.  Eigenfrequencies are reported as ``lam = i*mu`` for each
eigenvalue ``mu`` of ``G``, so a unit oscillator has ``lam = +-1``.

Everything here works on small dense matrices with numpy.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    IndeterminateStructureError,
    NoDiscreteSpectrumError,
    NotSeparableError,
    PropagatorOverflowError,
)

DEFAULT_TOL = 1e-8
SYMMETRY_TOL = 1e-12
# log(max float) with headroom for polynomial prefactors and conditioning
_LOG_FLOAT_MAX = 700.0
_EPS = np.finfo(float).eps


def symplectic_metric(n: int) -> np.ndarray:
    """Return ``J = [[0, I], [-I, 0]]`` of size 2n. The commutation metric is ``i*J``."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


# ---------------------------------------------------------------------------
# forms


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Symmetric kinetic ``T``, potential ``V`` and cross term ``U`` for n degrees of freedom.

    Build instances with :func:`assemble`, which validates and symmetrizes.
    """

    T: np.ndarray
    V: np.ndarray
    U: np.ndarray

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def H(self) -> np.ndarray:
        """The 2n x 2n matrix ``[[V, U], [U^t, T]]``."""
        return np.block([[self.V, self.U], [self.U.T, self.T]])

    @property
    def generator(self) -> np.ndarray:
        return rpa_generator(self)

    @classmethod
    def from_matrix(cls, H) -> "QuadraticForm":
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % 2:
            raise ValueError(f"expected an even square matrix, got shape {H.shape}")
        n = H.shape[0] // 2
        return assemble(H[n:, n:], H[:n, :n], H[:n, n:])

    def energy(self, R) -> float:
        R = np.asarray(R)
        return 0.5 * float(R @ self.H @ R)

    def __repr__(self):
        return f"QuadraticForm(n={self.n})"


def _check_symmetric(name, M):
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3g})")


def assemble(T, V, U) -> QuadraticForm:
    """Validate ``T``, ``V``, ``U`` and return the form with exact symmetrization.

    Raises
    ------
    ValueError
        On non-square or mismatched shapes, or when ``T``/``V`` are asymmetric
        beyond 1e-12 relative.
    """
    T, V, U = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (T, V, U))
    shapes = {T.shape, V.shape, U.shape}
    if len(shapes) != 1:
        raise ValueError(f"T, V, U must share one shape, got {sorted(shapes)}")
    (shape,) = shapes
    if shape[0] != shape[1] or shape[0] == 0:
        raise ValueError(f"matrices must be square and non-empty, got {shape}")
    if not all(np.all(np.isfinite(a)) for a in (T, V, U)):
        raise ValueError("matrix entries must be finite")
    _check_symmetric("T", T)
    _check_symmetric("V", V)
    T = 0.5 * (T + T.T)
    V = 0.5 * (V + V.T)
    for a in (T, V, U):
        a.flags.writeable = False
    return QuadraticForm(T=T, V=V, U=U.copy())


def rpa_generator(form: QuadraticForm) -> np.ndarray:
    """Real generator ``G = J Hc = [[U^t, T], [-V, -U]]`` with ``dR/dt = G R``."""
    return np.block([[form.U.T, form.T], [-form.V, -form.U]])


def form_from_generator(G) -> QuadraticForm:
    """Inverse of :func:`rpa_generator`: ``Hc = -J G``."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0] // 2
    H = -symplectic_metric(n) @ G
    return QuadraticForm.from_matrix(0.5 * (H + H.T))


def commutator(O1: QuadraticForm, O2: QuadraticForm) -> QuadraticForm:
    """Form whose generator is ``[G1, G2]``.

    This is ``-i [O1, O2]``, the Poisson bracket ``{O1, O2}``, which is again a
    real quadratic form.
    """
    if O1.n != O2.n:
        raise ValueError(f"dimension mismatch: {O1.n} vs {O2.n}")
    G1, G2 = rpa_generator(O1), rpa_generator(O2)
    return form_from_generator(G1 @ G2 - G2 @ G1)


@dataclass(frozen=True, eq=False)
class BosonRep:
    """``h = sum A_ij (b_i^+ b_j + d_ij/2) + 1/2 (B+_ij b_i^+ b_j^+ + B-_ij b_i b_j)``."""

    A: np.ndarray
    Bplus: np.ndarray
    Bminus: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


def boson_rep(form: QuadraticForm) -> BosonRep:
    T, V, U = form.T, form.V, form.U
    A = 0.5 * (V + T - 1j * (U - U.T))
    Bp = 0.5 * (V - T + 1j * (U + U.T))
    Bm = 0.5 * (V - T - 1j * (U + U.T))
    return BosonRep(A=A, Bplus=Bp, Bminus=Bm)


def form_from_boson(rep: BosonRep) -> QuadraticForm:
    """Recover ``(T, V, U)`` from a boson representation of a real form."""
    A, Bp = rep.A, rep.Bplus
    V = A.real + Bp.real
    T = A.real - Bp.real
    U = Bp.imag - A.imag
    return assemble(T, V, U)


# ---------------------------------------------------------------------------
# spectral structure


def canonical_frequency(lam: complex, tol: float = 0.0) -> complex:
    """Representative of the pair ``{lam, -lam}``: Re > 0, or Re = 0 and Im >= 0.

    Parts with magnitude ``<= tol`` are treated as zero and snapped.
    """
    lam = complex(lam)
    re, im = lam.real, lam.imag
    if abs(re) <= tol:
        re = 0.0
    if abs(im) <= tol:
        im = 0.0
    if re < 0 or (re == 0 and im < 0):
        re, im = -re, -im
    return complex(re + 0.0, im + 0.0)


def _sort_key(lam: complex):
    return (-round(lam.real, 12), -round(lam.imag, 12))


def _null_space(M, tol_abs):
    """Orthonormal null-space basis and the singular values that decided it."""
    _, s, vh = np.linalg.svd(M)
    _check_rank_gap(s, tol_abs)
    rank = int(np.sum(s > tol_abs))
    return vh[rank:].conj().T, s


def _check_rank_gap(s, tol_abs):
    amb = (s > tol_abs / 10) & (s < tol_abs * 10)
    if np.any(amb):
        raise IndeterminateStructureError(
            f"singular value {s[amb][0]:.3g} within 10x of rank tolerance {tol_abs:.3g}"
        )


def _cluster_radius(size: int, tol: float, scale: float) -> float:
    # computed eigenvalues of a d-dimensional Jordan block spread like eps**(1/d)
    return scale * max(tol, (1e3 * _EPS) ** (1.0 / size))


def cluster_eigenvalues(mu, tol: float, scale: float) -> list[list[int]]:
    """Group eigenvalues that may belong to one Jordan block.

    Largest clusters first: ``k`` values form a cluster when their diameter is
    within the splitting radius expected for a k-dimensional block.
    """
    mu = np.asarray(mu)
    left = list(range(len(mu)))
    clusters = []
    for k in range(len(mu), 1, -1):
        found = True
        while found and len(left) >= k:
            found = False
            best = None
            for i in left:
                near = sorted(left, key=lambda j: abs(mu[j] - mu[i]))[:k]
                vals = mu[near]
                diam = float(np.max(np.abs(vals[:, None] - vals[None, :])))
                if diam <= _cluster_radius(k, tol, scale) and (best is None or diam < best[0]):
                    best = (diam, near)
            if best is not None:
                clusters.append(sorted(best[1]))
                left = [j for j in left if j not in best[1]]
                found = True
    clusters += [[i] for i in left]
    return clusters


def _phase_fix(v):
    """Make the first component of largest modulus real and positive."""
    mags = np.abs(v)
    k = int(np.argmax(mags >= mags.max() * (1 - 1e-9)))
    if mags[k] == 0:
        return v
    return v * (abs(v[k]) / v[k])


def _complement_basis(candidates, existing, count, tol_abs):
    """``count`` orthonormal directions of span(candidates) outside span(existing)."""
    C = candidates
    if existing is not None and existing.shape[1]:
        Q, _ = np.linalg.qr(existing)
        C = C - Q @ (Q.conj().T @ C)
    u, s, _ = np.linalg.svd(C, full_matrices=False)
    if count > len(s) or (count and s[count - 1] <= tol_abs):
        raise IndeterminateStructureError("could not complete a Jordan chain basis")
    return u[:, :count]


def _jordan_chains(M, alg_mult, tol, scale):
    """Jordan chains of nilpotent-on-cluster ``M = G - mu I``.

    Returns the list of chains, each a list ``[v_1, ..., v_d]`` with
    ``M v_1 = 0`` and ``M v_k = v_{k-1}``.
    """
    m = M.shape[0]
    nulls = [np.zeros((m, 0), dtype=M.dtype)]
    Mk = np.eye(m, dtype=M.dtype)
    for k in range(1, alg_mult + 1):
        Mk = Mk @ M
        basis, _ = _null_space(Mk, tol * scale**k)
        nulls.append(basis)
        if basis.shape[1] >= alg_mult:
            break
    dims = [b.shape[1] for b in nulls]
    if dims[-1] != alg_mult:
        raise IndeterminateStructureError(
            f"generalized eigenspace has dimension {dims[-1]}, expected {alg_mult}"
        )
    p = len(dims) - 1
    dims.append(dims[-1])
    chains: list[list[np.ndarray]] = []
    for k in range(p, 0, -1):
        count = (dims[k] - dims[k - 1]) - (dims[k + 1] - dims[k])
        if count < 0:
            raise IndeterminateStructureError("inconsistent rank staircase")
        if count == 0:
            continue
        level = [np.linalg.matrix_power(M, len(c) - k) @ c[-1] for c in chains]
        existing = np.column_stack([nulls[k - 1]] + level) if level else nulls[k - 1]
        heads = _complement_basis(nulls[k], existing, count, tol)
        for j in range(count):
            h = heads[:, j]
            chain = [h]
            for _ in range(k - 1):
                chain.insert(0, M @ chain[0])
            chains.append(chain)
    # deterministic phase: eigenvector's dominant component real positive
    fixed = []
    for chain in chains:
        v1 = chain[0]
        k = int(np.argmax(np.abs(v1) >= np.abs(v1).max() * (1 - 1e-9)))
        ph = abs(v1[k]) / v1[k]
        fixed.append([ph * v for v in chain])
    return fixed


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Jordan structure of a generator ``G`` in real-generator convention.

    ``G = W @ jordan_matrix() @ Winv`` where the Jordan matrix carries
    ``mu = -i*lam`` on the diagonal and ones on the superdiagonal inside blocks.
    Columns of ``W`` are grouped by block, eigenvector first.  When ``G`` is
    diagonalizable the first ``n`` columns hold the pair representatives and the
    last ``n`` their partners, normalized so ``Winv (iJ) Winv^t = J``.
    """

    generator: np.ndarray
    eigenfrequencies: np.ndarray
    blocks: tuple
    W: np.ndarray
    Winv: np.ndarray
    tol_used: float
    scale: float = 1.0

    @property
    def n(self) -> int:
        return self.generator.shape[0] // 2

    @property
    def diagonalizable(self) -> bool:
        return all(d == 1 for _, d in self.blocks)

    def jordan_matrix(self) -> np.ndarray:
        m = self.generator.shape[0]
        Jm = np.zeros((m, m), dtype=complex)
        i = 0
        for lam, d in self.blocks:
            mu = -1j * lam
            for k in range(d):
                Jm[i + k, i + k] = mu
                if k + 1 < d:
                    Jm[i + k, i + k + 1] = 1.0
            i += d
        return Jm

    def evolution_table(self) -> "ExpPolyMatrix":
        """Exact ``exp(G t)`` as exponentials times polynomials in ``t``."""
        m = self.generator.shape[0]
        maxd = max(d for _, d in self.blocks)
        exps, coeffs = [], []
        i = 0
        for lam, d in self.blocks:
            mu = -1j * lam
            C = np.zeros((maxd, m, m), dtype=complex)
            Wb = self.W[:, i : i + d]
            Vb = self.Winv[i : i + d, :]
            N = np.eye(d, k=1)
            Nk = np.eye(d)
            for k in range(d):
                C[k] = Wb @ Nk @ Vb / math.factorial(k)
                Nk = Nk @ N
            exps.append(mu)
            coeffs.append(C)
            i += d
        return ExpPolyMatrix(np.array(exps), np.array(coeffs)).merged(self.tol_used * self.scale)


def spectral(G, tol: float = DEFAULT_TOL) -> SpectralDecomposition:
    """Eigenfrequencies, Jordan block profile and generalized eigenvectors of ``G``.

    Eigenvalue clusters are formed at ``tol * max(1, ||G||)`` (widened for
    clusters whose Jordan splitting exceeds that) and their block sizes are read
    off the rank staircase of ``(G - mu I)^k``.

    Raises
    ------
    IndeterminateStructureError
        When a rank decision lies within 10x of the tolerance.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    if G.ndim != 2 or m != G.shape[1] or m % 2:
        raise ValueError(f"generator must be an even square matrix, got {G.shape}")
    n = m // 2
    J = symplectic_metric(n)
    JG = J @ G
    if np.max(np.abs(JG - JG.T)) > 1e-10 * max(1.0, np.max(np.abs(JG))):
        raise ValueError("G is not a Hamiltonian generator (J G must be symmetric)")
    scale = max(1.0, float(np.linalg.norm(G, 2)))
    thr = tol * scale
    mu = np.linalg.eigvals(G)
    groups = []
    for g in cluster_eigenvalues(mu, tol, scale):
        if len(g) > 1:
            # keep a merged cluster only if its generalized nullity supports it
            center = complex(np.mean(mu[g]))
            Mc = np.linalg.matrix_power(G - center * np.eye(m), len(g))
            basis, _ = _null_space(Mc, tol * scale ** len(g))
            if basis.shape[1] < len(g):
                groups += [[i] for i in g]
                continue
        groups.append(g)

    clusters = []
    for g in groups:
        center = complex(np.mean(mu[g]))
        # representative bookkeeping happens in lam = i mu
        lam = 1j * center
        lam = complex(0.0 if abs(lam.real) <= thr else lam.real,
                      0.0 if abs(lam.imag) <= thr else lam.imag)
        clusters.append({"lam": lam, "mult": len(g)})

    # pair clusters lam <-> -lam
    used = [False] * len(clusters)
    pairs, zeros = [], []
    for i, c in enumerate(clusters):
        if used[i]:
            continue
        used[i] = True
        if c["lam"] == 0:
            zeros.append(c)
            continue
        rep = canonical_frequency(c["lam"])
        best, bestd = None, np.inf
        for j, c2 in enumerate(clusters):
            if used[j]:
                continue
            dist = abs(c2["lam"] + c["lam"])
            if dist < bestd:
                best, bestd = j, dist
        if best is None or clusters[best]["mult"] != c["mult"]:
            raise IndeterminateStructureError("eigenvalues do not pair as lam, -lam")
        used[best] = True
        partner = clusters[best]
        avg = 0.5 * (c["lam"] - partner["lam"])  # symmetrized center of the pair
        pairs.append((canonical_frequency(avg), c["mult"]))
    pairs.sort(key=lambda pm: _sort_key(pm[0]))

    def chains_for(lam, mult):
        mu_c = -1j * lam
        if mu_c.imag == 0:
            M = G - mu_c.real * np.eye(m)
        else:
            M = G.astype(complex) - mu_c * np.eye(m)
        return _jordan_chains(M, mult, tol, scale)

    rep_chains = [(lam, chains_for(lam, mult)) for lam, mult in pairs]
    part_chains = [(-lam, chains_for(-lam, mult)) for lam, mult in pairs]
    zero_chains = [chains_for(0j, c["mult"]) for c in zeros]
    # merge all zero clusters (there should be at most one)
    zch = [ch for group in zero_chains for ch in group]

    diagonalizable = all(len(ch) == 1 for _, chs in rep_chains + part_chains for ch in chs) \
        and all(len(ch) == 1 for ch in zch)

    if diagonalizable:
        first, second, fl, sl = [], [], [], []
        for (lam, rch), (_, pch) in zip(rep_chains, part_chains):
            Wr = np.column_stack([ch[0] for ch in rch]).astype(complex)
            Wp = np.column_stack([ch[0] for ch in pch]).astype(complex)
            P = Wr.T @ J @ Wp
            Wp = Wp @ np.linalg.inv(P) * 1j
            first.append(Wr)
            second.append(Wp)
            fl += [lam] * Wr.shape[1]
            sl += [-lam] * Wr.shape[1]
        if zch:
            Z = np.column_stack([ch[0] for ch in zch]).real
            a, b = symplectic_basis(Z, J)
            first.append(a.astype(complex))
            second.append(1j * b)
            fl += [0j] * a.shape[1]
            sl += [0j] * a.shape[1]
        W = np.column_stack(first + second)
        lams = np.array(fl + sl, dtype=complex)
        blocks = tuple((complex(l), 1) for l in lams)
    else:
        cols, lams, blocks = [], [], []
        for (lam, rch), (plam, pch) in zip(rep_chains, part_chains):
            for l, chs in ((lam, rch), (plam, pch)):
                for ch in chs:
                    cols += ch
                    lams += [l] * len(ch)
                    blocks.append((complex(l), len(ch)))
        for ch in sorted(zch, key=len, reverse=True):
            cols += [np.real_if_close(v) for v in ch]
            lams += [0j] * len(ch)
            blocks.append((0j, len(ch)))
        W = np.column_stack(cols).astype(complex)
        lams = np.array(lams, dtype=complex)
        blocks = tuple(blocks)
    try:
        Winv = np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        raise IndeterminateStructureError("generalized eigenvector matrix is singular") from exc
    return SpectralDecomposition(
        generator=G, eigenfrequencies=lams, blocks=blocks, W=W, Winv=Winv,
        tol_used=tol, scale=scale,
    )


def symplectic_basis(Z, J):
    """Symplectic Gram-Schmidt on the columns of ``Z``.

    Returns ``(a, b)`` with ``a^t J b = I`` and ``a^t J a = b^t J b = 0``.
    """
    vecs = [Z[:, i].copy() for i in range(Z.shape[1])]
    a_list, b_list = [], []
    while vecs:
        x = vecs.pop(0)
        omegas = [x @ J @ y for y in vecs]
        if not omegas:
            raise IndeterminateStructureError("odd-dimensional symplectic subspace")
        k = int(np.argmax(np.abs(omegas)))
        if abs(omegas[k]) < 1e-12:
            raise IndeterminateStructureError("degenerate symplectic form on subspace")
        y = vecs.pop(k) / omegas[k]
        rest = []
        for z in vecs:
            z = z + (y @ J @ z) * x - (x @ J @ z) * y
            rest.append(z)
        vecs = rest
        a_list.append(x)
        b_list.append(y)
    return np.column_stack(a_list), np.column_stack(b_list)


@dataclass(frozen=True)
class StructureReport:
    diagonalizable: bool
    real_spectrum: bool
    dynamically_stable: bool
    separable: bool
    block_profile: tuple


def classify_structure(dec: SpectralDecomposition) -> StructureReport:
    thr = dec.tol_used * dec.scale
    diag = dec.diagonalizable
    real = all(abs(lam.imag) <= thr for lam, _ in dec.blocks)
    separable = all(d == 1 or (d == 2 and lam == 0) for lam, d in dec.blocks)
    return StructureReport(
        diagonalizable=diag,
        real_spectrum=real,
        dynamically_stable=diag and real,
        separable=separable,
        block_profile=block_profile(dec),
    )


def block_profile(dec: SpectralDecomposition) -> tuple:
    """Sorted ``(lam, d)`` pairs, one per Jordan block."""
    return tuple(sorted(dec.blocks, key=lambda b: (_sort_key(b[0]), -b[1])))


# ---------------------------------------------------------------------------
# normal forms


class ModeKind(str, enum.Enum):
    STANDARD = "standard"
    INVERTED = "inverted"
    FREE = "free"
    UNSTABLE = "unstable"
    COMPLEX = "complex"
    VANISHING = "vanishing"


@dataclass(frozen=True)
class Mode:
    """One term ``1/2 (alpha p'^2 + beta q'^2)`` with ``alpha * beta = lam**2``."""

    alpha: complex
    beta: complex
    lam: complex
    kind: ModeKind


@dataclass(frozen=True, eq=False)
class ModeDecomposition:
    """Modes plus the canonical matrix realizing them.

    ``R = transform @ R'`` with ``R' = (q'_1..q'_n, p'_1..p'_n)``; the
    transform satisfies ``U J U^t = J`` and ``U^t Hc U`` is diagonal.
    """

    modes: tuple
    transform: np.ndarray

    @property
    def kinds(self) -> tuple:
        return tuple(m.kind for m in self.modes)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([m.lam for m in self.modes])

    @property
    def hermitian(self) -> bool:
        return bool(np.all(np.abs(self.transform.imag) < 1e-12))


def classify_mode(alpha, beta, zero_tol) -> ModeKind:
    """Kind of ``1/2 (alpha p^2 + beta q^2)``; magnitudes ``<= zero_tol`` count as zero."""
    alpha, beta = complex(alpha), complex(beta)
    za, zb = abs(alpha) <= zero_tol, abs(beta) <= zero_tol
    if za and zb:
        return ModeKind.VANISHING
    if za or zb:
        return ModeKind.FREE
    if abs(alpha.imag) > zero_tol or abs(beta.imag) > zero_tol:
        prod = alpha * beta
        # a complex rescaling may still give a real product
        if abs(prod.imag) > zero_tol * max(1.0, abs(prod)):
            return ModeKind.COMPLEX
        return ModeKind.UNSTABLE if prod.real < 0 else ModeKind.STANDARD
    if alpha.real * beta.real < 0:
        return ModeKind.UNSTABLE
    return ModeKind.STANDARD if alpha.real > 0 else ModeKind.INVERTED


def mode_lambda(alpha, beta, kind) -> complex:
    """Frequency of a single mode; negative for inverted oscillators, 0 for free/vanishing."""
    if kind in (ModeKind.FREE, ModeKind.VANISHING):
        return 0j
    lam = canonical_frequency(np.sqrt(complex(alpha) * complex(beta)))
    if kind is ModeKind.INVERTED:
        return -lam
    return lam


def _real_hyperbolic_pair(a, b):
    # real eigenvectors of +mu, -mu with a^t J b = 1
    u = (a + b) / math.sqrt(2)
    v = (b - a) / math.sqrt(2)
    return u, v


def normal_form(dec: SpectralDecomposition, form: QuadraticForm) -> ModeDecomposition:
    """Separate ``h`` into independent modes.

    Hermitian coordinates are used wherever they exist (standard, inverted,
    unstable, free and vanishing modes); complex modes get a complex transform.

    Raises
    ------
    NotSeparableError
        When some Jordan block has d > 2, or d = 2 with lam != 0.
    """
    report = classify_structure(dec)
    if not report.separable:
        raise NotSeparableError(
            f"form is non-separable (blocks {report.block_profile}); "
            "use the Jordan evolution or a degenerate canonical form instead"
        )
    G = dec.generator
    m = G.shape[0]
    n = m // 2
    J = symplectic_metric(n)
    H = form.H
    thr = dec.tol_used * dec.scale
    pairs_u, pairs_v = [], []

    # non-zero pairs
    lams = dec.eigenfrequencies
    nz = [l for l, _ in dec.blocks if l != 0]
    reps = []
    for l in nz:
        c = canonical_frequency(l, thr)
        if all(abs(c - r) > thr for r in reps):
            reps.append(c)
    reps.sort(key=_sort_key)
    for lam in reps:
        idx_r = [i for i, l in enumerate(lams) if abs(l - lam) <= thr]
        idx_p = [i for i, l in enumerate(lams) if abs(l + lam) <= thr]
        Wr = dec.W[:, idx_r]
        Wp = dec.W[:, idx_p]
        if lam.imag == 0:
            # real frequency: split the eigenspace by Krein signature
            Q = -1j * (Wr.T @ J @ Wr.conj())
            Q = 0.5 * (Q + Q.conj().T)
            q, O = np.linalg.eigh(Q)
            B = Wr @ O
            for k in range(B.shape[1]):
                w = B[:, k] / math.sqrt(abs(q[k]))
                if q[k] < 0:
                    w = w.conj()
                pairs_u.append(math.sqrt(2) * w.real)
                pairs_v.append(-math.sqrt(2) * w.imag)
        elif lam.real == 0:
            # imaginary frequency: real hyperbolic pairs
            A = Wr.real if np.allclose(Wr.imag, 0, atol=1e-12) else _realify(Wr)
            Bp = Wp.real if np.allclose(Wp.imag, 0, atol=1e-12) else _realify(Wp)
            P = A.T @ J @ Bp
            Bp = Bp @ np.linalg.inv(P).T
            for k in range(A.shape[1]):
                u, v = _real_hyperbolic_pair(A[:, k], Bp[:, k])
                pairs_u.append(u)
                pairs_v.append(v)
        else:
            P = Wr.T @ J @ Wp
            Wp = Wp @ np.linalg.inv(P) * 1j
            for k in range(Wr.shape[1]):
                w, wb = Wr[:, k], Wp[:, k]
                pairs_u.append((w + wb) / math.sqrt(2))
                pairs_v.append(1j * (w - wb) / math.sqrt(2))

    # zero cluster: free particles (d = 2) and vanishing modes (d = 1)
    zero_blocks = [d for l, d in dec.blocks if l == 0]
    if zero_blocks:
        u0, v0 = _zero_modes(G, H, J, len(zero_blocks) and sum(zero_blocks),
                             zero_blocks.count(2), dec.tol_used, dec.scale)
        pairs_u += u0
        pairs_v += v0

    Umat = np.column_stack(pairs_u + pairs_v)
    if np.max(np.abs(Umat.imag)) < 1e-13 if np.iscomplexobj(Umat) else True:
        Umat = np.real(Umat)
    D = Umat.T @ H @ Umat
    zero_tol = thr * max(1.0, float(np.linalg.norm(H, 2)))
    modes = []
    for k in range(n):
        alpha, beta = complex(D[n + k, n + k]), complex(D[k, k])
        kind = classify_mode(alpha, beta, zero_tol)
        if kind in (ModeKind.FREE, ModeKind.VANISHING):
            alpha = 0j if abs(alpha) <= zero_tol else alpha
            beta = 0j if abs(beta) <= zero_tol else beta
        modes.append(Mode(alpha=_tidy(alpha), beta=_tidy(beta),
                          lam=mode_lambda(alpha, beta, kind), kind=kind))
    order = sorted(range(n), key=lambda k: _sort_key(modes[k].lam))
    modes = tuple(modes[k] for k in order)
    Umat = Umat[:, order + [n + k for k in order]]
    return ModeDecomposition(modes=modes, transform=Umat)


def _tidy(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else z


def _realify(Wc):
    # a real basis of a conjugation-invariant column space
    X = np.column_stack([Wc.real, Wc.imag])
    u, s, _ = np.linalg.svd(X, full_matrices=False)
    return u[:, : Wc.shape[1]]


def _zero_modes(G, H, J, alg_mult, n_free, tol, scale):
    m = G.shape[0]
    K1, _ = _null_space(G, tol * scale)
    K2, _ = _null_space(G @ G, tol * scale**2)
    if K2.shape[1] != alg_mult:
        raise IndeterminateStructureError("zero generalized eigenspace has unexpected size")
    us, vs = [], []
    if n_free:
        Y = _complement_basis(K2, K1, n_free, tol)
        Y = np.real_if_close(Y)
        C = Y.T @ H @ Y
        d, O = np.linalg.eigh(0.5 * (C + C.T))
        Y = Y @ O
        X = G @ Y
        S = Y.T @ J @ Y
        c = -S / (2 * d[None, :])
        Y = Y + X @ c.T
        for j in range(n_free):
            s = math.sqrt(abs(d[j]))
            us.append(X[:, j] / d[j] * s)
            vs.append(Y[:, j] / s)
    else:
        X = np.zeros((m, 0))
        Y = np.zeros((m, 0))
    n_van = K1.shape[1] - n_free
    if n_van:
        Z = _complement_basis(K1, X if X.shape[1] else None, n_van, tol).real
        for j in range(Y.shape[1]):
            D = X[:, j] @ J @ Y[:, j]
            Z = Z - np.outer(X[:, j], (Z.T @ J @ Y[:, j]) / D)
        a, b = symplectic_basis(Z, J)
        us += [a[:, k] for k in range(a.shape[1])]
        vs += [b[:, k] for k in range(b.shape[1])]
    return us, vs


def spectrum_levels(modes: ModeDecomposition, quanta: Sequence[int]) -> float:
    """``E = sum lam_nu (n_nu + 1/2)`` for a dynamically stable decomposition.

    Raises
    ------
    NoDiscreteSpectrumError
        If any mode is free, unstable or complex.
    """
    allowed = (ModeKind.STANDARD, ModeKind.INVERTED, ModeKind.VANISHING)
    bad = [m.kind.value for m in modes.modes if m.kind not in allowed]
    if bad:
        raise NoDiscreteSpectrumError(f"no discrete real spectrum: modes of kind {bad}")
    if len(quanta) != len(modes.modes):
        raise ValueError(f"need {len(modes.modes)} quanta, got {len(quanta)}")
    if any(int(q) != q or q < 0 for q in quanta):
        raise ValueError("quanta must be non-negative integers")
    return float(sum(m.lam.real * (q + 0.5) for m, q in zip(modes.modes, quanta)))


def lowest_levels(modes: ModeDecomposition, count: int) -> list[tuple[tuple, float]]:
    """The ``count`` lowest levels with their quanta.

    Vanishing modes do not change the energy and are held at zero quanta.
    Raises :class:`NoDiscreteSpectrumError` when the spectrum is unbounded below.
    """
    spectrum_levels(modes, [0] * len(modes.modes))
    if any(m.kind is ModeKind.INVERTED for m in modes.modes):
        raise NoDiscreteSpectrumError("spectrum is discrete but unbounded below")
    lam = [m.lam.real for m in modes.modes]
    ranges = []
    for l in lam:
        ranges.append(range(1) if l == 0 else range(count))
    levels = []
    for q in itertools.product(*ranges):
        levels.append((q, spectrum_levels(modes, q)))
    levels.sort(key=lambda x: (x[1], x[0]))
    return levels[:count]


# ---------------------------------------------------------------------------
# time evolution


@dataclass(frozen=True, eq=False)
class ExpPolyMatrix:
    """``M(t) = sum_k exp(s_k t) sum_m C[k, m] t**m``.

    ``exponents`` has shape (K,), ``coeffs`` shape (K, P, m, m).
    """

    exponents: np.ndarray
    coeffs: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        out = np.zeros(self.coeffs.shape[2:], dtype=complex)
        powers = t ** np.arange(self.coeffs.shape[1])
        for s, C in zip(self.exponents, self.coeffs):
            out += np.exp(s * t) * np.tensordot(powers, C, axes=1)
        return out

    def real(self, t: float) -> np.ndarray:
        return self(t).real

    @property
    def growth_rate(self) -> float:
        return float(max(0.0, max((s.real for s in self.exponents), default=0.0)))

    @property
    def degree(self) -> int:
        nz = [m for m in range(self.coeffs.shape[1]) if np.any(self.coeffs[:, m] != 0)]
        return max(nz, default=0)

    def coefficient(self, exponent: complex, power: int, i: int, j: int, atol=1e-12) -> complex:
        """Coefficient of ``t**power * exp(exponent t)`` in entry ``(i, j)``."""
        total = 0j
        for s, C in zip(self.exponents, self.coeffs):
            if abs(s - exponent) <= atol and power < C.shape[0]:
                total += C[power, i, j]
        return total

    def conjugated(self, U,Uinv=None) -> "ExpPolyMatrix":
        """Table of ``U M(t) U^-1``."""
        U = np.asarray(U)
        Uinv = np.linalg.inv(U) if Uinv is None else Uinv
        C = np.einsum("ab,kpbc,cd->kpad", U, self.coeffs, Uinv)
        return ExpPolyMatrix(self.exponents.copy(), C)

    def merged(self, tol: float = 0.0) -> "ExpPolyMatrix":
        """Combine terms whose exponents agree within ``tol``."""
        exps, coeffs = [], []
        for s, C in zip(self.exponents, self.coeffs):
            for k, s2 in enumerate(exps):
                if abs(s - s2) <= tol:
                    coeffs[k] = coeffs[k] + C
                    break
            else:
                exps.append(complex(s))
                coeffs.append(C.astype(complex))
        return ExpPolyMatrix(np.array(exps), np.array(coeffs))


def overflow_horizon(growth_rate: float) -> float:
    if growth_rate <= 0:
        return math.inf
    return _LOG_FLOAT_MAX / growth_rate


def _growth_rate(G) -> float:
    mu = np.linalg.eigvals(G)
    return float(np.max(np.abs(mu.real)))


def propagator(source, t: float, method: str = "exp", tol: float = DEFAULT_TOL) -> np.ndarray:
    """``E(t) = exp(G t)`` for a generator matrix or a :class:`SpectralDecomposition`.

    ``method="exp"`` uses scaling and squaring on the real generator;
    ``method="jordan"`` evaluates the closed form from the Jordan decomposition.

    Raises
    ------
    PropagatorOverflowError
        If ``|t|`` exceeds the representable horizon.
    """
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if isinstance(source, SpectralDecomposition):
        dec, G = source, source.generator
    else:
        dec, G = None, np.asarray(source, dtype=float)
    if method == "exp":
        rate = _growth_rate(G)
        _check_horizon(rate, t)
        with np.errstate(over="ignore", invalid="ignore"):
            E = scipy.linalg.expm(G * t)
    elif method == "jordan":
        if dec is None:
            dec = spectral(G, tol)
        table = dec.evolution_table()
        _check_horizon(table.growth_rate, t)
        with np.errstate(over="ignore", invalid="ignore"):
            E = table(t).real
    else:
        raise ValueError(f"unknown method {method!r}; use 'exp' or 'jordan'")
    if not np.all(np.isfinite(E)):
        raise PropagatorOverflowError(
            f"propagator overflowed at t={t}", overflow_horizon(_growth_rate(G))
        )
    return E


def _check_horizon(rate, t):
    horizon = overflow_horizon(rate)
    if abs(t) > horizon:
        raise PropagatorOverflowError(
            f"|t|={abs(t):g} exceeds representable horizon {horizon:g}", horizon
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray


def evolve_moments(G, mean0, cov0, times, propagate: Callable | None = None) -> Trajectory:
    """First and second moments under ``dR/dt = G R``.

    ``mean(t) = E mean0`` and ``cov(t) = E cov0 E^t``.  ``propagate`` may supply
    ``t -> E(t)`` (e.g. a closed form); the default is :func:`propagator`.
    """
    G = np.asarray(G, dtype=float)
    mean0 = np.asarray(mean0, dtype=float)
    cov0 = np.asarray(cov0, dtype=float)
    if np.max(np.abs(cov0 - cov0.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov0))):
        raise ValueError("cov0 must be symmetric")
    if propagate is None:
        def propagate(t):
            return propagator(G, t)
    times = np.asarray(times, dtype=float)
    means, covs = [], []
    for t in times:
        E = propagate(t)
        means.append(E @ mean0)
        covs.append(E @ cov0 @ E.T)
    return Trajectory(times=times, means=np.array(means), covs=np.array(covs))
