import math

import numpy as np
import pytest

from rotquad import oracle as orc
from rotquad import quadcore as qc
from rotquad import rotor2d as r2
from rotquad.errors import DegenerateRegimeError, NotDegenerateError, PropagatorOverflowError
from conftest import MIRROR_POINTS, REGIME_POINTS, regime_params

M = r2.PotentialParams.magnetic
R = r2.PotentialParams.rotating
J4 = qc.symplectic_metric(2)


# --- parameters ------------------------------------------------------------------


def test_frame_conversion_is_involutive(rng):
    for kx, ky, w in rng.uniform(-5, 5, size=(200, 3)):
        p = M(kx, ky, w)
        back = p.to_frame("rotating").to_frame("magnetic")
        assert (back.kx, back.ky, back.omega) == (p.kx, p.ky, p.omega)
        q = R(kx, ky, w)
        back = q.to_frame("magnetic").to_frame("rotating")
        assert (back.kx, back.ky, back.omega) == (q.kx, q.ky, q.omega)


def test_params_validation():
    with pytest.raises(ValueError):
        r2.PotentialParams("lab", 1, 1, 0)
    with pytest.raises(ValueError):
        M(float("nan"), 1, 0)
    with pytest.raises(ValueError):
        M(True, 1, 0)


def test_params_json_roundtrip():
    p = R(2.0, -1.5, 0.25)
    assert r2.PotentialParams.from_json(p.to_json()) == p
    assert r2.PotentialParams.from_json({"kx": 1, "ky": 2, "omega": 0}).frame == "magnetic"


@pytest.mark.parametrize("obj,msg", [
    ({"kx": 1, "ky": 2}, "omega"),
    ({"kx": 1, "ky": 2, "omega": 0, "kz": 1}, "kz"),
    ([1, 2, 3], "object"),
])
def test_params_json_diagnostics(obj, msg):
    with pytest.raises(ValueError, match=msg):
        r2.PotentialParams.from_json(obj)


# --- build_form ------------------------------------------------------------------


def test_build_form_examples():
    f = r2.build_form(M(1, 1, 0))
    assert np.array_equal(f.H, np.eye(4))
    a = r2.build_form(R(2, 1, 0.5)).H
    b = r2.build_form(M(1.75, 0.75, 0.5)).H
    assert np.array_equal(a, b)
    landau = r2.build_form(M(0, 0, 0.5))
    assert np.array_equal(landau.V, np.diag([0.25, 0.25]))
    assert np.array_equal(landau.U, -0.5 * np.array([[0, 1], [-1, 0]]))


# --- eigenfrequencies --------------------------------------------------------------


def test_eigenfrequency_examples():
    fp = r2.eigenfrequencies(R(2, 1, 0))
    assert fp.lambda_plus == pytest.approx(math.sqrt(2)) and fp.lambda_minus == pytest.approx(1)
    fp = r2.eigenfrequencies(M(0, 0, 0.5))
    assert fp.lambda_plus == pytest.approx(1) and fp.lambda_minus == 0
    fp = r2.eigenfrequencies(M(-1, -4, 2))
    assert fp.lambda_plus.real == pytest.approx(3.2594, abs=1e-4)
    assert fp.lambda_minus.real == pytest.approx(0.6136, abs=1e-4)
    assert (fp.lambda_plus * fp.lambda_minus) ** 2 == pytest.approx(4, rel=1e-14)


def test_eigenfrequencies_match_oracle():
    for tag in REGIME_POINTS:
        p = regime_params(tag)
        fp = r2.eigenfrequencies(p)
        ref = sorted({qc.canonical_frequency(l, 1e-6) for l in orc.char_poly_eigs(r2.build_form(p).generator)},
                     key=abs)
        got = sorted({qc.canonical_frequency(fp.lambda_plus, 1e-6), qc.canonical_frequency(fp.lambda_minus, 1e-6)},
                     key=abs)
        # j/k/L are double roots; the oracle is only accurate to sqrt(eps) there
        tol = 1e-6 if tag in "jkL" else 1e-10
        for a in got:
            assert min(abs(a - b) for b in ref) <= tol


def test_sum_and_product_identities(rng):
    for kx, ky, w in rng.uniform(-5, 5, size=(2000, 3)):
        p = M(kx, ky, w)
        fp = r2.eigenfrequencies(p)
        kpx, kpy = p.kprime
        s = fp.lambda_plus**2 + fp.lambda_minus**2
        scale = 1 + abs(kpx) + abs(kpy) + 2 * w * w
        assert abs(s - (kpx + kpy + 2 * w * w)) <= 1e-8 * scale
        assert abs((fp.lambda_plus * fp.lambda_minus) ** 2 - kx * ky) <= 1e-8 * (1 + abs(kx * ky))


def test_frame_identity_exact(rng):
    for kx, ky, w in rng.uniform(-5, 5, size=(200, 3)):
        a = r2.eigenfrequencies(M(kx, ky, w))
        b = r2.eigenfrequencies(M(kx, ky, w).to_frame("rotating"))
        assert (a.lambda_plus, a.lambda_minus) == (b.lambda_plus, b.lambda_minus)


def test_canonical_representatives(rng):
    for kx, ky, w in rng.uniform(-5, 5, size=(500, 3)):
        fp = r2.eigenfrequencies(M(kx, ky, w))
        for lam in (fp.lambda_plus, fp.lambda_minus):
            assert lam.real > 0 or (lam.real == 0 and lam.imag >= 0)


def test_isotropic_identity():
    for kp in (0.5, 1.0, 3.0):
        for w in (0.0, 0.3, 1.7):
            fp = r2.eigenfrequencies(R(kp, kp, w))
            got = sorted([abs(fp.lambda_plus), abs(fp.lambda_minus)])
            want = sorted([abs(math.sqrt(kp) + w), abs(math.sqrt(kp) - w)])
            assert got == pytest.approx(want, abs=1e-12)


def test_signature_independent_of_omega():
    for kx, ky in [(1, 2), (-1, -4), (1, -1), (0, -2), (-0.5, 3)]:
        counts = {int(np.sum(np.linalg.eigvalsh(r2.build_form(M(kx, ky, w)).H) < -1e-12))
                  for w in np.linspace(0, 3, 31)}
        assert len(counts) == 1


# --- critical frequencies --------------------------------------------------------


def test_critical_frequency_examples():
    assert r2.critical_frequencies(M(-1, -4, 0)) == pytest.approx([0.5, 1.5])
    assert r2.critical_frequencies(M(-1, -1, 0)) == pytest.approx([0.0, 1.0])
    assert r2.critical_frequencies(R(1, -2, 0)) == pytest.approx([3 / math.sqrt(8)])
    assert r2.critical_frequencies(M(1, 2, 0)) == []
    assert r2.critical_frequencies(R(2, 1, 0)) == []


def test_delta_changes_sign_at_critical_frequencies():
    p = M(-1, -4, 0)
    for wc in r2.critical_frequencies(p):
        lo = r2.eigenfrequencies(M(-1, -4, wc - 1e-4)).delta_sq
        hi = r2.eigenfrequencies(M(-1, -4, wc + 1e-4)).delta_sq
        assert lo * hi < 0


def test_critical_frequencies_match_eigenvalue_collision():
    # the oracle spectrum collapses to two double roots exactly there
    def gap(w):
        lam = orc.char_poly_eigs(r2.build_form(M(-1, -4, w)).generator)
        return np.min([abs(a - b) for i, a in enumerate(lam) for b in lam[i + 1:]])

    for wc in r2.critical_frequencies(M(-1, -4, 0)):
        ws = np.linspace(wc - 1e-3, wc + 1e-3, 2001)
        best = ws[np.argmin([gap(w) for w in ws])]
        assert abs(best - wc) <= 1e-6


# --- classification ----------------------------------------------------------------


@pytest.mark.parametrize("tag", sorted(REGIME_POINTS))
def test_regime_points(tag):
    assert r2.classify_region(regime_params(tag)).tag == tag


@pytest.mark.parametrize("tag", sorted(MIRROR_POINTS))
def test_mirror_points(tag):
    assert r2.classify_region(M(*MIRROR_POINTS[tag])).tag == tag


def test_classify_examples():
    for w in (0, 0.3, 5):
        assert r2.classify_region(M(1, 1, w)).tag == "A"
    assert r2.classify_region(M(-1, -4, 1)).tag == "E"
    assert r2.classify_region(M(-1, 0, 0.5)).tag == "L"


def test_boundary_flag():
    assert not r2.classify_region(M(1, 2, 0.3)).boundary
    assert r2.classify_region(M(1e-12, 2, 0.3)).boundary
    assert r2.classify_region(M(-1, -4, 1.5 + 1e-13)).tag == "j"
    with pytest.raises(ValueError):
        r2.classify_region(M(1, 1, 0), band=0)


def test_region_flags_match_structure(regime):
    tag, p = regime
    label = r2.classify_region(p)
    rep = qc.classify_structure(qc.spectral(r2.build_form(p).generator))
    assert (label.stable, label.separable, label.diagonalizable) == (
        rep.dynamically_stable, rep.separable, rep.diagonalizable)


# --- stability windows ---------------------------------------------------------------


def _summary(ws):
    return [(iv.kind, iv.lo, iv.hi, iv.lo_closed, iv.hi_closed) for iv in ws.intervals]


def test_windows_positive_anisotropic():
    ws = r2.stability_windows(R(2, 1, 0))
    (un,) = ws.of_kind("unstable")
    assert (un.lo, un.hi) == pytest.approx((1, math.sqrt(2)))
    assert un.lo_closed and un.hi_closed
    assert ws.kind_at(0.5) == "stable" and ws.kind_at(1.2) == "unstable" and ws.kind_at(3) == "stable"


def test_windows_first_saddle():
    ws = r2.stability_windows(R(1, -0.5, 0))
    assert ws.kind_at(0.99) == "unstable" and ws.kind_at(1.01) == "stable" and ws.kind_at(50) == "stable"
    assert ws.kind_at(1.0) == "unstable"


def test_windows_second_saddle():
    ws = r2.stability_windows(R(1, -2, 0))
    wc = 3 / math.sqrt(8)
    st = [iv for iv in ws.of_kind("stable")]
    assert len(st) == 1
    assert (st[0].lo, st[0].hi) == pytest.approx((1, wc))
    assert not st[0].lo_closed and not st[0].hi_closed


def test_windows_isotropic_stable_everywhere():
    ws = r2.stability_windows(R(1, 1, 0))
    assert all(ws.kind_at(w) == "stable" for w in np.linspace(0, 5, 101))


def test_windows_cover_half_line(rng):
    for kx, ky in rng.uniform(-3, 3, size=(30, 2)):
        for frame in ("magnetic", "rotating"):
            ivs = r2.stability_windows(r2.PotentialParams(frame, kx, ky, 0.0)).intervals
            assert ivs[0].lo == 0 and ivs[0].lo_closed and ivs[-1].hi == math.inf
            for a, b in zip(ivs, ivs[1:]):
                assert a.hi == b.lo and a.hi_closed != b.lo_closed and a.kind != b.kind


def test_windows_agree_with_classifier(rng):
    for kx, ky in rng.uniform(-3, 3, size=(20, 2)):
        for frame in ("magnetic", "rotating"):
            ws = r2.stability_windows(r2.PotentialParams(frame, kx, ky, 0.0))
            for w in rng.uniform(0, 3, size=10):
                p = r2.PotentialParams(frame, kx, ky, w)
                want = "stable" if r2.classify_region(p).stable else "unstable"
                assert ws.kind_at(w) == want


def test_windows_magnetic_b_region():
    ws = r2.stability_windows(M(-1, -4, 0))
    assert ws.kind_at(1.4) == "unstable" and ws.kind_at(1.6) == "stable"
    assert ws.kind_at(1.5) == "unstable"


# --- separable decomposition ----------------------------------------------------------


def _is_canonical(U):
    return np.max(np.abs(U @ J4 @ U.T - J4)) <= 1e-10 * max(1, np.max(np.abs(U)) ** 2)


@pytest.mark.parametrize("tag", list("ABCDEFghi"))
def test_separable_transform(tag):
    p = regime_params(tag)
    sf = r2.separable_decomposition(p)
    H = r2.build_form(p).H
    U = sf.transform
    assert _is_canonical(U)
    D = U.T @ H @ U
    assert np.max(np.abs(D - np.diag(np.diag(D)))) <= 1e-10 * np.linalg.norm(H)
    for m in sf.modes.modes:
        assert abs(m.alpha * m.beta - m.lam**2) <= 1e-10 * max(1, abs(m.lam) ** 2)
    assert sf.hermitian == (tag != "E")


@pytest.mark.parametrize("tag", list("ABCDE"))
def test_normalized_form(tag):
    p = regime_params(tag)
    sf = r2.separable_decomposition(p)
    assert sf.normalized is not None
    U = sf.normalized.transform
    assert _is_canonical(U)
    D = U.T @ r2.build_form(p).H @ U
    lam = np.array([m.lam for m in sf.normalized.modes])
    assert np.allclose(D, np.diag(np.concatenate([lam, lam])), atol=1e-10)


def test_small_omega_limit():
    sf = r2.separable_decomposition(R(2, 1, 1e-9))
    assert abs(sf.gamma) < 1e-8 and abs(sf.eta) < 1e-8
    assert np.allclose(sf.alpha, (1, 1), atol=1e-8)
    assert np.allclose(sf.beta, (2, 1), atol=1e-8)


def test_omega_zero_swapped_axes():
    sf = r2.separable_decomposition(R(1, 2, 0))
    assert sorted(np.real(sf.lambdas)) == pytest.approx([1, math.sqrt(2)])


def test_axis_shape_region_g():
    sf = r2.separable_decomposition(M(1, 0, 0.5))
    (a0, a1), (b0, b1) = sf.alpha, sf.beta
    assert sf.lambdas[0] == pytest.approx(math.sqrt(2))
    assert (a1, b1) == pytest.approx((0.5, 0))
    assert sf.modes.kinds[1] is qc.ModeKind.FREE


def test_axis_shape_free_mode_sign():
    # h: real lam+ with an inverted free particle; i: unstable lam+ with a normal one
    h = r2.separable_decomposition(M(-0.5, 0, 0.5))
    assert h.modes.kinds == (qc.ModeKind.STANDARD, qc.ModeKind.FREE) and h.alpha[1] == pytest.approx(-1)
    i = r2.separable_decomposition(M(-2, 0, 0.5))
    assert i.modes.kinds == (qc.ModeKind.UNSTABLE, qc.ModeKind.FREE) and i.alpha[1] == pytest.approx(2)
    assert i.lambdas[0] == pytest.approx(1j)


def test_separable_rejects_degenerate():
    for tag in "jkL":
        with pytest.raises(DegenerateRegimeError):
            r2.separable_decomposition(regime_params(tag))


def test_separable_random_identity(rng):
    done = 0
    while done < 300:
        kx, ky, w = rng.uniform(-3, 3, size=3)
        p = M(kx, ky, w)
        if r2.classify_region(p, band=1e-4).boundary:
            continue
        done += 1
        sf = r2.separable_decomposition(p)
        for m in sf.modes.modes:
            assert abs(m.alpha * m.beta - m.lam**2) <= 1e-10 * max(1, abs(m.lam) ** 2)
        assert _is_canonical(sf.transform)


# --- degenerate forms ------------------------------------------------------------


@pytest.mark.parametrize("pt", [REGIME_POINTS[t] for t in "jkL"] + [MIRROR_POINTS[t] for t in "jkL"])
def test_degenerate_transform(pt):
    p = M(*pt)
    df = r2.degenerate_form(p)
    U = df.transform
    iJ = 1j * J4
    assert np.max(np.abs(U @ iJ @ U.T - iJ)) <= 1e-10
    H = r2.build_form(p).H
    assert np.max(np.abs(U.T @ H @ U - df.target)) <= 1e-10 * np.linalg.norm(H)


def test_degenerate_examples():
    j = r2.degenerate_form(M(-1, -4, 1.5))
    assert j.case == "j" and j.lam == pytest.approx(math.sqrt(2), rel=1e-14)
    k = r2.degenerate_form(M(-1, -4, 0.5))
    assert k.case == "k" and k.lam == pytest.approx(1j * math.sqrt(2), rel=1e-14)
    L = r2.degenerate_form(M(-1, 0, 0.5))
    assert L.case == "L" and L.closed_evolution.coefficient(0, 3, 1, 3) == -1 / 24


def test_j_and_k_share_jordan_profile():
    pj = orc.staircase_jordan(r2.build_form(M(-1, -4, 1.5)).generator).profile
    pk = orc.staircase_jordan(r2.build_form(M(-1, -4, 0.5)).generator).profile
    assert sorted(d for _, d in pj) == sorted(d for _, d in pk) == [2, 2]


def test_l_point_q_minus_row():
    w = 0.5
    df = r2.degenerate_form(M(-1, 0, w))
    t = 1.7
    E = df.closed_evolution(t)
    # q-(t) = q- - w t q+ - w t^2/2 p+ - w^2 t^3/6 p-
    assert E[1] == pytest.approx([-w * t, 1, -0.5 * w * t * t, -(w * w) * t**3 / 6], abs=1e-14)


def test_degenerate_rejects_separable():
    with pytest.raises(NotDegenerateError):
        r2.degenerate_form(M(1, 2, 0.3))


# --- closed propagator ------------------------------------------------------------


@pytest.mark.parametrize("tag", sorted(REGIME_POINTS))
def test_closed_matches_reference(tag):
    p = regime_params(tag)
    G = r2.build_form(p).generator
    for t in (0.5, 1.0, 4.0):
        ref = orc.reference_expm(G, t)
        got = r2.closed_propagator(p, t)
        assert np.max(np.abs(got - ref)) <= 1e-10 * max(1, np.max(np.abs(ref)))


@pytest.mark.parametrize("tag", sorted(MIRROR_POINTS))
def test_closed_matches_exp_mirrors(tag):
    p = M(*MIRROR_POINTS[tag])
    G = r2.build_form(p).generator
    for t in np.linspace(0, 10, 11):
        E = qc.propagator(G, t)
        assert np.max(np.abs(r2.closed_propagator(p, t) - E)) <= 1e-9 * max(1, np.max(np.abs(E)))


def test_region_a_reference_tight():
    p = M(1, 2, 0.3)
    E = r2.closed_propagator(p, 1.0)
    assert np.max(np.abs(E - orc.reference_expm(r2.build_form(p).generator, 1.0))) <= 1e-11


def test_j_point_linear_envelope():
    p = M(-1, -4, 1.5)
    ts = np.linspace(10, 100, 91)
    norms = [np.linalg.norm(r2.closed_propagator(p, t), 2) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_l_point_entry_any_t():
    w = 0.5
    for t in (-3.0, 0.0, 0.25, 8.0, 40.0):
        C = r2.closed_propagator(M(-1, 0, w), t, basis="canonical")
        assert C[1, 3] == pytest.approx(-(w * w) * t**3 / 6, rel=1e-14, abs=1e-300)


def test_closed_overflow():
    with pytest.raises(PropagatorOverflowError):
        r2.closed_propagator(regime_params("E"), 1e5)


def test_closed_rejects_bad_basis():
    with pytest.raises(ValueError):
        r2.closed_propagator(regime_params("A"), 1.0, basis="polar")


def test_isotropic_tiny_omega_does_not_underflow():
    sf = r2.separable_decomposition(M(1, 1, 5e-243))
    assert (sf.gamma, sf.eta) == pytest.approx((1, 1))
    assert _is_canonical(sf.transform)
