import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamnf.dispersion import (DispersionContext, Divisor, classify_divisor, derivative_determinant,
                               derivative_determinant_closed_form, evaluate_divisor, formal_symbol_sum,
                               frequency, frequency_bounds, frequency_m_derivative, is_excluded_mass,
                               k_vectors, melnikov_norms, melnikov_tail_eps, scan_mass, scan_melnikov,
                               trivial_mask, upsilon)
from beamnf.lattice import analyze_set, integer_ball, integer_sphere, norm2
from beamnf.normal_form import NormalFormParams, class_radius, external_lambda_norm2, omega_vector
from oracles import FormalOracle, brute_melnikov, derivative_det_mp, lam_m_derivative_mp, lam_mp

masses = st.floats(1.0, 2.0)


def test_context_validation():
    with pytest.raises(ValueError):
        DispersionContext(2, 0.5)
    with pytest.raises(ValueError):
        DispersionContext(0, 1.0)
    assert DispersionContext(2, 4 / 3).excluded
    assert is_excluded_mass(5 / 3) and not is_excluded_mass(1.5)


@given(masses)
def test_frequency_examples(m):
    ctx = DispersionContext(2, m)
    assert frequency(ctx, (0, 1)) == pytest.approx(math.sqrt(1 + m), rel=1e-15)
    assert frequency(ctx, (0, 0)) == pytest.approx(math.sqrt(m), rel=1e-15)
    assert frequency(ctx, (1, -1)) == pytest.approx(math.sqrt(4 + m), rel=1e-15)


def test_m_derivative_examples():
    ctx = DispersionContext(2, 1.0)
    assert frequency_m_derivative(ctx, (0, 1), 1) == pytest.approx(1 / (2 * math.sqrt(2)), rel=1e-12)
    assert frequency_m_derivative(ctx, (0, 1), 2) == pytest.approx(-0.25 * 2 ** -1.5, rel=1e-12)
    assert upsilon(1) == -0.5
    with pytest.raises(ValueError):
        frequency_m_derivative(ctx, (0, 1), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 60), masses, st.integers(1, 3))
def test_m_derivative_matches_high_precision_fd(r2, m, j):
    ref = lam_m_derivative_mp(r2, m, j)
    # every r2 is a sum of four squares
    got = frequency_m_derivative(DispersionContext(4, m), integer_sphere(4, r2)[0], j)
    assert got == pytest.approx(ref, rel=1e-7)


def test_frequency_bounds_grid():
    r2 = np.arange(0, 2501)
    for m in np.linspace(1, 2, 100):
        ctx = DispersionContext(4, float(m))
        lam = np.sqrt(r2.astype(float) ** 2 + m)
        br2 = np.maximum(1.0, r2.astype(float))
        assert np.all(lam < br2 + m / (2 * br2))
        lower_ok = lam > br2
        lower_ok[0] |= (m == 1.0 and lam[0] == br2[0])
        assert np.all(lower_ok)
        assert frequency_bounds(ctx, (0, 0, 1, 0))[0] == 1.0


def test_gap_between_distinct_shells():
    r2 = np.arange(0, 2501, dtype=float)
    for m in np.linspace(1, 2, 100):
        lam = np.sqrt(r2 ** 2 + m)
        assert np.min(np.diff(lam)) >= 0.25
    lam = np.sqrt(r2[:400] ** 2 + 1.0)
    D = np.abs(lam[:, None] - lam[None, :]) + np.eye(400)
    assert D.min() >= 0.25


@pytest.mark.parametrize("pts", [[(0, 1)], [(0, 1), (1, -1)], [(0, 1), (1, -1), (2, 0)],
                                 [(0, 0), (1, 2), (3, 0), (2, 2)]])
@pytest.mark.parametrize("m", [1.0, 1.3, 2.0])
def test_derivative_determinant_three_routes(pts, m):
    ctx = DispersionContext(2, m)
    direct = derivative_determinant(ctx, pts)
    closed = derivative_determinant_closed_form(ctx, pts)
    ref = derivative_det_mp([norm2(p) for p in pts], m)
    assert direct == pytest.approx(ref, rel=1e-8)
    assert closed == pytest.approx(ref, rel=1e-10)


def test_derivative_determinant_single_and_errors():
    ctx = DispersionContext(2, 1.0)
    assert derivative_determinant(ctx, [(0, 1)]) == pytest.approx(1 / (2 * math.sqrt(2)))
    with pytest.raises(ValueError):
        derivative_determinant(ctx, [(0, 1), (1, 0)])


def test_derivative_determinant_lower_bound_shape():
    # |D| N^(3p^2 - p) stays bounded below on growing sets
    ctx = DispersionContext(2, 1.5)
    for p in (1, 2, 3):
        vals = []
        for N in (3, 6, 12):
            pts = [(N - i, 0) for i in range(p)]
            vals.append(abs(derivative_determinant_closed_form(ctx, pts)) * N ** (3 * p * p - p))
        assert min(vals) > 0


def test_divisor_validation(ex2d):
    with pytest.raises(ValueError):
        Divisor("D0", (0, 0))
    with pytest.raises(ValueError):
        Divisor("D1", (1, 0))
    with pytest.raises(ValueError):
        Divisor("D2plus", (1, 0), (1, 0))
    with pytest.raises(ValueError):
        Divisor("D9", (1, 0))
    with pytest.raises(ValueError):
        classify_divisor(ex2d, Divisor("D1", (1, 0, 0), (2, 0)))
    with pytest.raises(ValueError):
        classify_divisor(ex2d, Divisor("D1", (1, 0), (0, 1)))


def test_classify_examples(ex2d):
    assert classify_divisor(ex2d, Divisor("D0", (1, -1))) == "nonresonant"
    assert classify_divisor(ex2d, Divisor("D2minus", (0, 0), (1, 0), (0, -1))) == "trivial_resonance"
    assert classify_divisor(ex2d, Divisor("D1", (-1, 0), (1, 0))) == "trivial_resonance"
    assert classify_divisor(ex2d, Divisor("D1", (-1, 0), (2, 0))) == "nonresonant"


def test_evaluate_examples(ex2d):
    ctx = DispersionContext(2, 1.0)
    v = evaluate_divisor(ctx, ex2d, Divisor("D0", (1, -1)))
    assert v == pytest.approx(float(lam_mp(1, 1) - lam_mp(2, 1)), rel=1e-14)
    assert evaluate_divisor(ctx, ex2d, Divisor("D2minus", (0, 0), (2, 0), (2, 0))) == 0.0
    for a2 in range(0, 20):
        for b2 in range(a2 + 1, 20):
            assert abs(math.sqrt(a2 ** 2 + 1) - math.sqrt(b2 ** 2 + 1)) >= 0.25


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["D1", "D2plus", "D2minus"]), st.lists(st.integers(-3, 3), min_size=2, max_size=2),
       st.integers(0, 2), st.integers(0, 2))
def test_classification_invariant_under_relabelling(kind, k, ia, ib):
    # swapping the labels of the two excited points, with k permuted, keeps the class
    pts = [(0, 1), (1, -1)]
    legs = [(2, 0), (1, 0), (1, 1)]
    a, b = legs[ia], legs[ib]
    an1, an2 = analyze_set(pts), analyze_set(pts[::-1])
    d1 = Divisor(kind, tuple(k), a, b if kind != "D1" else None)
    d2 = Divisor(kind, tuple(k[::-1]), a, b if kind != "D1" else None)
    assert classify_divisor(an1, d1) == classify_divisor(an2, d2)
    assert formal_symbol_sum(an1, d1) == formal_symbol_sum(an2, d2)


def test_trivial_mask_agrees_with_scalar_route(ex2d):
    oracle = FormalOracle()
    ex = [norm2(p) for p in ex2d.points]
    ks = k_vectors(2, 3)
    legs = [(2, 0), (1, 0), (1, 1), (0, -1), (2, 1)]
    r2 = np.array([norm2(p) for p in legs])
    for kind in ("D1", "D2plus", "D2minus"):
        if kind == "D1":
            mask = trivial_mask(ex2d, kind, ks, r2)
        else:
            ia, ib = (g.ravel() for g in np.meshgrid(range(len(legs)), range(len(legs)), indexing="ij"))
            mask = trivial_mask(ex2d, kind, ks, r2[ia], r2[ib])
        for ki, k in enumerate(ks):
            for col in range(mask.shape[1]):
                if kind == "D1":
                    a, b = legs[col], None
                else:
                    a, b = legs[ia[col]], legs[ib[col]]
                div = Divisor(kind, tuple(int(x) for x in k), a, b)
                scalar = classify_divisor(ex2d, div) == "trivial_resonance"
                assert scalar == bool(mask[ki, col])
                assert scalar == oracle.is_trivial(ex, kind, k, norm2(a), norm2(b) if b else None)


def test_scan_mass_golden(ex2d):
    grid = np.linspace(1, 2, 2000)
    for kind in ("D0", "D1", "D2plus", "D2minus"):
        scan = scan_mass(ex2d, kind, 8, 10, 1e-6, 4, grid)
        assert scan.bad_fraction < 0.05


def test_scan_mass_monotone_in_kappa(ex2d):
    grid = np.linspace(1, 2, 200)
    scan = scan_mass(ex2d, "D1", 4, 6, 0.0, None, grid)
    fracs = [float(np.mean(scan.min_value < kappa)) for kappa in (1e-1, 1e-2, 1e-3, 1e-4, 0.0)]
    assert fracs == sorted(fracs, reverse=True)
    assert fracs[-1] == 0.0


def test_scan_mass_flags_and_threads(ex2d):
    grid = np.array([1.0, 4 / 3, 1.5, 5 / 3, 2.0])
    s1 = scan_mass(ex2d, "D2plus", 3, 5, 1e-3, None, grid)
    s4 = scan_mass(ex2d, "D2plus", 3, 5, 1e-3, None, grid, threads=4)
    assert list(s1.excluded) == [False, True, False, True, False]
    assert np.array_equal(s1.min_value, s4.min_value)
    assert s1.argmin == s4.argmin
    with pytest.raises(ValueError):
        scan_mass(ex2d, "D0", 3, 5, 1e-3, None, [])


def test_scan_mass_matches_brute_force(ex2d):
    m = 1.37
    scan = scan_mass(ex2d, "D2minus", 3, 4, 1e-3, 2.0, [m])
    ctx = DispersionContext(2, m)
    legs = [p for p in integer_ball(2, 16) if p not in ex2d.points]
    oracle = FormalOracle()
    ex = [norm2(p) for p in ex2d.points]
    best = math.inf
    for k in k_vectors(2, 3):
        w = max(sum(map(abs, k)), 1) ** 2.0
        for a in legs:
            for b in legs:
                if oracle.is_trivial(ex, "D2minus", k, norm2(a), norm2(b)):
                    continue
                v = evaluate_divisor(ctx, ex2d, Divisor("D2minus", tuple(int(x) for x in k), a, b))
                best = min(best, abs(v) * w)
    assert scan.min_value[0] == pytest.approx(best, rel=1e-12)


def test_melnikov_nu_zero_is_divisor_scan(ex2d):
    ctx = DispersionContext(2, 1.2)
    res = scan_melnikov(ctx, ex2d, (1.0, 1.0), 0.0, 4, 6, 3)
    c = class_radius(ex2d)
    r2, _ = melnikov_norms(ex2d, 6, c)
    omega = np.array([frequency(ctx, p) for p in ex2d.points])
    ref = brute_melnikov(omega, lambda r: math.sqrt(r * r + 1.2), [int(x) for x in r2], 4, 3)
    assert res.margin == pytest.approx(ref, rel=1e-12)


def test_melnikov_golden(ex2d):
    ctx = DispersionContext(2, 1.0)
    res = scan_melnikov(ctx, ex2d, (1.0, 1.0), 1e-3, 8, 10, 3)
    params = NormalFormParams(ctx, ex2d, (1.0, 1.0), 1e-3)
    r2, _ = melnikov_norms(ex2d, 10, class_radius(ex2d))
    ref = brute_melnikov(omega_vector(params), lambda r: float(external_lambda_norm2(params, r)),
                         [int(x) for x in r2], 8, 3)
    assert res.margin > 0
    assert res.margin == pytest.approx(ref, rel=1e-12)
    assert res.margin == pytest.approx(0.2362813661963914, rel=1e-9)


def test_melnikov_tail_bound(ex2d):
    ctx = DispersionContext(2, 1.0)
    rho, nu, tau, kc, r = (1.0, 1.0), 1e-3, 3, 4, 6
    base = scan_melnikov(ctx, ex2d, rho, nu, kc, r, tau)
    wide = scan_melnikov(ctx, ex2d, rho, nu, kc, 2 * r, tau)
    assert wide.margin <= base.margin
    # a mode beyond the old cutoff has Λ within eps above an integer, so any new
    # pair's difference is an old Λ (or 0) shifted by an integer, up to 2 eps
    params = NormalFormParams(ctx, ex2d, rho, nu)
    Om = omega_vector(params)
    eps = melnikov_tail_eps(ctx, rho, nu, r)
    r2, _ = melnikov_norms(ex2d, r, class_radius(ex2d))
    inner = external_lambda_norm2(params, r2)
    anchors = np.concatenate([[0.0], inner, -inner])
    floor = math.inf
    for k in k_vectors(2, kc, include_zero=False):
        t = float(np.dot(k, Om)) - anchors
        dist = np.abs(t - np.round(t)).min()
        floor = min(floor, (dist - 2 * eps) * sum(map(abs, k)) ** tau)
    assert wide.margin >= min(base.margin, floor)
