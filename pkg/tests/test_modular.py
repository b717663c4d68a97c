import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from varexp import exponent as ex
from varexp.grid import Grid
from varexp.modular import (
    dpsi, dpsi_inverse, dual_norm_bound_check, holder_pairing_bound, luxemburg_norm, modular,
    pairing, psi, psi_star, sigma_bounds, young_constant, young_pointwise,
)

from conftest import random_field

G16 = Grid.unit(16)
G64 = Grid.unit(64)


def bisection_norm(w, p, iters=200):
    """Independent oracle: bisection on lambda -> modular(w / lambda)."""
    if not np.any(w):
        return 0.0
    lo, hi = 0.0, 1.0
    while modular(w / hi, p) > 1:
        hi *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if modular(w / mid, p) > 1:
            lo = mid
        else:
            hi = mid
    return hi


fields16 = arrays(np.float64, 16, elements=st.floats(-50, 50))
expos16 = arrays(np.float64, 16, elements=st.floats(1.1, 6.0))


def test_modular_examples():
    g = G64
    assert modular(np.ones(g.n_cells), ex.sine(g, 2.5, 0.4)) == pytest.approx(1.0, rel=1e-14)
    assert modular(np.zeros(g.n_cells), ex.constant(g, 3.0)) == 0.0
    assert modular(np.full(g.n_cells, 2.0), ex.constant(g, 3.0)) == pytest.approx(8.0, rel=1e-14)


def test_norm_examples():
    g = G64
    assert luxemburg_norm(np.full(g.n_cells, 3.0), ex.constant(g, 2.0)) == pytest.approx(3.0, rel=1e-13)
    assert luxemburg_norm(np.zeros(g.n_cells), ex.constant(g, 2.0)) == 0.0
    # exponent 2 on one half, 4 on the other: modular(1) is exactly 1
    g2 = Grid((64,), (-0.5,), (0.5,))
    p = ex.ExponentField(g2, np.where(g2.coords[:, 0] < 0, 2.0, 4.0))
    assert g2.weights[g2.coords[:, 0] < 0].sum() == pytest.approx(0.5, rel=1e-14)
    assert modular(np.ones(g2.n_cells), p) == pytest.approx(1.0, rel=1e-14)
    assert luxemburg_norm(np.ones(g2.n_cells), p) == pytest.approx(1.0, rel=1e-13)


def test_constant_exponent_is_classical():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(G64.n_cells)
    for q in (1.5, 2.0, 3.7):
        expected = np.dot(G64.weights, np.abs(w) ** q) ** (1 / q)
        assert luxemburg_norm(w, ex.constant(G64, q)) == pytest.approx(expected, rel=1e-13)


def test_norm_against_bisection_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = random_field(G64, rng, 1.2, 5.0)
        w = rng.standard_normal(G64.n_cells) * rng.uniform(0.01, 100)
        lam = luxemburg_norm(w, p)
        assert abs(modular(w / lam, p) - 1.0) <= 1e-10
        assert lam == pytest.approx(bisection_norm(w, p), rel=1e-14, abs=0)


@given(fields16, expos16, st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6))
def test_norm_homogeneous(w, q, c):
    p = ex.ExponentField(G16, q)
    assert luxemburg_norm(c * w, p) == pytest.approx(abs(c) * luxemburg_norm(w, p), rel=1e-10, abs=1e-300)


@given(fields16, expos16)
def test_sandwich_and_unit_ball(w, q):
    p = ex.ExponentField(G16, q)
    n = luxemburg_norm(w, p)
    lo, hi = sigma_bounds(n, p)
    rho = modular(w, p)
    assert lo <= rho * (1 + 1e-10) + 1e-300
    assert rho <= hi * (1 + 1e-10) + 1e-300
    assert (n <= 1 + 1e-12) == (rho <= 1 + 1e-10) or abs(n - 1) < 1e-9


@pytest.mark.parametrize("s, pm, pp, expected", [(1.0, 2, 3, (1, 1)), (2.0, 2, 3, (4, 8)), (0.5, 2, 3, (1 / 8, 1 / 4))])
def test_sigma_examples(s, pm, pp, expected):
    p = ex.step(G16, pm, pp)
    assert sigma_bounds(s, p) == pytest.approx(expected, rel=1e-15)


@given(st.floats(0, 10), st.floats(0, 10))
def test_sigma_monotone(s, t):
    p = ex.step(G16, 1.5, 3.0)
    a, b = sorted((s, t))
    assert sigma_bounds(a, p)[0] <= sigma_bounds(b, p)[0]
    assert sigma_bounds(a, p)[1] <= sigma_bounds(b, p)[1]
    lo, hi = sigma_bounds(s, p)
    assert lo <= hi


@given(fields16, fields16, expos16)
def test_holder(f, g, q):
    rep = holder_pairing_bound(f, g, ex.ExponentField(G16, q))
    assert rep.holds


def test_holder_cauchy_schwarz_case():
    f = np.sin(np.arange(64.0))
    rep = holder_pairing_bound(f, f, ex.constant(G64, 2.0))
    assert rep.rhs == pytest.approx(2 * rep.lhs, rel=1e-12)


def test_young_exhaustive_sweep():
    vals = 2.0 ** np.arange(-10, 11)
    for px in (1.5, 2.0, 3.0):
        for eps in (0.5, 0.1):
            for a in vals:
                for b in vals:
                    bound, _ = young_pointwise(a, b, px, eps, 1.5, 3.0)
                    assert a * b <= bound * (1 + 1e-12)


def test_young_trivial_sides():
    assert young_pointwise(0.0, 3.0, 2.0, 0.1)[0] >= 0
    assert young_pointwise(3.0, 0.0, 2.0, 0.1)[0] == pytest.approx(0.1 * 9)


def test_young_constant_depends_only_on_bounds():
    c1 = young_constant(0.5, 1.5, 3.0)
    assert young_pointwise(1.0, 1.0, 2.0, 0.5, 1.5, 3.0)[1] == c1
    assert young_pointwise(1.0, 1.0, 1.7, 0.5, 1.5, 3.0)[1] == c1
    with pytest.raises(ValueError):
        young_pointwise(1.0, 1.0, 3.5, 0.5, 1.5, 3.0)


def test_psi_examples():
    assert psi(np.zeros(64), ex.constant(G64, 3.0)) == 0.0
    assert psi(np.ones(64), ex.constant(G64, 2.0)) == pytest.approx(0.5, rel=1e-14)


@given(fields16, expos16)
def test_psi_between_modular_bounds(w, q):
    p = ex.ExponentField(G16, q)
    rho = modular(w, p)
    assert rho / p.p_plus * (1 - 1e-12) <= psi(w, p) <= rho / p.p_minus * (1 + 1e-12)


@given(fields16, fields16, expos16)
def test_dpsi_odd_and_monotone(u, v, q):
    p = ex.ExponentField(G16, q)
    assert np.array_equal(dpsi(-u, p), -dpsi(u, p))
    assert pairing(dpsi(u, p) - dpsi(v, p), u - v, G16) >= -1e-12 * (1 + abs(pairing(dpsi(u, p), u, G16)) + abs(pairing(dpsi(v, p), v, G16)))


def test_dpsi_identity_for_two_and_zero():
    u = np.linspace(-3, 3, 64)
    assert np.array_equal(dpsi(u, ex.constant(G64, 2.0)), u)
    assert np.all(dpsi(np.zeros(64), ex.constant(G64, 1.4)) == 0)


@given(fields16, expos16)
def test_dpsi_inverse_roundtrip(u, q):
    p = ex.ExponentField(G16, q)
    assert np.allclose(dpsi_inverse(dpsi(u, p), p), u, rtol=1e-10, atol=1e-12)


# central differences need |u| well above the step: |u|**p is not C^3 at 0 for p < 3
away_from_zero = arrays(np.float64, 16, elements=st.floats(0.01, 50).flatmap(lambda x: st.sampled_from([x, -x])))


@given(away_from_zero, expos16)
def test_dpsi_is_gradient_of_psi(u, q):
    p = ex.ExponentField(G16, q)
    rng = np.random.default_rng(0)
    d = rng.standard_normal(16)
    t = 1e-7
    fd = (psi(u + t * d, p) - psi(u - t * d, p)) / (2 * t)
    assert fd == pytest.approx(pairing(dpsi(u, p), d, G16), rel=1e-5, abs=1e-6 * (1 + np.abs(u).max() ** q.max()))


@given(fields16, expos16)
def test_fenchel_young_equality(u, q):
    p = ex.ExponentField(G16, q)
    eta = dpsi(u, p)
    lhs = psi(u, p) + psi_star(eta, p)
    rhs = pairing(eta, u, G16)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


def test_dual_norm_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_field(G64, rng)
        assert dual_norm_bound_check(rng.standard_normal(64), p).holds
