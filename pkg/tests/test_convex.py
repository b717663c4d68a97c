import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import spsolve

from varexp import exponent as ex
from varexp.convex import (
    Composite, NonConvergence, ProxConfig, SpaceTimeComposite, minimize_convex, moreau_yosida_value,
    resolvent, resolvent_solve, yosida,
)
from varexp.energy import dphi, laplacian_matrix, phi
from varexp.grid import Grid
from varexp.modular import dpsi, luxemburg_norm, pairing, psi_star

from conftest import interior_field, sine_mode

TIGHT = ProxConfig(tolerance=1e-12)


def dense_oracle(grid):
    """Eigendecomposition of the symmetric form of the interior Laplacian."""
    idx = grid.interior
    w = grid.weights[idx]
    L = laplacian_matrix(grid).toarray()
    s = np.sqrt(w)
    sym = (s[:, None] * L) / s[None, :]
    sym = 0.5 * (sym + sym.T)
    lam, Q = np.linalg.eigh(sym)
    return idx, s, lam, Q


def apply_fn(grid, u, fn):
    idx, s, lam, Q = dense_oracle(grid)
    y = Q.T @ (s * u[idx])
    out = np.zeros_like(u)
    out[idx] = (Q @ (fn(lam) * y)) / s
    return out


def test_quadratic_minimizer_matches_sparse_solve():
    g = Grid.unit(32)
    p = m = ex.constant(g, 2.0)
    rng = np.random.default_rng(0)
    shift = interior_field(g, rng)
    f = interior_field(g, rng)
    h = 0.01
    obj = Composite(p, m, h, shift, f)
    out = minimize_convex(obj, np.zeros(g.n_cells), TIGHT)
    idx = g.interior
    A = sp.identity(idx.size) + h * laplacian_matrix(g)
    exact = spsolve(A.tocsc(), shift[idx] + h * f[idx])
    assert out.converged
    assert np.allclose(out.minimizer[idx], exact, rtol=1e-10, atol=1e-10 * np.abs(exact).max())


@pytest.mark.parametrize("method", ["newton", "bb"])
def test_zero_data_gives_zero(method):
    g = Grid.unit(16)
    obj = Composite(ex.constant(g, 2.5), ex.constant(g, 1.7), 0.1, np.zeros(16), None, 1e-10)
    out = minimize_convex(obj, np.zeros(16), ProxConfig(method=method))
    assert np.all(out.minimizer == 0) and out.value == 0


@pytest.mark.parametrize("method", ["newton", "bb"])
def test_descent_and_agreement(method):
    g = Grid.unit(32)
    p, m = ex.sine(g, 2.5, 0.4), ex.affine(g, 2.0, 0.5)
    rng = np.random.default_rng(1)
    obj = Composite(p, m, 0.01, sine_mode(g), interior_field(g, rng))
    start = interior_field(g, rng)
    out = minimize_convex(obj, start, ProxConfig(tolerance=1e-10, method=method))
    assert out.converged and out.value <= obj.value(start)
    other = minimize_convex(obj, np.zeros(g.n_cells), ProxConfig(tolerance=1e-10, method=method))
    assert np.abs(out.minimizer - other.minimizer).max() <= 10 * 1e-10 * (1 + np.abs(out.minimizer).max())


def test_nonconvergence_is_raised_not_hidden():
    g = Grid.unit(32)
    obj = Composite(ex.constant(g, 2.0), ex.constant(g, 2.0), 0.01, sine_mode(g), None)
    with pytest.raises(NonConvergence) as info:
        minimize_convex(obj, np.zeros(g.n_cells), ProxConfig(max_iter=1, method="bb"))
    assert info.value.iterations == 1 and info.value.residual > 0
    out = minimize_convex(obj, np.zeros(g.n_cells), ProxConfig(max_iter=1, method="bb"), raise_on_failure=False)
    assert not out.converged


def test_prox_config_validation():
    for kw in ({"tolerance": 0}, {"armijo": 1.0}, {"backtrack": 0.0}, {"method": "lbfgs"}, {"max_iter": 0}):
        with pytest.raises(ValueError):
            ProxConfig(**kw)
    g = Grid.unit(5)
    assert ProxConfig().eps_for(ex.constant(g, 2.0)) == 0.0
    assert ProxConfig().eps_for(ex.constant(g, 1.5)) == 1e-10
    assert ProxConfig(eps_reg=1e-6).eps_for(ex.constant(g, 1.5)) == 1e-6


def test_resolvent_of_zero():
    g = Grid.unit(16)
    p, m = ex.sine(g, 2.5, 0.4), ex.affine(g, 1.6, 0.3)
    assert np.all(resolvent(np.zeros(16), 0.1, p, m) == 0)
    assert np.all(yosida(np.zeros(16), 0.1, p, m) == 0)
    assert moreau_yosida_value(np.zeros(16), 0.1, p, m) == 0


@pytest.mark.parametrize("lam", [1.0, 0.1, 0.01])
def test_quadratic_resolvent_yosida_envelope_dense_oracle(lam):
    g = Grid.unit(16)
    two = ex.constant(g, 2.0)
    u = interior_field(g, np.random.default_rng(2))
    j = resolvent(u, lam, two, two, TIGHT)
    j_exact = apply_fn(g, u, lambda e: 1.0 / (1.0 + lam * e))
    a_exact = apply_fn(g, u, lambda e: e / (1.0 + lam * e))
    env_exact = 0.5 * pairing(u, a_exact, g)
    assert np.allclose(j, j_exact, rtol=1e-9, atol=1e-9 * np.abs(j_exact).max())
    a = yosida(u, lam, two, two, j=j)
    assert np.allclose(a, a_exact, rtol=1e-9, atol=1e-9 * np.abs(a_exact).max())
    assert moreau_yosida_value(u, lam, two, two, j=j) == pytest.approx(env_exact, rel=1e-9)


def test_resolvent_converges_to_identity():
    g = Grid.unit(32)
    p, m = ex.sine(g, 2.5, 0.4), ex.affine(g, 2.0, 0.5)
    u = sine_mode(g) + 0.3 * sine_mode(g, 3)
    dist = [luxemburg_norm(resolvent(u, lam, p, m) - u, p) for lam in (1.0, 0.1, 0.01)]
    assert dist[0] > dist[1] > dist[2]


@pytest.mark.parametrize("pm", [(2.5, 0.4, 2.0, 0.5), (1.6, 0.3, 2.8, -0.6)])
def test_resolvent_residual_and_bounds(pm):
    g = Grid.unit(32)
    p, m = ex.sine(g, pm[0], pm[1]), ex.sine(g, pm[2], pm[3])
    u = sine_mode(g)
    for lam in (1.0, 0.1, 0.01):
        out = resolvent_solve(u, lam, p, m, ProxConfig(tolerance=1e-10))
        j = out.minimizer
        assert out.relative_residual <= 1e-10
        r = dpsi((j - u) / lam, p) + dphi(j, m)
        r[g.boundary] = 0
        assert luxemburg_norm(r, p.dual) <= 1e-8 * (1 + luxemburg_norm(dphi(j, m), p.dual))
        assert phi(j, m) <= phi(u, m)
        val = moreau_yosida_value(u, lam, p, m, j=j)
        assert phi(j, m) <= val <= phi(u, m)
        a = yosida(u, lam, p, m, j=j)
        assert psi_star(a, p) <= psi_star(dphi(u, m), p) * (1 + 1e-9)


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.sampled_from([1.0, 0.1, 0.01]))
def test_yosida_monotone(seed, lam):
    g = Grid.unit(16)
    p, m = ex.sine(g, 2.2, 0.5), ex.affine(g, 1.8, 0.6)
    rng = np.random.default_rng(seed)
    u, v = interior_field(g, rng), interior_field(g, rng)
    au, av = yosida(u, lam, p, m, TIGHT), yosida(v, lam, p, m, TIGHT)
    val = pairing(au - av, u - v, g)
    scale = abs(pairing(au, u, g)) + abs(pairing(av, v, g))
    assert val >= -1e-10 * max(scale, 1.0)


def test_envelope_monotone_in_lambda_and_converges():
    g = Grid.unit(64)
    p, m = ex.sine(g, 2.5, 0.4), ex.affine(g, 2.0, 0.5)
    u = sine_mode(g)
    vals = [moreau_yosida_value(u, lam, p, m, TIGHT) for lam in (1.0, 0.1, 0.01, 1e-3, 1e-4)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - phi(u, m)) <= 0.01 * phi(u, m)


def test_space_time_composite_equals_slice_sum():
    g = Grid.unit(24)
    p, m = ex.sine(g, 2.5, 0.4), ex.affine(g, 2.0, 0.5)
    slices = [sine_mode(g), 0.5 * sine_mode(g, 2), -0.3 * sine_mode(g, 3)]
    h, lam = 0.2, 0.01
    joint = SpaceTimeComposite([Composite(p, m, lam, u) for u in slices], h)
    out = minimize_convex(joint, np.concatenate(slices), TIGHT)
    per_slice = sum(h * moreau_yosida_value(u, lam, p, m, TIGHT) for u in slices)
    assert out.value == pytest.approx(per_slice, rel=1e-10)
