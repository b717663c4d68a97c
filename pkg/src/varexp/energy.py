"""The m(x)-Dirichlet energy and its gradient, the discrete -div(|grad u|^(m-2) grad u).

The gradient lives on elements (faces in 1D, right triangles in 2D, see
``Grid.elements``).  The element exponent is the mean of the exponent at
the element's vertices.  ``dphi`` is built from the exact adjoint of the
gradient, so it is the true derivative of ``phi`` for test functions that
vanish on the boundary layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exponent import ExponentField
from .grid import Grid


@dataclass(frozen=True)
class GradientField:
    components: np.ndarray  # (dim, n_elements)
    weights: np.ndarray
    exponents: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        # hypot avoids underflow of the squares for tiny gradients
        return np.hypot.reduce(self.components, axis=0)


def element_exponent(m: ExponentField) -> np.ndarray:
    return m.grid.elements.average @ m.values


def grad(u, grid: Grid, m: ExponentField | None = None) -> GradientField:
    el = grid.elements
    u = np.asarray(u, dtype=float)
    comps = np.stack([d @ u for d in el.diff])
    expo = element_exponent(m) if m is not None else np.full(el.n_elements, np.nan)
    return GradientField(comps, el.weights, expo)


def phi(u, m: ExponentField) -> float:
    """``int |grad u|**m / m`` over the elements."""
    g = grad(u, m.grid, m)
    return float(np.dot(g.weights, g.magnitude**g.exponents / g.exponents))


def _flux_weights(g: GradientField, eps_reg: float) -> np.ndarray:
    s = g.magnitude
    expo = g.exponents
    if eps_reg > 0:
        return (s * s + eps_reg * eps_reg) ** ((expo - 2.0) / 2.0)
    rho = np.zeros_like(s)
    nz = s > 0
    rho[nz] = s[nz] ** (expo[nz] - 2.0)
    # zero flux on flat elements (minimal-norm selection when m < 2)
    return rho


def dphi_functional(u, m: ExponentField, eps_reg: float = 0.0) -> np.ndarray:
    """Nodal derivative of ``phi``: the vector ``d phi / d u_i`` (no mass scaling)."""
    grid = m.grid
    g = grad(u, grid, m)
    rho = _flux_weights(g, eps_reg) * g.weights
    out = np.zeros(grid.n_cells)
    for d, comp in zip(grid.elements.diff, g.components):
        out += d.T @ (rho * comp)
    return out


def dphi(u, m: ExponentField, eps_reg: float = 0.0) -> np.ndarray:
    """``-Delta_m u`` as a grid function (zero on the boundary layer).

    Defined by ``<dphi(u), v> = d/dt phi(u + t v)`` at ``t = 0`` for every
    ``v`` vanishing on the boundary, with ``<a, b> = sum(weights * a * b)``.
    ``eps_reg > 0`` replaces ``|s|**(m-2)`` by ``(s**2 + eps_reg**2)**((m-2)/2)``.
    """
    grid = m.grid
    out = dphi_functional(u, m, eps_reg) / grid.weights
    out[grid.boundary] = 0.0
    return out


def hessian_functional(u, m: ExponentField, eps_reg: float = 0.0) -> sp.csr_matrix:
    """Second derivative of ``phi`` (nodal, unscaled); used by the Newton option."""
    grid = m.grid
    g = grad(u, grid, m)
    s = g.magnitude
    expo = g.exponents
    floor = max(eps_reg, 1e-12 * (1.0 + float(s.max(initial=0.0))))
    s2 = s * s + floor * floor
    rho = s2 ** ((expo - 2.0) / 2.0) * g.weights
    rho2 = (expo - 2.0) * s2 ** ((expo - 4.0) / 2.0) * g.weights
    diff = grid.elements.diff
    h = None
    for a, da in enumerate(diff):
        for b, db in enumerate(diff):
            coef = rho2 * g.components[a] * g.components[b]
            if a == b:
                coef = coef + rho
            term = da.T @ sp.diags(coef) @ db
            h = term if h is None else h + term
    return h.tocsr()


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """``dphi`` for ``m = 2`` restricted to interior cells, as a matrix."""
    el = grid.elements
    k = sum(d.T @ sp.diags(el.weights) @ d for d in el.diff)
    idx = grid.interior
    k = k.tocsr()[idx][:, idx]
    return sp.diags(1.0 / grid.weights[idx]) @ k


def poincare_constant(grid: Grid, m: ExponentField, samples: int = 64, seed: int = 0) -> float:
    """Largest observed ratio ``||u||_m / || |grad u| ||_m`` over smooth random samples.

    Samples are the first four sine modes and random combinations of them.
    """
    from .modular import luxemburg_norm, weighted_luxemburg

    rng = np.random.default_rng(seed)
    weights = grid.elements.weights
    expo = element_exponent(m)
    x = grid.coords
    modes = []
    for k in range(1, 5):
        mode = np.ones(grid.n_cells)
        for ax in range(grid.dim):
            span = grid.upper[ax] - grid.lower[ax]
            mode *= np.sin(k * np.pi * (x[:, ax] - grid.lower[ax]) / span)
        modes.append(mode)
    modes = np.array(modes)
    best = 0.0
    for i in range(samples):
        u = modes[0].copy() if i == 0 else rng.normal(size=len(modes)) @ modes
        u[grid.boundary] = 0.0
        gm = grad(u, grid).magnitude
        best = max(best, luxemburg_norm(u, m) / weighted_luxemburg(gm, expo, weights))
    return best
