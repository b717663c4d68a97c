"""Modified resolvent, Yosida approximation and Moreau-Yosida value.

Everything here reduces to minimising a composite convex functional

    v -> scale * psi((v - shift) / scale) + phi(v) - <linear, v>

over grid functions vanishing on the boundary layer.  Its gradient is
``dpsi((v - shift) / scale) + dphi(v) - linear``; the solver stops when the
p'(x)-Luxemburg norm of that gradient, relative to ``1 + ||linear|| +
||dphi(v)||``, drops below the tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .energy import dphi, hessian_functional, phi
from .exponent import ExponentField
from .modular import dpsi, luxemburg_norm, pairing, psi, weighted_luxemburg

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProxConfig:
    tolerance: float = 1e-9
    max_iter: int = 10_000
    armijo: float = 1e-4
    backtrack: float = 0.5
    eps_reg: Optional[float] = None
    method: str = "newton"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0 < self.armijo < 1 and 0 < self.backtrack < 1):
            raise ValueError("line-search factors must lie in (0, 1)")
        if self.eps_reg is not None and self.eps_reg < 0:
            raise ValueError("eps_reg must be nonnegative")
        if self.method not in ("bb", "newton"):
            raise ValueError(f"unknown method {self.method!r}")

    def eps_for(self, m: ExponentField) -> float:
        """Flux regularisation: the configured value, else 0 for m- >= 2 and 1e-10 below."""
        if self.eps_reg is not None:
            return self.eps_reg
        return 0.0 if m.p_minus >= 2 else 1e-10

    def with_(self, **kw) -> "ProxConfig":
        return replace(self, **kw)


@dataclass
class MinimizeOutcome:
    minimizer: np.ndarray
    value: float
    residual: float
    relative_residual: float
    iterations: int
    converged: bool
    displacement: Optional[np.ndarray] = None


class NonConvergence(RuntimeError):
    def __init__(self, iterations, residual, outcome=None, step=None):
        self.iterations = iterations
        self.residual = residual
        self.outcome = outcome
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"no convergence{where} after {iterations} iterations (relative residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class Composite:
    """``scale * psi((v - shift)/scale) + phi(v) - <linear, v>``.

    Methods optionally take the displacement ``d = v - shift`` directly, so
    that the psi term does not lose digits to ``(v - shift)/scale`` when
    ``scale`` is tiny.
    """

    p: ExponentField
    m: ExponentField
    scale: float
    shift: np.ndarray
    linear: Optional[np.ndarray] = None
    eps_reg: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def grid(self):
        return self.p.grid

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @property
    def boundary(self) -> np.ndarray:
        return self.grid.boundary

    @property
    def interior(self) -> np.ndarray:
        return self.grid.interior

    @property
    def anchor(self) -> np.ndarray:
        return self.shift

    def residual_norm(self, g) -> float:
        return luxemburg_norm(g, self.p.dual)

    def _z(self, v, d):
        return ((v - self.shift) if d is None else d) / self.scale

    def value(self, v, d=None) -> float:
        z = self._z(v, d)
        out = self.scale * psi(z, self.p) + phi(v, self.m)
        if self.linear is not None:
            out -= pairing(self.linear, v, self.grid)
        return out

    def gradient(self, v, d=None) -> np.ndarray:
        z = self._z(v, d)
        g = dpsi(z, self.p) + dphi(v, self.m, self.eps_reg)
        if self.linear is not None:
            g = g - self.linear
        g[self.grid.boundary] = 0.0
        return g

    def data_norm(self, v) -> float:
        out = luxemburg_norm(dphi(v, self.m, self.eps_reg), self.p.dual)
        if self.linear is not None:
            lin = np.array(self.linear, dtype=float)
            lin[self.grid.boundary] = 0.0
            out += luxemburg_norm(lin, self.p.dual)
        return out

    def hessian(self, v, d=None) -> sp.csr_matrix:
        """Nodal second derivative, with a tiny floor where it degenerates."""
        z = self._z(v, d)
        pv = self.p.values
        floor = 1e-12 * (1.0 + float(np.abs(z).max()))
        diag = self.grid.weights * (pv - 1.0) * (z * z + floor * floor) ** ((pv - 2.0) / 2.0) / self.scale
        return hessian_functional(v, self.m, self.eps_reg) + sp.diags(diag)


class _ResidualMeter:
    """Relative dual residual; the data norm is refreshed only near convergence."""

    def __init__(self, obj: Composite, v):
        self.obj = obj
        self.data = obj.data_norm(v)

    def __call__(self, g, v, tol) -> tuple[float, float]:
        res = self.obj.residual_norm(g)
        rel = res / (1.0 + self.data)
        if rel <= 4.0 * tol:
            self.data = self.obj.data_norm(v)
            rel = res / (1.0 + self.data)
        return res, rel


def minimize_convex(obj, start, cfg: ProxConfig = ProxConfig(), raise_on_failure: bool = True) -> MinimizeOutcome:
    """Minimise a composite objective from a warm start.

    Gradient descent with Barzilai-Borwein step proposals and Armijo
    backtracking (``cfg.method == "bb"``), or damped Newton steps with the
    same line search (``"newton"``).  ``obj`` is a ``Composite`` or anything
    with the same interface (``SpaceTimeComposite``).  The iterate is kept
    as a displacement from ``obj.anchor``.  The objective never increases
    beyond round-off.  Raises ``NonConvergence`` when the relative residual
    is still above ``cfg.tolerance`` after ``cfg.max_iter`` iterations.
    """
    w = obj.weights
    interior = obj.interior
    anchor = np.asarray(obj.anchor, dtype=float)
    v = np.array(start, dtype=float)
    if v.shape != w.shape or not np.all(np.isfinite(v)):
        raise ValueError("start must be a finite grid function")
    v[obj.boundary] = 0.0
    dv = v - anchor
    value = obj.value(v, dv)
    g = obj.gradient(v, dv)
    alpha = 1.0 / (1.0 + float(np.abs(g).max()))
    meter = _ResidualMeter(obj, v)
    res = rel = np.inf
    it = 0
    for it in range(cfg.max_iter + 1):
        res, rel = meter(g, v, cfg.tolerance)
        if rel <= cfg.tolerance or it == cfg.max_iter:
            break
        if cfg.method == "newton":
            d = _newton_direction(obj, v, dv, g, interior)
            t = 1.0
        else:
            d = -g
            t = alpha
        slope = float(np.dot(w, g * d))
        if not slope < 0:
            d, t, slope = -g, alpha, -float(np.dot(w, g * g))
        allowance = 1e-13 * (abs(value) + 1.0)
        while True:
            trial_d = dv + t * d
            trial = anchor + trial_d
            trial_value = obj.value(trial, trial_d)
            if trial_value <= value + cfg.armijo * t * slope + allowance:
                break
            t *= cfg.backtrack
            if t < 1e-30:
                break
        if t < 1e-30:
            log.debug("line search stalled at iteration %d", it)
            break
        g_new = obj.gradient(trial, trial_d)
        s = t * d
        y = g_new - g
        sy = float(np.dot(w, s * y))
        ss = float(np.dot(w, s * s))
        if sy > 0 and ss > 0:
            alpha = min(max(ss / sy, 1e-20), 1e20)
        else:
            alpha = min(2.0 * t, 1e20)
        v, dv, g, value = trial, trial_d, g_new, trial_value
    out = MinimizeOutcome(v, value, res, rel, it, bool(rel <= cfg.tolerance), dv)
    if not out.converged and raise_on_failure:
        raise NonConvergence(it, rel, out)
    return out


def _newton_direction(obj, v, dv, g, interior) -> np.ndarray:
    h = obj.hessian(v, dv).tocsr()[interior][:, interior]
    rhs = -(obj.weights * g)[interior]
    d = np.zeros_like(v)
    try:
        d[interior] = spsolve(h.tocsc(), rhs)
    except Exception:  # singular Hessian: fall back to the gradient
        return -g
    if not np.all(np.isfinite(d)):
        return -g
    return d


class SpaceTimeComposite:
    """Sum over time slices of ``h * Composite_n``, minimised jointly.

    The variable is the concatenation of all slices; quadrature weights are
    ``h * weights`` per slice, so the dual residual is the p'(x)-Luxemburg
    norm over the space-time cylinder.
    """

    def __init__(self, parts: list[Composite], h: float):
        self.parts = parts
        self.h = float(h)
        self.n = parts[0].grid.n_cells
        self.weights = np.concatenate([self.h * c.grid.weights for c in parts])
        self.boundary = np.concatenate([c.grid.boundary for c in parts])
        self.interior = np.flatnonzero(~self.boundary)
        self._dual = np.concatenate([c.p.dual.values for c in parts])

    @property
    def anchor(self) -> np.ndarray:
        return np.concatenate([c.anchor for c in self.parts])

    def _split(self, v):
        if v is None:
            return [None] * len(self.parts)
        return [v[k * self.n : (k + 1) * self.n] for k in range(len(self.parts))]

    def value(self, v, d=None) -> float:
        return self.h * sum(c.value(x, y) for c, x, y in zip(self.parts, self._split(v), self._split(d)))

    def gradient(self, v, d=None) -> np.ndarray:
        return np.concatenate([c.gradient(x, y) for c, x, y in zip(self.parts, self._split(v), self._split(d))])

    def residual_norm(self, g) -> float:
        return weighted_luxemburg(g, self._dual, self.weights)

    def data_norm(self, v) -> float:
        d = [dphi(x, c.m, c.eps_reg) for c, x in zip(self.parts, self._split(v))]
        out = weighted_luxemburg(np.concatenate(d), self._dual, self.weights)
        lin = [c.linear for c in self.parts if c.linear is not None]
        if lin:
            out += weighted_luxemburg(np.concatenate(lin), self._dual, self.weights)
        return out

    def hessian(self, v, d=None) -> sp.csr_matrix:
        blocks = [self.h * c.hessian(x, y) for c, x, y in zip(self.parts, self._split(v), self._split(d))]
        return sp.block_diag(blocks).tocsr()


# --- modified resolvent family ---------------------------------------------


def resolvent_objective(u, lam, p, m, cfg: ProxConfig) -> Composite:
    return Composite(p, m, float(lam), np.asarray(u, dtype=float), None, cfg.eps_for(m))


def resolvent_solve(u, lam, p, m, cfg: ProxConfig = ProxConfig(), start=None) -> MinimizeOutcome:
    """Minimise ``lam * psi((v - u)/lam) + phi(v)``; the minimiser is ``J_lam u``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    obj = resolvent_objective(u, lam, p, m, cfg)
    return minimize_convex(obj, u if start is None else start, cfg)


def resolvent(u, lam, p, m, cfg: ProxConfig = ProxConfig(), start=None) -> np.ndarray:
    """Modified resolvent: solves ``Z((J u - u)/lam) + dphi(J u) = 0``."""
    return resolvent_solve(u, lam, p, m, cfg, start).minimizer


def yosida(u, lam, p, m, cfg: ProxConfig = ProxConfig(), j=None) -> np.ndarray:
    """Modified Yosida approximation ``Z((u - J u)/lam)``."""
    if j is None:
        j = resolvent(u, lam, p, m, cfg)
    return dpsi((np.asarray(u) - j) / lam, p)


def moreau_yosida_value(u, lam, p, m, cfg: ProxConfig = ProxConfig(), j=None) -> float:
    """``lam * psi((J u - u)/lam) + phi(J u)``, the minimum value of the resolvent problem."""
    if j is None:
        j = resolvent(u, lam, p, m, cfg)
    return lam * psi((j - np.asarray(u)) / lam, p) + phi(j, m)
