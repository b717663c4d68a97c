"""Implicit time stepping: each step minimises

    J_n(u) = h psi((u - u_n)/h) + phi(u) - <f_{n+1}, u>,

whose Euler-Lagrange equation is ``dpsi((u - u_n)/h) + dphi(u) = f_{n+1}``,
with ``f_{n+1}`` the average of the forcing over ``(t_n, t_{n+1})``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex import Composite, NonConvergence, ProxConfig, minimize_convex
from .energy import dphi, phi
from .exponent import ExponentField, validate_hypotheses
from .grid import Grid
from .modular import dpsi, luxemburg_norm, modular, psi_star, young_constant

log = logging.getLogger(__name__)

SPACE_KINDS = ("constant", "sine", "indicator")
TIME_KINDS = ("constant", "poly", "exp", "rsqrt")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True)
class ForcingSpec:
    """Separable forcing ``f(x, t) = amplitude * g(x) * s(t)``.

    ``g``: ``constant`` (1), ``sine`` (product of ``sin(mode pi x_k)`` over
    the axes, scaled to the domain) or ``indicator`` of the box
    ``[box[0], box[1]]`` in relative coordinates on every axis.
    ``s``: ``constant`` (1), ``poly`` (``sum coeffs[k] t**k``), ``exp``
    (``exp(-rate t)``) or ``rsqrt`` (``t**-1/2``; not time-regular, kept to
    exercise the regularity gate).  ``time_fn`` overrides ``s`` with an
    arbitrary callable; its averages are then taken by composite midpoint.
    """

    space: str = "constant"
    time: str = "constant"
    amplitude: float = 0.0
    mode: int = 1
    box: tuple[float, float] = (0.25, 0.75)
    coeffs: tuple[float, ...] = (1.0,)
    rate: float = 1.0
    time_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.space not in SPACE_KINDS:
            raise ValueError(f"unknown forcing space profile {self.space!r}")
        if self.time not in TIME_KINDS:
            raise ValueError(f"unknown forcing time profile {self.time!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0

    def space_values(self, grid: Grid) -> np.ndarray:
        x = grid.coords
        rel = (x - np.array(grid.lower)) / (np.array(grid.upper) - np.array(grid.lower))
        if self.space == "constant":
            g = np.ones(grid.n_cells)
        elif self.space == "sine":
            g = np.prod(np.sin(self.mode * np.pi * rel), axis=1)
        else:
            lo, hi = self.box
            g = np.all((rel >= lo) & (rel <= hi), axis=1).astype(float)
        return self.amplitude * g

    def s(self, t):
        t = np.asarray(t, dtype=float)
        if self.time_fn is not None:
            return np.vectorize(self.time_fn, otypes=[float])(t)
        if self.time == "constant":
            return np.ones_like(t)
        if self.time == "poly":
            return np.polynomial.polynomial.polyval(t, self.coeffs)
        if self.time == "exp":
            return np.exp(-self.rate * t)
        return 1.0 / np.sqrt(t)

    def ds(self, t):
        """Closed-form time derivative of ``s``; ``None`` for a custom callable."""
        t = np.asarray(t, dtype=float)
        if self.time_fn is not None:
            return None
        if self.time == "constant":
            return np.zeros_like(t)
        if self.time == "poly":
            return np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(self.coeffs))
        if self.time == "exp":
            return -self.rate * np.exp(-self.rate * t)
        return -0.5 * t**-1.5

    def s_average(self, a: float, b: float) -> float:
        """``(1/(b-a)) int_a^b s``: closed form when available, else 64-node midpoint."""
        if self.time_fn is not None:
            nodes = a + (np.arange(64) + 0.5) * (b - a) / 64
            return float(np.mean(self.s(nodes)))
        if self.time == "constant":
            return 1.0
        if self.time == "poly":
            anti = np.polynomial.polynomial.polyint(self.coeffs)
            pv = np.polynomial.polynomial.polyval
            return float((pv(b, anti) - pv(a, anti)) / (b - a))
        if self.time == "exp":
            k = self.rate
            if k == 0:
                return 1.0
            return float((np.exp(-k * a) - np.exp(-k * b)) / (k * (b - a)))
        return float(2.0 * (np.sqrt(b) - np.sqrt(a)) / (b - a))

    def time_regular(self, T: float) -> tuple[bool, str]:
        """Whether ``t * ds/dt`` stays bounded on ``(0, T]`` (checked in closed form)."""
        if self.is_zero or self.time in ("constant", "poly", "exp") and self.time_fn is None:
            return True, ""
        if self.time_fn is not None:
            return False, "custom time profile: t*df/dt not available in closed form"
        return False, "t*df/dt ~ t**-1/2 is unbounded as t -> 0"

    def modular_integral(self, grid: Grid, q: ExponentField, a: float, b: float) -> float:
        """``int_a^b int |f|**q dx dt`` (per-cell time integrals, closed form or Gauss-Legendre)."""
        g = np.abs(self.space_values(grid))
        if not np.any(g):
            return 0.0
        expo = q.values
        if self.time_fn is None and self.time == "constant":
            tint = np.full(expo.shape, b - a)
        elif self.time_fn is None and self.time == "exp":
            k = self.rate * expo
            with np.errstate(divide="ignore", invalid="ignore"):
                tint = np.where(k == 0, b - a, (np.exp(-k * a) - np.exp(-k * b)) / k)
        elif self.time_fn is None and self.time == "rsqrt":
            # int_a^b t**(-q/2) dt; divergent only when a = 0 and q >= 2
            e = 1.0 - expo / 2.0
            with np.errstate(divide="ignore", invalid="ignore"):
                power = (b**e - a**e) / np.where(e == 0, 1.0, e)
                tint = np.where(e == 0, np.log(b / a) if a > 0 else np.inf, power)
            if a == 0:
                tint = np.where(e > 0, tint, np.inf)
        else:
            pts = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
            sv = np.abs(self.s(pts))
            tint = 0.5 * (b - a) * (_GL_WEIGHTS[:, None] * sv[:, None] ** expo[None, :]).sum(axis=0)
        return float(np.dot(grid.weights, g**expo * tint))

    def t_dfdt_modular(self, grid: Grid, q: ExponentField, T: float) -> float:
        """``int_0^T int (2/q) |t df/dt|**q dx dt`` by 32-point Gauss-Legendre on ``[0, T]`` pieces."""
        ok, _ = self.time_regular(T)
        if not ok:
            return np.inf
        g = np.abs(self.space_values(grid))
        expo = q.values
        pieces = np.linspace(0.0, T, 65)
        total = np.zeros(grid.n_cells)
        for a, b in zip(pieces[:-1], pieces[1:]):
            pts = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
            tv = np.abs(pts * self.ds(pts))
            total += 0.5 * (b - a) * (_GL_WEIGHTS[:, None] * tv[:, None] ** expo[None, :]).sum(axis=0)
        return float(np.dot(grid.weights, 2.0 / expo * g**expo * total))

    def to_dict(self) -> dict:
        return {
            "space": self.space,
            "time": self.time,
            "amplitude": self.amplitude,
            "mode": self.mode,
            "box": list(self.box),
            "coeffs": list(self.coeffs),
            "rate": self.rate,
        }


def average_forcing(spec: ForcingSpec, n: int, h: float, grid: Grid) -> np.ndarray:
    """``f_n = (1/h) int_{t_{n-1}}^{t_n} f(., t) dt`` for ``n >= 1``."""
    if n < 1:
        raise ValueError("forcing averages are indexed from n = 1")
    return spec.space_values(grid) * spec.s_average((n - 1) * h, n * h)


@dataclass
class StepRecord:
    """One step ``u_n -> u_{n+1}``.

    ``eta = dpsi(velocity)`` and ``xi = forcing - eta`` add up to the
    forcing exactly; ``xi`` agrees with ``dphi(u)`` up to the solver
    residual.
    """

    n: int
    u: np.ndarray
    velocity: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    forcing: np.ndarray
    residual: float
    relative_residual: float
    iterations: int
    phi: float
    modular_v: float
    psi_star_eta: float


def step(u_n, f_next, h, p: ExponentField, m: ExponentField, cfg: ProxConfig = ProxConfig(), n: int = 0) -> StepRecord:
    """Advance one step by minimising ``J_n`` from the warm start ``u_n``."""
    if not h > 0:
        raise ValueError("time step must be positive")
    u_n = np.asarray(u_n, dtype=float)
    f_next = np.asarray(f_next, dtype=float)
    obj = Composite(p, m, float(h), u_n, f_next, cfg.eps_for(m))
    try:
        out = minimize_convex(obj, u_n, cfg)
    except NonConvergence as exc:
        exc.step = n
        exc.args = (f"step {n}: {exc}",)
        raise
    u = out.minimizer
    v = out.displacement / h
    eta = dpsi(v, p)
    xi = f_next - eta
    return StepRecord(
        n=n,
        u=u,
        velocity=v,
        eta=eta,
        xi=xi,
        forcing=f_next,
        residual=out.residual,
        relative_residual=out.relative_residual,
        iterations=out.iterations,
        phi=phi(u, m),
        modular_v=modular(v, p),
        psi_star_eta=psi_star(eta, p),
    )


@dataclass
class RunReport:
    grid: Grid
    p: ExponentField
    m: ExponentField
    forcing: ForcingSpec
    T: float
    N: int
    u0: np.ndarray
    cfg: ProxConfig
    steps: list[StepRecord]
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def eps_reg(self) -> float:
        return self.cfg.eps_for(self.m)

    @property
    def complete(self) -> bool:
        return len(self.steps) == self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.steps) + 1) * self.h

    @property
    def states(self) -> np.ndarray:
        """``u_0, ..., u_N`` stacked, shape ``(N + 1, n_cells)``."""
        return np.vstack([self.u0] + [s.u for s in self.steps])

    @property
    def phi0(self) -> float:
        return phi(self.u0, self.m)

    @property
    def young_C(self) -> float:
        """``C_{1/2}`` for the exponent ``p``; the constant of the energy estimates."""
        return young_constant(0.5, self.p.p_minus, self.p.p_plus)

    @property
    def max_residual(self) -> float:
        return max((s.relative_residual for s in self.steps), default=0.0)

    def _locate(self, t: float) -> int:
        if not (0.0 <= t <= self.T * (1 + 1e-14)):
            raise ValueError("t outside [0, T]")
        return min(max(int(np.ceil(t / self.h - 1e-12)) - 1, 0), self.N - 1)

    def u_linear(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolant of ``u_0, ..., u_N``."""
        n = self._locate(t)
        prev = self.u0 if n == 0 else self.steps[n - 1].u
        lam = (t - n * self.h) / self.h
        return (1.0 - lam) * prev + lam * self.steps[n].u

    def u_const(self, t: float) -> np.ndarray:
        """Piecewise-constant interpolant: ``u_{n+1}`` on ``(t_n, t_{n+1}]``, ``u_0`` at ``t = 0``."""
        if t == 0.0:
            return self.u0.copy()
        return self.steps[self._locate(t)].u.copy()

    def f_const(self, t: float) -> np.ndarray:
        return self.steps[self._locate(t)].forcing.copy()

    def dphi_at(self, n: int) -> np.ndarray:
        """``dphi(u_n)`` with the run's flux regularisation."""
        u = self.u0 if n == 0 else self.steps[n - 1].u
        return dphi(u, self.m, self.eps_reg)

    def energy_bounds(self) -> dict:
        """Finite values behind the uniform estimates est1-est5."""
        from .energy import element_exponent, grad
        from .modular import weighted_luxemburg

        grid = self.grid
        h = self.h
        el_w = grid.elements.weights
        el_m = element_exponent(self.m)
        states = self.states
        x_norms = [weighted_luxemburg(grad(u, grid).magnitude, el_m, el_w) for u in states]
        st_w = np.tile(grid.weights * h, len(self.steps))
        st_p = np.tile(self.p.values, len(self.steps))
        st_q = np.tile(self.p.dual.values, len(self.steps))
        vel = np.concatenate([s.velocity for s in self.steps]) if self.steps else np.zeros(0)
        eta = np.concatenate([s.eta for s in self.steps]) if self.steps else np.zeros(0)
        xi = np.concatenate([s.xi for s in self.steps]) if self.steps else np.zeros(0)
        return {
            "est1_dissipation": float(sum(h * s.modular_v for s in self.steps)),
            "est1_sup_phi": float(max([self.phi0] + [s.phi for s in self.steps])),
            "est2_sup_X_norm": float(max(x_norms)),
            "est3_velocity_norm": weighted_luxemburg(vel, st_p, st_w) if vel.size else 0.0,
            "est4_dpsi_dual_norm": weighted_luxemburg(eta, st_q, st_w) if eta.size else 0.0,
            "est5_dphi_dual_norm": weighted_luxemburg(xi, st_q, st_w) if xi.size else 0.0,
        }


def prepare_initial(u0, grid: Grid, tol: float = 1e-12) -> np.ndarray:
    """Check the boundary condition on ``u0`` and zero the boundary layer."""
    u0 = grid.check(u0).copy()
    bad = float(np.max(np.abs(u0[grid.boundary])))
    if bad > tol:
        raise ValueError(f"u0 violates the Dirichlet condition (max boundary value {bad:.3e})")
    u0[grid.boundary] = 0.0
    return u0


def run(
    u0,
    spec: ForcingSpec,
    T: float,
    N: int,
    p: ExponentField,
    m: ExponentField,
    cfg: ProxConfig = ProxConfig(),
    check_hypotheses: bool = True,
    config: Optional[dict] = None,
) -> RunReport:
    """March ``N`` uniform steps of size ``h = T/N`` from ``u0``.

    On non-convergence the raised ``NonConvergence`` carries the partial
    report as ``exc.report``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if not T > 0:
        raise ValueError("T must be positive")
    grid = p.grid
    if check_hypotheses:
        rep = validate_hypotheses(p, m)
        if not rep.ok:
            raise ValueError("; ".join(rep.messages))
    u = prepare_initial(u0, grid)
    h = T / N
    report = RunReport(grid, p, m, spec, float(T), int(N), u, cfg, [], dict(config or {}))
    for n in range(N):
        f_next = average_forcing(spec, n + 1, h, grid)
        try:
            rec = step(u, f_next, h, p, m, cfg, n=n)
        except NonConvergence as exc:
            exc.report = report
            raise
        report.steps.append(rec)
        u = rec.u
    log.debug("run finished: N=%d, max relative residual %.2e", N, report.max_residual)
    return report


def jensen_forcing_bound(spec: ForcingSpec, grid: Grid, p: ExponentField, T: float, N: int):
    """``sum_n h int |f_n|**p'  <=  int_0^T int |f|**p'``, both sides returned."""
    from .modular import Bound

    q = p.dual
    h = T / N
    lhs = sum(h * modular(average_forcing(spec, n, h, grid), q) for n in range(1, N + 1))
    rhs = sum(spec.modular_integral(grid, q, (n - 1) * h, n * h) for n in range(1, N + 1))
    return Bound(lhs, rhs, lhs <= rhs + 1e-12 * max(1.0, abs(rhs)))


def dual_norm(w, p: ExponentField) -> float:
    """Norm in the dual space ``L^{p'}``."""
    return luxemburg_norm(w, p.dual)
