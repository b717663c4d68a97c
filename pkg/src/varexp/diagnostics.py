"""Inequality ladder for completed runs.

Every check is an ``InequalityMargin`` ``lhs <= rhs``.  Inequalities that
follow from the discrete equations pick up an explicit slack computed
from the per-step solver residual ``r_n = dphi(u_{n+1}) - xi_n``: wherever
the derivation tests the scheme with some ``w`` the slack is
``|<r_n, w>|``.  Pure convexity/monotonicity statements get round-off
slack only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .convex import Composite, ProxConfig, SpaceTimeComposite, minimize_convex, moreau_yosida_value, resolvent_solve, yosida
from .energy import dphi, phi
from .exponent import ExponentField
from .modular import luxemburg_norm, modular, pairing, psi, psi_star
from .stepper import RunReport, jensen_forcing_bound

RTOL = 1e-9


@dataclass
class InequalityMargin:
    name: str
    index: int
    lhs: float
    rhs: float
    tolerance: float = RTOL
    hard: bool = True
    skipped: Optional[str] = None

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        if self.skipped is not None:
            return True
        if not np.isfinite(self.rhs):
            return bool(self.lhs <= self.rhs)
        return bool(self.margin >= -self.tolerance * max(1.0, abs(self.rhs)))

    def as_row(self) -> list:
        return [self.name, self.index, self.lhs, self.rhs, self.margin, self.holds, self.tolerance, "hard" if self.hard else "info"]


def margin(name, index, lhs, rhs, slack=0.0, scale=None, hard=True) -> InequalityMargin:
    """Margin whose tolerance absorbs ``slack`` plus ``RTOL * scale`` (absolute)."""
    lhs, rhs = float(lhs), float(rhs)
    denom = max(1.0, abs(rhs))
    scale = max(abs(lhs), abs(rhs)) if scale is None else scale
    return InequalityMargin(name, int(index), lhs, rhs, RTOL * max(1.0, scale) / denom + abs(slack) / denom, hard)


def skipped(name, reason) -> InequalityMargin:
    return InequalityMargin(name, -1, float("nan"), float("nan"), hard=False, skipped=reason)


# --- helpers over a run -----------------------------------------------------


def _state(run: RunReport, n: int) -> np.ndarray:
    return run.u0 if n == 0 else run.steps[n - 1].u


def _phi_values(run: RunReport) -> np.ndarray:
    return np.array([run.phi0] + [s.phi for s in run.steps])


def step_residuals(run: RunReport) -> list[np.ndarray]:
    """``dphi(u_{n+1}) - xi_n`` with the exact gradient; zero on the boundary layer."""
    out = []
    for rec in run.steps:
        r = dphi(rec.u, run.m, 0.0) - rec.xi
        r[run.grid.boundary] = 0.0
        out.append(r)
    return out


def _increments(run: RunReport) -> list[np.ndarray]:
    return [rec.u - _state(run, rec.n) for rec in run.steps]


# --- first energy estimate --------------------------------------------------


def first_energy_report(run: RunReport) -> list[InequalityMargin]:
    """Per-step energy inequality, its cumulative sum, Jensen and the interpolant gap."""
    grid, p, h = run.grid, run.p, run.h
    C = run.young_C
    phis = _phi_values(run)
    res = step_residuals(run)
    out = []
    forcing_mod = [modular(rec.forcing, p.dual) for rec in run.steps]
    total_force = C * h * sum(forcing_mod)
    diss = 0.0
    slack_sum = 0.0
    for rec, r, fm in zip(run.steps, res, forcing_mod):
        n = rec.n
        slack = abs(pairing(r, rec.velocity, grid))
        lhs = 0.5 * rec.modular_v + (phis[n + 1] - phis[n]) / h
        scale = max(rec.modular_v, phis[n] / h, phis[n + 1] / h, C * fm)
        out.append(margin("ei01", n, lhs, C * fm, slack, scale))
        diss += 0.5 * h * rec.modular_v
        slack_sum += h * slack
        lhs0 = diss + phis[n + 1]
        rhs0 = phis[0] + total_force
        out.append(margin("est0", n, lhs0, rhs0, slack_sum, max(lhs0, rhs0)))
    jb = jensen_forcing_bound(run.forcing, grid, p, run.T, run.N)
    out.append(margin("jensen_forcing", run.N, jb.lhs, jb.rhs, 0.0, max(jb.lhs, jb.rhs, 1e-300) * 1e3))
    if h <= 1.0 and run.steps:
        gap = max(modular(h * rec.velocity, p) for rec in run.steps)
        factor = 2.0 * h ** (p.p_minus - 1.0)
        rhs = factor * (phis[0] + C * jb.rhs)
        out.append(margin("interpolant_gap", run.N, gap, rhs, factor * slack_sum))
    return out


# --- chain rule -------------------------------------------------------------


def telescoped_gap(run: RunReport, upto: Optional[int] = None) -> float:
    """``|phi(u_m) - phi(u_0) - sum_n <xi_n, u_{n+1} - u_n>|`` for ``m = upto`` (default N)."""
    upto = len(run.steps) if upto is None else upto
    incs = _increments(run)
    total = sum(pairing(run.steps[n].xi, incs[n], run.grid) for n in range(upto))
    return abs(_phi_values(run)[upto] - run.phi0 - total)


def chain_rule_report(run: RunReport) -> list[InequalityMargin]:
    """Two convexity inequalities per step plus the telescoped identity gap."""
    grid = run.grid
    phis = _phi_values(run)
    out = []
    prev_grad = dphi(run.u0, run.m, 0.0)
    for rec, du in zip(run.steps, _increments(run)):
        n = rec.n
        cur_grad = dphi(rec.u, run.m, 0.0)
        upper = pairing(cur_grad, du, grid)
        lower = pairing(prev_grad, du, grid)
        dphi_n = phis[n + 1] - phis[n]
        scale = max(phis[n], phis[n + 1], abs(upper), abs(lower))
        out.append(margin("chain_upper", n, dphi_n, upper, 0.0, scale))
        out.append(margin("chain_lower", n, lower, dphi_n, 0.0, scale))
        prev_grad = cur_grad
    out.append(InequalityMargin("telescoped_gap", run.N, telescoped_gap(run), np.inf, 0.0, hard=False))
    return out


# --- second energy estimate -------------------------------------------------


def _second_ingredients(run: RunReport):
    grid = run.grid
    res = step_residuals(run)
    incs = _increments(run)
    steps = run.steps
    dex_lhs, dex_rhs, dex_slack = {}, {}, {}
    for n in range(1, len(steps)):
        du = incs[n]
        dex_lhs[n] = pairing(steps[n].eta - steps[n - 1].eta, du, grid)
        dex_rhs[n] = pairing(steps[n].forcing - steps[n - 1].forcing, du, grid)
        dex_slack[n] = abs(pairing(res[n] - res[n - 1], du, grid))
    return dex_lhs, dex_rhs, dex_slack


def ee2_sides(run: RunReport, m: int, ingredients=None) -> tuple[float, float, float]:
    """``((m-1) h psi*(eta_m), right side, slack)`` of the weighted second estimate."""
    h = run.h
    dex_lhs, dex_rhs, dex_slack = ingredients or _second_ingredients(run)
    pstar = [s.psi_star_eta for s in run.steps]
    lhs = (m - 1) * h * pstar[m]
    rhs = sum(h * pstar[n - 1] for n in range(2, m + 1)) + sum((n - 1) * dex_rhs[n] for n in range(2, m + 1))
    slack = sum((n - 1) * dex_slack[n] for n in range(2, m + 1))
    return lhs, rhs, slack


def second_energy_report(run: RunReport) -> list[InequalityMargin]:
    """Difference inequality, conjugate convexity and the weighted sum, per step."""
    if run.N < 4 or len(run.steps) < 4:
        return [skipped("ee2", "needs N >= 4")]
    h = run.h
    ing = _second_ingredients(run)
    dex_lhs, dex_rhs, dex_slack = ing
    steps = run.steps
    out = []
    for n in range(1, len(steps)):
        out.append(margin("dexdu", n, dex_lhs[n], dex_rhs[n], dex_slack[n], max(abs(dex_lhs[n]), abs(dex_rhs[n]))))
        star = h * (steps[n].psi_star_eta - steps[n - 1].psi_star_eta)
        scale = h * max(steps[n].psi_star_eta, steps[n - 1].psi_star_eta, abs(dex_lhs[n]) / h)
        out.append(margin("star_eq", n, star, dex_lhs[n], 0.0, scale))
    for m in range(3, len(steps)):
        lhs, rhs, slack = ee2_sides(run, m, ing)
        out.append(margin("ee2", m, lhs, rhs, slack))
    return out


def conjugate_convexity(a, b, p: ExponentField) -> InequalityMargin:
    """``<dpsi(a) - dpsi(b), a> >= psi*(dpsi(a)) - psi*(dpsi(b))`` for two fields."""
    from .modular import dpsi

    ea, eb = dpsi(a, p), dpsi(b, p)
    lhs = psi_star(ea, p) - psi_star(eb, p)
    rhs = pairing(ea - eb, a, p.grid)
    return margin("star_eq", 0, lhs, rhs, 0.0, max(abs(lhs), abs(rhs), psi_star(ea, p), psi_star(eb, p)))


# --- time regularisation ----------------------------------------------------


def regularization_report(run: RunReport, deltas: Sequence[float]) -> list[InequalityMargin]:
    """Shape of ``sup_{t >= delta} psi*(eta)``: ``delta * S(delta)`` bounded, ``S`` nonincreasing.

    ``S(delta)`` is the max of ``psi*(eta_n)`` over steps with ``t_n >= delta``.
    Besides the run constant ``max delta * S(delta)``, each ``delta * S(delta)`` is
    checked against the bound implied by the weighted second estimate,
    ``max_{n: t_n >= delta} n/(n-1) * (ee2 right side at n)``.
    """
    ok, reason = run.forcing.time_regular(run.T)
    if not ok:
        return [skipped("regularization", reason)]
    h, grid, p = run.h, run.grid, run.p
    steps = run.steps
    deltas = sorted(float(d) for d in deltas)
    pstar = np.array([s.psi_star_eta for s in steps])
    t = np.arange(len(steps)) * h
    ing = _second_ingredients(run) if len(steps) >= 4 else None
    S = []
    for d in deltas:
        sel = t >= d - 1e-12 * run.T
        S.append(float(pstar[sel].max()) if np.any(sel) else 0.0)
    dS = [d * s for d, s in zip(deltas, S)]
    c_run = max(dS) if dS else 0.0
    out = []
    for k, (d, val) in enumerate(zip(deltas, dS)):
        out.append(margin(f"delta_S[{d:.6g}]", k, val, c_run))
        if ing is None:
            continue
        first = int(np.ceil(d / h - 1e-9))
        bounds = []
        for n in range(max(first, 3), len(steps)):
            lhs, rhs, slack = ee2_sides(run, n, ing)
            bounds.append((n / (n - 1) * rhs, n / (n - 1) * slack))
        if bounds and first >= 3:
            c_ee2, sl = max(bounds)
            out.append(margin(f"delta_S_ee2[{d:.6g}]", k, val, c_ee2, sl))
        else:
            out.append(skipped(f"delta_S_ee2[{d:.6g}]", "delta < 3h"))
    for k in range(1, len(S)):
        out.append(InequalityMargin("S_nonincreasing", k, S[k], S[k - 1], tolerance=0.0))
    # weighted forcing-velocity sum against 2 int |t df/dt|^p'/p' + sum h psi(v)
    if ing is not None:
        tdf = run.forcing.t_dfdt_modular(grid, p.dual, run.T)
        vel_psi = sum(h * psi(s.velocity, p) for s in steps)
        dex_rhs = ing[1]
        acc = 0.0
        for m in range(2, len(steps)):
            acc += (m - 1) * dex_rhs[m]
            out.append(margin("tf_bound", m, acc, tdf + vel_psi, 0.0, max(abs(acc), tdf + vel_psi)))
    tf_sup = max((luxemburg_norm((n + 1) * h * s.forcing, p.dual) for n, s in enumerate(steps)), default=0.0)
    out.append(InequalityMargin("sup_t_f_dual", run.N, tf_sup, np.inf, hard=False))
    run.diagnostics["regularization"] = {"deltas": deltas, "S": S, "delta_S": dS, "C_run": c_run}
    return out


# --- Moreau-Yosida ----------------------------------------------------------


def moreau_yosida_report(
    p: ExponentField,
    m: ExponentField,
    samples: Iterable,
    lambdas: Sequence[float],
    cfg: ProxConfig = ProxConfig(tolerance=1e-11),
    h: float = 0.1,
) -> list[InequalityMargin]:
    """Sandwich, Yosida bound, lambda-monotonicity and time-commutation on samples.

    ``samples`` are grid functions vanishing on the boundary layer; they are
    also stacked as the time slices of one space-time sample with step ``h``
    for the commutation check.
    """
    samples = [np.asarray(u, dtype=float) for u in samples]
    lambdas = sorted((float(l) for l in lambdas), reverse=True)
    grid = p.grid
    out = []
    for i, u in enumerate(samples):
        phi_u = phi(u, m)
        eta = dphi(u, m, 0.0)
        bound = psi_star(eta, p)
        prev = None
        for k, lam in enumerate(lambdas):
            sol = resolvent_solve(u, lam, p, m, cfg)
            j = sol.minimizer
            val = moreau_yosida_value(u, lam, p, m, cfg, j=j)
            phi_j = phi(j, m)
            idx = i * len(lambdas) + k
            out.append(margin("my_lower", idx, phi_j, val, 0.0, phi_u))
            out.append(margin("my_upper", idx, val, phi_u, 0.0, phi_u))
            a_lam = yosida(u, lam, p, m, j=j)
            r = a_lam - dphi(j, m, 0.0)
            r[grid.boundary] = 0.0
            slack = abs(pairing(r, (u - j) / lam, grid))
            out.append(margin("alam_bdd", idx, psi_star(a_lam, p), bound, slack, bound))
            if prev is not None:
                out.append(margin("my_lambda_monotone", idx, prev, val, 0.0, phi_u))
            prev = val
    if samples:
        for k, lam in enumerate(lambdas):
            out.append(commutation_margin(samples, lam, p, m, cfg, h, k))
    return out


def commutation_margin(samples, lam, p, m, cfg: ProxConfig, h: float, index: int = 0) -> InequalityMargin:
    """``|Phi_lam(U) - sum_n h phi_lam(U_n)|`` for the space-time stack ``U`` of the samples."""
    per_slice = sum(h * moreau_yosida_value(u, lam, p, m, cfg) for u in samples)
    parts = [Composite(p, m, float(lam), u, None, cfg.eps_for(m)) for u in samples]
    joint = SpaceTimeComposite(parts, h)
    sol = minimize_convex(joint, np.concatenate(samples), cfg)
    gap = abs(sol.value - per_slice)
    scale = max(abs(per_slice), 1.0)
    return InequalityMargin("my_commutation", index, gap, 0.0, tolerance=1e3 * cfg.tolerance * scale)


# --- summaries and serialisation -------------------------------------------


REPORTS = ("first", "chain", "second", "regularization")


def full_report(run: RunReport, deltas: Optional[Sequence[float]] = None, which: Iterable[str] = REPORTS) -> list[InequalityMargin]:
    which = set(which)
    deltas = deltas if deltas is not None else (run.T / 8, run.T / 4, run.T / 2)
    out = []
    if "first" in which:
        out += first_energy_report(run)
    if "chain" in which:
        out += chain_rule_report(run)
    if "second" in which:
        out += second_energy_report(run)
    if "regularization" in which:
        out += regularization_report(run, deltas)
    return out


def summarize(margins: Sequence[InequalityMargin]) -> dict:
    """Counts and the worst relative margin per inequality name."""
    by_name: dict = {}
    for mg in margins:
        if mg.skipped is not None:
            entry = by_name.setdefault(mg.name, {"count": 0, "violations": 0, "skipped": mg.skipped})
            continue
        entry = by_name.setdefault(mg.name, {"count": 0, "violations": 0, "worst_margin": np.inf, "worst_index": None, "hard": mg.hard})
        entry["count"] += 1
        if mg.hard and not mg.holds:
            entry["violations"] += 1
        rel = mg.margin / max(1.0, abs(mg.rhs)) if np.isfinite(mg.rhs) else mg.margin
        if np.isfinite(mg.rhs) and rel < entry["worst_margin"]:
            entry["worst_margin"] = float(rel)
            entry["worst_index"] = mg.index
    hard = [mg for mg in margins if mg.hard and mg.skipped is None]
    return {
        "total": len(margins),
        "hard": len(hard),
        "violations": sum(1 for mg in hard if not mg.holds),
        "all_hold": all(mg.holds for mg in hard),
        "by_name": {k: _jsonable(v) for k, v in sorted(by_name.items())},
    }


def _jsonable(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


CSV_HEADER = ["name", "index", "lhs", "rhs", "margin", "holds", "tolerance", "kind"]


def fmt(x) -> str:
    """Fixed 17-significant-digit formatting for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def margins_csv(margins: Sequence[InequalityMargin]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for mg in margins:
        w.writerow([fmt(x) for x in mg.as_row()])
    return buf.getvalue()


def summary_json(margins: Sequence[InequalityMargin]) -> str:
    return json.dumps(summarize(margins), indent=2, sort_keys=True)
