"""Modulars, Luxemburg norms and the power functionals on a grid.

Grid functions are plain float arrays with one value per cell; the
exponent field carries the grid and therefore the quadrature weights.
Integrals use the midpoint rule on cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exponent import ExponentField


@dataclass(frozen=True)
class Bound:
    """Both sides of an inequality ``lhs <= rhs``."""

    lhs: float
    rhs: float
    holds: bool


def pairing(a, b, grid) -> float:
    """Duality pairing: the integral of ``a * b``."""
    return float(np.dot(grid.weights, np.asarray(a) * np.asarray(b)))


def modular(w, p: ExponentField) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.dot(p.grid.weights, np.abs(w) ** p.values))


def luxemburg_norm(w, p: ExponentField) -> float:
    """``inf {lam > 0 : modular(w / lam) <= 1}``."""
    return weighted_luxemburg(w, p.values, p.grid.weights)


def weighted_luxemburg(w, expo, weights) -> float:
    """Luxemburg norm for an arbitrary quadrature (cells, elements, space-time).

    The root of ``lam -> modular(w / lam) - 1`` is bracketed by inverting
    the sandwich ``sigma-(|w|) <= modular(w) <= sigma+(|w|)`` and refined
    with Brent's method.
    """
    w = np.asarray(w, dtype=float)
    expo = np.asarray(expo, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("Luxemburg norm of a non-finite function")
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return 0.0
    # factoring out the sup norm keeps the powers in range
    z = np.abs(w) / scale
    mod = float(np.dot(weights, z**expo))
    if mod == 0.0:
        return 0.0
    roots = (mod ** (1.0 / expo.min()), mod ** (1.0 / expo.max()))
    lo, hi = min(roots) * (1 - 1e-12), max(roots) * (1 + 1e-12)

    def excess(lam):
        return float(np.dot(weights, (z / lam) ** expo)) - 1.0

    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo == 0.0:
        return lo * scale
    if f_hi == 0.0:
        return hi * scale
    if not (f_lo > 0.0 > f_hi):
        raise RuntimeError(f"Luxemburg root not bracketed on [{lo}, {hi}]")
    lam = brentq(excess, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=200)
    return lam * scale


def sigma_bounds(s: float, p: ExponentField) -> tuple[float, float]:
    """``(min(s**p-, s**p+), max(s**p-, s**p+))``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    a, b = s ** p.p_minus, s ** p.p_plus
    return min(a, b), max(a, b)


def holder_pairing_bound(f, g, p: ExponentField, rtol: float = 1e-12) -> Bound:
    """``int |f g| <= 2 ||f||_p ||g||_p'``."""
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    lhs = float(np.dot(p.grid.weights, np.abs(f * g)))
    rhs = 2.0 * luxemburg_norm(f, p) * luxemburg_norm(g, p.conjugate())
    return Bound(lhs, rhs, lhs <= rhs + rtol * rhs)


def young_constant(eps: float, p_minus: float, p_plus: float) -> float:
    """Constant C_eps with ``ab <= eps a**p(x) + C_eps b**p'(x)`` for p in [p-, p+].

    Scaling ``ab = (delta a)(b / delta)`` with ``delta <= 1`` and using the
    constant-exponent inequality pointwise gives
    ``C_eps = 1 / ((p+)' * delta**((p-)'))`` for any ``delta`` with
    ``delta**p- / p- <= eps``; the largest such ``delta`` in (0, 1] is used.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    delta = min((eps * p_minus) ** (1.0 / p_minus), 1.0)
    dual_plus = p_plus / (p_plus - 1.0)
    dual_minus = p_minus / (p_minus - 1.0)
    return 1.0 / (dual_plus * delta**dual_minus)


def young_pointwise(a: float, b: float, px: float, eps: float, p_minus=None, p_plus=None):
    """Right side ``eps a**px + C_eps b**px'`` of the variable-exponent Young inequality.

    ``p_minus``/``p_plus`` are the bounds of the governing field and
    default to ``px``.  Returns ``(bound, C_eps)``.
    """
    p_minus = px if p_minus is None else p_minus
    p_plus = px if p_plus is None else p_plus
    if not (p_minus <= px <= p_plus):
        raise ValueError("px outside [p-, p+]")
    c = young_constant(eps, p_minus, p_plus)
    return eps * a**px + c * b ** (px / (px - 1.0)), c


def psi(u, p: ExponentField) -> float:
    """``int |u|**p / p``."""
    u = np.asarray(u, dtype=float)
    return float(np.dot(p.grid.weights, np.abs(u) ** p.values / p.values))


def dpsi(u, p: ExponentField) -> np.ndarray:
    """``|u|**(p-2) u``, the derivative of ``psi``; zero where ``u = 0``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** (p.values - 1.0)


def dpsi_inverse(eta, p: ExponentField) -> np.ndarray:
    """Inverse of ``dpsi``, i.e. the derivative of ``psi_star``."""
    return dpsi(eta, p.conjugate())


def psi_star(eta, p: ExponentField) -> float:
    """Convex conjugate of ``psi``: ``int |eta|**p' / p'``."""
    return psi(eta, p.conjugate())


def dual_norm_bound_check(v, p: ExponentField) -> Bound:
    """``|| |v|**(p-2) v ||_p' <= (||v||_p + 1)**(p+ - 1)``."""
    lhs = luxemburg_norm(dpsi(v, p), p.conjugate())
    rhs = (luxemburg_norm(v, p) + 1.0) ** (p.p_plus - 1.0)
    return Bound(lhs, rhs, lhs <= rhs * (1 + 1e-12))
