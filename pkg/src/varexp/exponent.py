"""Variable exponents sampled at cell centres."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .grid import Grid


@dataclass(frozen=True, eq=False)
class ExponentField:
    """A variable exponent with values in (1, inf) on every cell.

    ``profile`` is the closed-form function the values were sampled from,
    if any.  It lets refinement studies resample the same exponent on a
    finer grid.
    """

    grid: Grid
    values: np.ndarray
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size == 1:
            values = np.full(self.grid.n_cells, values[0])
        if values.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} exponent values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("exponent must be finite")
        if np.any(values <= 1.0):
            raise ValueError("exponent must exceed 1 on every cell")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def p_minus(self) -> float:
        return float(self.values.min())

    @property
    def p_plus(self) -> float:
        return float(self.values.max())

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def conjugate(self) -> "ExponentField":
        return self.dual

    @cached_property
    def dual(self) -> "ExponentField":
        return conjugate(self)

    def on(self, grid: Grid) -> "ExponentField":
        """Resample on another grid; needs a profile."""
        if self.profile is None:
            raise ValueError("exponent has no closed-form profile to resample")
        return ExponentField(grid, grid.sample(self.profile), self.profile)

    @classmethod
    def from_profile(cls, grid: Grid, profile) -> "ExponentField":
        return cls(grid, grid.sample(profile), profile)


def constant(grid: Grid, value: float) -> ExponentField:
    return ExponentField.from_profile(grid, lambda x: np.full(x.shape[0], float(value)))


def affine(grid: Grid, base: float, slope: float) -> ExponentField:
    """``base + slope * x1``."""
    return ExponentField.from_profile(grid, lambda x: base + slope * x[:, 0])


def sine(grid: Grid, base: float, amplitude: float) -> ExponentField:
    """``base + amplitude * sin(pi * x1)``."""
    return ExponentField.from_profile(grid, lambda x: base + amplitude * np.sin(np.pi * x[:, 0]))


def step(grid: Grid, left: float, right: float, split: Optional[float] = None) -> ExponentField:
    """``left`` for ``x1 < split``, ``right`` otherwise; split defaults to the midpoint."""
    if split is None:
        split = 0.5 * (grid.lower[0] + grid.upper[0])
    return ExponentField.from_profile(grid, lambda x: np.where(x[:, 0] < split, left, right))


def conjugate(p: ExponentField) -> ExponentField:
    """Pointwise dual exponent p / (p - 1)."""
    profile = None
    if p.profile is not None:
        inner = p.profile
        profile = lambda x: _dual(np.asarray(inner(x), dtype=float))  # noqa: E731
    return ExponentField(p.grid, _dual(p.values), profile)


def _dual(q: np.ndarray) -> np.ndarray:
    return q / (q - 1.0)


# --- log-Hoelder condition --------------------------------------------------


@dataclass(frozen=True)
class LogHolderReport:
    holds: bool
    required_A: float
    worst_pair: Optional[tuple[int, int]]


def log_holder_check(p: ExponentField, A: float, chunk: int = 512) -> LogHolderReport:
    """Exhaustive scan of ``|p(x) - p(y)| * log(e + 1/|x - y|)`` over cell pairs."""
    grid = p.grid
    if grid.n_cells < 2:
        raise ValueError("log-Hoelder check needs at least two cells")
    x = grid.coords
    vals = p.values
    best = 0.0
    pair = None
    for start in range(0, grid.n_cells, chunk):
        stop = min(start + chunk, grid.n_cells)
        dist = np.sqrt(((x[start:stop, None, :] - x[None, :, :]) ** 2).sum(-1))
        dp = np.abs(vals[start:stop, None] - vals[None, :])
        inv = np.divide(1.0, dist, out=np.zeros_like(dist), where=dist > 0)
        score = np.where(dist > 0, dp * np.log(np.e + inv), 0.0)
        k = int(np.argmax(score))
        if score.flat[k] > best:
            best = float(score.flat[k])
            i, j = divmod(k, grid.n_cells)
            pair = (start + i, j)
    return LogHolderReport(best <= A, best, pair)


def log_holder_refinement(p: ExponentField, levels: int = 2) -> list[float]:
    """Smallest admissible constant on the grid and on ``levels`` halvings of it."""
    out = [log_holder_check(p, math.inf).required_A]
    grid = p.grid
    for _ in range(levels):
        grid = grid.refine(2)
        out.append(log_holder_check(p.on(grid), math.inf).required_A)
    return out


# --- Sobolev exponent and standing hypotheses -------------------------------


def sobolev_critical(m: ExponentField, dim: int) -> np.ndarray:
    """``dim * m / (dim - m)_+`` per cell, ``inf`` where ``m >= dim``."""
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    gap = dim - m.values
    out = np.full(m.values.shape, np.inf)
    ok = gap > 0
    out[ok] = dim * m.values[ok] / gap[ok]
    return out


# relative growth of the log-Hoelder constant over two halvings tolerated as "stable"
LOG_HOLDER_GROWTH = 0.1


@dataclass
class HypothesisReport:
    p_minus: float
    p_plus: float
    m_minus: float
    m_plus: float
    h1_bounds: bool
    log_holder_A: list[float]
    log_holder_stable: Optional[bool]
    h2_margin: float
    h2: bool
    messages: list[str]

    @property
    def ok(self) -> bool:
        return self.h1_bounds and self.h2

    def to_dict(self) -> dict:
        return {
            "p_minus": self.p_minus,
            "p_plus": self.p_plus,
            "m_minus": self.m_minus,
            "m_plus": self.m_plus,
            "h1_bounds": self.h1_bounds,
            "log_holder_A": self.log_holder_A,
            "log_holder_stable": self.log_holder_stable,
            "h2_margin": self.h2_margin,
            "h2": self.h2,
            "ok": self.ok,
            "messages": list(self.messages),
        }


def validate_hypotheses(p: ExponentField, m: ExponentField, dim: Optional[int] = None) -> HypothesisReport:
    """Check bounds (H1) and the subcritical gap (H2) on the grid.

    Log-Hoelder continuity of ``m`` is advisory: at fixed spacing every
    field passes, so the smallest constant is reported on the grid and two
    refinements and flagged unstable when it keeps growing.
    """
    if p.grid is not m.grid and p.grid.to_dict() != m.grid.to_dict():
        raise ValueError("p and m live on different grids")
    dim = p.grid.dim if dim is None else dim
    messages = []
    h1 = 1 < p.p_minus and 1 < m.p_minus and p.p_plus < np.inf and m.p_plus < np.inf
    if not h1:
        messages.append("(H1) requires 1 < p-, m- and p+, m+ < inf")
    if m.profile is not None:
        a = log_holder_refinement(m)
        stable = bool(a[-1] <= a[0] * (1 + LOG_HOLDER_GROWTH) + 1e-12)
    else:
        a = [log_holder_check(m, math.inf).required_A]
        stable = None
    if stable is False:
        messages.append(f"(H1) warning: log-Hoelder constant of m grows under refinement {a}")
    margin = float(np.min(sobolev_critical(m, dim) - p.values))
    h2 = margin > 0
    if not h2:
        messages.append(f"(H2) fails: min(m* - p) = {margin:.6g} is not positive")
    return HypothesisReport(p.p_minus, p.p_plus, m.p_minus, m.p_plus, h1, a, stable, margin, h2, messages)
