"""Flat TOML run configuration with strict key checking."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
import tomli

from .convex import ProxConfig
from .exponent import ExponentField, affine, constant, sine, step
from .grid import Grid
from .stepper import SPACE_KINDS, TIME_KINDS, ForcingSpec

EXPONENT_KINDS = ("constant", "affine", "sine", "step")
U0_KINDS = ("zero", "sine", "random_smooth")
DIAGNOSTICS = ("first", "chain", "second", "regularization", "moreau_yosida")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    """One experiment.  Exponents: ``constant`` = base, ``affine`` = base + amp*x1,
    ``sine`` = base + amp*sin(pi*x1), ``step`` = base left of ``split``, base + amp right.
    """

    dim: int = 1
    cells: int = 128
    lower: float = 0.0
    upper: float = 1.0
    T: float = 0.5
    N: int = 100
    p_kind: str = "constant"
    p_base: float = 2.0
    p_amp: float = 0.0
    p_split: float = 0.5
    m_kind: str = "constant"
    m_base: float = 2.0
    m_amp: float = 0.0
    m_split: float = 0.5
    u0_kind: str = "sine"
    u0_mode: int = 1
    u0_amp: float = 1.0
    forcing_space: str = "constant"
    forcing_time: str = "constant"
    forcing_amp: float = 0.0
    forcing_mode: int = 1
    forcing_coeffs: tuple = (1.0,)
    forcing_rate: float = 1.0
    tolerance: float = 1e-9
    max_iter: int = 10000
    method: str = "newton"
    eps_reg: Union[float, str] = "auto"
    diagnostics: tuple = DIAGNOSTICS
    lambdas: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    deltas: tuple = ()
    out: str = "out"
    seed: int = 0

    def __post_init__(self):
        for name in ("forcing_coeffs", "diagnostics", "lambdas", "deltas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        validate(self)

    # --- builders -----------------------------------------------------------

    def grid(self) -> Grid:
        return Grid((self.cells,) * self.dim, (self.lower,) * self.dim, (self.upper,) * self.dim)

    def exponent(self, which: str, grid: Optional[Grid] = None) -> ExponentField:
        grid = grid or self.grid()
        kind, base, amp, split = (getattr(self, f"{which}_{k}") for k in ("kind", "base", "amp", "split"))
        if kind == "constant":
            return constant(grid, base)
        if kind == "affine":
            return affine(grid, base, amp)
        if kind == "sine":
            return sine(grid, base, amp)
        return step(grid, base, base + amp, split)

    def forcing(self) -> ForcingSpec:
        return ForcingSpec(
            self.forcing_space, self.forcing_time, self.forcing_amp, self.forcing_mode,
            coeffs=self.forcing_coeffs, rate=self.forcing_rate,
        )

    def prox(self) -> ProxConfig:
        eps = None if self.eps_reg == "auto" else float(self.eps_reg)
        return ProxConfig(tolerance=self.tolerance, max_iter=self.max_iter, method=self.method, eps_reg=eps)

    def initial(self, grid: Optional[Grid] = None) -> np.ndarray:
        grid = grid or self.grid()
        rel = (grid.coords - self.lower) / (self.upper - self.lower)
        if self.u0_kind == "zero":
            u = np.zeros(grid.n_cells)
        elif self.u0_kind == "sine":
            u = self.u0_amp * np.prod(np.sin(self.u0_mode * np.pi * rel), axis=1)
        else:
            rng = np.random.default_rng(self.seed)
            u = np.zeros(grid.n_cells)
            for k in range(1, 5):
                c = rng.standard_normal()
                u += c / k**2 * np.prod(np.sin(k * np.pi * rel), axis=1)
            u *= self.u0_amp
        u[grid.boundary] = 0.0
        return u

    def resolved_deltas(self) -> tuple:
        return self.deltas or (self.T / 8, self.T / 4, self.T / 2)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in fields(self)}

    def echo(self) -> str:
        """Canonical text form: sorted keys, JSON-encoded values."""
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in sorted(self.to_dict().items()))


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT_KEYS = {"dim", "cells", "N", "u0_mode", "forcing_mode", "max_iter", "seed"}
_SEQ_KEYS = {"forcing_coeffs", "diagnostics", "lambdas", "deltas"}
_STR_KEYS = {"p_kind", "m_kind", "u0_kind", "forcing_space", "forcing_time", "method", "out"}


def _fail(msg, key=None):
    raise ConfigError(f"{key}: {msg}" if key else msg, key)


def _exponent_minmax(cfg: RunConfig, which: str) -> tuple[float, float]:
    kind, base, amp, split = (getattr(cfg, f"{which}_{k}") for k in ("kind", "base", "amp", "split"))
    x = np.linspace(cfg.lower, cfg.upper, cfg.cells)
    if kind == "constant":
        v = np.array([base])
    elif kind == "affine":
        v = base + amp * x
    elif kind == "sine":
        v = base + amp * np.sin(np.pi * x)
    else:
        v = np.array([base, base + amp])
    return float(v.min()), float(v.max())


def validate(cfg: RunConfig) -> None:
    for name, f in _FIELDS.items():
        val = getattr(cfg, name)
        if name in _INT_KEYS and (isinstance(val, bool) or not isinstance(val, int)):
            _fail(f"expected an integer, got {val!r}", name)
        if name in _STR_KEYS and not isinstance(val, str):
            _fail(f"expected a string, got {val!r}", name)
    if cfg.dim not in (1, 2):
        _fail("must be 1 or 2", "dim")
    if cfg.cells < 3:
        _fail("must be >= 3", "cells")
    if not (math.isfinite(cfg.lower) and math.isfinite(cfg.upper) and cfg.upper > cfg.lower):
        _fail("requires finite lower < upper", "upper")
    if not (math.isfinite(cfg.T) and cfg.T > 0):
        _fail("must be positive", "T")
    if cfg.N < 2:
        _fail("must be >= 2", "N")
    for which in ("p", "m"):
        if getattr(cfg, f"{which}_kind") not in EXPONENT_KINDS:
            _fail(f"must be one of {EXPONENT_KINDS}", f"{which}_kind")
        lo, hi = _exponent_minmax(cfg, which)
        if not lo > 1:
            _fail(f"(H1) requires {which}⁻ > 1, got {lo:.6g}", f"{which}_base")
        if not math.isfinite(hi):
            _fail(f"(H1) requires {which}⁺ < ∞", f"{which}_amp")
    if cfg.u0_kind not in U0_KINDS:
        _fail(f"must be one of {U0_KINDS}", "u0_kind")
    if cfg.u0_mode < 1:
        _fail("must be >= 1", "u0_mode")
    if cfg.forcing_space not in SPACE_KINDS:
        _fail(f"must be one of {SPACE_KINDS}", "forcing_space")
    if cfg.forcing_time not in TIME_KINDS:
        _fail(f"must be one of {TIME_KINDS}", "forcing_time")
    if not cfg.forcing_coeffs:
        _fail("needs at least one coefficient", "forcing_coeffs")
    if not cfg.tolerance > 0:
        _fail("must be positive", "tolerance")
    if cfg.max_iter < 1:
        _fail("must be >= 1", "max_iter")
    if cfg.method not in ("newton", "bb"):
        _fail("must be 'newton' or 'bb'", "method")
    if cfg.eps_reg != "auto" and not (isinstance(cfg.eps_reg, (int, float)) and cfg.eps_reg >= 0):
        _fail("must be 'auto' or a nonnegative number", "eps_reg")
    bad = set(cfg.diagnostics) - set(DIAGNOSTICS)
    if bad:
        _fail(f"unknown entries {sorted(bad)}; allowed {DIAGNOSTICS}", "diagnostics")
    if any(not (l > 0) for l in cfg.lambdas):
        _fail("all entries must be positive", "lambdas")
    if any(not (0 < d <= cfg.T) for d in cfg.deltas):
        _fail("entries must lie in (0, T]", "deltas")
    if cfg.seed < 0:
        _fail("must be >= 0", "seed")


def _line_of(text: str, key: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=", 1)[0].strip() == key:
            return i
    return None


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", line=getattr(exc, "lineno", None)) from exc
    kw = {}
    for key, val in raw.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r} (line {_line_of(text, key)})", key, _line_of(text, key))
        if isinstance(val, dict):
            raise ConfigError(f"{key}: tables are not allowed in a flat config", key, _line_of(text, key))
        if key in _SEQ_KEYS:
            if not isinstance(val, list):
                raise ConfigError(f"{key}: expected an array", key, _line_of(text, key))
            val = tuple(val)
        elif isinstance(val, int) and not isinstance(val, bool) and key not in _INT_KEYS and key not in _STR_KEYS:
            val = float(val)
        kw[key] = val
    try:
        return RunConfig(**kw)
    except ConfigError as exc:
        exc.line = _line_of(text, exc.field) if exc.field else None
        if exc.line is not None:
            exc.args = (f"{exc.args[0]} (line {exc.line})",)
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
