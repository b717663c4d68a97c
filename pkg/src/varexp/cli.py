"""Command line: ``solve``, ``sweep`` and ``check``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, RunConfig, load_config
from .convex import NonConvergence, moreau_yosida_value
from .exponent import validate_hypotheses
from .stepper import RunReport, run

log = logging.getLogger("varexp")

SWEEP_AXES = {
    "N": ("N", int),
    "cells": ("cells", int),
    "lambda": ("lambdas", float),
    "p-amplitude": ("p_amp", float),
    "m-amplitude": ("m_amp", float),
}

GOLDEN_DIR = Path(__file__).resolve().parents[2] / "configs"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    def clean(x):
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.floating, float)):
            x = float(x)
            return x if np.isfinite(x) else None
        if isinstance(x, (np.integer,)):
            return int(x)
        if isinstance(x, np.bool_):
            return bool(x)
        return x

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([dg.fmt(x) for x in row])
    return buf.getvalue()


def trajectory_rows(rep: RunReport):
    rows = [[0.0, rep.phi0, "", "", ""]]
    for rec in rep.steps:
        rows.append([(rec.n + 1) * rep.h, rec.phi, rec.modular_v, rec.psi_star_eta, rec.relative_residual])
    return rows


def margins_for(cfg: RunConfig, rep: Optional[RunReport]) -> list:
    which = set(cfg.diagnostics)
    out = []
    if rep is not None:
        out += dg.full_report(rep, cfg.resolved_deltas(), which)
    if "moreau_yosida" in which:
        grid = cfg.grid()
        p, m = cfg.exponent("p", grid), cfg.exponent("m", grid)
        samples = [cfg.initial(grid)]
        if rep is not None and rep.steps:
            samples.append(rep.steps[-1].u)
        out += dg.moreau_yosida_report(p, m, samples, cfg.lambdas, cfg.prox().with_(tolerance=min(cfg.tolerance, 1e-11)), cfg.T / cfg.N)
    return out


def execute(cfg: RunConfig, out: Optional[Path] = None) -> int:
    """Run one configuration and write its artifacts; returns the exit code."""
    out = Path(out if out is not None else cfg.out)
    grid = cfg.grid()
    p, m = cfg.exponent("p", grid), cfg.exponent("m", grid)
    hyp = validate_hypotheses(p, m)
    summary = {"config": cfg.to_dict(), "hypotheses": hyp.to_dict()}
    if not hyp.ok:
        summary["status"] = "hypothesis_failure"
        summary["failure"] = {"kind": "hypothesis", "messages": hyp.messages}
        _write_atomic(out / "run_summary.json", _json(summary))
        log.error("hypotheses fail: %s", "; ".join(hyp.messages))
        return 2
    try:
        rep = run(cfg.initial(grid), cfg.forcing(), cfg.T, cfg.N, p, m, cfg.prox(), check_hypotheses=False, config=cfg.to_dict())
    except NonConvergence as exc:
        partial = getattr(exc, "report", None)
        summary["status"] = "nonconvergence"
        summary["failure"] = {
            "kind": "nonconvergence",
            "step": exc.step,
            "iterations": exc.iterations,
            "residual": exc.residual,
            "completed_steps": len(partial.steps) if partial is not None else 0,
        }
        if partial is not None:
            _write_atomic(out / "trajectory.csv", _csv(["t", "phi", "modular_v", "psi_star_eta", "residual"], trajectory_rows(partial)))
        _write_atomic(out / "run_summary.json", _json(summary))
        log.error("step %s did not converge", exc.step)
        return 3
    margins = margins_for(cfg, rep)
    stats = dg.summarize(margins)
    all_ok = stats["all_hold"] and rep.complete
    summary.update(
        status="ok" if all_ok else "margin_violation",
        energy_bounds=rep.energy_bounds(),
        max_relative_residual=rep.max_residual,
        margins=stats,
        diagnostics=rep.diagnostics,
    )
    _write_atomic(out / "margins.csv", dg.margins_csv(margins))
    _write_atomic(out / "trajectory.csv", _csv(["t", "phi", "modular_v", "psi_star_eta", "residual"], trajectory_rows(rep)))
    _write_plotdata(out / "plotdata", rep)
    _write_atomic(out / "run_summary.json", _json(summary))
    if not all_ok:
        bad = [k for k, v in stats["by_name"].items() if v.get("violations")]
        log.error("margin violations in %s", bad)
        return 1
    return 0


def _write_plotdata(path: Path, rep: RunReport) -> None:
    coords = rep.grid.coords
    cols = [f"x{k + 1}" for k in range(rep.grid.dim)]
    states = rep.states
    picks = sorted({0, len(states) // 4, len(states) // 2, len(states) - 1})
    header = cols + [f"u_t{rep.times[i]:.6g}" for i in picks] + ["p", "m"]
    rows = np.column_stack([coords] + [states[i] for i in picks] + [rep.p.values, rep.m.values])
    _write_atomic(path / "profiles.csv", _csv(header, rows.tolist()))
    reg = rep.diagnostics.get("regularization")
    if reg:
        _write_atomic(path / "regularization.csv", _csv(["delta", "S", "delta_S"], zip(reg["deltas"], reg["S"], reg["delta_S"])))


# --- sweep ------------------------------------------------------------------

SWEEP_HEADER = [
    "axis", "value", "status", "exit_code", "converged", "max_relative_residual", "violations",
    "worst_margin", "telescoped_gap", "phi_lambda", "phi",
]


def _sweep_row(args) -> list:
    cfg, axis, value, out = args
    key, _ = SWEEP_AXES[axis]
    try:
        if axis == "lambda":
            grid = cfg.grid()
            p, m = cfg.exponent("p", grid), cfg.exponent("m", grid)
            u = cfg.initial(grid)
            from .energy import phi

            val = moreau_yosida_value(u, value, p, m, cfg.prox().with_(tolerance=min(cfg.tolerance, 1e-11)))
            return [axis, value, "ok", 0, True, "", 0, "", "", val, phi(u, m)]
        cfg = cfg.replace(**{key: value})
        code = execute(cfg, out)
        summary = json.loads((out / "run_summary.json").read_text())
        if code >= 2:
            return [axis, value, summary.get("status"), code, False, "", "", "", "", "", ""]
        margins = summary["margins"]
        worst = min((v["worst_margin"] for v in margins["by_name"].values() if v.get("hard") and v.get("worst_margin") is not None), default=float("nan"))
        gap = next((r for r in csv.DictReader(io.StringIO((out / "margins.csv").read_text())) if r["name"] == "telescoped_gap"), None)
        return [
            axis, value, summary["status"], code, True, summary["max_relative_residual"], margins["violations"],
            worst, float(gap["lhs"]) if gap else "", "", "",
        ]
    except (ConfigError, ValueError, NonConvergence) as exc:
        return [axis, value, f"error: {exc}", 4, False, "", "", "", "", "", ""]


def sweep(cfg: RunConfig, axis: str, values: Sequence, out: Optional[Path] = None, workers: int = 1) -> tuple[int, str]:
    """Run ``cfg`` once per value of ``axis``; returns (exit code, aggregate CSV text)."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if len(values) == 0:
        raise ValueError("sweep requires ≥ 1 value")
    conv = SWEEP_AXES[axis][1]
    values = [conv(v) for v in values]
    out = Path(out if out is not None else cfg.out)
    jobs = [(cfg, axis, v, out / f"{axis}_{i:03d}") for i, v in enumerate(values)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    text = _csv(SWEEP_HEADER, rows)
    _write_atomic(out / "sweep.csv", text)
    ok = any(r[3] in (0, 1) for r in rows)
    return (0 if ok else 1), text


# --- check ------------------------------------------------------------------


def check(out: Path, workers: int = 1) -> int:
    """Run every golden config under ``configs/`` and report pass/fail per file."""
    paths = sorted(GOLDEN_DIR.glob("*.toml"))
    if not paths:
        print(f"no golden configs in {GOLDEN_DIR}", file=sys.stderr)
        return 1
    worst = 0
    for path in paths:
        cfg = load_config(path)
        code = execute(cfg, out / path.stem)
        expect_fail = path.stem.startswith("fail_")
        ok = (code != 0) if expect_fail else (code == 0)
        print(f"{'PASS' if ok else 'FAIL'} {path.name} exit={code}")
        worst = max(worst, 0 if ok else 1)
    return worst


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varexp", description="Doubly nonlinear variable-exponent flow: solve, sweep, check.")
    ap.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
    ap.add_argument("--workers", type=int, default=1, help="concurrent sweep rows")
    ap.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run one config")
    s.add_argument("config", type=Path)
    w = sub.add_parser("sweep", parents=[common], help="run a config over a list of values")
    w.add_argument("config", type=Path)
    w.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    w.add_argument("--values", required=True, help="comma separated")
    sub.add_parser("check", parents=[common], help="run the shipped golden configs")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "check":
            return check(args.out or Path("out/check"), args.workers)
        cfg = load_config(args.config)
        out = args.out or Path(cfg.out)
        if args.command == "solve":
            code = execute(cfg, out)
            print(f"exit {code}: {out / 'run_summary.json'}")
            return code
        values = [v for v in args.values.split(",") if v.strip()]
        code, text = sweep(cfg, args.axis, values, out, args.workers)
        sys.stdout.write(text)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
