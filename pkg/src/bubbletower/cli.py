"""Command-line driver: ``bubbletower <command> [--config F] [--out D] [--seed S] [--threads N]``.

Exit status: 0 success, 1 a check failed, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import io
from .discrete_ops import FieldPair, PsiParams, RadialGrid, hdot1
from .functionals import MorawetzParams, energy, monotonicity_sample
from .modulation import BasinError, decompose
from .profiles import TowerConfig, kappa_quadrature, lambda_q, q_profile, residue_integral
from .tower_ode import (DomainError, ShootingConfig, ShootingFailure, constants, exact_residual,
                        exact_solution, shoot)
from .wavemap_pde import (ConfigurationError, InstabilityError, SolverConfig, build_initial_data,
                          evolve, tower_data)

log = logging.getLogger("bubbletower")

OK, CHECK_FAILED, USAGE, NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def code_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# ------------------------------------------------------------------ configs

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VerifyConfig(_Strict):
    ks: list[int] = [2, 3, 4, 5]
    tol_kappa: float = 1e-8
    tol_energy: float = 1e-8
    tol_residue: float = 1e-6


class ConstantsConfig(_Strict):
    k: int = 3
    J: int = 3


class OdeExactConfig(_Strict):
    k: int = 3
    J: int = 3
    t_start: float = -1e8
    t_end: float = -1e3
    n: int = 100


class ShootConfig(_Strict):
    k: int = 3
    J: int = 2
    t0: float = -1e4
    T_boot: float = -1e2
    eps: list[float] = []
    bisection_tol: float = 1e-15
    max_iter: int = 60
    rhs_mode: Literal["leading", "full_interaction"] = "leading"
    ode_tol: float = 1e-10
    n_samples: int = 201


class GridSpec(_Strict):
    kind: Literal["log", "uniform"] = "uniform"
    r_min: float = 1e-6
    r_max: float = 20.0
    n: int = 4096

    def build(self) -> RadialGrid:
        if self.kind == "uniform":
            return RadialGrid.uniform(self.r_max, self.n)
        return RadialGrid.log(self.r_min, self.r_max, self.n)


class PdeConfig(_Strict):
    k: int = 3
    init: Literal["tower", "shooting"] = "tower"
    lam: list[float] = [1.0]
    b: list[float] = []
    iota: list[int] = []
    nu0: list[float] = []
    J: int = 2
    t0: float = 0.0
    t1: float = 1.0
    grid: GridSpec = GridSpec()
    cfl: float = 0.5
    time_integrator: Literal["rk4", "leapfrog"] = "rk4"
    boundary: Literal["dirichlet_asymptotic", "absorbing"] = "dirichlet_asymptotic"
    snapshot_cadence: float = 0.1


class DecomposeConfig(_Strict):
    snapshot: str
    J: Optional[int] = None
    lambda_guess: list[float] = [1.0]
    iota: list[int] = []
    tol: float = 1e-12
    max_iter: int = 50


class MorawetzConfig(_Strict):
    k: int = 3
    lam: list[float] = [1.0, 1e-2]
    iota: list[int] = []
    trials: int = Field(100, ge=1)
    delta: float = 0.1
    delta0: float = 0.1
    delta_prime: float = 0.1
    n_bumps: int = 8
    grid: GridSpec = GridSpec(kind="log", r_min=1e-6, r_max=1e3, n=8192)

    @field_validator("delta_prime")
    @classmethod
    def _dp(cls, v):
        if not 0 < v <= 0.2:
            raise ValueError("delta_prime must lie in (0, 0.2]")
        return v


def _load(model, path: Optional[str], **extra):
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    data.update({k: v for k, v in extra.items() if v is not None})
    try:
        return model(**data)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _metadata(out: Path, command: str, cfg: BaseModel, args, **extra):
    meta = {"command": command, "config": cfg.model_dump(), "seed": args.seed,
            "threads": args.threads, "code_version": code_version()}
    meta.update(extra)
    io.write_json(out / "metadata.json", meta)


# ----------------------------------------------------------------- commands

def cmd_verify(args) -> int:
    cfg = _load(VerifyConfig, args.config)
    checks = []

    def add(name, k, value, target, tol, rel=True):
        err = abs(value - target) / (abs(target) if rel and target else 1.0)
        checks.append({"check": name, "k": k, "value": value, "target": target,
                       "error": err, "tol": tol, "pass": bool(err <= tol)})

    for k in cfg.ks:
        val, tail = kappa_quadrature(k)
        add("kappa", k, val, 2 * np.pi / np.sin(np.pi / k), cfg.tol_kappa)
        g = RadialGrid.log_span(1e-8, 1e8, 1024)
        add("energy_Q", k, energy(FieldPair(g, q_profile(k, g.r), np.zeros(g.n)), k), 4 * np.pi * k, cfg.tol_energy)
        add("residue", k, residue_integral(k), 8.0 * k * k, cfg.tol_residue)
        y = np.geomspace(1e-6, 1e6, 4001)
        dev = float(np.max(np.abs(lambda_q(k, y) - k * np.sin(q_profile(k, y)))))
        add("LambdaQ_minus_k_sinQ", k, dev, 0.0, 1e-13, rel=False)
        if k >= 3:
            add("diag_residual", k, constants(k, 4).diag_residual, 0.0, 1e-12, rel=False)
            c = constants(k, 4)
            res = max(exact_residual(c, t) for t in -np.geomspace(1e3, 1e8, 25))
            add("exact_ode_residual", k, res, 0.0, 1e-12, rel=False)
    report = {"checks": checks, "all_pass": all(c["pass"] for c in checks)}
    if args.out:
        out = _out(args)
        io.write_json(out / "verify.json", report)
        _metadata(out, "verify", cfg, args)
    sys.stdout.write(io.dumps(report))
    return OK if report["all_pass"] else CHECK_FAILED


def cmd_constants(args) -> int:
    cfg = _load(ConstantsConfig, args.config, k=args.k, J=args.J)
    try:
        c = constants(cfg.k, cfg.J)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(io.dumps(c.as_dict()))
    return OK


def cmd_ode_exact(args) -> int:
    cfg = _load(OdeExactConfig, args.config)
    try:
        c = constants(cfg.k, cfg.J)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    out = _out(args)
    ts = -np.geomspace(-cfg.t_start, -cfg.t_end, cfg.n)
    rows = []
    worst = 0.0
    for t in ts:
        s = exact_solution(c, t)
        worst = max(worst, exact_residual(c, t))
        rows.append([float(t), *map(float, s.lam), *map(float, s.b)])
    names = ["t"] + [f"lambda_{j}" for j in range(1, cfg.J + 1)] + [f"b_{j}" for j in range(1, cfg.J + 1)]
    io.write_csv(out / "exact.csv", names, rows)
    io.write_json(out / "summary.json", {"constants": c.as_dict(), "max_relative_residual": worst})
    _metadata(out, "ode-exact", cfg, args)
    return OK


def cmd_ode_shoot(args) -> int:
    cfg = _load(ShootConfig, args.config)
    out = _out(args)
    try:
        sh = ShootingConfig(cfg.k, cfg.J, cfg.t0, cfg.T_boot, tuple(cfg.eps), cfg.bisection_tol,
                            cfg.max_iter, cfg.rhs_mode, cfg.ode_tol)
        c = constants(cfg.k, cfg.J)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    try:
        res = shoot(c, sh, cfg.n_samples)
    except ShootingFailure as exc:
        io.write_json(out / "summary.json", {"status": "failed", "message": str(exc),
                                             "history": exc.history, "partial": True})
        _metadata(out, "ode-shoot", cfg, args, eps=list(sh.eps))
        log.error("shooting failed: %s", exc)
        return NUMERICAL
    names, data = res.trajectory.columns()
    io.write_csv(out / "trajectory.csv", names, data.tolist())
    summary = {"status": "ok", "nu0_star": res.nu0_star, "window_report": res.window_report,
               "evaluations": res.evaluations, "monotone": res.monotone, "eps": list(sh.eps),
               "history": res.history}
    io.write_json(out / "summary.json", summary)
    _metadata(out, "ode-shoot", cfg, args, eps=list(sh.eps))
    return OK if res.window_report["all"] else CHECK_FAILED


def cmd_pde_evolve(args) -> int:
    cfg = _load(PdeConfig, args.config)
    out = _out(args)
    try:
        grid = cfg.grid.build()
        scfg = SolverConfig(grid, cfg.k, cfg.cfl, cfg.time_integrator, cfg.boundary,
                            cfg.snapshot_cadence)
        if cfg.init == "tower":
            tc = TowerConfig(cfg.k, tuple(cfg.lam), tuple(cfg.b), tuple(cfg.iota))
            pair0 = tower_data(tc, grid)
            J = tc.J
        else:
            sh = ShootingConfig(cfg.k, cfg.J, cfg.t0, cfg.t1)
            c = constants(cfg.k, cfg.J)
            nu0 = cfg.nu0 or [0.0] * (cfg.J - 1)
            pair0 = build_initial_data(c, sh, nu0, grid)
            J = cfg.J
    except (ValueError, DomainError, ConfigurationError) as exc:
        raise UsageError(str(exc)) from None
    rec = evolve(scfg, pair0, (cfg.t0, cfg.t1))
    for i, (t, p) in enumerate(zip(rec.times, rec.snapshots)):
        io.write_snapshot(out / f"snap_{i:04d}.wms1", p, cfg.k, J, t)
    io.write_csv(out / "energy.csv", ["t", "energy"],
                 [[float(t), float(e)] for t, e in zip(rec.times, rec.energy_series)])
    summary = {"stable": rec.stable, "message": rec.message, "steps": rec.steps, "dt": rec.dt,
               "energy_drift": rec.energy_drift(), "snapshots": len(rec.times),
               "partial": not rec.stable}
    io.write_json(out / "summary.json", summary)
    _metadata(out, "pde-evolve", cfg, args, grid=grid.header())
    return OK if rec.stable else NUMERICAL


def cmd_decompose(args) -> int:
    cfg = _load(DecomposeConfig, args.config, snapshot=args.snapshot)
    try:
        head, pair = io.read_snapshot(cfg.snapshot)
    except (OSError, io.SnapshotFormatError) as exc:
        raise UsageError(str(exc)) from None
    J = cfg.J or int(head["J"])
    try:
        dec = decompose(pair, int(head["k"]), J, tuple(cfg.iota) or None, cfg.lambda_guess,
                        cfg.tol, cfg.max_iter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except BasinError as exc:
        log.error("decomposition failed: %s", exc)
        return NUMERICAL
    par = (-1) ** dec.cfg.k if pair.grid.kind == "uniform" else None
    res = {"t": head["t"], "k": head["k"], "J": J, "lambda": list(dec.cfg.lam), "b": list(dec.cfg.b),
           "iota": list(dec.cfg.iota), "bhat": dec.bhat, "residuals_u": dec.residuals_u,
           "residuals_udot": dec.residuals_udot, "iterations": dec.iterations,
           "g_hdot1": hdot1(pair.grid, dec.g.u, dec.g.udot, parity=par)}
    if args.out:
        out = _out(args)
        io.write_json(out / "decomposition.json", res)
        _metadata(out, "decompose", cfg, args)
    sys.stdout.write(io.dumps(res))
    return OK


def cmd_morawetz_sample(args) -> int:
    cfg = _load(MorawetzConfig, args.config)
    out = _out(args)
    try:
        tc = TowerConfig(cfg.k, tuple(cfg.lam), iota=tuple(cfg.iota))
        params = MorawetzParams(cfg.delta, cfg.delta0, PsiParams(cfg.delta_prime))
        grid = cfg.grid.build()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summ = monotonicity_sample(tc, params, cfg.trials, args.seed, grid, args.threads,
                               n_bumps=cfg.n_bumps)
    io.write_csv(out / "ratios.csv", ["trial", "ratio"],
                 [[i, float(x)] for i, x in enumerate(summ.ratios)])
    positive = all(x > 0 for x in summ.ratios)
    io.write_json(out / "summary.json", {"min_ratio": summ.min_ratio, "argmin": summ.argmin,
                                         "all_positive": positive, "trials": cfg.trials})
    _metadata(out, "morawetz-sample", cfg, args, grid=grid.header())
    return OK if positive else CHECK_FAILED


COMMANDS = {
    "verify": cmd_verify,
    "constants": cmd_constants,
    "ode-exact": cmd_ode_exact,
    "ode-shoot": cmd_ode_shoot,
    "pde-evolve": cmd_pde_evolve,
    "decompose": cmd_decompose,
    "morawetz-sample": cmd_morawetz_sample,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bubbletower", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", default=None if name in ("verify", "decompose", "constants") else "out",
                       help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--threads", type=int, default=1)
        if name == "constants":
            s.add_argument("--k", type=int)
            s.add_argument("--J", type=int)
        if name == "decompose":
            s.add_argument("--snapshot")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64 or args.threads < 1:
        sys.stderr.write("seed must be a u64 and threads >= 1\n")
        return USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return USAGE
    except (InstabilityError, ShootingFailure, BasinError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
