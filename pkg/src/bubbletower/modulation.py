"""Numerical modulation decomposition of a field pair around a
multi-bubble, refined scale velocities, and parameter tracking along an
evolution record.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import discrete_ops as ops
from .discrete_ops import FieldPair
from .profiles import (TowerConfig, kappa, lambda_q, multibubble, orthogonality_Lambda_m1,
                       orthogonality_profile)


class BasinError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass
class Decomposition:
    cfg: TowerConfig
    g: FieldPair
    residuals_u: np.ndarray
    residuals_udot: np.ndarray
    bhat: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)


def _profiles(k, grid, iota, lam):
    r = grid.r
    Z = np.array([s * orthogonality_profile(k, r / l) for s, l in zip(iota, lam)])
    L = np.array([s * lambda_q(k, r / l) for s, l in zip(iota, lam)])
    return Z, L


def _F(k, grid, iota, lam, u):
    cfg = TowerConfig(k, tuple(lam), iota=tuple(iota))
    diff = u - multibubble(cfg, grid.r)
    Z, L = _profiles(k, grid, iota, lam)
    W = Z * grid.weights
    lam = np.asarray(lam)
    F = (W @ diff) / lam**2
    return F, diff, W, L


def decompose(pair: FieldPair, k: int, J: int, iota=None, lambda_guess=None, tol: float = 1e-12,
              max_iter: int = 50) -> Decomposition:
    """Newton iteration on F_i(lam) = <lam_i^-2 Z_{;i}, u - Qsum> in log lam."""
    grid = pair.grid
    iota = tuple(iota) if iota else tuple((-1) ** j for j in range(J))
    if lambda_guess is None or len(lambda_guess) != J:
        raise ValueError("need one scale guess per bubble")
    x = np.log(np.asarray(lambda_guess, dtype=float))
    if np.any(np.diff(x) >= 0):
        raise BasinError("guess scales must be strictly decreasing")
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        lam = np.exp(x)
        F, diff, W, L = _F(k, grid, iota, lam, pair.u)
        trace.append({"lambda": lam.tolist(), "F": F.tolist()})
        if np.max(np.abs(F)) < tol:
            break
        Jac = (W @ L.T) / lam[:, None] ** 2
        for i in range(J):
            zm = iota[i] * orthogonality_Lambda_m1(k, grid.r / lam[i])
            Jac[i, i] -= ops.inner(grid, zm, diff) / lam[i] ** 2
        # F depends on lam_j through lam_j d/dlam_j, i.e. d/dlog lam_j
        dx = -np.linalg.solve(Jac, F)
        step = 1.0
        while True:
            xn = x + step * dx
            if np.all(np.diff(xn) < 0) and np.all(np.abs(xn - x) < 2.0):
                break
            step *= 0.5
            if step < 1e-6:
                raise BasinError("Newton step cannot keep the scale ordering", trace)
        x = xn
    else:
        raise BasinError("Newton iteration did not converge", trace)
    lam = np.exp(x)
    Z, L = _profiles(k, grid, iota, lam)
    Zu = Z / lam[:, None]
    Lu = L / lam[:, None]
    Wz = Zu * grid.weights
    b = np.linalg.solve(Wz @ Lu.T, Wz @ pair.udot)
    cfg = TowerConfig(k, tuple(lam), tuple(b), iota)
    g = pair.u - multibubble(cfg, grid.r)
    gd = pair.udot - b @ Lu
    res_u = (Z * grid.weights) @ g / lam**2
    res_ud = Wz @ gd
    bhat = refined_bhat(pair, cfg)
    return Decomposition(cfg, FieldPair(grid, g, gd), res_u, res_ud, bhat, it, trace)


def refined_bhat(pair: FieldPair, cfg: TowerConfig) -> np.ndarray:
    """bhat_j = kappa^-1 <Lambda Q_{;j} / lam_j, udot>."""
    r = pair.grid.r
    kap = kappa(cfg.k)
    return np.array([ops.inner(pair.grid, s * lambda_q(cfg.k, r / l) / l, pair.udot) / kap
                     for s, l in zip(cfg.iota, cfg.lam)])


def rescale_pair(pair: FieldPair, mu: float, u_fn, udot_fn) -> FieldPair:
    """(u(r/mu), mu^-1 udot(r/mu)) from callables, sampled on the same grid."""
    r = pair.grid.r
    return FieldPair(pair.grid, u_fn(r / mu), udot_fn(r / mu) / mu)


@dataclass
class TrackEntry:
    t: float
    decomposition: Optional[Decomposition]
    nu: Optional[np.ndarray] = None
    nudot: Optional[np.ndarray] = None
    windows: dict = field(default_factory=dict)


def window_flags(dec: Decomposition, t: float, eps, nu=None, nudot=None) -> dict:
    """The six bootstrap bounds at time t."""
    T = abs(t)
    grid = dec.g.grid
    par = (-1) ** dec.cfg.k if grid.kind == "uniform" else None
    flags = {
        "g_hdot1": ops.hdot1(grid, dec.g.u, dec.g.udot, parity=par) <= 1.0 / T,
        "lambda1": abs(dec.cfg.lam[0] - 1.0) <= T ** (-eps[1]),
        "b1": abs(dec.cfg.b[0]) <= 1.0 / T,
        "g_hdot2": ops.hdot2(grid, dec.g.u, dec.g.udot, parity=par) <= T ** (-1 - eps[0]),
    }
    if nu is not None:
        flags["nu"] = bool(np.all(np.abs(nu) <= T ** (-np.asarray(eps[2:]))))
        flags["nudot"] = bool(np.all(np.abs(nudot) <= 1.0))
    return {key: bool(v) for key, v in flags.items()}


def track(record, k: int, J: int, iota=None, lambda_guess=None, consts=None, eps=None) -> list:
    """Warm-started decomposition of every snapshot of an evolution record."""
    from .tower_ode import TowerState, nu_transform

    out = []
    guess = lambda_guess
    for t, pair in zip(record.times, record.snapshots):
        try:
            dec = decompose(pair, k, J, iota, guess)
        except BasinError as exc:
            out.append(TrackEntry(t, None, windows={"basin_lost": True, "message": str(exc)}))
            break
        guess = dec.cfg.lam
        entry = TrackEntry(t, dec)
        if consts is not None and t < 0 and J > 1:
            n = nu_transform(consts, TowerState(t, np.array(dec.cfg.lam), np.array(dec.cfg.b)))
            entry.nu, entry.nudot = n.nu, n.nudot
        if eps is not None and t < 0:
            entry.windows = window_flags(dec, t, eps, entry.nu, entry.nudot)
        out.append(entry)
    return out
