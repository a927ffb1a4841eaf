"""Method-of-lines solver for the k-corotational wave maps equation

    u_tt = u_rr + u_r / r - k^2 sin(2u) / (2 r^2)

on a cell-centred uniform grid.  Near the origin the field is continued
through the reflection u(-r) = (-1)^k u(r), which is exact for fields
behaving like r^k.  Interior nodes use 4th-order central differences; the
node next to the outer edge uses 2nd-order central differences and the edge
node carries the boundary condition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discrete_ops import FieldPair, RadialGrid
from .functionals import energy
from .profiles import TowerConfig, lambda_q, multibubble

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


def _laplacian_parts(u: np.ndarray, h: float, parity: int):
    """(u_rr, u_r) with the origin reflection and the edge closure."""
    n = len(u)
    ext = np.empty(n + 2)
    ext[0], ext[1] = parity * u[1], parity * u[0]
    ext[2:] = u
    urr = np.empty(n)
    ur = np.empty(n)
    c = slice(2, n)  # nodes 0..n-3 via indices 2..n-1 of ext
    m2, m1, p1, p2 = ext[0:n - 2], ext[1:n - 1], ext[3:n + 1], ext[4:n + 2]
    urr[:n - 2] = (-m2 + 16 * m1 - 30 * ext[c] + 16 * p1 - p2) / (12 * h * h)
    ur[:n - 2] = (m2 - 8 * m1 + 8 * p1 - p2) / (12 * h)
    urr[n - 2] = (u[n - 3] - 2 * u[n - 2] + u[n - 1]) / (h * h)
    ur[n - 2] = (u[n - 1] - u[n - 3]) / (2 * h)
    urr[n - 1] = 0.0
    ur[n - 1] = (3 * u[n - 1] - 4 * u[n - 2] + u[n - 3]) / (2 * h)
    return urr, ur


@dataclass(frozen=True)
class SolverConfig:
    grid: RadialGrid
    k: int
    cfl: float = 0.5
    time_integrator: str = "rk4"
    boundary: str = "dirichlet_asymptotic"
    snapshot_cadence: float = 0.1
    u_inf: float | None = None

    def __post_init__(self):
        if self.grid.kind != "uniform":
            raise ConfigurationError("the PDE solver runs on a uniform grid")
        if not 0 < self.cfl <= 0.9:
            raise ConfigurationError("cfl must lie in (0, 0.9]")
        if self.time_integrator not in ("rk4", "leapfrog"):
            raise ConfigurationError("time_integrator must be rk4 or leapfrog")
        if self.boundary not in ("dirichlet_asymptotic", "absorbing"):
            raise ConfigurationError("boundary must be dirichlet_asymptotic or absorbing")

    def stable_dt(self) -> float:
        """Largest stable step from a Gershgorin bound of the spatial operator."""
        h, k = self.grid.h, self.k
        r0 = self.grid.r[0]
        rho = (64.0 / 12.0) / h**2 + (18.0 / 12.0) / (h * r0) + k * k / r0**2
        reach = 2.8 if self.time_integrator == "rk4" else 2.0
        return 0.9 * reach / np.sqrt(rho)

    def dt(self) -> float:
        return min(self.cfl * self.grid.h, self.stable_dt())


def pde_rhs(k: int, grid: RadialGrid, u, udot, boundary: str = "dirichlet_asymptotic",
            u_inf: float = 0.0):
    """(u_t, udot_t) of the semidiscrete system."""
    u = np.asarray(u, dtype=float)
    udot = np.asarray(udot, dtype=float)
    r = grid.r
    urr, ur = _laplacian_parts(u, grid.h, (-1) ** k)
    acc = urr + ur / r - k * k * np.sin(2.0 * u) / (2.0 * r * r)
    du = udot.copy()
    if boundary == "dirichlet_asymptotic":
        du[-1] = 0.0
        acc[-1] = 0.0
    else:
        # outgoing relation d_t w = -d_r w - w / (2r) for w = u - u_inf
        _, vr = _laplacian_parts(udot, grid.h, (-1) ** k)
        du[-1] = -ur[-1] - (u[-1] - u_inf) / (2.0 * r[-1])
        acc[-1] = -vr[-1] - udot[-1] / (2.0 * r[-1])
    if not (np.all(np.isfinite(du)) and np.all(np.isfinite(acc))):
        raise InstabilityError("non-finite values in the right side")
    return du, acc


def _u_inf(cfg: SolverConfig, pair: FieldPair) -> float:
    return float(pair.u[-1]) if cfg.u_inf is None else cfg.u_inf


def step(cfg: SolverConfig, pair: FieldPair, dt: float, u_inf: float | None = None) -> FieldPair:
    if abs(dt) > cfg.cfl * cfg.grid.h * (1 + 1e-12):
        raise ConfigurationError("time step violates the CFL bound")
    ui = _u_inf(cfg, pair) if u_inf is None else u_inf
    g, k = cfg.grid, cfg.k

    def f(u, v):
        return pde_rhs(k, g, u, v, cfg.boundary, ui)

    u, v = pair.u, pair.udot
    if cfg.time_integrator == "rk4":
        k1u, k1v = f(u, v)
        k2u, k2v = f(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v)
        k3u, k3v = f(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v)
        k4u, k4v = f(u + dt * k3u, v + dt * k3v)
        un = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    else:
        du0, a0 = f(u, v)
        vh = v + 0.5 * dt * a0
        un = u + dt * vh
        if cfg.boundary == "absorbing":
            un[-1] = u[-1] + dt * du0[-1]
        _, a1 = f(un, vh)
        vn = vh + 0.5 * dt * a1
    return FieldPair(g, un, vn)


@dataclass
class EvolutionRecord:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    energy_series: list = field(default_factory=list)
    steps: int = 0
    dt: float = 0.0
    stable: bool = True
    message: str = ""

    def energy_drift(self) -> float:
        e = np.asarray(self.energy_series)
        return float(np.max(np.abs(e - e[0])) / abs(e[0])) if len(e) and e[0] else 0.0


def evolve(cfg: SolverConfig, pair0: FieldPair, t_span: tuple[float, float]) -> EvolutionRecord:
    """Advance pair0 from t_span[0] to t_span[1], recording snapshots at the cadence."""
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ConfigurationError("t_span must be increasing")
    ui = _u_inf(cfg, pair0)
    dt_max = cfg.dt()
    rec = EvolutionRecord(dt=dt_max)
    n_snap = max(int(np.floor((t1 - t0) / cfg.snapshot_cadence + 1e-9)), 1)
    marks = list(t0 + cfg.snapshot_cadence * np.arange(1, n_snap + 1))
    if marks[-1] < t1 - 1e-12:
        marks.append(t1)
    marks[-1] = t1
    pair, t = pair0, t0
    rec.times.append(t)
    rec.snapshots.append(pair)
    rec.energy_series.append(energy(pair, cfg.k))
    try:
        for mark in marks:
            nsteps = int(np.ceil((mark - t) / dt_max - 1e-9))
            h = (mark - t) / nsteps
            for _ in range(nsteps):
                pair = step(cfg, pair, h, ui)
            rec.steps += nsteps
            t = mark
            rec.times.append(t)
            rec.snapshots.append(pair)
            rec.energy_series.append(energy(pair, cfg.k))
    except InstabilityError as exc:
        rec.stable = False
        rec.message = f"instability near t={t:.6g}: {exc}"
        log.warning(rec.message)
    return rec


def check_resolution(cfg: TowerConfig, grid: RadialGrid, points_per_core: int = 32):
    lam_min = min(cfg.lam)
    if grid.kind == "uniform":
        if lam_min / grid.h < points_per_core:
            raise ConfigurationError(
                f"grid spacing {grid.h:.3g} cannot resolve scale {lam_min:.3g} "
                f"with {points_per_core} points per core")
    elif grid.r_min > 1e-2 * lam_min or grid.r_max < 1e2 * max(cfg.lam):
        raise ConfigurationError("log grid does not cover the bubble scales")


def tower_data(cfg: TowerConfig, grid: RadialGrid) -> FieldPair:
    u = multibubble(cfg, grid.r)
    ud = np.zeros(grid.n)
    for b, s, lam in zip(cfg.b, cfg.iota, cfg.lam):
        ud += b * s * lambda_q(cfg.k, grid.r / lam) / lam
    return FieldPair(grid, u, ud)


def build_initial_data(consts, shooting, nu0, grid: RadialGrid) -> FieldPair:
    """Multi-bubble data at t0 from the shooting parameters."""
    from .tower_ode import stable_manifold_init

    s = stable_manifold_init(consts, shooting, nu0)
    cfg = TowerConfig(consts.k, tuple(s.lam), tuple(s.b))
    check_resolution(cfg, grid)
    return tower_data(cfg, grid)
