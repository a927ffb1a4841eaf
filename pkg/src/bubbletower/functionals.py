"""Energy, the second-order energy E2, Morawetz functionals, the
energy-Morawetz functional I, the nonlinear term NL and sampling probes
for coercivity and monotonicity.

All functionals act on remainders ``FieldPair(grid, g, gdot)`` placed
around a multi-bubble ``TowerConfig``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import discrete_ops as ops
from .discrete_ops import FieldPair, PsiParams, RadialGrid, inner, quadrature
from .profiles import TowerConfig, lambda_q, multibubble, multibubble_trig, orthogonality_profile


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class MorawetzParams:
    delta: float = 0.1
    delta0: float = 0.1
    psi: PsiParams = field(default_factory=PsiParams)

    def __post_init__(self):
        if not 0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 0.5]")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")


@dataclass(frozen=True)
class EnergyMorawetzParams:
    delta_tilde: float = 0.05
    mor: MorawetzParams = field(default_factory=MorawetzParams)


def _parity(grid: RadialGrid, k: int):
    return (-1) ** k if grid.kind == "uniform" else None


def energy(pair: FieldPair, k: int) -> float:
    """2 pi int (udot^2 + u_r^2 + k^2 sin^2 u / r^2) / 2 r dr."""
    g = pair.grid
    ur = ops.d_dr(g, pair.u, _parity(g, k))
    dens = 0.5 * (pair.udot**2 + ur**2 + k * k * np.sin(pair.u) ** 2 / g.r**2)
    return 2.0 * np.pi * quadrature(g, dens)


def H_tower(cfg: TowerConfig, grid: RadialGrid, g) -> np.ndarray:
    """Linearized operator around the multi-bubble, cos 2Q from exact trig."""
    S, _ = multibubble_trig(cfg, grid.r)
    r = grid.r
    return -ops.d2_dr2(grid, g) - ops.d_dr(grid, g) / r + cfg.k**2 * (1.0 - 2.0 * S * S) * g / r**2


def H_form(cfg: TowerConfig, grid: RadialGrid, g) -> float:
    """<H g, g> in the integrated-by-parts form."""
    S, _ = multibubble_trig(cfg, grid.r)
    gr = ops.d_dr(grid, g)
    return quadrature(grid, gr**2 + cfg.k**2 * (1.0 - 2.0 * S * S) * g**2 / grid.r**2)


def quadratic_E2(cfg: TowerConfig, g: FieldPair) -> float:
    """<H g, H g> + <gdot, H gdot>."""
    Hg = H_tower(cfg, g.grid, g.u)
    return quadrature(g.grid, Hg * Hg) + H_form(cfg, g.grid, g.udot)


def morawetz_M0(lam: float, k: int, params: MorawetzParams, g: FieldPair) -> float:
    """<A gdot, Lambda_psi A g> - delta <A gdot, lam (r+lam)^-2 A g>."""
    grid = g.grid
    Ag = ops.A_scaled(grid, g.u, k, lam)
    Agd = ops.A_scaled(grid, g.udot, k, lam)
    w = lam / (grid.r + lam) ** 2
    return inner(grid, Agd, ops.Lambda_psi(grid, Ag, lam, params.psi) - params.delta * w * Ag)


def morawetz_M(cfg: TowerConfig, params: MorawetzParams, g: FieldPair) -> float:
    return sum(params.delta0**j * morawetz_M0(lam, cfg.k, params, g)
               for j, lam in enumerate(cfg.lam))


@dataclass(frozen=True)
class DefectRecord:
    lhs: float
    mor_sq: float
    ratio: float


def monotonicity_defect(cfg: TowerConfig, params: MorawetzParams, g: FieldPair) -> DefectRecord:
    """lhs = -{M[g, -H g] + M[gdot, gdot]}, normalized by the Morawetz norm."""
    grid = g.grid
    mHg = -H_tower(cfg, grid, g.u)
    lhs = -(morawetz_M(cfg, params, FieldPair(grid, g.u, mHg))
            + morawetz_M(cfg, params, FieldPair(grid, g.udot, g.udot)))
    msq = sum(params.delta0**j * ops.mor_sq(grid, g.u, g.udot, lam) for j, lam in enumerate(cfg.lam))
    if msq < 1e-28:
        raise DegenerateSampleError("Morawetz norm vanishes")
    return DefectRecord(lhs, msq, lhs / msq)


def energy_morawetz_I(cfg: TowerConfig, params: EnergyMorawetzParams, g: FieldPair) -> float:
    val = quadratic_E2(cfg, g)
    if params.delta_tilde:
        val += params.delta_tilde * morawetz_M(cfg, params.mor, g)
    return val


def _sin_minus_x(x):
    """sin x - x without cancellation for small |x| (series below 0.1)."""
    x = np.asarray(x, dtype=float)
    out = np.sin(x) - x
    m = np.abs(x) < 0.1
    x2 = x[m] ** 2
    out[m] = -x[m] * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    return out


def nonlinear_NL(cfg: TowerConfig, r, g) -> np.ndarray:
    """(k^2/2r^2)((cos 2g - 1) sin 2Q + (sin 2g - 2g) cos 2Q)."""
    r = np.asarray(r, dtype=float)
    g = np.asarray(g, dtype=float)
    S, C = multibubble_trig(cfg, r)
    sin2Q = 2.0 * S * C
    cos2Q = 1.0 - 2.0 * S * S
    val = -2.0 * np.sin(g) ** 2 * sin2Q + _sin_minus_x(2.0 * g) * cos2Q
    return 0.5 * cfg.k**2 * val / r**2


# ---------------------------------------------------------------- sampling

def projector_basis(cfg: TowerConfig, grid: RadialGrid):
    """Columns Z_{;i} (cutoff variant) and Lambda Q_{;j} on the grid."""
    Z = np.array([s * orthogonality_profile(cfg.k, grid.r / lam) for s, lam in zip(cfg.iota, cfg.lam)])
    L = np.array([s * lambda_q(cfg.k, grid.r / lam) for s, lam in zip(cfg.iota, cfg.lam)])
    return Z, L


def orthogonalize(cfg: TowerConfig, grid: RadialGrid, g, basis=None) -> np.ndarray:
    """Remove a combination of Lambda Q_{;j} so that <Z_{;i}, g> = 0 for all i."""
    Z, L = basis if basis is not None else projector_basis(cfg, grid)
    W = Z * grid.weights
    G = W @ L.T
    c = np.linalg.solve(G, W @ np.asarray(g, dtype=float))
    return np.asarray(g, dtype=float) - c @ L


def random_smooth(rng: np.random.Generator, grid: RadialGrid, lo: float, hi: float,
                  n_bumps: int = 4, widths=(0.25, 0.9)) -> np.ndarray:
    """Superposition of Gaussians in log r with centres log-uniform in [lo, hi]."""
    s = np.log(grid.r)
    c = rng.uniform(np.log(lo), np.log(hi), n_bumps)
    w = rng.uniform(*widths, n_bumps)
    a = rng.standard_normal(n_bumps)
    return (a[:, None] * np.exp(-0.5 * ((s[None, :] - c[:, None]) / w[:, None]) ** 2)).sum(0)


def sample_pair(cfg: TowerConfig, grid: RadialGrid, rng, basis=None, lo=None, hi=None,
                n_bumps: int = 8, widths=(0.25, 0.9)) -> FieldPair:
    """Orthogonalized random pair normalized to unit Hdot2 pair norm."""
    lo = cfg.lam[-1] * 0.1 if lo is None else lo
    hi = cfg.lam[0] * 30.0 if hi is None else hi
    g = orthogonalize(cfg, grid, random_smooth(rng, grid, lo, hi, n_bumps, widths), basis)
    gd = orthogonalize(cfg, grid, random_smooth(rng, grid, lo, hi, n_bumps, widths), basis)
    nrm = ops.hdot2(grid, g, gd)
    return FieldPair(grid, g / nrm, gd / nrm)


def _seeded(seed: int, trials: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class SampleSummary:
    min_ratio: float
    argmin: int
    ratios: tuple


def monotonicity_sample(cfg: TowerConfig, params: MorawetzParams, trials: int = 100, seed: int = 0,
                        grid: RadialGrid | None = None, threads: int = 1, **kw) -> SampleSummary:
    grid = grid or RadialGrid.log()
    basis = projector_basis(cfg, grid)

    def one(rng):
        return monotonicity_defect(cfg, params, sample_pair(cfg, grid, rng, basis, **kw)).ratio

    ratios = _map(one, _seeded(seed, trials), threads)
    i = int(np.argmin(ratios))
    return SampleSummary(float(ratios[i]), i, tuple(float(x) for x in ratios))


def coercivity_sample(cfg: TowerConfig, which: str = "Hdot1", trials: int = 100, seed: int = 0,
                      grid: RadialGrid | None = None, threads: int = 1, **kw) -> SampleSummary:
    """Sampled lower bound of a quadratic form over an orthogonalized class.

    which: ``Hdot1`` <H g, g>/||g||^2_Hdot1, ``Hdot2`` <Hg, Hg>/||g||^2_Hdot2,
    ``A`` min_j int |A_j g|^2 (1+y_j)^-2 / int |g|^2_{-1} (1+y_j)^-2.
    """
    grid = grid or RadialGrid.log()
    basis = projector_basis(cfg, grid)
    r = grid.r

    def one(rng):
        g = sample_pair(cfg, grid, rng, basis, **kw).u
        if which == "Hdot1":
            return H_form(cfg, grid, g) / ops.hdot1(grid, g) ** 2
        if which == "Hdot2":
            Hg = H_tower(cfg, grid, g)
            return quadrature(grid, Hg * Hg) / ops.hdot2(grid, g) ** 2
        if which == "A":
            den = ops.d_dr(grid, g) ** 2 + (g / r) ** 2
            vals = []
            for lam in cfg.lam:
                wgt = (1.0 + r / lam) ** -2
                vals.append(quadrature(grid, ops.A_scaled(grid, g, cfg.k, lam) ** 2 * wgt)
                            / quadrature(grid, den * wgt))
            return min(vals)
        raise ValueError(f"unknown form {which!r}")

    ratios = _map(one, _seeded(seed, trials), threads)
    i = int(np.argmin(ratios))
    return SampleSummary(float(ratios[i]), i, tuple(float(x) for x in ratios))


def validate_energy_morawetz(cfg: TowerConfig, params: EnergyMorawetzParams, trials: int = 20,
                             seed: int = 0, grid: RadialGrid | None = None) -> tuple[float, float]:
    """Range of I / ||g||^2_Hdot2 over orthogonalized samples (unit norm)."""
    grid = grid or RadialGrid.log()
    basis = projector_basis(cfg, grid)
    vals = [energy_morawetz_I(cfg, params, sample_pair(cfg, grid, rng, basis))
            for rng in _seeded(seed, trials)]
    return float(min(vals)), float(max(vals))


def tower_pair(cfg: TowerConfig, grid: RadialGrid) -> FieldPair:
    """(Qsum, sum_j b_j Lambda Q_{;j}/lam_j) sampled on the grid."""
    u = multibubble(cfg, grid.r)
    ud = sum(b * s * lambda_q(cfg.k, grid.r / lam) / lam for b, s, lam in zip(cfg.b, cfg.iota, cfg.lam))
    return FieldPair(grid, u, np.asarray(ud, dtype=float) + np.zeros(grid.n))
