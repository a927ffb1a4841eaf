"""Harmonic-map bubbles, multi-bubble superpositions, the interaction
term and the orthogonality profile.

Trigonometric values of Q(y) = 2 arctan(y^k) are evaluated through the
rational forms sin Q = 2s/(1+s^2), cos Q = (1-s^2)/(1+s^2) with s = y^k
(or its reciprocal), so that tails like sin Q ~ 2 y^-k keep full relative
precision far from the bubble core.  This matters for towers whose scales
differ by dozens of decades.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .discrete_ops import RadialGrid, bubble_trig, quadrature


class DegenerateCutoffError(ValueError):
    pass


def check_k(k: int, minimum: int = 2) -> int:
    if int(k) != k or k < minimum:
        raise ValueError(f"equivariance index must be an integer >= {minimum}, got {k}")
    return int(k)


@dataclass(frozen=True)
class TowerConfig:
    """Signs, scales and scale velocities of a multi-bubble."""

    k: int
    lam: tuple
    b: tuple = ()
    iota: tuple = ()

    def __post_init__(self):
        check_k(self.k)
        lam = tuple(float(x) for x in self.lam)
        if not lam:
            raise ValueError("need at least one bubble")
        if any(x <= 0 for x in lam):
            raise ValueError("scales must be positive")
        if any(lam[j] <= lam[j + 1] for j in range(len(lam) - 1)):
            raise ValueError("scales must be strictly decreasing")
        J = len(lam)
        iota = tuple(self.iota) if self.iota else tuple((-1) ** j for j in range(J))
        b = tuple(float(x) for x in self.b) if self.b else (0.0,) * J
        if len(iota) != J or len(b) != J or any(s not in (1, -1) for s in iota):
            raise ValueError("iota and b must have one entry per bubble, iota in {+1,-1}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "iota", tuple(int(s) for s in iota))
        object.__setattr__(self, "b", b)

    @property
    def J(self) -> int:
        return len(self.lam)

    def max_ratio(self) -> float:
        if self.J == 1:
            return 0.0
        return max(self.lam[j] / self.lam[j - 1] for j in range(1, self.J))

    def in_P(self, alpha: float) -> bool:
        """Scale separation: all consecutive ratios below alpha."""
        return self.max_ratio() < alpha

    def replace(self, **kw) -> "TowerConfig":
        d = dict(k=self.k, lam=self.lam, b=self.b, iota=self.iota)
        d.update(kw)
        return TowerConfig(**d)


def q_profile(k: int, r):
    return 2.0 * np.arctan(np.asarray(r, dtype=float) ** k)


def lambda_q(k: int, y):
    """Lambda Q = y Q'(y) = 2k y^k / (1 + y^2k)."""
    s, _ = bubble_trig(k, y)
    return k * s


def kappa(k: int) -> float:
    """||Lambda Q||^2 in L2(r dr), closed form 2 pi / sin(pi/k)."""
    return 2.0 * np.pi / np.sin(np.pi / k)


def multibubble(cfg: TowerConfig, r):
    r = np.asarray(r, dtype=float)
    return sum(s * q_profile(cfg.k, r / lam) for s, lam in zip(cfg.iota, cfg.lam))


def multibubble_trig(cfg: TowerConfig, r):
    """sin and cos of the superposition, built by angle addition."""
    r = np.asarray(r, dtype=float)
    S = np.zeros_like(r)
    C = np.ones_like(r)
    for s, lam in zip(cfg.iota, cfg.lam):
        sq, cq = bubble_trig(cfg.k, r / lam)
        sq = s * sq
        S, C = S * cq + C * sq, C * cq - S * sq
    return S, C


def interaction_D(cfg: TowerConfig, r):
    """sin 2Qsum - sum_j sin 2Q_{;j}, evaluated without cancellation.

    Recursively D_m = D_{m-1} cos 2q - 2 sin^2(S_{m-1}) sin 2q
    - 2 sin^2 q sum_{j<m} sin 2Q_{;j}, where q is the m-th signed bubble.
    """
    r = np.asarray(r, dtype=float)
    S = np.zeros_like(r)
    C = np.ones_like(r)
    D = np.zeros_like(r)
    acc = np.zeros_like(r)
    for s, lam in zip(cfg.iota, cfg.lam):
        sq, cq = bubble_trig(cfg.k, r / lam)
        sq = s * sq
        s2q = 2.0 * sq * cq
        D = D * (1.0 - 2.0 * sq * sq) - 2.0 * S * S * s2q - 2.0 * sq * sq * acc
        acc = acc + s2q
        S, C = S * cq + C * sq, C * cq - S * sq
    return D


def interaction_term(cfg: TowerConfig, r):
    """f_i = -(k^2/r^2) {f(Qsum) - sum_j f(Q_{;j})}, f(u) = sin(2u)/2."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    if cfg.J == 1:
        return out
    ok = r > 1e-8 * cfg.lam[-1]
    out[ok] = -0.5 * cfg.k**2 * interaction_D(cfg, r[ok]) / r[ok] ** 2
    return out


def interaction_grid(cfg: TowerConfig, per_decade: int = 64) -> RadialGrid:
    return RadialGrid.log_span(cfg.lam[-1] * 1e-7, cfg.lam[0] * 1e7, per_decade)


def interaction_inner(cfg: TowerConfig, j: int, grid: RadialGrid | None = None) -> float:
    """<Lambda Q_{;j}, f_i> over (0, inf); j is 1-based."""
    grid = grid or interaction_grid(cfg)
    lam, s = cfg.lam[j - 1], cfg.iota[j - 1]
    return quadrature(grid, s * lambda_q(cfg.k, grid.r / lam) * interaction_term(cfg, grid.r))


def interaction_leading(cfg: TowerConfig, j: int, sign: str = "corrected") -> float:
    """Leading-order prediction for ``interaction_inner`` at index j >= 2.

    ``corrected`` uses +iota_{j-1} iota_j 8k^2 (what quadrature confirms);
    ``printed`` uses the opposite sign.
    """
    k = cfg.k
    c = cfg.iota[j - 2] * cfg.iota[j - 1] * 8 * k * k * (cfg.lam[j - 1] / cfg.lam[j - 2]) ** k
    return c if sign == "corrected" else -c


def residue_integral(k: int, grid: RadialGrid | None = None) -> float:
    """int_0^inf (Lambda Q)^3 4 y^-k dy / y, equal to 8k^2."""
    grid = grid or RadialGrid.log_span(1e-8, 1e8, 128)
    y = grid.r
    with np.errstate(divide="ignore"):
        f = lambda_q(k, y) ** 3 * 4.0 * y ** (-k) / y**2
    return quadrature(grid, f)


def kappa_quadrature(k: int, grid: RadialGrid | None = None) -> tuple[float, float]:
    """Quadrature of ||Lambda Q||^2 and an upper bound for the truncated tails."""
    grid = grid or RadialGrid.log_span(1e-8, 1e8, 128)
    val = quadrature(grid, lambda_q(k, grid.r) ** 2)
    lo, hi = grid.domain()
    # (Lambda Q)^2 <= 4k^2 y^{2k} near 0 and 4k^2 y^{-2k} near infinity
    tail = 4 * k * k * (lo ** (2 * k + 2) / (2 * k + 2) + hi ** (2 - 2 * k) / (2 * k - 2))
    return val, tail


def cutoff(r):
    """Smooth step: 1 on r <= 1, 0 on r >= 2."""
    x = 2.0 - np.asarray(r, dtype=float)

    def h(z):
        with np.errstate(divide="ignore"):
            return np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)

    a, b = h(x), h(1.0 - x)
    return np.where(x >= 1, 1.0, np.where(x <= 0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def dcutoff(r):
    """Derivative of ``cutoff`` in r."""
    r = np.asarray(r, dtype=float)
    x = 2.0 - r
    out = np.zeros_like(r)
    m = (x > 0) & (x < 1)
    xm = x[m]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    da = a / xm**2
    db = -b / (1.0 - xm) ** 2
    dS = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    out[m] = -dS
    return out


@lru_cache(maxsize=None)
def _cutoff_norm(k: int) -> float:
    g = RadialGrid.log_span(1e-8, 2.0, 400)
    val = quadrature(g, cutoff(g.r) * lambda_q(k, g.r) ** 2)
    if val < 1e-12:
        raise DegenerateCutoffError("normalization integral vanishes")
    return val


def orthogonality_profile(k: int, y, variant: str = "cutoff", allow_pure: bool = False):
    """Z with <Z, Lambda Q> = 1."""
    y = np.asarray(y, dtype=float)
    if variant == "cutoff":
        return cutoff(y) * lambda_q(k, y) / _cutoff_norm(k)
    if variant == "pure":
        if k < 4 and not allow_pure:
            raise ValueError("pure variant needs k >= 4 (pass allow_pure to override)")
        return lambda_q(k, y) / kappa(k)
    raise ValueError(f"unknown variant {variant!r}")


def orthogonality_Lambda_m1(k: int, y, variant: str = "cutoff", allow_pure: bool = False):
    """(y d_y + 2) Z, used by the decomposition Jacobian."""
    y = np.asarray(y, dtype=float)
    s, c = bubble_trig(k, y)
    lq = k * s
    ylq = k * lq * c  # y d_y Lambda Q = k Lambda Q cos Q
    if variant == "cutoff":
        chi = cutoff(y)
        val = y * dcutoff(y) * lq + chi * ylq + 2.0 * chi * lq
        return val / _cutoff_norm(k)
    if k < 4 and not allow_pure:
        raise ValueError("pure variant needs k >= 4 (pass allow_pure to override)")
    return (ylq + 2.0 * lq) / kappa(k)


def bubble_overlap(k: int, lam_in: float, lam_out: float, per_decade: int = 128) -> float:
    """|| Lambda Q_{lam_in} Lambda Q_{lam_out} / (lam_in lam_out) ||_{L1(r dr)}."""
    if not 0 < lam_in <= lam_out:
        raise ValueError("need 0 < lam_in <= lam_out")
    g = RadialGrid.log_span(lam_in * 1e-8, lam_out * 1e8, per_decade)
    f = lambda_q(k, g.r / lam_in) * lambda_q(k, g.r / lam_out) / (lam_in * lam_out)
    return quadrature(g, np.abs(f))


def scaled(fn, k: int, lam: float, sign: int, r):
    """phi_{;j}(r) = sign * phi(r / lam)."""
    return sign * fn(k, np.asarray(r, dtype=float) / lam)


def bubble_sequence(cfg: TowerConfig) -> Sequence[tuple[int, float]]:
    return list(zip(cfg.iota, cfg.lam))
