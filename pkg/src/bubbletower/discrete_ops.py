"""Radial grids, quadrature for the r dr measure, finite differences,
linearized operators around bubbles and the norms used throughout.

Two grid kinds are supported.  ``log`` grids are uniform in s = log r and
are used for functionals, decompositions and quadrature of profiles that
span many decades of scale.  ``uniform`` grids are cell centred,
r_i = (i + 1/2) h, and are used by the PDE solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

# Gregory end-correction coefficients (trapezoid + difference corrections).
_GREGORY = (1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0)


class CapabilityError(ValueError):
    """Requested quantity needs more derivatives than the stencils provide."""


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg's algorithm: weights c[d, j] for the d-th derivative at z
    from nodes x, for d = 0..m."""
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for d in range(mn, 0, -1):
                    c[d, i] = c1 * (d * c[d - 1, i - 1] - c5 * c[d, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for d in range(mn, 0, -1):
                c[d, j] = (c4 * c[d, j] - d * c[d - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


# 5-point central stencils and 6-point off-centre stencils for the two
# nodes nearest each edge; all are 4th order for first and second derivatives.
_CENTRAL = fd_weights(0.0, np.arange(-2.0, 3.0), 2)
_EDGE = [fd_weights(float(i), np.arange(6.0), 2) for i in range(2)]
STENCIL_ORDER = 4


def _diff_uniform(f: np.ndarray, h: float, d: int, left_ghost=None) -> np.ndarray:
    """d-th derivative (d = 1, 2) of samples on a uniform mesh of step h.

    ``left_ghost`` optionally supplies the two values at indices -2, -1, in
    which case the central stencil is used up to the left edge.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if n < 6:
        raise ValueError("need at least 6 nodes")
    if left_ghost is not None:
        ext = np.concatenate([np.asarray(left_ghost, dtype=float), f])
        off = 2
    else:
        ext, off = f, 0
    out = np.empty_like(f)
    w = _CENTRAL[d]
    lo = 0 if left_ghost is not None else 2
    hi = n - 2
    acc = np.zeros(hi - lo)
    for j, wj in enumerate(w):
        acc += wj * ext[lo + off - 2 + j: hi + off - 2 + j]
    out[lo:hi] = acc
    if left_ghost is None:
        for i in range(2):
            out[i] = _EDGE[i][d] @ f[:6]
    for i in range(2):
        # mirror the left-edge stencil onto the right edge
        wr = _EDGE[i][d][::-1] * (-1.0) ** d
        out[n - 1 - i] = wr @ f[n - 6:]
    return out / h**d


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Discretization of r in (0, R] with weights for the r dr measure."""

    kind: str
    r_min: float
    r_max: float
    n: int
    r: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    h: float

    @classmethod
    def log(cls, r_min: float = 1e-6, r_max: float = 1e3, n: int = 8192) -> "RadialGrid":
        if not 0 < r_min < r_max or n < 8:
            raise ValueError("invalid log grid")
        s = np.linspace(np.log(r_min), np.log(r_max), n)
        h = float(s[1] - s[0])
        r = np.exp(s)
        r[0], r[-1] = r_min, r_max
        w = gregory_factors(n) * h * r * r
        return cls("log", float(r_min), float(r_max), int(n), r, w, h)

    @classmethod
    def log_span(cls, lo: float, hi: float, per_decade: int = 64) -> "RadialGrid":
        n = max(int(np.ceil(np.log10(hi / lo) * per_decade)) + 1, 16)
        return cls.log(lo, hi, n)

    @classmethod
    def uniform(cls, radius: float, n: int) -> "RadialGrid":
        """Cell-centred grid on (0, radius]; midpoint weights integrate
        polynomials in r exactly up to degree 1 over [0, radius]."""
        if radius <= 0 or n < 8:
            raise ValueError("invalid uniform grid")
        h = radius / n
        r = (np.arange(n) + 0.5) * h
        return cls("uniform", float(r[0]), float(r[-1]), int(n), r, r * h, float(h))

    @classmethod
    def from_header(cls, kind: str, r_min: float, r_max: float, n: int) -> "RadialGrid":
        if kind == "log":
            return cls.log(r_min, r_max, n)
        if kind == "uniform":
            h = (r_max - r_min) / (n - 1)
            return cls.uniform(h * n, n)
        raise ValueError(f"unknown grid kind {kind!r}")

    def header(self) -> dict:
        return {"kind": self.kind, "r_min": self.r_min, "r_max": self.r_max, "n": self.n}

    def domain(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return 0.0, self.r_max + 0.5 * self.h
        return self.r_min, self.r_max


def gregory_factors(n: int) -> np.ndarray:
    """Trapezoid factors with Gregory corrections (exact to cubic order)."""
    c = np.ones(n)
    c[0] = c[-1] = 0.5
    for j, g in enumerate(_GREGORY, start=1):
        for i in range(j + 1):
            fwd = (-1) ** (j - i) * comb(j, i)
            bwd = (-1) ** i * comb(j, i)
            c[-1 - i] -= g * bwd
            c[i] -= g * (-1) ** j * fwd
    return c


@dataclass(frozen=True, eq=False)
class FieldPair:
    """State (u, udot) on a shared grid."""

    grid: RadialGrid
    u: np.ndarray
    udot: np.ndarray

    def __post_init__(self):
        if len(self.u) != self.grid.n or len(self.udot) != self.grid.n:
            raise ValueError("field length does not match grid")


def quadrature(grid: RadialGrid, f) -> float:
    """Integral of f against r dr."""
    return float(np.dot(grid.weights, f))


def inner(grid: RadialGrid, f, g) -> float:
    return float(np.dot(grid.weights, np.asarray(f) * np.asarray(g)))


def _ghost(grid: RadialGrid, f: np.ndarray, parity):
    if grid.kind == "uniform" and parity is not None:
        return [parity * f[1], parity * f[0]]
    return None


def d_dr(grid: RadialGrid, f, parity=None) -> np.ndarray:
    """First radial derivative.  ``parity`` (+1/-1) enables the reflection
    u(-r) = parity*u(r) at the origin of uniform grids; for a field behaving
    like r^k use parity = (-1)**k."""
    f = np.asarray(f, dtype=float)
    if grid.kind == "log":
        return _diff_uniform(f, grid.h, 1) / grid.r
    return _diff_uniform(f, grid.h, 1, _ghost(grid, f, parity))


def d2_dr2(grid: RadialGrid, f, parity=None) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if grid.kind == "log":
        fs = _diff_uniform(f, grid.h, 1)
        fss = _diff_uniform(f, grid.h, 2)
        return (fss - fs) / grid.r**2
    return _diff_uniform(f, grid.h, 2, _ghost(grid, f, parity))


def d_dr_n(grid: RadialGrid, f, order: int) -> np.ndarray:
    if order == 0:
        return np.asarray(f, dtype=float)
    if order == 1:
        return d_dr(grid, f)
    if order == 2:
        return d2_dr2(grid, f)
    return d_dr_n(grid, d2_dr2(grid, f), order - 2)


# ---------------------------------------------------------------- operators

def _check_scale(lam: float):
    if not lam > 0:
        raise ValueError("scale must be positive")


def bubble_trig(k: int, y) -> tuple[np.ndarray, np.ndarray]:
    """(sin Q(y), cos Q(y)) by rational formulas, accurate for tiny and huge y."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        p = np.where(y <= 1.0, y, 1.0 / y) ** k
        d = 1.0 + p * p
        s = 2.0 * p / d
        c = (1.0 - p * p) / d
    c = np.where(y <= 1.0, c, -c)
    return s, c


def H_of_U(grid: RadialGrid, U, g, k: int) -> np.ndarray:
    """H_U g = -g'' - g'/r + k^2 cos(2U) g / r^2."""
    r = grid.r
    return -d2_dr2(grid, g) - d_dr(grid, g) / r + k * k * np.cos(2.0 * np.asarray(U)) * g / r**2


def H_scaled(grid: RadialGrid, g, k: int, lam: float = 1.0) -> np.ndarray:
    _check_scale(lam)
    s, c = bubble_trig(k, grid.r / lam)
    r = grid.r
    return -d2_dr2(grid, g) - d_dr(grid, g) / r + k * k * (c * c - s * s) * g / r**2


def A_scaled(grid: RadialGrid, g, k: int, lam: float = 1.0) -> np.ndarray:
    """A_lam g = -g' + k cos(Q_lam) g / r."""
    _check_scale(lam)
    _, c = bubble_trig(k, grid.r / lam)
    return -d_dr(grid, g) + k * c * g / grid.r


def Astar_scaled(grid: RadialGrid, g, k: int, lam: float = 1.0) -> np.ndarray:
    """A*_lam g = g' + (1 + k cos Q_lam) g / r."""
    _check_scale(lam)
    _, c = bubble_trig(k, grid.r / lam)
    return d_dr(grid, g) + (1.0 + k * c) * g / grid.r


def Vtilde(k: int, y) -> np.ndarray:
    _, c = bubble_trig(k, y)
    return k * k + 1.0 + 2.0 * k * c


def Htilde_scaled(grid: RadialGrid, g, k: int, lam: float = 1.0) -> np.ndarray:
    """A A* = -d_rr - d_r / r + Vtilde(r/lam) / r^2."""
    _check_scale(lam)
    r = grid.r
    return -d2_dr2(grid, g) - d_dr(grid, g) / r + Vtilde(k, r / lam) * g / r**2


@dataclass(frozen=True)
class PsiParams:
    delta_prime: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta_prime <= 0.2:
            raise ValueError("delta_prime must lie in (0, 0.2]")


def psi(y, p: PsiParams = PsiParams()) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    q = 1.0 + y * y
    return y / np.sqrt(q) - p.delta_prime * y / q


def dpsi(y, p: PsiParams = PsiParams()) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    q = 1.0 + y * y
    return q**-1.5 - p.delta_prime * (1.0 - y * y) / (q * q)


def Lambda_psi(grid: RadialGrid, g, lam: float = 1.0, p: PsiParams = PsiParams()) -> np.ndarray:
    """psi_lam g' + (psi_lam' + psi_lam / r) g / 2, an anti-symmetric operator."""
    _check_scale(lam)
    r = grid.r
    y = r / lam
    ps = psi(y, p)
    return ps * d_dr(grid, g) + 0.5 * (dpsi(y, p) / lam + ps / r) * g


def Lambda_s(grid: RadialGrid, g, s: float) -> np.ndarray:
    """(r d_r + 1 - s) g."""
    return grid.r * d_dr(grid, g) + (1.0 - s) * np.asarray(g)


_OPERATORS = {
    "H_scaled": H_scaled,
    "A_scaled": A_scaled,
    "Astar_scaled": Astar_scaled,
    "Htilde_scaled": Htilde_scaled,
}


def apply_operator(kind: str, grid: RadialGrid, g, *, k: int = 3, lam: float = 1.0,
                   background=None, s: float = 0.0, psi_params: PsiParams = PsiParams()):
    """Dispatch by operator tag."""
    if kind == "H_of_U":
        return H_of_U(grid, background, g, k)
    if kind in _OPERATORS:
        return _OPERATORS[kind](grid, g, k, lam)
    if kind == "Lambda_psi_scaled":
        return Lambda_psi(grid, g, lam, psi_params)
    if kind == "Lambda_s":
        return Lambda_s(grid, g, s)
    raise ValueError(f"unknown operator {kind!r}")


# -------------------------------------------------------------------- norms

def _minus_one_sq(grid, g, parity=None):
    return d_dr(grid, g, parity) ** 2 + (np.asarray(g) / grid.r) ** 2


def hdot1(grid: RadialGrid, g, gdot=None, parity=None) -> float:
    """Energy norm; with ``gdot`` the pair norm including the L2 velocity."""
    val = quadrature(grid, _minus_one_sq(grid, g, parity))
    if gdot is not None:
        val += quadrature(grid, np.asarray(gdot) ** 2)
    return float(np.sqrt(val))


def hdot2(grid: RadialGrid, g, gdot=None, parity=None) -> float:
    """||d_rr g||^2 + ||d_r g / r||^2 + ||g / r^2||^2 (+ Hdot1 of gdot)."""
    r = grid.r
    g = np.asarray(g, dtype=float)
    gr = d_dr(grid, g, parity)
    val = quadrature(grid, d2_dr2(grid, g, parity) ** 2 + (gr / r) ** 2 + (g / r**2) ** 2)
    if gdot is not None:
        p2 = None if parity is None else -parity
        val += quadrature(grid, _minus_one_sq(grid, gdot, p2))
    return float(np.sqrt(val))


def l2(grid: RadialGrid, g) -> float:
    return float(np.sqrt(quadrature(grid, np.asarray(g) ** 2)))


def weighted_minus_ell(grid: RadialGrid, g, ell: int) -> float:
    """(int |d^ell g|^2 + |r^-1 d^(ell-1) g|^2 + ... + |r^-ell g|^2)^(1/2)."""
    if ell < 0 or ell > 3:
        raise CapabilityError("weighted norm supported for ell <= 3 only")
    acc = np.zeros(grid.n)
    for m in range(ell + 1):
        acc += (d_dr_n(grid, g, ell - m) / grid.r**m) ** 2
    return float(np.sqrt(quadrature(grid, acc)))


def mor_sq(grid: RadialGrid, g, gdot, lam: float) -> float:
    """Square of the localized Morawetz norm at scale lam."""
    _check_scale(lam)
    r = grid.r
    y = r / lam
    num = d2_dr2(grid, g) ** 2 + _minus_one_sq(grid, gdot)
    dens = num / ((lam + r) * (1.0 + y)) + _minus_one_sq(grid, g) / (r * r * (lam + r))
    return quadrature(grid, dens)


def mor_norm(grid: RadialGrid, g, gdot, lams, delta0: float) -> float:
    tot = sum(delta0**j * mor_sq(grid, g, gdot, lam) for j, lam in enumerate(lams))
    return float(np.sqrt(tot))


def norm(kind: str, grid: RadialGrid, g, gdot=None, **kw) -> float:
    if kind == "Hdot1_k":
        return hdot1(grid, g, gdot)
    if kind == "Hdot2_k":
        return hdot2(grid, g, gdot)
    if kind == "L2":
        return l2(grid, g)
    if kind == "Mor":
        gd = np.zeros(grid.n) if gdot is None else gdot
        return mor_norm(grid, g, gd, kw["lams"], kw.get("delta0", 0.1))
    if kind == "weighted_minus_ell":
        return weighted_minus_ell(grid, g, kw["ell"])
    raise ValueError(f"unknown norm {kind!r}")


def resample(values, src: RadialGrid, dst: RadialGrid, k: int = 0) -> np.ndarray:
    """Monotone cubic resampling.  Below the source range the field is
    continued as c r^k, above it is held at its last value."""
    from scipy.interpolate import PchipInterpolator

    values = np.asarray(values, dtype=float)
    out = PchipInterpolator(src.r, values, extrapolate=False)(dst.r)
    lo = dst.r < src.r[0]
    out[lo] = values[0] * (dst.r[lo] / src.r[0]) ** k
    out[dst.r > src.r[-1]] = values[-1]
    return out
