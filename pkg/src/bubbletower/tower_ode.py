"""Closed-form tower constants, the formal modulation ODE, its exact
power-law solution, the linearized eigenstructure and the shooting driver.

Internally trajectories are integrated in the time variable tau = log|t|
(decreasing as t increases towards 0).  Bubble j = 1 is carried as
(lambda_1, b_1); bubbles j >= 2 are carried as the relative deviations
nu_j = lambda_j / lambda_j^ex - 1 and nudot_j = b_j / b_j^ex - 1, which are
O(1) even when the scales themselves span tens of decades.  In these
variables the linearized system has constant coefficients:

    d(nu, nudot)/dtau = -A_j (nu, nudot) + (coupling to nu_{j-1}).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .discrete_ops import RadialGrid, quadrature
from .profiles import TowerConfig, check_k, interaction_term, kappa, lambda_q

log = logging.getLogger(__name__)


class DomainError(ValueError):
    pass


class ShootingFailure(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class TowerConstants:
    k: int
    J: int
    alpha: np.ndarray
    gamma: np.ndarray
    kappa: float
    sigma_plus: np.ndarray   # nan at j = 1
    sigma_minus: np.ndarray
    A: list                  # 2x2 matrices, None at j = 1
    P: list
    diag_residual: float

    def as_dict(self) -> dict:
        return {
            "k": self.k, "J": self.J, "kappa": self.kappa,
            "alpha": self.alpha.tolist(), "gamma": self.gamma.tolist(),
            "sigma_plus": [None if np.isnan(x) else float(x) for x in self.sigma_plus],
            "sigma_minus": [None if np.isnan(x) else float(x) for x in self.sigma_minus],
            "A": [None if a is None else a.tolist() for a in self.A],
            "P": [None if p is None else p.tolist() for p in self.P],
            "diag_residual": self.diag_residual,
        }


def constants(k: int, J: int) -> TowerConstants:
    try:
        check_k(k, 3)
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    if J < 1:
        raise DomainError("J must be >= 1")
    kap = kappa(k)
    alpha = np.array([(k / (k - 2)) ** j - 1.0 for j in range(J)])
    gamma = np.ones(J)
    for j in range(1, J):
        a = alpha[j]
        gamma[j] = (kap / (8 * k * k) * a * (a + 1)) ** (1.0 / (k - 2)) * gamma[j - 1] ** (k / (k - 2))
    sp = np.full(J, np.nan)
    sm = np.full(J, np.nan)
    As, Ps = [None], [None]
    res = 0.0
    for j in range(1, J):
        a = alpha[j]
        A = np.array([[-a, a], [(k - 1) * (a + 1), -(a + 1)]])
        disc = np.sqrt((a + 0.5) ** 2 + (k - 2) * a * (a + 1))
        sp[j], sm[j] = -(a + 0.5) + disc, -(a + 0.5) - disc
        P = np.array([[1.0, 1.0], [1 + sp[j] / a, 1 + sm[j] / a]])
        R = A - P @ np.diag([sp[j], sm[j]]) @ np.linalg.inv(P)
        res = max(res, float(np.max(np.abs(R)) / np.max(np.abs(A))))
        As.append(A)
        Ps.append(P)
    return TowerConstants(k, J, alpha, gamma, kap, sp, sm, As, Ps, res)


# ------------------------------------------------------------------- states

@dataclass(frozen=True)
class TowerState:
    t: float
    lam: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class NuState:
    t: float
    lam1: float
    b1: float
    nu: np.ndarray      # entries for j = 2..J
    nudot: np.ndarray
    nuhatdot: Optional[np.ndarray] = None


def _check_t(t):
    if not t < 0:
        raise DomainError("time must be negative")


def exact_solution(c: TowerConstants, t: float) -> TowerState:
    _check_t(t)
    T = abs(t)
    lam = c.gamma * T ** (-c.alpha)
    return TowerState(float(t), lam, -c.alpha * lam / T)


def exact_derivative(c: TowerConstants, t: float) -> TowerState:
    """Closed-form time derivative of the exact solution."""
    _check_t(t)
    T = abs(t)
    lam = c.gamma * T ** (-c.alpha)
    return TowerState(float(t), c.alpha * lam / T, -c.alpha * (c.alpha + 1) * lam / T**2)


def exact_residual(c: TowerConstants, t: float) -> float:
    """Relative residual of the exact solution under the leading right side."""
    rhs = ode_rhs(c, exact_solution(c, t))
    d = exact_derivative(c, t)
    num = np.concatenate([rhs.lam - d.lam, rhs.b - d.b])
    den = np.concatenate([np.abs(d.lam), np.abs(d.b)])
    scale = np.where(den > 0, den, 1.0)
    return float(np.max(np.abs(num) / scale))


def nu_transform(c: TowerConstants, s: TowerState) -> NuState:
    ex = exact_solution(c, s.t)
    nu = s.lam[1:] / ex.lam[1:] - 1.0
    nd = s.b[1:] / ex.b[1:] - 1.0
    return NuState(s.t, float(s.lam[0]), float(s.b[0]), nu, nd)


def nu_inverse(c: TowerConstants, n: NuState) -> TowerState:
    ex = exact_solution(c, n.t)
    lam = np.concatenate([[n.lam1], ex.lam[1:] * (1.0 + np.asarray(n.nu))])
    b = np.concatenate([[n.b1], ex.b[1:] * (1.0 + np.asarray(n.nudot))])
    return TowerState(n.t, lam, b)


def mode_coordinates(c: TowerConstants, nu, nudot) -> tuple[np.ndarray, np.ndarray]:
    """(P_u, P_s) = P^-1 (nu, nudot) for each j >= 2."""
    nu = np.asarray(nu, dtype=float)
    nudot = np.asarray(nudot, dtype=float)
    pu = np.empty(nu.shape)
    ps = np.empty(nu.shape)
    for i in range(nu.shape[-1]):
        Pinv = np.linalg.inv(c.P[i + 1])
        pu[..., i] = Pinv[0, 0] * nu[..., i] + Pinv[0, 1] * nudot[..., i]
        ps[..., i] = Pinv[1, 0] * nu[..., i] + Pinv[1, 1] * nudot[..., i]
    return pu, ps


# ---------------------------------------------------------------- right side

def interaction_inners(cfg: TowerConfig, per_decade: int = 48) -> np.ndarray:
    """<Lambda Q_{;j}, f_i> for all j by one quadrature pass."""
    grid = RadialGrid.log_span(cfg.lam[-1] * 1e-7, cfg.lam[0] * 1e7, per_decade)
    f = interaction_term(cfg, grid.r)
    return np.array([quadrature(grid, s * lambda_q(cfg.k, grid.r / lam) * f)
                     for s, lam in zip(cfg.iota, cfg.lam)])


def _order_check(lam):
    if np.any(np.diff(lam) >= 0) or np.any(np.asarray(lam) <= 0):
        raise DomainError("scales must be positive and strictly decreasing")


def ode_rhs(c: TowerConstants, s: TowerState, mode: str = "leading", iota=None) -> TowerState:
    """(lambda_t, b_t) of the modulation system, returned as a TowerState."""
    lam = np.asarray(s.lam, dtype=float)
    _order_check(lam)
    k = c.k
    bt = np.zeros_like(lam)
    if mode == "leading":
        # in logs: deep towers underflow lam_j^(k-1) long before the ratio does
        ll = np.log(lam)
        bt[1:] = -8 * k * k / c.kappa * np.exp((k - 1) * ll[1:] - k * ll[:-1])
    elif mode == "full_interaction":
        if len(lam) > 1:
            cfg = TowerConfig(k, tuple(lam), iota=tuple(iota) if iota else ())
            bt[1:] = interaction_inners(cfg)[1:] / (c.kappa * lam[1:])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return TowerState(s.t, -np.asarray(s.b, dtype=float), bt)


class _System:
    """Right side in tau = log|t| with y = (lam1, b1, nu_2.., nudot_2..)."""

    def __init__(self, c: TowerConstants, J: int, mode: str, iota=None):
        self.c, self.J, self.mode = c, J, mode
        self.iota = tuple(iota) if iota else tuple((-1) ** j for j in range(J))
        self.alpha = c.alpha[1:J]
        self.ln_gamma = np.log(c.gamma[:J])

    def unpack(self, y):
        m = self.J - 1
        return y[0], y[1], y[2:2 + m], y[2 + m:]

    def lam(self, tau, y):
        lam1, _, nu, _ = self.unpack(y)
        lex = np.exp(self.ln_gamma[1:] - self.c.alpha[1:self.J] * tau)
        return np.concatenate([[lam1], lex * (1.0 + nu)]), lex

    def __call__(self, tau, y):
        lam1, b1, nu, nd = self.unpack(y)
        a = self.alpha
        T = np.exp(tau)
        dy = np.empty_like(y)
        dy[0] = b1 * T
        dy[1] = 0.0
        m = self.J - 1
        if m == 0:
            return dy
        dy[2:2 + m] = a * (nu - nd)
        if self.mode == "leading":
            prev = np.concatenate([[lam1], 1.0 + nu[:-1]])
            k = self.c.k
            g = -(a + 1) * (1.0 + nu) ** (k - 1) / prev**k
        else:
            lam, lex = self.lam(tau, y)
            cfg = TowerConfig(self.c.k, tuple(lam), iota=self.iota)
            ip = interaction_inners(cfg)[1:]
            g = T * T * ip / (self.c.kappa * a * lam[1:] * lex)
        # -|t| b_t / b^ex = -g  (b^ex = -alpha lam^ex / |t|)
        dy[2 + m:] = (a + 1) * (1.0 + nd) + g
        return dy


@dataclass
class Trajectory:
    """Sampled solution; arrays are indexed [time, bubble]."""

    k: int
    t: np.ndarray
    lam: np.ndarray
    b: np.ndarray
    nu: np.ndarray
    nudot: np.ndarray
    P_u: np.ndarray
    P_s: np.ndarray
    status: str = "ok"
    message: str = ""
    exits: list = field(default_factory=list)

    def columns(self) -> tuple[list, np.ndarray]:
        J = self.lam.shape[1]
        names = ["t"] + [f"lambda_{j}" for j in range(1, J + 1)] + [f"b_{j}" for j in range(1, J + 1)]
        names += [f"nu_{j}" for j in range(2, J + 1)] + [f"nudot_{j}" for j in range(2, J + 1)]
        names += [f"P_u_{j}" for j in range(2, J + 1)] + [f"P_s_{j}" for j in range(2, J + 1)]
        data = np.column_stack([self.t, self.lam, self.b, self.nu, self.nudot, self.P_u, self.P_s])
        return names, data


def _pack(c: TowerConstants, s: TowerState) -> np.ndarray:
    n = nu_transform(c, s)
    return np.concatenate([[n.lam1, n.b1], n.nu, n.nudot])


def _trajectory(c: TowerConstants, sysm: _System, taus, Y, status="ok", message="") -> Trajectory:
    J = sysm.J
    t = -np.exp(taus)
    lam = np.empty((len(taus), J))
    b = np.empty((len(taus), J))
    nu = Y[:, 2:1 + J]
    nd = Y[:, 1 + J:]
    for i, tt in enumerate(t):
        s = nu_inverse(c, NuState(tt, Y[i, 0], Y[i, 1], nu[i], nd[i]))
        lam[i], b[i] = s.lam, s.b
    pu, ps = mode_coordinates(c, nu, nd) if J > 1 else (nu, nd)
    return Trajectory(c.k, t, lam, b, nu, nd, pu, ps, status, message)


def _blowdown_events(sysm: _System):
    evs = []
    for j in range(1, sysm.J):
        def ev(tau, y, j=j):
            lam, _ = sysm.lam(tau, y)
            if lam[j] <= 0:
                return -1.0
            return np.log(lam[j - 1] / lam[j])
        ev.terminal = True
        ev.direction = -1
        evs.append(ev)
    return evs


def integrate(c: TowerConstants, state0: TowerState, t_eval: Sequence[float], mode: str = "leading",
              tol: float = 1e-10, iota=None) -> Trajectory:
    """Adaptive DOP853 integration from state0.t through the increasing times t_eval."""
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(t_eval >= 0) or state0.t >= 0 or np.any(np.diff(t_eval) <= 0) or t_eval[0] < state0.t:
        raise DomainError("need state0.t <= t_eval increasing and negative")
    J = len(state0.lam)
    _order_check(state0.lam)
    sysm = _System(c, J, mode, iota)
    tau0 = np.log(-state0.t)
    taus = np.log(-t_eval)
    sol = solve_ivp(sysm, (tau0, taus[-1]), _pack(c, state0), method="DOP853", t_eval=taus,
                    rtol=tol, atol=tol * 1e-2, events=_blowdown_events(sysm) or None)
    status = "ok" if sol.status == 0 else ("blow-down" if sol.status == 1 else "failed")
    n = sol.y.shape[1]
    return _trajectory(c, sysm, taus[:n], sol.y.T, status, sol.message)


# ----------------------------------------------------------------- shooting

@dataclass(frozen=True)
class ShootingConfig:
    k: int = 3
    J: int = 2
    t0: float = -1e4
    T_boot: float = -1e2
    eps: tuple = ()
    bisection_tol: float = 1e-15
    max_iter: int = 60
    rhs_mode: str = "leading"
    ode_tol: float = 1e-10

    def __post_init__(self):
        if not self.t0 < self.T_boot < 0:
            raise DomainError("need t0 < T_boot < 0")
        c = constants(self.k, self.J)
        eps = tuple(self.eps) if self.eps else default_eps(c)
        if len(eps) != self.J + 1:
            raise DomainError("eps must list eps_0..eps_J")
        check_eps(c, eps)
        object.__setattr__(self, "eps", tuple(float(e) for e in eps))
        if self.rhs_mode not in ("leading", "full_interaction"):
            raise DomainError("rhs_mode must be leading or full_interaction")


def default_eps(c: TowerConstants) -> tuple:
    """eps_J = min(sigma_J+, 2/(k-2), 1/2)/2, then eps_{j-1} = min(bound, 1.2 eps_j)."""
    J, k = c.J, c.k

    def bound(j):
        if j == 0:
            return 0.5
        if j == 1:
            return 2.0 / (k - 2)
        return c.sigma_plus[j - 1]

    sJ = c.sigma_plus[J - 1] if J >= 2 else np.inf
    eps = [0.0] * (J + 1)
    eps[J] = 0.5 * min(sJ, 2.0 / (k - 2), 0.5)
    for j in range(J, 0, -1):
        eps[j - 1] = min(0.99 * bound(j - 1), 1.2 * eps[j])
    eps[0] = min(0.49, 1.2 * eps[1]) if J >= 1 else eps[0]
    return tuple(eps)


def check_eps(c: TowerConstants, eps):
    if any(eps[j] <= eps[j + 1] for j in range(len(eps) - 1)):
        raise DomainError("eps must be strictly decreasing")
    if eps[0] >= 0.5 or (len(eps) > 1 and eps[1] >= 2.0 / (c.k - 2)):
        raise DomainError("eps_0 < 1/2 and eps_1 < 2/(k-2) required")
    for j in range(2, len(eps)):
        if eps[j] >= c.sigma_plus[j - 1]:
            raise DomainError(f"eps_{j} must be below sigma_{j},+")


def stable_manifold_init(c: TowerConstants, sh: ShootingConfig, nu0) -> TowerState:
    """Data at t0 with lambda_1 = 1, b_1 = 0 and, for j >= 2, nu_j = nu0_j and
    nudot_j = (1 + sigma_j+/alpha_j) nu0_j, i.e. on the unstable eigenline so
    that the stable coordinate P_s vanishes."""
    nu0 = np.asarray(nu0, dtype=float)
    if len(nu0) != sh.J - 1:
        raise DomainError("nu0 must have J-1 entries")
    T = abs(sh.t0)
    for i, v in enumerate(nu0):
        if abs(v) > T ** (-sh.eps[i + 2]) * (1 + 1e-12):
            raise DomainError(f"nu0_{i + 2} outside the box")
    fac = 1.0 + c.sigma_plus[1:sh.J] / c.alpha[1:sh.J]
    ex = exact_solution(c, sh.t0)
    n = NuState(sh.t0, 1.0, 0.0, nu0, fac * nu0)
    s = nu_inverse(c, n)
    return TowerState(s.t, s.lam, np.concatenate([[0.0], s.b[1:]]))


@dataclass
class Outcome:
    j: Optional[int]          # exiting index (2..J) or None when surviving
    sign: int
    tau: float
    outward: bool
    y_end: np.ndarray


def _run(c: TowerConstants, sh: ShootingConfig, sysm: _System, nu0) -> Outcome:
    """Integrate until the first outward exit from the nu windows."""
    s0 = stable_manifold_init(c, sh, nu0)
    y = _pack(c, s0)
    tau = np.log(-sh.t0)
    tau_end = np.log(-sh.T_boot)
    m = sh.J - 1
    events = []
    for i in range(m):
        e = sh.eps[i + 2]
        for sgn in (1, -1):
            def ev(tt, yy, i=i, e=e, sgn=sgn):
                return np.exp(e * tt) * sgn * yy[2 + i] - 1.0
            ev.terminal = True
            ev.direction = 1
            events.append((ev, i, sgn))
    tangential = 0
    while True:
        sol = solve_ivp(sysm, (tau, tau_end), y, method="DOP853", rtol=sh.ode_tol,
                        atol=sh.ode_tol * 1e-2, events=[e[0] for e in events])
        if sol.status == 0:
            return Outcome(None, 0, tau_end, True, sol.y[:, -1])
        if sol.status < 0:
            raise ShootingFailure(f"integration failed: {sol.message}")
        for idx, (ev, i, sgn) in enumerate(events):
            if sol.t_events[idx].size:
                te, ye = sol.t_events[idx][0], sol.y_events[idx][0]
                break
        # d/dt(|t|^e |nu|) = -d/dtau(e^{e tau} sgn nu) with tau decreasing in t
        e = sh.eps[i + 2]
        dy = sysm(te, ye)
        ddtau = np.exp(e * te) * sgn * (e * ye[2 + i] + dy[2 + i])
        if -ddtau > 0:
            return Outcome(i + 2, sgn, te, True, ye)
        tangential += 1
        if tangential > 20:
            raise ShootingFailure("repeated tangential contacts")
        tau, y = te - 1e-9, ye


@dataclass
class ShootResult:
    nu0_star: np.ndarray
    trajectory: Trajectory
    window_report: dict
    evaluations: int
    history: list
    monotone: bool


def shoot(c: TowerConstants, sh: ShootingConfig, n_samples: int = 201) -> ShootResult:
    """Nested bisection over nu0_2..nu0_J, innermost index innermost."""
    if sh.J == 1:
        traj = integrate(c, exact_solution(c, sh.t0), np.linspace(sh.t0, sh.T_boot, n_samples),
                         sh.rhs_mode, sh.ode_tol)
        return ShootResult(np.zeros(0), traj, window_report(c, sh, traj), 0, [], True)
    sysm = _System(c, sh.J, sh.rhs_mode)
    T0 = abs(sh.t0)
    history: list = []
    counter = [0]
    monotone = [True]

    def evaluate(prefix):
        counter[0] += 1
        return _run(c, sh, sysm, prefix)

    def level(m, prefix):
        """Search nu0_m (and deeper levels); returns (outcome, full nu0)."""
        if m > sh.J:
            return evaluate(prefix), list(prefix)
        w = T0 ** (-sh.eps[m])
        lo, hi = -w, w
        seen: list = []
        x = 0.0
        out = full = None
        for _ in range(sh.max_iter):
            out, full = level(m + 1, prefix + [x])
            history.append({"level": m, "nu0": x, "exit": out.j, "sign": out.sign,
                            "t_exit": -float(np.exp(out.tau))})
            if out.j is None or out.j < m:
                return out, full
            if out.j != m:
                raise ShootingFailure(f"inner level {out.j} not resolved", history)
            seen.append((x, out.sign))
            if not _is_monotone(seen):
                monotone[0] = False
                lo, hi = _grid_scan(lambda v: level(m + 1, prefix + [v])[0], lo, hi, m)
            elif out.sign > 0:
                hi = x
            else:
                lo = x
            if hi - lo <= sh.bisection_tol * w:
                break
            x = 0.5 * (lo + hi)
        raise ShootingFailure(f"bisection budget exhausted at level {m}", history)

    _, nu0 = level(2, [])
    nu0 = np.asarray(nu0)
    ts = -np.geomspace(T0, abs(sh.T_boot), n_samples)
    traj = integrate(c, stable_manifold_init(c, sh, nu0), ts, sh.rhs_mode, sh.ode_tol)
    return ShootResult(nu0, traj, window_report(c, sh, traj), counter[0], history, monotone[0])


def _is_monotone(seen) -> bool:
    neg = [x for x, s in seen if s < 0]
    pos = [x for x, s in seen if s > 0]
    return not neg or not pos or max(neg) < min(pos)


def _grid_scan(f, lo, hi, m, n=33):
    xs = np.linspace(lo, hi, n)
    signs = []
    for x in xs:
        o = f(x)
        signs.append(0 if o.j is None else (o.sign if o.j == m else 0))
    for i in range(n - 1):
        if signs[i] <= 0 <= signs[i + 1] or signs[i] < 0 < signs[i + 1]:
            return xs[i], xs[i + 1]
    raise ShootingFailure("no sign change found in grid scan")


def window_report(c: TowerConstants, sh: ShootingConfig, traj: Trajectory) -> dict:
    """Which of the ODE-level bootstrap bounds hold along the trajectory."""
    T = np.abs(traj.t)
    rep = {
        "reached_T_boot": bool(np.isclose(traj.t[-1], sh.T_boot)),
        "lambda1": bool(np.all(np.abs(traj.lam[:, 0] - 1) <= T ** (-sh.eps[1]))),
        "b1": bool(np.all(np.abs(traj.b[:, 0]) <= 1.0 / T)),
    }
    for j in range(2, traj.lam.shape[1] + 1):
        rep[f"nu_{j}"] = bool(np.all(np.abs(traj.nu[:, j - 2]) <= T ** (-sh.eps[j]) * (1 + 1e-9)))
        rep[f"nudot_{j}"] = bool(np.all(np.abs(traj.nudot[:, j - 2]) <= 1.0))
    rep["all"] = all(rep.values())
    return rep


def exponent_fit(t, quantity) -> tuple[float, float]:
    """Least-squares slope of log|q| against log|t|, and the rms residual."""
    t = np.asarray(t, dtype=float)
    q = np.asarray(quantity, dtype=float)
    if len(q) < 10:
        raise ValueError("need at least 10 samples")
    if np.any(q == 0) or (np.any(q > 0) and np.any(q < 0)):
        raise ValueError("quantity must keep a strict sign")
    x, y = np.log(np.abs(t)), np.log(np.abs(q))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), res
