import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletower.discrete_ops import FieldPair, RadialGrid, hdot2, inner
from bubbletower.functionals import (
    DegenerateSampleError, EnergyMorawetzParams, H_form, H_tower, MorawetzParams, _sin_minus_x,
    coercivity_sample, energy, monotonicity_defect, monotonicity_sample, nonlinear_NL,
    orthogonalize, projector_basis, quadratic_E2, random_smooth, sample_pair, tower_pair,
    validate_energy_morawetz)
from bubbletower.profiles import TowerConfig, lambda_q, multibubble, q_profile

CFG2 = TowerConfig(3, (1.0, 1e-2))


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_energy_of_bubble(k):
    g = RadialGrid.log_span(1e-8, 1e8, 512)
    assert energy(FieldPair(g, q_profile(k, g.r), np.zeros(g.n)), k) == pytest.approx(4 * np.pi * k, rel=1e-8)


def test_energy_uniform_grid():
    g = RadialGrid.uniform(400.0, 40000)
    assert energy(FieldPair(g, q_profile(3, g.r), np.zeros(g.n)), 3) == pytest.approx(12 * np.pi, rel=1e-5)


def test_energy_velocity_part():
    g = RadialGrid.log(1e-4, 1e4, 4096)
    v = np.exp(-np.log(g.r) ** 2)
    e = energy(FieldPair(g, np.zeros(g.n), v), 3)
    assert e == pytest.approx(np.pi * inner(g, v, v), rel=1e-12)


def test_H_form_matches_operator(log_grid):
    g = np.exp(-np.log(log_grid.r / 0.1) ** 2)
    assert H_form(CFG2, log_grid, g) == pytest.approx(inner(log_grid, H_tower(CFG2, log_grid, g), g), rel=1e-6)


def test_H_annihilates_bubble_generators():
    g = RadialGrid.log(1e-4, 1e4, 8192)
    cfg = TowerConfig(3, (1.0,))
    assert np.max(np.abs(H_tower(cfg, g, lambda_q(3, g.r))[4:-4])) < 1e-6


@given(st.floats(0.1, 10.0))
def test_E2_scales_like_inverse_square(mu):
    g = RadialGrid.log(1e-6, 1e6, 8192)
    cfg = TowerConfig(3, (1.0,))
    f = lambda r: np.exp(-np.log(r / 3) ** 2)
    e = quadratic_E2(cfg, FieldPair(g, f(g.r), f(g.r)))
    cs = TowerConfig(3, (mu,))
    es = quadratic_E2(cs, FieldPair(g, f(g.r / mu), f(g.r / mu) / mu))
    assert es == pytest.approx(e / mu**2, rel=1e-6)


@given(st.floats(-0.5, 0.5))
def test_sin_minus_x(x):
    with mpmath.workdps(400):
        ref = float(mpmath.sin(x) - x)
    assert float(_sin_minus_x(np.array([x]))[0]) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_nonlinear_NL_formula_and_order(log_grid):
    r = log_grid.r
    g1 = 1e-2 * np.exp(-np.log(r) ** 2)
    S = np.sin(2 * multibubble(CFG2, r))
    C = np.cos(2 * multibubble(CFG2, r))
    direct = 4.5 / r**2 * ((np.cos(2 * g1) - 1) * S + (np.sin(2 * g1) - 2 * g1) * C)
    assert np.allclose(nonlinear_NL(CFG2, r, g1), direct, atol=1e-12)
    ratio = np.max(np.abs(nonlinear_NL(CFG2, r, g1))) / np.max(np.abs(nonlinear_NL(CFG2, r, g1 / 2)))
    assert ratio == pytest.approx(4.0, rel=0.05)


@given(st.integers(0, 2**32 - 1))
def test_orthogonalize_kills_projections(seed):
    g = RadialGrid.log(1e-6, 1e3, 4096)
    basis = projector_basis(CFG2, g)
    f = orthogonalize(CFG2, g, random_smooth(np.random.default_rng(seed), g, 1e-3, 30), basis)
    Z, _ = basis
    for z in Z:
        assert abs(inner(g, z, f)) < 1e-12


def test_sample_pair_is_normalized(log_grid):
    p = sample_pair(CFG2, log_grid, np.random.default_rng(1))
    assert hdot2(log_grid, p.u, p.udot) == pytest.approx(1.0, rel=1e-12)


def test_monotonicity_deterministic_and_threadsafe():
    g = RadialGrid.log(1e-6, 1e3, 4096)
    a = monotonicity_sample(CFG2, MorawetzParams(), trials=8, seed=3, grid=g)
    b = monotonicity_sample(CFG2, MorawetzParams(), trials=8, seed=3, grid=g, threads=4)
    assert a == b
    assert a.min_ratio > 0


def test_degenerate_sample():
    g = RadialGrid.log(1e-6, 1e3, 512)
    z = np.zeros(g.n)
    with pytest.raises(DegenerateSampleError):
        monotonicity_defect(CFG2, MorawetzParams(), FieldPair(g, z, z))


@pytest.mark.parametrize("which", ["Hdot1", "Hdot2", "A"])
def test_coercivity_positive(which):
    g = RadialGrid.log(1e-6, 1e3, 4096)
    s = coercivity_sample(TowerConfig(3, (1.0,)), which, trials=10, grid=g)
    assert s.min_ratio > 0
    with pytest.raises(ValueError):
        coercivity_sample(TowerConfig(3, (1.0,)), "bogus", trials=1, grid=g)


def test_energy_morawetz_equivalence():
    g = RadialGrid.log(1e-6, 1e3, 4096)
    lo, hi = validate_energy_morawetz(CFG2, EnergyMorawetzParams(), trials=10, grid=g)
    assert 0 < lo <= hi < 100


def test_params_validation():
    with pytest.raises(ValueError):
        MorawetzParams(delta=0.0)
    with pytest.raises(ValueError):
        MorawetzParams(delta0=1.0)


def test_tower_pair(log_grid):
    cfg = TowerConfig(3, (1.0, 0.1), (0.5, -0.2))
    p = tower_pair(cfg, log_grid)
    assert np.allclose(p.udot, 0.5 * lambda_q(3, log_grid.r) - (-0.2) * lambda_q(3, log_grid.r / 0.1) / 0.1)
