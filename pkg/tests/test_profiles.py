import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletower.discrete_ops import RadialGrid, quadrature
from bubbletower.profiles import (
    TowerConfig, bubble_overlap, cutoff, dcutoff, interaction_D, interaction_inner,
    interaction_leading, interaction_term, kappa, kappa_quadrature, lambda_q, multibubble,
    multibubble_trig, orthogonality_Lambda_m1, orthogonality_profile, q_profile, residue_integral)

ks = st.integers(2, 6)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_kappa_matches_closed_form(k):
    val, tail = kappa_quadrature(k)
    assert abs(val / kappa(k) - 1) < 1e-12
    assert tail < 1e-12


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_residue_integral(k):
    assert abs(residue_integral(k) / (8 * k * k) - 1) < 1e-10


@given(ks, st.floats(1e-6, 1e6))
def test_lambda_q_is_k_sin_q(k, y):
    assert abs(lambda_q(k, y) - k * np.sin(q_profile(k, y))) < 1e-13


@given(ks, st.floats(1e-3, 1e3))
def test_lambda_q_is_scaling_derivative(k, y):
    h = 1e-5
    fd = (q_profile(k, y * np.exp(h)) - q_profile(k, y * np.exp(-h))) / (2 * h)
    assert lambda_q(k, y) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_tail_keeps_relative_precision():
    # naive sin(2 arctan(y^3)) loses everything at y = 1e8
    y = 1e8
    assert lambda_q(3, y) == pytest.approx(6 * y**-3, rel=1e-14)


@given(st.integers(2, 5), st.lists(st.floats(0.05, 20.0), min_size=1, max_size=4, unique=True))
def test_multibubble_trig_matches_direct(k, lams):
    cfg = TowerConfig(k, tuple(sorted(lams, reverse=True)))
    r = np.geomspace(1e-2, 1e2, 200)
    S, C = multibubble_trig(cfg, r)
    u = multibubble(cfg, r)
    assert np.allclose(S, np.sin(u), atol=1e-13)
    assert np.allclose(C, np.cos(u), atol=1e-13)


@given(st.integers(2, 5), st.floats(0.01, 0.5), st.sampled_from([1, -1]))
def test_interaction_D_matches_direct(k, ratio, s2):
    cfg = TowerConfig(k, (1.0, ratio), iota=(1, s2))
    r = np.geomspace(1e-3, 1e3, 300)
    direct = np.sin(2 * multibubble(cfg, r)) - sum(
        np.sin(2 * s * q_profile(k, r / lam)) for s, lam in zip(cfg.iota, cfg.lam))
    assert np.allclose(interaction_D(cfg, r), direct, atol=1e-12)


def test_interaction_vanishes_for_single_bubble():
    assert not np.any(interaction_term(TowerConfig(3, (1.0,)), np.geomspace(1e-3, 1e3, 50)))


@pytest.mark.parametrize("iota", [(1, -1), (1, 1), (-1, 1)])
def test_interaction_sign_and_rate(iota):
    vals = []
    for eps in (1e-2, 1e-3):
        cfg = TowerConfig(3, (1.0, eps), iota=iota)
        vals.append(interaction_inner(cfg, 2) / interaction_leading(cfg, 2) - 1)
    assert abs(vals[0]) < 1e-3 and abs(vals[1]) < abs(vals[0]) / 5
    cfg = TowerConfig(3, (1.0, 1e-2), iota=iota)
    assert interaction_leading(cfg, 2, "printed") == -interaction_leading(cfg, 2)


@given(st.floats(0.1, 10.0))
def test_interaction_inner_scale_invariant(mu):
    a = interaction_inner(TowerConfig(3, (1.0, 0.01)), 2)
    b = interaction_inner(TowerConfig(3, (mu, 0.01 * mu)), 2)
    assert b == pytest.approx(a, rel=1e-9)


def test_cutoff_shape():
    r = np.linspace(0, 3, 3001)
    chi = cutoff(r)
    assert np.all(chi[r <= 1] == 1) and np.all(chi[r >= 2] == 0)
    assert np.all(np.diff(chi) <= 0)
    h = 1e-6
    x = np.linspace(1.01, 1.99, 50)
    assert np.allclose(dcutoff(x), (cutoff(x + h) - cutoff(x - h)) / (2 * h), atol=1e-7)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_orthogonality_profile_normalized(k):
    g = RadialGrid.log_span(1e-8, 1e3, 256)
    assert quadrature(g, orthogonality_profile(k, g.r) * lambda_q(k, g.r)) == pytest.approx(1, abs=1e-11)


def test_pure_variant_requires_k4():
    with pytest.raises(ValueError):
        orthogonality_profile(3, 1.0, "pure")
    g = RadialGrid.log_span(1e-8, 1e8, 256)
    assert quadrature(g, orthogonality_profile(4, g.r, "pure") * lambda_q(4, g.r)) == pytest.approx(1, abs=1e-10)


@pytest.mark.parametrize("variant,k", [("cutoff", 3), ("pure", 5)])
def test_Lambda_m1_of_Z(variant, k):
    y = np.geomspace(1e-2, 1.98, 200)
    h = 1e-5
    z = lambda x: orthogonality_profile(k, x, variant)
    fd = (z(y * np.exp(h)) - z(y * np.exp(-h))) / (2 * h) + 2 * z(y)
    assert np.allclose(orthogonality_Lambda_m1(k, y, variant), fd, atol=1e-7)


@pytest.mark.parametrize("k", [3, 4])
def test_bubble_overlap_rate(k):
    a = bubble_overlap(k, 1e-2, 1.0)
    b = bubble_overlap(k, 1e-3, 1.0)
    assert a / b == pytest.approx(10.0 ** (k - 1), rel=2e-2)


def test_config_validation():
    with pytest.raises(ValueError):
        TowerConfig(1, (1.0,))
    with pytest.raises(ValueError):
        TowerConfig(3, (1.0, 2.0))
    with pytest.raises(ValueError):
        TowerConfig(3, (1.0, -1.0))
    with pytest.raises(ValueError):
        TowerConfig(3, (1.0,), iota=(2,))
    cfg = TowerConfig(3, (1.0, 0.1, 0.01))
    assert cfg.iota == (1, -1, 1) and cfg.b == (0.0, 0.0, 0.0)
    assert cfg.in_P(0.2) and not cfg.in_P(0.05)
    assert cfg.replace(b=(1, 2, 3)).b == (1.0, 2.0, 3.0)
