import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmrlm.grid import GridSpec, ScattererField
from gmrlm.regularizer import (R_gradient, R_value, RegularizerConfig, apply_A_pow,
                               dirichlet_eigenvalues, grad_R_gaussian, grad_R_tv, tv_energy)


def eigen_q(grid):
    return ScattererField.from_function(
        grid, lambda X, Y: np.sin(math.pi * (X + 1) / 2) * np.sin(math.pi * (Y + 1) / 2))


@pytest.fixture(scope="module")
def aligned():
    # h = 0.15/12, so x = +-1 are nodes and the Dirichlet layer lies exactly on the boundary of Omega
    return GridSpec.around_omega(185)


def discrete_eigenvalue(grid, a=0.01):
    return a * 2 * (4 / grid.hx**2) * math.sin(math.pi * grid.hx / 4) ** 2


def test_config_validation():
    for bad in ({"a_scale": 0}, {"s": 0}, {"lam": -1}, {"delta_tv": 0}, {"weight": -1}):
        with pytest.raises(ValueError):
            RegularizerConfig(**bad)


def test_power_zero_is_identity(grid33, bump_q):
    assert apply_A_pow(bump_q, 0, RegularizerConfig()) is bump_q


def test_eigenfunction_power_one(aligned):
    q = eigen_q(aligned)
    out = apply_A_pow(q, 1, RegularizerConfig()).values
    lam = discrete_eigenvalue(aligned)
    assert np.abs(out - lam * q.values).max() < 1e-12
    assert lam == pytest.approx(0.0493480, rel=1e-4)


def test_eigenfunction_power_three_halves(aligned):
    q = eigen_q(aligned)
    cfg = RegularizerConfig(s=1.5)
    out = grad_R_gaussian(q, cfg).values
    lam = discrete_eigenvalue(aligned) ** 1.5
    assert np.abs(out - lam * q.values).max() < 1e-11
    assert lam == pytest.approx((math.pi**2 / 200) ** 1.5, rel=1e-4)  # 0.0109624


def test_R_value_eigenfunction(aligned):
    q = eigen_q(aligned)
    cfg = RegularizerConfig()
    expected = 0.5 * discrete_eigenvalue(aligned) ** 1.5 * aligned.cell_area * np.sum(q.values**2)
    assert R_value(q, cfg) == pytest.approx(expected, rel=1e-12)
    # continuum: 0.5 * (0.01 pi^2/2)^1.5 * ||q||^2 with ||q||^2 = 1
    assert R_value(q, cfg) == pytest.approx(0.5 * (math.pi**2 / 200) ** 1.5, rel=1e-3)


def test_dirichlet_eigenvalues_shape(grid33):
    sx, sy = grid33.omega_index_ranges()
    lam = dirichlet_eigenvalues(grid33)
    assert lam.shape == (sx.stop - sx.start, sy.stop - sy.start)
    assert np.all(lam > 0)


def test_zero_and_scaling(grid33, bump_q):
    cfg = RegularizerConfig()
    z = ScattererField.zeros(grid33)
    assert R_value(z, cfg) == 0
    assert not np.any(grad_R_gaussian(z, cfg).values)
    two = ScattererField(grid33, 2 * bump_q.values)
    assert R_value(two, cfg) == pytest.approx(4 * R_value(bump_q, cfg), rel=1e-14)
    assert np.allclose(grad_R_gaussian(two, cfg).values, 2 * grad_R_gaussian(bump_q, cfg).values,
                       rtol=0, atol=1e-15)


def test_gradient_stays_in_omega(grid33, bump_q):
    g = R_gradient(bump_q, RegularizerConfig(lam=0.1)).values
    assert not np.any(g[~grid33.omega_mask()])


def test_tv_trivial_cases(grid33, bump_q):
    assert not np.any(grad_R_tv(bump_q, RegularizerConfig(lam=0.0)).values)
    assert tv_energy(bump_q, RegularizerConfig(lam=0.0)) == 0.0
    const = ScattererField(grid33, np.where(grid33.omega_mask(), 0.4, 0.0))
    assert np.abs(grad_R_tv(const, RegularizerConfig(lam=1.0)).values).max() == 0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tv_directional_derivative(seed):
    g = GridSpec.around_omega(25)
    rng = np.random.default_rng(seed)
    m = g.omega_mask()
    q = ScattererField(g, rng.standard_normal(g.shape) * m)
    dq = rng.standard_normal(g.shape) * m
    cfg = RegularizerConfig(lam=0.7, delta_tv=1e-2)
    lin = g.cell_area * np.sum(grad_R_tv(q, cfg).values * dq)
    eps = 1e-6
    fd = (tv_energy(ScattererField(g, q.values + eps * dq), cfg)
          - tv_energy(ScattererField(g, q.values - eps * dq), cfg)) / (2 * eps)
    assert abs(fd - lin) <= 1e-5 * abs(lin)


def test_R_gradient_matches_finite_difference(grid33):
    rng = np.random.default_rng(3)
    m = grid33.omega_mask()
    q = ScattererField(grid33, rng.standard_normal(grid33.shape) * m)
    dq = rng.standard_normal(grid33.shape) * m
    cfg = RegularizerConfig(lam=0.2)
    lin = grid33.cell_area * np.sum(R_gradient(q, cfg).values * dq)
    eps = 1e-5
    fd = (R_value(ScattererField(grid33, q.values + eps * dq), cfg)
          - R_value(ScattererField(grid33, q.values - eps * dq), cfg)) / (2 * eps)
    assert fd == pytest.approx(lin, rel=1e-7)
