import math
import numpy as np
import pytest

from gmrlm.grid import GridSpec, PmlProfile, ReceiverSet, ScattererField, build_receivers, stretching
from gmrlm.helmholtz import (DataRecord, HelmholtzSolver, ParameterError, SolverError,
                             apply_noise, assemble_operator, assemble_system, forward_map,
                             incident_field, sample_receivers, solve_forward, synthesize_data)

from conftest import bump


def test_incident_field_examples(grid33):
    g = GridSpec.around_omega(21)  # h = 0.115, so x = 0 and y = 0 are nodes
    i0 = int(np.argmin(np.abs(g.x())))
    u = incident_field(2.7, 1.1, g).values
    assert u[i0, i0] == pytest.approx(1 + 0j)
    g2 = GridSpec(31, 31, -1.5, 1.5, -1.5, 1.5, omega_bounds=(-1, 1, -1, 1))  # node at x = 1
    ix = int(np.argmin(np.abs(g2.x() - 1.0)))
    iy = int(np.argmin(np.abs(g2.y())))
    assert incident_field(math.pi, 0.0, g2).values[ix, iy] == pytest.approx(-1 + 0j, abs=1e-14)
    assert incident_field(math.pi, math.pi / 2, g2).values[ix, iy] == pytest.approx(1 + 0j, abs=1e-14)


def test_zero_scatterer_gives_zero_rhs_and_field(grid33, profile):
    q = ScattererField.zeros(grid33)
    _, b = assemble_system(q, math.pi, profile, angle=0.3)
    assert not np.any(b)
    u, rep = solve_forward(q, math.pi, 0.3)
    assert not np.any(u.values)
    assert np.all(forward_map(q, math.pi, 0.3, build_receivers(16, 1.0)) == 0)


def test_interior_stencil_is_plain_laplacian(grid33, profile):
    q = ScattererField.zeros(grid33)
    k = 2.0
    A = assemble_operator(q, k, profile).tocsr()
    i, j = 16, 16
    row = A[i * 33 + j].toarray().ravel()
    h2 = grid33.hx**2
    assert row[i * 33 + j] == pytest.approx(-4 / h2 + k**2)
    for nb in (i * 33 + j + 1, i * 33 + j - 1, (i + 1) * 33 + j, (i - 1) * 33 + j):
        assert row[nb] == pytest.approx(1 / h2)
    assert np.count_nonzero(row) == 5


def test_operator_is_complex_symmetric(bump_q, profile):
    A = assemble_operator(bump_q, 3.0, profile)
    assert abs(A - A.T).max() == 0


def test_residual_within_tolerance(bump_q):
    u, rep = solve_forward(bump_q, math.pi, 0.2, tol=1e-10)
    assert rep.residual_norm <= 1e-10
    assert np.all(np.isfinite(u.values))
    assert rep.unknowns == bump_q.grid.size


def test_unreachable_tolerance_raises(bump_q):
    with pytest.raises(SolverError) as exc:
        solve_forward(bump_q, math.pi, 0.0, tol=1e-25)
    assert exc.value.residual > 1e-25


def test_parameter_checks(bump_q):
    with pytest.raises(ParameterError):
        HelmholtzSolver(bump_q, 0.0)


def test_low_resolution_warns(bump_q, caplog):
    HelmholtzSolver(bump_q, 20 * math.pi)
    assert "per wavelength" in caplog.text


def test_self_convergence_is_second_order():
    rec = build_receivers(40, 0.9)
    ds = []
    for n in (33, 65, 129):
        g = GridSpec.around_omega(n)
        ds.append(forward_map(ScattererField.from_function(g, bump()), math.pi, 0.0, rec))
    ratio = np.linalg.norm(ds[0] - ds[1]) / np.linalg.norm(ds[1] - ds[2])
    assert ratio == pytest.approx(4.2143, abs=1e-3)
    assert 3.0 < ratio < 5.0


def test_born_regime_scaling(grid33):
    rec = build_receivers(40, 0.9)
    shape = ScattererField.from_function(grid33, bump(amp=1.0)).values

    def F(eps):
        return forward_map(ScattererField(grid33, eps * shape), math.pi, 0.0, rec)

    e1 = np.linalg.norm(F(2e-3) - 2 * F(1e-3))
    e2 = np.linalg.norm(F(4e-3) - 2 * F(2e-3))
    assert e2 / e1 == pytest.approx(4.0, rel=0.05)


def test_receiver_on_node_equals_nodal_value(bump_q):
    g = bump_q.grid
    u, _ = solve_forward(bump_q, math.pi, 0.0)
    rec = ReceiverSet(np.array([[g.x()[10], g.y()[20]], [g.x()[5], g.y()[25]]]))
    d = sample_receivers(u, rec)
    assert d[0] == u.values[10, 20] and d[1] == u.values[5, 25]


def test_one_factorization_serves_all_angles(bump_q):
    s = HelmholtzSolver(bump_q, math.pi)
    for a in (0.0, 1.0, 2.5):
        u1, _ = s.scattered(a)
        u2, _ = solve_forward(bump_q, math.pi, a)
        assert np.allclose(u1.values, u2.values, rtol=0, atol=1e-13)


def test_conjugate_solve(bump_q):
    s = HelmholtzSolver(bump_q, math.pi)
    rng = np.random.default_rng(3)
    b = rng.standard_normal(bump_q.grid.size) + 1j * rng.standard_normal(bump_q.grid.size)
    x, rep = s.solve_conjugate(b)
    assert np.linalg.norm(s.matrix.conj() @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_noise_zero_sigma_is_exact():
    clean = np.array([1 + 1j, 2 - 0.5j, -3j])
    assert np.array_equal(apply_noise(clean, 0.0, 1), clean)


def test_noise_reference_stream_and_bound():
    clean = np.array([1 + 1j, 2 - 0.5j, -3j])
    noisy = apply_noise(clean, 0.02, 42)
    ref = np.array([1.01095824 + 1.01095824j, 1.99511028 - 0.49877757j, -3.04303175j])
    assert np.allclose(noisy, ref, atol=5e-9)
    assert np.array_equal(noisy, apply_noise(clean, 0.02, 42))
    assert np.all(np.abs(noisy) <= 1.02 * np.abs(clean))
    # one real multiplier per value keeps the phase
    assert np.allclose(np.angle(noisy[:2]), np.angle(clean[:2]))


def test_synthesize_data(bump_q):
    rec = build_receivers(24, 1.0)
    clean = forward_map(bump_q, math.pi, 0.4, rec)
    d0 = synthesize_data(bump_q, math.pi, 0.4, 0.0, 5, rec)
    assert isinstance(d0, DataRecord)
    assert np.array_equal(d0.values, clean)
    d1 = synthesize_data(bump_q, math.pi, 0.4, 0.02, 5, rec)
    assert np.array_equal(d1.values, synthesize_data(bump_q, math.pi, 0.4, 0.02, 5, rec).values)
    assert np.all(np.abs(d1.values) <= 1.02 * np.abs(clean) + 1e-300)


def _layer_doubling_change(sigma0, h=0.02, d=0.15):
    rec = build_receivers(400, 1.0)

    def data(thick):
        prof = PmlProfile(sigma0=sigma0, p=2.5, d1=thick, d2=thick)
        g = GridSpec.around_omega(int(round((2 + 2 * thick) / h)) + 1, prof)
        q = ScattererField.from_function(g, bump(0.3, 8.0))
        return forward_map(q, math.pi, 0.0, rec, profile=prof)

    a, b = data(d), data(2 * d)
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_stronger_absorption_reduces_layer_dependence():
    changes = [_layer_doubling_change(s) for s in (1.5, 5.0, 20.0)]
    assert changes == pytest.approx([0.62623, 0.27182, 0.0038619], rel=1e-4)
    assert changes[0] > changes[1] > changes[2]
