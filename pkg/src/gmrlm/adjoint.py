"""Mixture-compensated misfit and its adjoint-state gradient in q.

For residual r = d - F_a(q) the misfit is

    Phi = -ln sum_k pi_k N_c(r | zeta_k, Sigma_k + nu I).

Its gradient under the cell-area inner product is -2 Re(conj(w) v) on Omega,
where w = u_inc + s1 s2 u_s and v solves the conjugated PML problem with
point sources -k^2 rho_j at the receivers.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .cgmm import LOG_PI, MixtureModel, NumericError, cholesky
from .grid import ReceiverSet, ScattererField, interpolation_matrix
from .helmholtz import DEFAULT_TOL, DataRecord, HelmholtzSolver, incident_field


def default_nu(data: DataRecord, factor=1e-6) -> float:
    p = float(np.mean(np.abs(data.values) ** 2))
    return factor * p if p > 0 else factor


class MisfitContext:
    """Data record, error mixture and noise variance for one (kappa, angle).

    The Cholesky factors of the effective covariances are computed once.
    """

    def __init__(self, data: DataRecord, model: MixtureModel, nu=None):
        if model.dim != data.values.size:
            raise ValueError(f"mixture dimension {model.dim} does not match "
                             f"{data.values.size} data values")
        self.data, self.model = data, model
        self.nu = default_nu(data) if nu is None else float(nu)
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        eye = np.eye(model.dim)
        self._chol = [cholesky(c.sigma + self.nu * eye) for c in model.components]
        self._logdet = np.array([2.0 * np.sum(np.log(np.real(np.diag(L)))) for L in self._chol])
        self._logw = np.log(model.weights)

    def _component_terms(self, q_data):
        r = self.data.values - np.asarray(q_data, dtype=complex)
        diffs = [r - c.zeta for c in self.model.components]
        whitened = [linalg.solve_triangular(L, dk, lower=True) for L, dk in zip(self._chol, diffs)]
        quad = np.array([np.sum(np.abs(wk) ** 2) for wk in whitened])
        logp = self._logw - self.model.dim * LOG_PI - self._logdet - quad
        return logp, whitened

    def phi(self, q_data) -> float:
        logp, _ = self._component_terms(q_data)
        total = logsumexp(logp)
        if not np.isfinite(total):
            raise NumericError("mixture density underflows for this residual")
        return float(-total)

    def responsibilities(self, q_data) -> np.ndarray:
        logp, _ = self._component_terms(q_data)
        return np.exp(logp - logsumexp(logp))

    def rho(self, q_data):
        """Weighted residual sum_k gamma_k (Sigma_k + nu I)^{-1} (r - zeta_k), and Phi."""
        logp, whitened = self._component_terms(q_data)
        total = logsumexp(logp)
        if not np.isfinite(total):
            raise NumericError("mixture density underflows for this residual")
        gamma = np.exp(logp - total)
        rho = np.zeros(self.model.dim, dtype=complex)
        for g, L, wk in zip(gamma, self._chol, whitened):
            rho += g * linalg.solve_triangular(L, wk, lower=True, trans="C")
        return rho, float(-total)

    def curvature(self, q_data, dd) -> float:
        """Gauss-Newton second derivative of Phi along a data perturbation dd.

        Responsibilities are frozen at the current residual, so the value is
        ``2 sum_k gamma_k dd^H (Sigma_k + nu I)^{-1} dd``.
        """
        gamma = self.responsibilities(q_data)
        dd = np.asarray(dd, dtype=complex)
        quad = [np.sum(np.abs(linalg.solve_triangular(L, dd, lower=True)) ** 2) for L in self._chol]
        return float(2.0 * np.dot(gamma, quad))


def misfit_phi(q_data, ctx: MisfitContext) -> float:
    return ctx.phi(q_data)


def residual_weights(q_data, ctx: MisfitContext) -> np.ndarray:
    return ctx.rho(q_data)[0]


def spread_sources(rho, receivers: ReceiverSet, grid, kappa) -> np.ndarray:
    """Discrete right-hand side -k^2 sum_j delta(x - x_j) rho_j (flattened).

    Point masses are spread with the transpose of bilinear interpolation,
    divided by the cell area.
    """
    M = interpolation_matrix(grid, receivers.points)
    return -kappa**2 * (M.T @ np.asarray(rho, dtype=complex)) / grid.cell_area


def solve_adjoint(q: ScattererField, kappa, rho, receivers: ReceiverSet, tol=DEFAULT_TOL,
                  profile=None, solver: HelmholtzSolver | None = None):
    solver = solver or HelmholtzSolver(q, kappa, profile, tol)
    v, _ = solver.solve_conjugate(spread_sources(rho, receivers, q.grid, kappa))
    return v.reshape(q.grid.shape)


def predicted_data(solver: HelmholtzSolver, angle, receivers: ReceiverSet):
    u, _ = solver.scattered(angle)
    M = interpolation_matrix(solver.grid, receivers.points)
    return u, M @ u.values.ravel()


def misfit_value(q: ScattererField, kappa, angle, ctx: MisfitContext, receivers: ReceiverSet,
                 profile, tol=DEFAULT_TOL) -> float:
    solver = HelmholtzSolver(q, kappa, profile, tol)
    _, pred = predicted_data(solver, angle, receivers)
    return ctx.phi(pred)


def _total_field_weight(solver: HelmholtzSolver, angle, u):
    return incident_field(solver.kappa, angle, solver.grid).values + solver.stretch * u.values


def linearized_data(solver: HelmholtzSolver, angle, u, dq, receivers: ReceiverSet):
    """Derivative of the receiver data along dq, reusing the factorization of ``solver``.

    Differentiating A(q) u = -k^2 q u_inc gives A du = -k^2 dq (u_inc + s1 s2 u).
    """
    g = solver.grid
    rhs = -solver.kappa**2 * np.asarray(dq, dtype=float) * _total_field_weight(solver, angle, u)
    rhs[g.boundary_mask()] = 0.0
    du, _ = solver.solve(rhs.ravel())
    return interpolation_matrix(g, receivers.points) @ du


def gradient_state(q: ScattererField, kappa, angle, ctx: MisfitContext, receivers: ReceiverSet,
                   profile, tol=DEFAULT_TOL):
    """Gradient field, Phi, and the (solver, u, predicted data) it was computed from."""
    solver = HelmholtzSolver(q, kappa, profile, tol)
    u, pred = predicted_data(solver, angle, receivers)
    rho, phi = ctx.rho(pred)
    v = solve_adjoint(q, kappa, rho, receivers, tol, solver=solver)
    grad = -2.0 * np.real(np.conj(_total_field_weight(solver, angle, u)) * v)
    grad[~q.grid.omega_mask()] = 0.0
    return ScattererField(q.grid, grad), phi, (solver, u, pred)


def data_gradient(q: ScattererField, kappa, angle, ctx: MisfitContext, receivers: ReceiverSet,
                  profile, tol=DEFAULT_TOL):
    """Gradient of Phi(F_a(q)) with respect to q, together with the value of Phi."""
    grad, phi, _ = gradient_state(q, kappa, angle, ctx, receivers, profile, tol)
    return grad, phi
