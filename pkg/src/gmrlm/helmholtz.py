"""Truncated-PML Helmholtz solver for the scattered field.

Discretizes

    div(S grad u) + s1 s2 k^2 (1 + q) u = -k^2 q u_inc   in D,   u = 0 on dD,

with S = diag(s2/s1, s1/s2), using the 5-point stencil.  Flux coefficients are
harmonic averages of s2/s1 (resp. s1/s2) along each cell edge.  Boundary rows are identity rows and interior rows
carry no coupling to boundary columns, so the assembled matrix is complex
symmetric and its entrywise conjugate is the adjoint operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (ComplexField, GridSpec, PmlProfile, ReceiverSet, ScattererField,
                   interpolation_matrix, pml_sigma_cell_mean, points_per_wavelength,
                   stretching)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MIN_POINTS_PER_WAVELENGTH = 6.0


class SolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ParameterError(ValueError):
    pass


@dataclass
class ForwardSolveReport:
    residual_norm: float
    refinements: int = 0
    unknowns: int = 0
    nnz_factor: int = 0


@dataclass(frozen=True, eq=False)
class DataRecord:
    kappa: float
    angle: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def incident_field(kappa, angle, grid: GridSpec) -> ComplexField:
    if not kappa > 0:
        raise ParameterError(f"wavenumber must be positive, got {kappa}")
    X, Y = grid.mesh()
    return ComplexField(grid, np.exp(1j * kappa * (X * np.cos(angle) + Y * np.sin(angle))))


def stretch_products(grid: GridSpec, profile: PmlProfile) -> np.ndarray:
    """Nodal values of s1(x) * s2(y)."""
    s1, s2 = stretching(grid.x(), grid.y(), grid, profile)
    return np.outer(s1, s2)


def cell_mean_stretching(grid: GridSpec, profile: PmlProfile):
    """Exact averages of s1 and s2 over each grid cell edge.

    The flux coefficients s2/s1 and s1/s2 are taken as harmonic means along
    the flux direction, which keeps the scheme second order across the
    non-smooth start of the absorbing layer.
    """
    x1, x2, y1, y2 = grid.omega_bounds
    xs, ys = grid.x(), grid.y()
    s1 = 1.0 + 1j * pml_sigma_cell_mean(xs[:-1], xs[1:], x1, x2, profile.d1, profile)
    s2 = 1.0 + 1j * pml_sigma_cell_mean(ys[:-1], ys[1:], y1, y2, profile.d2, profile)
    return s1, s2


def assemble_operator(q: ScattererField, kappa, profile: PmlProfile) -> sp.csr_matrix:
    if not kappa > 0:
        raise ParameterError(f"wavenumber must be positive, got {kappa}")
    g = q.grid
    nx, ny = g.shape
    xs, ys = g.x(), g.y()
    s1_n, s2_n = stretching(xs, ys, g, profile)
    s1_m, s2_m = cell_mean_stretching(g, profile)
    # ax[i, j] couples (i, j)-(i+1, j); ay[i, j] couples (i, j)-(i, j+1)
    ax = np.outer(1.0 / s1_m, s2_n) / g.hx**2
    ay = np.outer(s1_n, 1.0 / s2_m) / g.hy**2

    interior = ~g.boundary_mask()
    idx = np.arange(g.size).reshape(nx, ny)

    diag = np.zeros((nx, ny), dtype=complex)
    diag[:-1, :] -= ax
    diag[1:, :] -= ax
    diag[:, :-1] -= ay
    diag[:, 1:] -= ay
    diag += kappa**2 * np.outer(s1_n, s2_n) * (1.0 + q.values)
    diag[~interior] = 1.0

    rows, cols, vals = [idx.ravel()], [idx.ravel()], [diag.ravel()]
    both_x = interior[:-1, :] & interior[1:, :]
    both_y = interior[:, :-1] & interior[:, 1:]
    for a, b, c in ((idx[:-1, :][both_x], idx[1:, :][both_x], ax[both_x]),
                    (idx[:, :-1][both_y], idx[:, 1:][both_y], ay[both_y])):
        rows += [a, b]
        cols += [b, a]
        vals += [c, c]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(g.size, g.size))


def source_term(q: ScattererField, kappa, angle) -> np.ndarray:
    """Right-hand side -k^2 q u_inc with zero boundary rows (flattened)."""
    uinc = incident_field(kappa, angle, q.grid).values
    b = -kappa**2 * q.values * uinc
    b[q.grid.boundary_mask()] = 0.0
    return b.ravel()


def assemble_system(q: ScattererField, kappa, profile: PmlProfile, angle=0.0):
    return assemble_operator(q, kappa, profile), source_term(q, kappa, angle)


class HelmholtzSolver:
    """Factorized PML operator for a fixed (q, kappa).

    One LU factorization serves every incident angle and, through
    conjugation, the adjoint problem.
    """

    def __init__(self, q: ScattererField, kappa, profile: PmlProfile | None = None,
                 tol=DEFAULT_TOL):
        profile = profile or PmlProfile()
        if not kappa > 0:
            raise ParameterError(f"wavenumber must be positive, got {kappa}")
        self.q, self.kappa, self.profile, self.tol = q, float(kappa), profile, tol
        self.grid = q.grid
        ppw = points_per_wavelength(kappa, self.grid)
        if ppw < MIN_POINTS_PER_WAVELENGTH:
            log.warning("only %.1f grid points per wavelength at kappa=%.4g", ppw, kappa)
        self.matrix = assemble_operator(q, kappa, profile)
        try:
            self._lu = spla.splu(self.matrix.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed at kappa={kappa}: {exc}") from exc
        self._stretch = None

    @property
    def stretch(self) -> np.ndarray:
        if self._stretch is None:
            self._stretch = stretch_products(self.grid, self.profile)
        return self._stretch

    def _solve(self, matrix, lu_solve, rhs):
        bnorm = np.linalg.norm(rhs)
        x = lu_solve(rhs)
        if bnorm == 0.0:
            return x, ForwardSolveReport(0.0, 0, self.grid.size)
        r = rhs - matrix @ x
        res = np.linalg.norm(r) / bnorm
        steps = 0
        while res > self.tol and steps < 3:
            x = x + lu_solve(r)
            r = rhs - matrix @ x
            res = np.linalg.norm(r) / bnorm
            steps += 1
        if not np.isfinite(res) or res > self.tol:
            raise SolverError(f"relative residual {res:.3e} exceeds tolerance {self.tol:.1e}",
                              residual=res)
        return x, ForwardSolveReport(res, steps, self.grid.size,
                                     self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, rhs):
        return self._solve(self.matrix, self._lu.solve, np.asarray(rhs, dtype=complex))

    def solve_conjugate(self, rhs):
        """Solve with the entrywise-conjugated operator (the adjoint system)."""
        conj_solve = lambda r: np.conj(self._lu.solve(np.conj(r)))
        return self._solve(self.matrix.conj(), conj_solve, np.asarray(rhs, dtype=complex))

    def scattered(self, angle):
        u, report = self.solve(source_term(self.q, self.kappa, angle))
        u = u.reshape(self.grid.shape)
        u[self.grid.boundary_mask()] = 0.0
        return ComplexField(self.grid, u), report


def solve_forward(q: ScattererField, kappa, angle, tol=DEFAULT_TOL, profile=None):
    return HelmholtzSolver(q, kappa, profile, tol).scattered(angle)


def sample_receivers(u: ComplexField, receivers: ReceiverSet) -> np.ndarray:
    return interpolation_matrix(u.grid, receivers.points) @ u.values.ravel()


def forward_map(q: ScattererField, kappa, angle, receivers: ReceiverSet,
                tol=DEFAULT_TOL, profile=None) -> np.ndarray:
    u, _ = solve_forward(q, kappa, angle, tol, profile)
    return sample_receivers(u, receivers)


def apply_noise(clean, noise_sigma, seed) -> np.ndarray:
    """Multiply each value by ``1 + sigma*r`` with r ~ U[-1, 1] (one real draw per value)."""
    if noise_sigma < 0:
        raise ParameterError("noise level must be non-negative")
    clean = np.asarray(clean, dtype=complex)
    if noise_sigma == 0:
        return clean.copy()
    r = np.random.default_rng(seed).uniform(-1.0, 1.0, size=clean.shape)
    return (1.0 + noise_sigma * r) * clean


def synthesize_data(q_true: ScattererField, kappa, angle, noise_sigma, seed,
                    receivers: ReceiverSet, tol=DEFAULT_TOL, profile=None) -> DataRecord:
    clean = forward_map(q_true, kappa, angle, receivers, tol, profile)
    return DataRecord(kappa, angle, apply_noise(clean, noise_sigma, seed))
