"""Prior terms: fractional power of A = a*(-Laplacian) and smoothed total variation.

Both act on the box of grid nodes strictly inside Omega.  A uses zero
Dirichlet values on the first node layer outside that box; the discrete
sine transform diagonalizes it exactly.  All inner products are the
cell-area weighted sums ``hx*hy*sum(a*b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dstn, idstn

from .grid import ScattererField


@dataclass(frozen=True)
class RegularizerConfig:
    a_scale: float = 0.01
    s: float = 1.5
    lam: float = 0.0
    delta_tv: float = 1e-3
    weight: float = 1.0

    def __post_init__(self):
        if not self.a_scale > 0:
            raise ValueError("reg.a_scale must be positive")
        if not self.s > 0:
            raise ValueError("reg.s must be positive")
        if self.lam < 0:
            raise ValueError("reg.lambda must be non-negative")
        if not self.delta_tv > 0:
            raise ValueError("reg.delta_tv must be positive")
        if self.weight < 0:
            raise ValueError("reg.weight must be non-negative")


def dirichlet_eigenvalues(grid) -> np.ndarray:
    """Eigenvalues of the 5-point -Laplacian on the Omega box, indexed like the DST."""
    sx, sy = grid.omega_index_ranges()
    mx, my = sx.stop - sx.start, sy.stop - sy.start
    lx = (4.0 / grid.hx**2) * np.sin(np.pi * np.arange(1, mx + 1) / (2 * (mx + 1))) ** 2
    ly = (4.0 / grid.hy**2) * np.sin(np.pi * np.arange(1, my + 1) / (2 * (my + 1))) ** 2
    return lx[:, None] + ly[None, :]


def apply_A_pow(q: ScattererField, power, cfg: RegularizerConfig) -> ScattererField:
    if power < 0:
        raise ValueError("power must be non-negative")
    if power == 0:
        return q
    box = q.grid.omega_index_ranges()
    coeffs = dstn(q.values[box], type=1, norm="ortho")
    coeffs *= (cfg.a_scale * dirichlet_eigenvalues(q.grid)) ** power
    out = np.zeros(q.grid.shape)
    out[box] = idstn(coeffs, type=1, norm="ortho")
    return ScattererField(q.grid, out)


def grad_R_gaussian(q: ScattererField, cfg: RegularizerConfig) -> ScattererField:
    return apply_A_pow(q, cfg.s, cfg)


def _forward_diffs(v, hx, hy):
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    gx[:-1, :] = (v[1:, :] - v[:-1, :]) / hx
    gy[:, :-1] = (v[:, 1:] - v[:, :-1]) / hy
    return gx, gy


def tv_energy(q: ScattererField, cfg: RegularizerConfig) -> float:
    """lam * sum over the Omega box of sqrt(|grad q|^2 + delta_tv), cell-area weighted."""
    if cfg.lam == 0:
        return 0.0
    g = q.grid
    gx, gy = _forward_diffs(q.values[g.omega_index_ranges()], g.hx, g.hy)
    return cfg.lam * g.cell_area * float(np.sqrt(gx**2 + gy**2 + cfg.delta_tv).sum())


def grad_R_tv(q: ScattererField, cfg: RegularizerConfig) -> ScattererField:
    """Gradient of ``tv_energy``: lam * D^T (grad q / sqrt(|grad q|^2 + delta)).

    D^T is minus the backward-difference divergence, so descent along
    ``-grad_R_tv`` lowers the energy.  Flux through the box boundary is zero.
    """
    g = q.grid
    out = np.zeros(g.shape)
    if cfg.lam == 0:
        return ScattererField(g, out)
    box = g.omega_index_ranges()
    gx, gy = _forward_diffs(q.values[box], g.hx, g.hy)
    norm = np.sqrt(gx**2 + gy**2 + cfg.delta_tv)
    px, py = gx / norm, gy / norm
    div = np.zeros_like(px)
    div[:-1, :] -= px[:-1, :] / g.hx
    div[1:, :] += px[:-1, :] / g.hx
    div[:, :-1] -= py[:, :-1] / g.hy
    div[:, 1:] += py[:, :-1] / g.hy
    out[box] = cfg.lam * div
    return ScattererField(g, out)


def R_value(q: ScattererField, cfg: RegularizerConfig) -> float:
    half = apply_A_pow(q, cfg.s / 2.0, cfg).values
    return 0.5 * q.grid.cell_area * float(np.sum(half**2)) + tv_energy(q, cfg)


def R_gradient(q: ScattererField, cfg: RegularizerConfig) -> ScattererField:
    g = grad_R_gaussian(q, cfg).values + grad_R_tv(q, cfg).values
    return ScattererField(q.grid, g)
