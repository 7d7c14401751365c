"""Computational geometry: PML-extended grid, stretching profiles, receivers.

Field arrays are stored with shape ``(nx, ny)``; ``values[i, j]`` is the node
at ``(x_min + i*hx, y_min + j*hy)``.  Flattening is C order, so the x index
is the slow one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp


class GeometryError(ValueError):
    """Raised for inconsistent grids, out-of-domain points or receivers."""


@dataclass(frozen=True)
class PmlProfile:
    sigma0: float = 1.5
    p: float = 2.5
    d1: float = 0.15
    d2: float = 0.15

    def __post_init__(self):
        if not self.sigma0 > 1.0:
            raise GeometryError(f"pml sigma0 must be > 1, got {self.sigma0}")
        if not self.p >= 2.0:
            raise GeometryError(f"pml power p must be >= 2, got {self.p}")
        if not (self.d1 > 0.0 and self.d2 > 0.0):
            raise GeometryError("pml thicknesses must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on the rectangle D containing the physical box Omega."""

    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    omega_bounds: tuple = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GeometryError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GeometryError("empty grid bounds")
        x1, x2, y1, y2 = self.omega_bounds
        if not (self.x_min < x1 < x2 < self.x_max and self.y_min < y1 < y2 < self.y_max):
            raise GeometryError("omega_bounds must lie strictly inside the grid bounds")
        object.__setattr__(self, "omega_bounds", tuple(float(v) for v in self.omega_bounds))

    @classmethod
    def around_omega(cls, n, profile=None, omega=(-1.0, 1.0, -1.0, 1.0), ny=None):
        """Grid whose outer boundary is Omega padded by the PML thicknesses."""
        profile = profile or PmlProfile()
        x1, x2, y1, y2 = omega
        return cls(n, ny or n, x1 - profile.d1, x2 + profile.d1,
                   y1 - profile.d2, y2 + profile.d2, tuple(omega))

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def x(self) -> np.ndarray:
        return self.x_min + self.hx * np.arange(self.nx)

    def y(self) -> np.ndarray:
        return self.y_min + self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x(), self.y(), indexing="ij")

    def same_bounds(self, other: "GridSpec", rtol=1e-12) -> bool:
        a = (self.x_min, self.x_max, self.y_min, self.y_max)
        b = (other.x_min, other.x_max, other.y_min, other.y_max)
        scale = max(1.0, *map(abs, a))
        return all(abs(u - v) <= rtol * scale for u, v in zip(a, b))

    def omega_index_ranges(self):
        """Index slices of the nodes strictly inside Omega.

        Nodes lying on the boundary of Omega are excluded; they act as the
        zero Dirichlet layer of the regularizer and stay zero in every
        scatterer.
        """
        x1, x2, y1, y2 = self.omega_bounds
        tx, ty = 1e-9 * self.hx, 1e-9 * self.hy
        xs, ys = self.x(), self.y()
        ix = np.nonzero((xs > x1 + tx) & (xs < x2 - tx))[0]
        iy = np.nonzero((ys > y1 + ty) & (ys < y2 - ty))[0]
        if ix.size == 0 or iy.size == 0:
            raise GeometryError("grid has no nodes inside omega")
        return slice(ix[0], ix[-1] + 1), slice(iy[0], iy[-1] + 1)

    def omega_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.omega_index_ranges()] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


@dataclass(frozen=True, eq=False)
class ScattererField:
    """Real contrast q on a grid, zero outside Omega."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        v[~self.grid.omega_mask()] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        X, Y = grid.mesh()
        return cls(grid, func(X, Y))

    def clamp(self, q_min, q_max) -> "ScattererField":
        return ScattererField(self.grid, np.clip(self.values, q_min, q_max))


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).reshape(self.grid.shape)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ReceiverSet:
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if pts.shape[0] < 1:
            raise GeometryError("need at least one receiver")
        if pts.shape[0] > 1:
            d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            d[np.diag_indices_from(d)] = np.inf
            if d.min() <= 0.0:
                raise GeometryError("receiver points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def check_inside(self, grid: GridSpec):
        """Receivers must sit in the closed non-PML box of the grid."""
        x1, x2, y1, y2 = grid.omega_bounds
        tol = 1e-12 * max(1.0, abs(x1), abs(x2), abs(y1), abs(y2))
        x, y = self.points[:, 0], self.points[:, 1]
        if np.any((x < x1 - tol) | (x > x2 + tol) | (y < y1 - tol) | (y > y2 + tol)):
            raise GeometryError("receivers must lie outside the PML layers")


def pml_sigma(coord, lo, hi, thickness, profile: PmlProfile):
    """Absorption profile: zero on [lo, hi], ``sigma0*(dist/thickness)**p`` in the layer.

    Accepts scalars or arrays.
    """
    if not thickness > 0.0:
        raise GeometryError("PML thickness must be positive")
    if not lo < hi:
        raise GeometryError("need lo < hi")
    c = np.asarray(coord, dtype=float)
    slack = 1e-12 * max(1.0, abs(lo), abs(hi), thickness)
    if np.any((c < lo - thickness - slack) | (c > hi + thickness + slack)):
        raise GeometryError(f"coordinate outside [{lo - thickness}, {hi + thickness}]")
    dist = np.maximum(c - hi, 0.0) + np.maximum(lo - c, 0.0)
    dist = np.minimum(dist, thickness)
    out = profile.sigma0 * (dist / thickness) ** profile.p
    return float(out) if out.ndim == 0 else out


def pml_sigma_cell_mean(a, b, lo, hi, thickness, profile: PmlProfile):
    """Exact mean of ``pml_sigma`` over each interval [a, b] (arrays, a < b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pw = profile.p + 1.0

    def antiderivative(c):
        # integral of sigma from the centre of [lo, hi] to c
        right = np.clip(c - hi, 0.0, thickness)
        left = np.clip(lo - c, 0.0, thickness)
        scale = profile.sigma0 * thickness / pw
        return scale * ((right / thickness) ** pw - (left / thickness) ** pw)

    pml_sigma(np.concatenate([a.ravel(), b.ravel()]), lo, hi, thickness, profile)
    return (antiderivative(b) - antiderivative(a)) / (b - a)


def stretching(x, y, grid: GridSpec, profile: PmlProfile):
    """Complex stretching factors ``(s1(x), s2(y))``."""
    x1, x2, y1, y2 = grid.omega_bounds
    s1 = 1.0 + 1j * pml_sigma(x, x1, x2, profile.d1, profile)
    s2 = 1.0 + 1j * pml_sigma(y, y1, y2, profile.d2, profile)
    return s1, s2


def _bilinear_weights(grid: GridSpec, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tol = 1e-12 * max(1.0, abs(grid.x_min), abs(grid.x_max), abs(grid.y_min), abs(grid.y_max))
    px, py = pts[:, 0], pts[:, 1]
    if np.any((px < grid.x_min - tol) | (px > grid.x_max + tol)
              | (py < grid.y_min - tol) | (py > grid.y_max + tol)):
        raise GeometryError("interpolation point outside the grid")
    fx = np.clip((px - grid.x_min) / grid.hx, 0.0, grid.nx - 1)
    fy = np.clip((py - grid.y_min) / grid.hy, 0.0, grid.ny - 1)
    i0 = np.minimum(np.floor(fx).astype(int), grid.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(int), grid.ny - 2)
    tx, ty = fx - i0, fy - j0
    idx = np.stack([i0 * grid.ny + j0, (i0 + 1) * grid.ny + j0,
                    i0 * grid.ny + j0 + 1, (i0 + 1) * grid.ny + j0 + 1], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return idx, w


def interpolation_matrix(grid: GridSpec, points) -> sp.csr_matrix:
    """Sparse bilinear sampling operator from flattened nodes to points."""
    idx, w = _bilinear_weights(grid, points)
    n = idx.shape[0]
    rows = np.repeat(np.arange(n), 4)
    return sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, grid.size))


def interpolate(field, point):
    """Bilinear value of a grid field at one point."""
    idx, w = _bilinear_weights(field.grid, point)
    return (field.values.ravel()[idx[0]] * w[0]).sum()


def build_receivers(count: int, radius: float, omega=(-1.0, 1.0, -1.0, 1.0)) -> ReceiverSet:
    """``count`` receivers equally spaced on a circle about the origin."""
    if count < 1:
        raise GeometryError("receiver count must be >= 1")
    if not radius > 0.0:
        raise GeometryError("receiver radius must be positive")
    x1, x2, y1, y2 = omega
    if radius > min(-x1, x2, -y1, y2) * (1 + 1e-12):
        raise GeometryError(f"receiver circle of radius {radius} reaches into the PML")
    theta = 2.0 * np.pi * np.arange(count) / count
    return ReceiverSet(radius * np.column_stack([np.cos(theta), np.sin(theta)]))


def restrict_to_grid(fld, coarse: GridSpec):
    """Bilinear sampling of a field onto another grid with the same bounds."""
    if not fld.grid.same_bounds(coarse):
        raise GeometryError("grids do not share domain bounds")
    if fld.grid.shape == coarse.shape:
        return fld
    X, Y = coarse.mesh()
    M = interpolation_matrix(fld.grid, np.column_stack([X.ravel(), Y.ravel()]))
    vals = (M @ fld.values.ravel()).reshape(coarse.shape)
    if isinstance(fld, ScattererField):
        return ScattererField(coarse, vals)
    return ComplexField(coarse, vals)


def points_per_wavelength(kappa: float, grid: GridSpec) -> float:
    return (2.0 * math.pi / kappa) / max(grid.hx, grid.hy)
