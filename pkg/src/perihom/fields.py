"""Matrix-valued periodic fields on cell grids and vector functions on the torus.

Fields store one complex matrix per grid node, values shape = grid.shape +
(rows, cols). Vector-valued torus functions store grid.shape + (k,). All
quadrature is the rectangle rule on the uniform lattice-coordinate grid,
which is exact for trigonometric polynomials below the Nyquist cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Incommensurable, NotHermitian, SingularPoint
from .lattice import TorusGrid


def _as_matrix_values(grid, values):
    values = np.asarray(values, dtype=complex)
    d = grid.dim
    if values.ndim == d:          # scalar field
        values = values[..., None, None]
    elif values.ndim == d + 1:    # column-vector field
        values = values[..., :, None]
    if values.ndim != d + 2 or values.shape[:d] != grid.shape:
        raise ValueError(f"field values of shape {values.shape} do not fit grid {grid.shape}")
    return values


@dataclass
class PeriodicField:
    """A lattice-periodic matrix-valued function sampled on a grid."""

    grid: TorusGrid
    values: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        self.values = _as_matrix_values(self.grid, self.values)
        if self.hermitian:
            dev = np.max(np.abs(self.values - self.values.conj().swapaxes(-1, -2)))
            scale = max(np.max(np.abs(self.values)), 1e-300)
            if dev > 1e-12 * scale:
                raise NotHermitian(f"hermitian flag set but deviation {dev:.3e} (scale {scale:.3e})")

    @property
    def rows(self):
        return self.values.shape[-2]

    @property
    def cols(self):
        return self.values.shape[-1]

    def conj_t(self):
        """Pointwise conjugate transpose."""
        return PeriodicField(self.grid, self.values.conj().swapaxes(-1, -2))

    def __add__(self, other):
        return PeriodicField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return PeriodicField(self.grid, self.values - other.values)


@dataclass
class TorusFunction:
    """A vector-valued function on the torus grid (one complex vector per node)."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim == self.grid.dim:
            self.values = self.values[..., None]
        if self.values.shape[: self.grid.dim] != self.grid.shape:
            raise ValueError("torus function values do not fit the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("torus function contains non-finite values")

    @property
    def components(self):
        return self.values.shape[-1]


def constant_field(grid, matrix):
    """Field equal to `matrix` at every node."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    values = np.broadcast_to(matrix, grid.shape + matrix.shape).copy()
    return PeriodicField(grid, values)


def mean(f: PeriodicField):
    """Cell average, one matrix: |O|^{-1} integral of f over the cell."""
    d = f.grid.dim
    return f.values.mean(axis=tuple(range(d)))


def harmonic_mean(f: PeriodicField, cond_limit=1e14):
    """Inverse of the cell average of pointwise inverses.

    Requires a square field, pointwise invertible; raises SingularPoint when
    some node matrix is numerically singular.
    """
    if f.rows != f.cols:
        raise ValueError("harmonic mean needs a square matrix field")
    vals = f.values
    if f.rows == 1:
        flat = vals[..., 0, 0]
        scale = np.max(np.abs(flat))
        if np.min(np.abs(flat)) <= scale / cond_limit:
            raise SingularPoint("scalar field vanishes at a node")
        inv = (1.0 / flat)[..., None, None]
    else:
        sv = np.linalg.svd(vals, compute_uv=False)
        if np.min(sv[..., -1]) <= np.max(sv[..., 0]) / cond_limit:
            raise SingularPoint("matrix field is singular at a node")
        inv = np.linalg.inv(vals)
    avg = inv.mean(axis=tuple(range(f.grid.dim)))
    return np.linalg.inv(avg)


def sample_scaled(f: PeriodicField, eps, grid: TorusGrid):
    """Sample f(x/eps) on the torus grid exactly (pure index arithmetic).

    eps must equal 1/K for integer K and K*M_j/N_j must be a positive integer
    for each axis (M = cell nodes, N = torus nodes); otherwise the nodes of
    the torus do not land on cell nodes and Incommensurable is raised.
    """
    K = round(1.0 / eps)
    if K < 1 or abs(1.0 / eps - K) > 1e-9 * K:
        raise Incommensurable(f"eps={eps} is not the reciprocal of a positive integer")
    d = grid.dim
    if f.grid.dim != d:
        raise Incommensurable("cell field and torus grid dimensions differ")
    index = []
    for j in range(d):
        M, N = f.grid.shape[j], grid.shape[j]
        q, rem = divmod(K * M, N)
        if rem or q < 1:
            raise Incommensurable(
                f"axis {j}: K*M/N = {K}*{M}/{N} is not a positive integer")
        index.append((np.arange(N) * q) % M)
    sampled = f.values[np.ix_(*index)]
    return PeriodicField(grid, sampled, hermitian=False)


def norms(u: TorusFunction):
    """Discrete L2 / H1 / H^{-1} norms via Fourier multipliers (1+|xi|^2)^{±1/2}."""
    g = u.grid
    coeffs = g.to_modes(u.values)
    w = g.volume
    p2 = np.sum(np.abs(coeffs) ** 2, axis=-1)
    xi2 = g.xi_norm2()
    return {
        "l2": float(np.sqrt(w * np.sum(p2))),
        "h1": float(np.sqrt(w * np.sum((1.0 + xi2) * p2))),
        "h_minus_1": float(np.sqrt(w * np.sum(p2 / (1.0 + xi2)))),
    }


def l2_norm(grid, values):
    """L2 norm of raw nodal values (any trailing component shape)."""
    return float(np.sqrt(grid.node_weight * np.sum(np.abs(values) ** 2)))


def field_from_function(grid, fn, shape=(1, 1)):
    """Sample a callable fn(fractions)->matrix on the grid (lattice coordinates)."""
    fr = grid.fractions()
    vals = np.asarray(fn(fr), dtype=complex)
    want = grid.shape + tuple(shape)
    if vals.shape != want:
        vals = np.broadcast_to(vals, want).copy()
    return PeriodicField(grid, vals)
