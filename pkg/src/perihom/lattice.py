"""Lattice geometry: dual basis, Brillouin zone membership, torus grids.

Conventions used everywhere downstream:

* the lattice is generated by rows ``a_1..a_d`` of ``basis``;
* the dual basis rows satisfy <b_j, a_i> = 2*pi*delta_ji;
* grids are uniform in lattice coordinates, node x = sum_j (k_j/N_j) a_j,
  so every lattice-periodic field is exactly grid periodic;
* Fourier modes are xi = sum_j m_j b_j with m_j in {-N_j/2 .. N_j/2 - 1}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBasis, Incommensurable

# Nonzero dual vectors with |m_j| <= 4 decide Brillouin membership for any
# point of the fundamental dual cell; tests assert this against a wider box.
DUAL_SEARCH_RANGE = 4


def _dual_vectors(dual_basis, search_range):
    """All nonzero integer combinations of the dual basis within the box."""
    d = dual_basis.shape[0]
    combos = [m for m in itertools.product(range(-search_range, search_range + 1), repeat=d)
              if any(m)]
    return np.array(combos, dtype=float) @ dual_basis


class Lattice:
    """A Bravais lattice with dual basis, cell volume and the radii r0, r1.

    2*r0 is the length of the shortest nonzero dual vector; 2*r1 is the
    diameter of the centered elementary cell.
    """

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] != basis.shape[1]:
            raise DegenerateBasis(f"basis must be square, got shape {basis.shape}")
        d = basis.shape[0]
        scale = np.max(np.linalg.norm(basis, axis=1))
        det = np.linalg.det(basis)
        if not np.isfinite(det) or abs(det) <= 1e-12 * scale**d:
            raise DegenerateBasis("basis vectors are numerically dependent")
        self.dim = d
        self.basis = basis
        self.dual_basis = 2.0 * np.pi * np.linalg.inv(basis).T
        self.cell_volume = abs(det)
        duals = _dual_vectors(self.dual_basis, DUAL_SEARCH_RANGE)
        self.r0 = 0.5 * np.min(np.linalg.norm(duals, axis=1))
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        self.r1 = 0.5 * np.max(np.linalg.norm(signs @ basis, axis=1))
        self._bz_duals = duals

    def __repr__(self):
        return f"Lattice(d={self.dim}, |O|={self.cell_volume:.6g}, r0={self.r0:.6g}, r1={self.r1:.6g})"


def make_lattice(basis):
    """Build a :class:`Lattice` from d basis vectors (rows)."""
    return Lattice(basis)


def in_brillouin(lattice, xi, search_range=None):
    """Whether xi lies in the (closed) central Brillouin zone.

    Membership means |xi| <= |xi - b| for every nonzero dual vector b in the
    search box; boundary ties are kept inside. Accepts a single vector or an
    array of trailing-dimension-d vectors and is vectorized over the rest.
    """
    xi = np.asarray(xi, dtype=float)
    if lattice.dim == 1 and xi.ndim == 0:
        xi = xi[None]
    duals = (lattice._bz_duals if search_range is None
             else _dual_vectors(lattice.dual_basis, search_range))
    scalar = xi.ndim == 1
    pts = xi[None, :] if scalar else xi.reshape(-1, lattice.dim)
    # |xi|^2 <= |xi - b|^2  <=>  2 <xi, b> <= |b|^2 (tolerance keeps ties inside)
    lhs = 2.0 * pts @ duals.T
    rhs = np.sum(duals**2, axis=1)
    tol = 1e-10 * (2.0 * lattice.r0) ** 2
    ok = np.all(lhs <= rhs + tol, axis=1)
    if scalar:
        return bool(ok[0])
    return ok.reshape(xi.shape[:-1])


@dataclass
class TorusGrid:
    """Uniform grid (in lattice coordinates) over one cell of ``lattice``.

    ``periods`` records the commensurability K of oscillating coefficients
    f(x/eps) with eps = 1/K that are meant to live on this grid; a plain cell
    grid has ``periods = 1``. All shape entries must be even so the symmetric
    mode range {-N/2 .. N/2-1} is available.
    """

    lattice: Lattice
    shape: tuple
    periods: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if len(self.shape) != self.lattice.dim:
            raise ValueError("grid shape rank must equal lattice dimension")
        if any(n <= 0 or n % 2 for n in self.shape):
            raise ValueError(f"points per dimension must be even and positive, got {self.shape}")
        if self.periods < 1 or int(self.periods) != self.periods:
            raise Incommensurable(f"periods must be a positive integer, got {self.periods}")

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def num_nodes(self):
        return int(np.prod(self.shape))

    @property
    def volume(self):
        return self.lattice.cell_volume

    @property
    def node_weight(self):
        """Quadrature weight of one node (rectangle rule)."""
        return self.volume / self.num_nodes

    def axis_fractions(self, j):
        """Lattice-coordinate fractions k/N_j along axis j."""
        return np.arange(self.shape[j]) / self.shape[j]

    def fractions(self):
        """Meshgrid of lattice-coordinate fractions, shape + (d,)."""
        if "fractions" not in self._cache:
            axes = [self.axis_fractions(j) for j in range(self.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._cache["fractions"] = np.stack(mesh, axis=-1)
        return self._cache["fractions"]

    def nodes(self):
        """Cartesian node coordinates, shape + (d,)."""
        if "nodes" not in self._cache:
            self._cache["nodes"] = self.fractions() @ self.lattice.basis
        return self._cache["nodes"]

    def mode_numbers(self):
        """Integer mode meshgrid m, shape + (d,)."""
        if "modes" not in self._cache:
            axes = [np.fft.fftfreq(n, d=1.0 / n).astype(int) for n in self.shape]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._cache["modes"] = np.stack(mesh, axis=-1)
        return self._cache["modes"]

    def xi(self):
        """Physical wavenumbers xi = sum_j m_j b_j, shape + (d,)."""
        if "xi" not in self._cache:
            self._cache["xi"] = self.mode_numbers() @ self.lattice.dual_basis
        return self._cache["xi"]

    def xi_norm2(self):
        if "xi2" not in self._cache:
            self._cache["xi2"] = np.sum(self.xi() ** 2, axis=-1)
        return self._cache["xi2"]

    def cell_grid(self, cell_shape):
        """The one-cell grid compatible with this torus (periods=1)."""
        return TorusGrid(self.lattice, cell_shape, periods=1)

    def to_modes(self, values):
        """Forward DFT over the grid axes, normalized so u = sum u_hat e^{i<xi,x>}."""
        return np.fft.fftn(values, axes=tuple(range(self.dim))) / self.num_nodes

    def to_nodes(self, coeffs):
        return np.fft.ifftn(coeffs * self.num_nodes, axes=tuple(range(self.dim)))
