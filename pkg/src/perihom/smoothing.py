"""The two corrector smoothings, realized as Fourier multipliers on the torus.

* cell averaging ("steklov"): exact symbol prod_j sinc(<eps*xi, a_j>/2) for a
  parallelepiped cell, computed in lattice coordinates so no quadrature is
  involved;
* sharp cutoff ("fourier"): indicator of the Brillouin zone scaled by 1/eps,
  boundary modes kept (same tie rule as lattice.in_brillouin);
* "none": identity, the smoothing-free corrector variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import TorusFunction
from .lattice import in_brillouin

KINDS = ("steklov", "fourier", "none")


@dataclass(frozen=True)
class SmoothingKind:
    kind: str
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        if self.kind != "none" and not self.eps > 0:
            raise ValueError(f"smoothing {self.kind!r} needs eps > 0")


def steklov_symbol(lattice, eps, xi):
    """Cell-average symbol |O|^{-1} int_O e^{-i<eps*xi, z>} dz at one or many xi."""
    xi = np.asarray(xi, dtype=float)
    if lattice.dim == 1 and xi.ndim == 0:
        xi = xi[None]
    t = 0.5 * eps * (xi @ lattice.basis.T)  # t_j = eps <xi, a_j> / 2
    vals = np.prod(np.sinc(t / np.pi), axis=-1)
    return complex(vals) if vals.ndim == 0 else vals


def smoothing_symbol(s: SmoothingKind, grid):
    """The multiplier values on the grid's mode set (cached on the grid)."""
    key = ("smooth", s.kind, s.eps)
    if key not in grid._cache:
        if s.kind == "none":
            sym = np.ones(grid.shape)
        elif s.kind == "steklov":
            sym = np.real(steklov_symbol(grid.lattice, s.eps, grid.xi()))
        else:
            sym = in_brillouin(grid.lattice, s.eps * grid.xi()).astype(float)
        grid._cache[key] = sym
    return grid._cache[key]


def apply_smoothing(s: SmoothingKind, u: TorusFunction):
    """Multiply each Fourier mode of u by the smoothing symbol."""
    if s.kind == "none":
        return u
    g = u.grid
    sym = smoothing_symbol(s, g)
    coeffs = g.to_modes(u.values) * sym[..., None]
    return TorusFunction(g, g.to_nodes(coeffs))
