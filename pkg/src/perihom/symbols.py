"""The constant-coefficient first order symbol b(xi) = sum_l b_l xi_l.

Sign convention, fixed once for the whole package: D = -i*grad, so the mode
e^{i<xi,x>} is an eigenfunction of D_l with eigenvalue xi_l, and b(D) acts in
Fourier space as multiplication by b(xi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient
from .fields import TorusFunction

_SIGMA_MIN = 1e-10


@dataclass
class SymbolB:
    """d constant m-by-n matrices and the ellipticity bounds of b(theta)*b(theta)."""

    b_mats: np.ndarray
    alpha0: float | None = None
    alpha1: float | None = None

    def __post_init__(self):
        self.b_mats = np.asarray(self.b_mats, dtype=complex)
        if self.b_mats.ndim == 1:
            self.b_mats = self.b_mats[:, None, None]
        if self.b_mats.ndim != 3:
            raise ValueError("b_mats must have shape (d, m, n)")
        d, m, n = self.b_mats.shape
        if m < n:
            raise ValueError(f"need m >= n, got m={m}, n={n}")

    @property
    def dim(self):
        return self.b_mats.shape[0]

    @property
    def m(self):
        return self.b_mats.shape[1]

    @property
    def n(self):
        return self.b_mats.shape[2]

    def at(self, xi):
        """b(xi) for one vector or an array of vectors (trailing dim d)."""
        xi = np.asarray(xi, dtype=float)
        return np.tensordot(xi, self.b_mats, axes=([-1], [0]))


def gradient_symbol(d):
    """b(D) = D: b_l = e_l as d x 1 columns (m=d, n=1), alphas exactly 1."""
    mats = np.zeros((d, d, 1), dtype=complex)
    for l in range(d):
        mats[l, l, 0] = 1.0
    return SymbolB(mats, alpha0=1.0, alpha1=1.0)


def _sphere_points(d, count):
    """Deterministic low-discrepancy points on the unit sphere."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        pts = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return np.concatenate([pts, np.eye(2)])  # always probe the axes
    # Gaussian-mapped Sobol points, normalized to the sphere.
    from scipy.stats import qmc
    from scipy.special import ndtri
    sob = qmc.Sobol(d, scramble=False, seed=0)
    u = sob.random_base2(int(np.ceil(np.log2(2 * count))))
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    lengths = np.linalg.norm(z, axis=1)
    z = z[lengths > 1e-8][:count]
    pts = z / np.linalg.norm(z, axis=1, keepdims=True)
    return np.concatenate([pts, np.eye(d)])  # always probe the axes


def estimate_alphas(b: SymbolB, samples=None):
    """Ellipticity bounds (alpha0, alpha1) of b(theta)*b(theta) on the sphere.

    Deterministic sphere sampling, refined by doubling until both bounds move
    by less than 1e-3 relative. Raises RankDeficient when any sampled symbol
    has a singular value below 1e-10.
    """
    d = b.dim
    count = max(samples or 0, 100 * d)
    prev = None
    for _ in range(8):
        theta = _sphere_points(d, count)
        bt = b.at(theta)
        sv = np.linalg.svd(bt, compute_uv=False)
        if np.min(sv[..., -1]) < _SIGMA_MIN:
            raise RankDeficient(
                f"rank b(theta) < n at a sampled direction (sigma_min={np.min(sv[..., -1]):.2e})")
        a0 = float(np.min(sv[..., -1]) ** 2)
        a1 = float(np.max(sv[..., 0]) ** 2)
        if prev is not None:
            da0 = abs(a0 - prev[0]) / max(prev[0], 1e-300)
            da1 = abs(a1 - prev[1]) / max(prev[1], 1e-300)
            if max(da0, da1) < 1e-3:
                break
        prev = (a0, a1)
        if d == 1:
            break
        count *= 2
    return a0, a1


def with_alphas(b: SymbolB, samples=None):
    """Return a copy of b with alpha0/alpha1 filled in (estimated if missing)."""
    if b.alpha0 is not None and b.alpha1 is not None:
        return b
    a0, a1 = estimate_alphas(b, samples)
    return SymbolB(b.b_mats, alpha0=a0, alpha1=a1)


def apply_bD(b: SymbolB, u: TorusFunction):
    """b(D)u as a Fourier multiplier: mode e^{i<xi,x>} picks up b(xi)."""
    g = u.grid
    coeffs = g.to_modes(u.values)
    bxi = _b_on_grid(b, g)
    out = np.einsum("...mn,...n->...m", bxi, coeffs)
    return TorusFunction(g, g.to_nodes(out))


def apply_bD_adjoint(b: SymbolB, v: TorusFunction):
    """b(D)* v: modewise multiplication by b(xi)*."""
    g = v.grid
    coeffs = g.to_modes(v.values)
    bxi = _b_on_grid(b, g)
    out = np.einsum("...nm,...n->...m", bxi.conj(), coeffs)
    return TorusFunction(g, g.to_nodes(out))


def _b_on_grid(b: SymbolB, grid):
    key = ("b_on_grid", id(b))
    if key not in grid._cache:
        grid._cache[key] = b.at(grid.xi())
    return grid._cache[key]
