"""First order correctors and flux approximants on the torus.

For scale eps and spectral parameter zeta the corrector applied to f is

    K f = Lambda^eps * (S b(D) u0) + LambdaTilde^eps * (S u0),
    u0 = (B0 - zeta Q0bar)^{-1} f,

with S the configured smoothing. The drop flags remove S from either term
(valid when the corresponding corrector field is bounded / integrable enough,
which the tool cannot verify from samples and therefore only warns about).
The flux approximant is

    G f = g_tilde^eps * (S b(D) u0) + g^eps (b(D)LambdaTilde)^eps * (S u0),

with the same per-term drop flags selecting the smoothing-free variants.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cellsolve import CellSolution, bD_of_matrix
from .fields import PeriodicField, TorusFunction, sample_scaled
from .resolvent import (
    EffectiveResolvent,
    lm_bD,
    lm_identity,
    lm_mult,
    lm_resolvent_effective,
    lm_smoothing,
)
from .smoothing import SmoothingKind


@dataclass
class CorrectorConfig:
    """Smoothing choice and the smoothing-free variant flags."""

    smoothing: str = "steklov"           # steklov | fourier | none
    drop_s_on_lambda: bool = False
    drop_s_on_lambda_tilde: bool = False
    assume_bounded: bool = False         # caller asserts the boundedness conditions

    def __post_init__(self):
        if self.smoothing not in ("steklov", "fourier", "none"):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")

    def drops(self):
        if self.smoothing == "none":
            return True, True
        return self.drop_s_on_lambda, self.drop_s_on_lambda_tilde


class CorrectorOperator:
    """Corrector and flux approximants bound to one (cell solution, eps, torus)."""

    def __init__(self, cfg: CorrectorConfig, cell: CellSolution,
                 eff_res: EffectiveResolvent, eps, torus=None, g_cell=None):
        self.cfg = cfg
        self.cell = cell
        self.eff_res = eff_res
        self.eps = float(eps)
        self.torus = torus or eff_res.torus
        self.b = eff_res.eff.b
        grid = self.torus
        self.lam_eps = sample_scaled(cell.Lambda, eps, grid).values
        self.gt_eps = sample_scaled(cell.g_tilde, eps, grid).values
        if cell.LambdaTilde is not None:
            self.lt_eps = sample_scaled(cell.LambdaTilde, eps, grid).values
            bdt = PeriodicField(cell.grid, bD_of_matrix(cell.grid, self.b, cell.LambdaTilde.values))
            self.bdt_eps = sample_scaled(bdt, eps, grid).values
        else:
            self.lt_eps = None
            self.bdt_eps = None
        self.g_bdt_eps = None
        if g_cell is not None and self.bdt_eps is not None:
            g_eps = sample_scaled(g_cell, eps, grid).values
            self.g_bdt_eps = np.einsum("...ij,...jk->...ik", g_eps, self.bdt_eps)
        drop_l, drop_lt = cfg.drops()
        if (drop_l or drop_lt) and not cfg.assume_bounded:
            peak = np.max(np.abs(self.lam_eps))
            peak_t = 0.0 if self.lt_eps is None else np.max(np.abs(self.lt_eps))
            warnings.warn(
                "smoothing-free corrector variant: boundedness of the corrector "
                f"fields is assumed, not verified (sampled maxima {peak:.3g}, {peak_t:.3g})",
                RuntimeWarning, stacklevel=2)

    def _smooth_map(self, k, dropped):
        if dropped:
            return lm_identity(self.torus, k)
        return lm_smoothing(self.torus, SmoothingKind(self.cfg.smoothing, self.eps), k)

    def corrector_map(self, zeta):
        """K(eps; zeta) as a LinearMap."""
        grid = self.torus
        b = self.b
        drop_l, drop_lt = self.cfg.drops()
        r0 = lm_resolvent_effective(self.eff_res, zeta)
        term = lm_mult(grid, self.lam_eps) @ self._smooth_map(b.m, drop_l) @ lm_bD(grid, b) @ r0
        if self.lt_eps is not None:
            term = term + lm_mult(grid, self.lt_eps) @ self._smooth_map(b.n, drop_lt) @ r0
        return term

    def approx_resolvent_map(self, zeta):
        """(B0 - zeta Q0bar)^{-1} + eps K(eps; zeta)."""
        return lm_resolvent_effective(self.eff_res, zeta) + self.corrector_map(zeta).scaled(self.eps)

    def flux_map(self, zeta):
        """The configured flux approximant variant as a LinearMap."""
        grid = self.torus
        b = self.b
        drop_l, drop_lt = self.cfg.drops()
        r0 = lm_resolvent_effective(self.eff_res, zeta)
        term = lm_mult(grid, self.gt_eps) @ self._smooth_map(b.m, drop_l) @ lm_bD(grid, b) @ r0
        if self.g_bdt_eps is not None:
            term = term + lm_mult(grid, self.g_bdt_eps) @ self._smooth_map(b.n, drop_lt) @ r0
        elif self.bdt_eps is not None:
            raise RuntimeError("flux approximant needs the coefficient field; pass g_cell")
        return term

    def apply_corrector(self, zeta, f: TorusFunction):
        return TorusFunction(self.torus, self.corrector_map(zeta)(f.values))

    def approx_resolvent(self, zeta, f: TorusFunction):
        return TorusFunction(self.torus, self.approx_resolvent_map(zeta)(f.values))

    def approx_flux(self, zeta, f: TorusFunction):
        return TorusFunction(self.torus, self.flux_map(zeta)(f.values))


def apply_corrector(cfg, cell, eff_res, zeta, f, eps, torus=None):
    """One-shot corrector application (builds a CorrectorOperator internally)."""
    return CorrectorOperator(cfg, cell, eff_res, eps, torus).apply_corrector(zeta, f)


def approx_resolvent(cfg, cell, eff_res, zeta, f, eps, torus=None):
    """u0 + eps * K f, the energy-norm resolvent approximant."""
    return CorrectorOperator(cfg, cell, eff_res, eps, torus).approx_resolvent(zeta, f)


def approx_flux(cfg, cell, eff_res, zeta, f, eps, g_cell, torus=None):
    """The configured flux approximant applied to f."""
    op = CorrectorOperator(cfg, cell, eff_res, eps, torus, g_cell=g_cell)
    return op.approx_flux(zeta, f)
