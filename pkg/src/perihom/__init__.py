"""Periodic homogenization toolkit.

Computes effective operators and correctors for matrix elliptic operators
with lower order terms on a periodic lattice, solves the oscillatory and
effective generalized resolvents on a torus, and verifies the two-parameter
(eps, zeta) error laws empirically.
"""

from .lattice import Lattice, TorusGrid, in_brillouin, make_lattice
from .fields import PeriodicField, TorusFunction, constant_field, harmonic_mean, mean, norms, sample_scaled
from .symbols import SymbolB, apply_bD, estimate_alphas, gradient_symbol
from .smoothing import SmoothingKind, apply_smoothing, steklov_symbol
from .cellsolve import (
    CellSolution,
    EffectiveOperator,
    SchrodingerModel,
    assemble_VW,
    build_effective,
    build_schrodinger,
    solve_cell,
    solve_lambda,
    solve_lambda_tilde,
    solve_omega,
)
from .resolvent import (
    EffectiveResolvent,
    LinearMap,
    OscillatoryOperator,
    SpectralParameter,
    estimate_opnorm,
    flux,
    solve_effective,
    solve_oscillatory,
)
from .corrector import CorrectorConfig, CorrectorOperator, apply_corrector, approx_flux, approx_resolvent
from .harness import EstimateSpec, SweepReport, c_phi, fit_rates, measure_discrepancy, rho_zeta, run_verification

__all__ = [
    "Lattice", "TorusGrid", "make_lattice", "in_brillouin",
    "PeriodicField", "TorusFunction", "constant_field", "mean", "harmonic_mean",
    "sample_scaled", "norms",
    "SymbolB", "gradient_symbol", "estimate_alphas", "apply_bD",
    "SmoothingKind", "steklov_symbol", "apply_smoothing",
    "CellSolution", "EffectiveOperator", "SchrodingerModel",
    "solve_lambda", "solve_lambda_tilde", "assemble_VW", "solve_cell",
    "build_effective", "build_schrodinger", "solve_omega",
    "OscillatoryOperator", "SpectralParameter", "EffectiveResolvent", "LinearMap",
    "solve_effective", "solve_oscillatory", "flux", "estimate_opnorm",
    "CorrectorConfig", "CorrectorOperator", "apply_corrector", "approx_resolvent",
    "approx_flux",
    "EstimateSpec", "SweepReport", "c_phi", "rho_zeta", "measure_discrepancy",
    "fit_rates", "run_verification",
]

__version__ = "0.1.0"
