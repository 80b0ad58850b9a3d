"""Problem models: coefficient bundles, spectral shifts, operators at scale eps.

A ProblemModel owns the cell coefficients (g, a_j, Q, Q0) and, once prepared,
the cell solution, positivity shift c5, reference shift lambda0 and the
effective operator. The torus for scale eps = 1/K is one lattice cell with
K*M nodes per axis (M = cell nodes), so oscillating samples are exact and the
discrete cell hierarchy is consistent across the sweep.

The positivity shift follows the spectral-shift recipe: c5 = max(0, -mu) +
0.1*max(1, |mu|) where mu is the bottom of the discrete pencil (B_unshifted,
Q0^eps) at the reference eps, found by Lanczos (dense fallback for small
grids); lambda0 = c5 + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cellsolve import CellSolution, build_effective, solve_cell, solve_omega, build_schrodinger
from .corrector import CorrectorConfig, CorrectorOperator
from .fields import PeriodicField, constant_field, mean, sample_scaled
from .lattice import Lattice, TorusGrid
from .resolvent import EffectiveResolvent, OscillatoryOperator
from .symbols import SymbolB, gradient_symbol


@dataclass
class ProblemModel:
    lattice: Lattice
    cell_grid: TorusGrid
    b: SymbolB
    g: PeriodicField
    a_fields: list | None = None
    Q: PeriodicField | None = None
    Q0: PeriodicField | None = None
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
    solver_rtol: float = 1e-8
    cell_rtol: float = 1e-10
    dealias: bool = False
    # filled by prepare()
    cell: CellSolution | None = None
    eff = None
    c5: float | None = None
    lambda0: float | None = None
    pencil_bottom: float | None = None

    def __post_init__(self):
        if self.Q0 is None:
            self.Q0 = constant_field(self.cell_grid, np.eye(self.b.n))

    @property
    def prepared(self):
        return self.eff is not None


def torus_for(problem: ProblemModel, eps):
    K = round(1.0 / eps)
    shape = tuple(K * n for n in problem.cell_grid.shape)
    return TorusGrid(problem.lattice, shape, periods=K)


def is_commensurable(eps):
    """Whether eps is (numerically) the reciprocal of a positive integer."""
    if not eps > 0:
        return False
    K = round(1.0 / eps)
    return K >= 1 and abs(1.0 / eps - K) <= 1e-9 * K


def double_problem(problem: ProblemModel):
    """The same physical problem on a doubled box (torus-size sensitivity).

    The cell fields are tiled twice per axis onto the doubled lattice, so at
    the same eps the coefficients oscillate with 2K periods across the box.
    Cell data and shifts carry over (the tiled correctors solve the doubled
    cell problem).
    """
    from .lattice import Lattice

    if not problem.prepared:
        raise RuntimeError("prepare() before doubling")
    d = problem.cell_grid.dim
    lat2 = Lattice(2.0 * problem.lattice.basis)
    cell2 = TorusGrid(lat2, tuple(2 * n for n in problem.cell_grid.shape))
    reps = (2,) * d + (1, 1)

    def tile(f):
        return None if f is None else PeriodicField(cell2, np.tile(f.values, reps))

    p2 = ProblemModel(lattice=lat2, cell_grid=cell2, b=problem.b, g=tile(problem.g),
                      a_fields=None if not problem.a_fields else [tile(a) for a in problem.a_fields],
                      Q=tile(problem.Q), Q0=tile(problem.Q0), corrector=problem.corrector,
                      solver_rtol=problem.solver_rtol, cell_rtol=problem.cell_rtol,
                      dealias=problem.dealias)
    c = problem.cell
    p2.cell = CellSolution(tile(c.Lambda), tile(c.LambdaTilde), tile(c.g_tilde),
                           c.g0, c.V, c.W, dict(c.residual_norms))
    p2.c5, p2.lambda0 = problem.c5, problem.lambda0
    p2.pencil_bottom = problem.pencil_bottom
    p2.eff = build_effective(p2.cell, p2.a_fields, p2.Q, p2.Q0, p2.c5, p2.lambda0, b=p2.b)
    return p2


def _sample_all(problem, eps, torus):
    g = sample_scaled(problem.g, eps, torus).values
    a = None
    if problem.a_fields:
        a = [sample_scaled(f, eps, torus).values for f in problem.a_fields]
    q0 = sample_scaled(problem.Q0, eps, torus).values
    q = np.zeros_like(q0)
    if problem.Q is not None:
        q = sample_scaled(problem.Q, eps, torus).values.copy()
    return g, a, q, q0


def unshifted_operator(problem: ProblemModel, eps, torus=None):
    """The operator without the positivity shift (used to find the shift)."""
    torus = torus or torus_for(problem, eps)
    g, a, q, q0 = _sample_all(problem, eps, torus)
    return OscillatoryOperator(torus, problem.b, g, a, q, q0, dealias=problem.dealias)


def oscillatory_operator(problem: ProblemModel, eps, torus=None):
    """The nonnegative operator: potential includes + c5 * Q0^eps."""
    if problem.c5 is None:
        raise RuntimeError("prepare() the problem before building shifted operators")
    torus = torus or torus_for(problem, eps)
    g, a, q, q0 = _sample_all(problem, eps, torus)
    q = q + problem.c5 * q0
    return OscillatoryOperator(torus, problem.b, g, a, q, q0, dealias=problem.dealias)


def pencil_bottom(B: OscillatoryOperator, dense_cutoff=2048, tol=1e-6):
    """Smallest eigenvalue of the pencil (B, q0): bottom of q0^{-1/2} B q0^{-1/2}."""
    grid = B.torus
    n = B.n
    ntot = grid.num_nodes * n
    q0 = B.q0_values
    if n == 1:
        isq = (1.0 / np.sqrt(q0[..., 0, 0].real))[..., None]

        def sym_apply(u):
            return isq * B.apply(isq * u)
    else:
        w, U = np.linalg.eigh(q0)
        isq_m = np.einsum("...ij,...j,...kj->...ik", U, 1.0 / np.sqrt(w), U.conj())

        def sym_apply(u):
            v = np.einsum("...ij,...j->...i", isq_m, u)
            return np.einsum("...ij,...j->...i", isq_m, B.apply(v))

    shape = grid.shape + (n,)
    if ntot <= dense_cutoff:
        eye = np.eye(ntot)
        H = np.empty((ntot, ntot), dtype=complex)
        for k in range(ntot):
            H[:, k] = sym_apply(eye[:, k].reshape(shape)).reshape(-1)
        H = 0.5 * (H + H.conj().T)
        return float(np.linalg.eigvalsh(H)[0])
    from scipy.sparse.linalg import LinearOperator, eigsh

    op = LinearOperator((ntot, ntot),
                        matvec=lambda x: sym_apply(x.reshape(shape)).reshape(-1),
                        dtype=complex)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(ntot)
    vals = eigsh(op, k=1, which="SA", tol=tol, v0=v0, maxiter=10000,
                 return_eigenvectors=False)
    return float(vals[0])


def effective_pencil_bottom(eff, grid):
    """min over grid modes of lambda_min(Q0bar^{-1/2} L0(xi) Q0bar^{-1/2})."""
    L0 = eff.L0(grid.xi())
    w, U = np.linalg.eigh(eff.Q0bar)
    isq = U @ np.diag(1.0 / np.sqrt(w.real)) @ U.conj().T
    sym = np.einsum("ij,...jk,kl->...il", isq, L0, isq)
    return float(np.min(np.linalg.eigvalsh(sym)))


def prepare(problem: ProblemModel, reference_eps=1 / 8, shift_margin=0.1):
    """Cell solves, spectral shifts and effective operator; idempotent."""
    if problem.prepared:
        return problem
    if problem.cell is None:
        problem.cell = solve_cell(problem.g, problem.b, problem.a_fields,
                                  rtol=problem.cell_rtol, dealias=problem.dealias)
    B_ref = unshifted_operator(problem, reference_eps)
    mu = pencil_bottom(B_ref)
    problem.pencil_bottom = mu
    problem.c5 = max(0.0, -mu) + shift_margin * max(1.0, abs(mu))
    problem.lambda0 = problem.c5 + 1.0
    problem.eff = build_effective(problem.cell, problem.a_fields, problem.Q, problem.Q0,
                                  problem.c5, problem.lambda0, b=problem.b)
    return problem


def effective_resolvent(problem: ProblemModel, torus):
    return EffectiveResolvent(problem.eff, torus)


def corrector_operator(problem: ProblemModel, eps, torus=None, cfg=None):
    torus = torus or torus_for(problem, eps)
    return CorrectorOperator(cfg or problem.corrector, problem.cell,
                             effective_resolvent(problem, torus), eps,
                             torus=torus, g_cell=problem.g)


# ---------------------------------------------------------------------------
# periodic Schrodinger model with the eps^{-2} singular potential

@dataclass
class SandwichModel:
    """Check operator with potential eps^{-2} v + eps^{-1} v_hat + Vcal,
    factorized through the ground state omega of the eps^{-2} part.

    The transformed problem (metric omega^2 g_check, potentials v_hat*omega^2,
    Vcal*omega^2, weight Q0_check*omega^2) is an ordinary ProblemModel whose
    effective resolvent, sandwiched between omega^eps factors, approximates
    the check resolvent.
    """

    g_check: PeriodicField
    v_check_shifted: PeriodicField
    omega: PeriodicField
    lambda_min: float
    A: PeriodicField
    v_hat: PeriodicField
    Vcal_check: PeriodicField
    Q0_check: PeriodicField
    inner: ProblemModel
    schrodinger: object = None

    def omega_eps(self, eps, torus):
        return sample_scaled(self.omega, eps, torus).values[..., 0, 0].real


def build_sandwich_model(lattice, cell_grid, g_check, v_check, A, v_hat_raw,
                         Vcal_check, Q0_check, solver_rtol=1e-8, cell_rtol=1e-10):
    """Assemble the singular model: ground state, transformed coefficients."""
    omega, lam, v_shifted = solve_omega(g_check, v_check)
    w2 = omega.values[..., 0, 0].real ** 2

    # v_hat must integrate to zero against omega^2; shift by a constant
    vh = v_hat_raw.values[..., 0, 0].real
    vh = vh - np.mean(vh * w2) / np.mean(w2)
    v_hat = PeriodicField(cell_grid, vh.astype(complex))

    g_inner = PeriodicField(cell_grid, w2[..., None, None] * g_check.values)
    v_inner = PeriodicField(cell_grid, (vh * w2).astype(complex))
    vcal_inner = PeriodicField(cell_grid, (Vcal_check.values[..., 0, 0].real * w2).astype(complex))
    q0_inner = PeriodicField(cell_grid, (Q0_check.values[..., 0, 0].real * w2).astype(complex))

    model = build_schrodinger(A, v_inner, vcal_inner, g_inner, rtol=cell_rtol)
    inner = ProblemModel(lattice=lattice, cell_grid=cell_grid, b=gradient_symbol(cell_grid.dim),
                         g=g_inner, a_fields=model.a_fields, Q=model.Q, Q0=q0_inner,
                         solver_rtol=solver_rtol, cell_rtol=cell_rtol)
    inner.cell = model.cell
    sandwich = SandwichModel(g_check=g_check, v_check_shifted=v_shifted, omega=omega,
                             lambda_min=lam, A=A, v_hat=v_hat, Vcal_check=Vcal_check,
                             Q0_check=Q0_check, inner=inner)
    sandwich.schrodinger = model
    return sandwich


def prepare_sandwich(sandwich: SandwichModel, reference_eps=1 / 8, shift_margin=0.1):
    inner = sandwich.inner
    if inner.prepared:
        return sandwich
    B_ref = unshifted_operator(inner, reference_eps)
    mu = pencil_bottom(B_ref)
    inner.pencil_bottom = mu
    inner.c5 = max(0.0, -mu) + shift_margin * max(1.0, abs(mu))
    inner.lambda0 = inner.c5 + 1.0
    inner.eff = build_effective(inner.cell, inner.a_fields, inner.Q, inner.Q0,
                                inner.c5, inner.lambda0, b=inner.b)
    return sandwich


def check_operator(sandwich: SandwichModel, eps, torus=None):
    """The literal singular operator (metric g_check, potential with eps^{-2},
    eps^{-1} parts and the c5 shift in the check weight)."""
    inner = sandwich.inner
    if inner.c5 is None:
        raise RuntimeError("prepare_sandwich() first")
    torus = torus or torus_for(inner, eps)
    d = torus.dim
    g = sample_scaled(sandwich.g_check, eps, torus).values
    q0c = sample_scaled(sandwich.Q0_check, eps, torus).values
    v2 = sample_scaled(sandwich.v_check_shifted, eps, torus).values
    vh = sample_scaled(sandwich.v_hat, eps, torus).values
    vc = sample_scaled(sandwich.Vcal_check, eps, torus).values
    Aeps = sample_scaled(sandwich.A, eps, torus).values[..., 0]
    eta = np.einsum("...ij,...j->...i", g, Aeps)
    a = [PeriodicField(torus, (-eta[..., j]).astype(complex)).values for j in range(d)]
    gAA = np.einsum("...j,...j->...", eta, Aeps)[..., None, None]
    q = v2 / eps**2 + vh / eps + vc + gAA + inner.c5 * q0c
    return OscillatoryOperator(torus, inner.b, g, a, q, q0c, dealias=inner.dealias)


def sandwich_preconditioner(sandwich: SandwichModel, eps, torus, zeta):
    """omega^eps (B0 - zeta Q0bar)^{-1} omega^eps, the natural check-side
    preconditioner."""
    weps = sandwich.omega_eps(eps, torus)
    res = effective_resolvent(sandwich.inner, torus)

    def apply_M(v):
        return weps[..., None] * res.solve(zeta, weps[..., None] * v)

    return apply_M
