"""Cell problems on one lattice cell and assembly of the effective operator.

Two cell problems are solved on the mean-zero subspace of the cell grid:

* the n x m corrector of the principal part,
      b(D)* g (b(D) Lambda + 1_m) = 0,  cell mean of Lambda = 0,
  which yields the flux field g_tilde = g (b(D) Lambda + 1_m) and the
  effective matrix g0 = mean(g_tilde);
* the n x n corrector of the first order terms,
      b(D)* g b(D) LambdaTilde + sum_j D_j a_j* = 0,  mean zero.

The constant matrices V, W are cross Gram matrices of the two corrector
fluxes. Everything is discretized Fourier-Galerkin with collocation
(pseudospectral) products; the zero Fourier mode is pinned to zero, which
realizes the mean constraint exactly. Solves are preconditioned conjugate
gradients, the preconditioner being the constant-coefficient symbol inverse
(b(xi)* mean(g) b(xi))^{-1} per mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonzeroMean, NotHermitian, NotPositive, SignFlip, SolverDiverged
from .fields import PeriodicField, mean
from .symbols import SymbolB, _b_on_grid


# ---------------------------------------------------------------------------
# pointwise / spectral building blocks (operate on raw nodal arrays)

def _grid_axes(grid):
    return tuple(range(grid.dim))


def _mul_matvec(coeff, vec):
    """Pointwise coeff[...,i,j] * vec[...,j] (collocation product)."""
    return np.einsum("...ij,...j->...i", coeff, vec)


def _pad_modes(coeffs, grid, factor=2):
    """Zero-pad the spectrum to a grid `factor` times finer (exact product aid)."""
    d = grid.dim
    big_shape = tuple(factor * n for n in grid.shape)
    out = np.zeros(big_shape + coeffs.shape[d:], dtype=complex)
    idx = tuple(np.fft.fftfreq(n, d=1.0 / n).astype(int) for n in grid.shape)
    sel = np.ix_(*idx)
    out[sel] = coeffs
    return out


def _truncate_modes(coeffs_big, grid, factor=2):
    idx = tuple(np.fft.fftfreq(n, d=1.0 / n).astype(int) for n in grid.shape)
    return coeffs_big[np.ix_(*idx)]


class DealiasedMultiplier:
    """Exact (Galerkin) product with a fixed matrix field via zero padding."""

    def __init__(self, grid, coeff_values):
        self.grid = grid
        d = grid.dim
        ax = _grid_axes(grid)
        modes = np.fft.fftn(coeff_values, axes=ax) / grid.num_nodes
        big = _pad_modes(modes, grid)
        self.big_shape = big.shape[:d]
        self.coeff_fine = np.fft.ifftn(big * np.prod(self.big_shape), axes=ax)

    def __call__(self, vec):
        g = self.grid
        ax = _grid_axes(g)
        modes = _pad_modes(g.to_modes(vec), g)
        fine = np.fft.ifftn(modes * np.prod(self.big_shape), axes=ax)
        prod = _mul_matvec(self.coeff_fine, fine)
        pm = np.fft.fftn(prod, axes=ax) / np.prod(self.big_shape)
        return g.to_nodes(_truncate_modes(pm, g))


def make_multiplier(grid, coeff_values, dealias=False):
    if dealias:
        return DealiasedMultiplier(grid, coeff_values)
    return lambda vec: _mul_matvec(coeff_values, vec)


def apply_b_modes(grid, b, coeffs):
    """b(xi) applied to mode coefficients (..., n) -> (..., m)."""
    bxi = _b_on_grid(b, grid)
    return np.einsum("...mn,...n->...m", bxi, coeffs)


def apply_b_adj_modes(grid, b, coeffs):
    bxi = _b_on_grid(b, grid)
    return np.einsum("...nm,...n->...m", bxi.conj(), coeffs)


def apply_d_modes(grid, j, coeffs):
    """D_j on mode coefficients: multiply by xi_j."""
    return grid.xi()[..., j, None] * coeffs


class PrincipalPartOperator:
    """u -> b(D)* g b(D) u on the cell grid, collocation or dealiased product."""

    def __init__(self, grid, b, g_values, dealias=False):
        self.grid = grid
        self.b = b
        self.mul_g = make_multiplier(grid, g_values, dealias)

    def __call__(self, u):
        g = self.grid
        flux = self.mul_g(g.to_nodes(apply_b_modes(g, self.b, g.to_modes(u))))
        return g.to_nodes(apply_b_adj_modes(g, self.b, g.to_modes(flux)))


# ---------------------------------------------------------------------------
# preconditioned conjugate gradients on the mean-zero subspace

def _pcg(apply_A, apply_M, rhs, rtol, maxiter, weight):
    """CG for a Hermitian positive semidefinite operator on rhs's subspace.

    Returns (solution, relative_residual, iterations); raises SolverDiverged
    on stagnation. `weight` scales the inner product (irrelevant for the
    iteration itself but kept so reported residuals are quadrature norms).
    """

    def dot(a, bb):
        return complex(weight * np.vdot(a, bb))

    x = np.zeros_like(rhs)
    r = rhs.copy()
    norm_b = np.sqrt(abs(dot(r, r)))
    if norm_b == 0.0:
        return x, 0.0, 0
    z = apply_M(r)
    p = z.copy()
    rz = dot(r, z)
    best = np.inf
    stagnant = 0
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        pAp = dot(p, Ap)
        if pAp.real <= 0:
            raise SolverDiverged(f"CG curvature non-positive at iteration {it}")
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.sqrt(abs(dot(r, r))) / norm_b
        if res <= rtol:
            return x, res, it
        if res < best * 0.999:
            best, stagnant = min(best, res), 0
        else:
            stagnant += 1
            if stagnant > 50:
                raise SolverDiverged(f"CG stagnated at residual {res:.3e} (target {rtol:.1e})")
        z = apply_M(r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(f"CG did not reach {rtol:.1e} in {maxiter} iterations (residual {res:.3e})")


def _cell_preconditioner(grid, b, g_mean):
    """Per-mode inverse of b(xi)* mean(g) b(xi); zero mode pinned to 0."""
    bxi = _b_on_grid(b, grid)
    n = b.n
    mats = np.einsum("...mi,mk,...kj->...ij", bxi.conj(), g_mean, bxi)
    flat = mats.reshape(-1, n, n)
    inv = np.zeros_like(flat)
    norms2 = np.einsum("qij,qij->q", flat.conj(), flat).real
    nz = norms2 > 1e-30
    inv[nz] = np.linalg.inv(flat[nz])
    inv = inv.reshape(mats.shape)

    def apply_M(r):
        cm = grid.to_modes(r)
        out = np.einsum("...ij,...j->...i", inv, cm)
        return grid.to_nodes(out)

    return apply_M


def _check_g(g: PeriodicField):
    vals = g.values
    dev = np.max(np.abs(vals - vals.conj().swapaxes(-1, -2)))
    scale = np.max(np.abs(vals))
    if dev > 1e-10 * scale:
        raise NotHermitian(f"coefficient is not Hermitian (deviation {dev:.2e})")
    if g.rows == 1:
        lam_min = np.min(vals[..., 0, 0].real)
    else:
        lam_min = np.min(np.linalg.eigvalsh(vals))
    if lam_min <= 0:
        raise NotPositive(f"coefficient not positive definite at a node (lambda_min={lam_min:.3e})")


# ---------------------------------------------------------------------------
# cell problems

@dataclass
class CellSolution:
    """Both correctors plus the flux field and the constant matrices."""

    Lambda: PeriodicField          # n x m
    LambdaTilde: PeriodicField | None
    g_tilde: PeriodicField         # m x m
    g0: np.ndarray                 # m x m
    V: np.ndarray                  # m x n
    W: np.ndarray                  # n x n
    residual_norms: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.Lambda.grid


def solve_lambda(g: PeriodicField, b: SymbolB, rtol=1e-10, maxiter=5000, dealias=False):
    """Solve the principal cell problem; returns (Lambda, g_tilde, g0, residuals)."""
    _check_g(g)
    grid = g.grid
    m, n = b.m, b.n
    if g.rows != m:
        raise ValueError(f"coefficient is {g.rows}x{g.cols} but the symbol expects m={m}")
    apply_A = PrincipalPartOperator(grid, b, g.values, dealias)
    apply_M = _cell_preconditioner(grid, b, mean(g))
    lam = np.zeros(grid.shape + (n, m), dtype=complex)
    residuals = []
    for c in range(m):
        g_col = g.values[..., :, c]
        rhs = -grid.to_nodes(apply_b_adj_modes(grid, b, grid.to_modes(g_col)))
        sol, res, _ = _pcg(apply_A, apply_M, rhs, rtol, maxiter, grid.node_weight)
        # pin the zero mode (mean) exactly
        sol = sol - sol.mean(axis=_grid_axes(grid))
        lam[..., :, c] = sol
        residuals.append(res)
    Lambda = PeriodicField(grid, lam)
    g_tilde, g0 = flux_field(g, Lambda, b, dealias)
    return Lambda, g_tilde, g0, {"lambda": residuals}


def flux_field(g, Lambda, b, dealias=False):
    """g_tilde = g (b(D) Lambda + 1_m) and its mean g0 (Hermitian-symmetrized)."""
    grid = g.grid
    bdl = bD_of_matrix(grid, b, Lambda.values)       # (..., m, m)
    eye = np.eye(b.m)
    mul_g = make_multiplier(grid, g.values, dealias)
    gt = np.empty_like(bdl)
    for c in range(b.m):
        gt[..., :, c] = mul_g(bdl[..., :, c] + eye[:, c])
    g_tilde = PeriodicField(grid, gt)
    g0 = mean(g_tilde)
    dev = np.max(np.abs(g0 - g0.conj().T))
    if dev > 1e-8 * max(np.max(np.abs(g0)), 1e-300):
        raise NotHermitian(f"effective matrix asymmetric by {dev:.2e}")
    g0 = 0.5 * (g0 + g0.conj().T)
    return g_tilde, g0


def bD_of_matrix(grid, b, values):
    """Apply b(D) columnwise to an (..., n, k) matrix field -> (..., m, k)."""
    k = values.shape[-1]
    out = np.empty(grid.shape + (b.m, k), dtype=complex)
    for c in range(k):
        out[..., :, c] = grid.to_nodes(apply_b_modes(grid, b, grid.to_modes(values[..., :, c])))
    return out


def solve_lambda_tilde(g: PeriodicField, a_fields, b: SymbolB, rtol=1e-10,
                       maxiter=5000, dealias=False):
    """Solve the lower-order cell problem; returns (LambdaTilde, residuals)."""
    _check_g(g)
    grid = g.grid
    n = b.n
    rhs_all = np.zeros(grid.shape + (n, n), dtype=complex)
    for j, aj in enumerate(a_fields):
        a_star = aj.values.conj().swapaxes(-1, -2)
        for c in range(n):
            cm = grid.to_modes(a_star[..., :, c])
            rhs_all[..., :, c] -= grid.to_nodes(apply_d_modes(grid, j, cm))
    apply_A = PrincipalPartOperator(grid, b, g.values, dealias)
    apply_M = _cell_preconditioner(grid, b, mean(g))
    sol_all = np.zeros_like(rhs_all)
    residuals = []
    for c in range(n):
        rhs = rhs_all[..., :, c]
        rhs = rhs - rhs.mean(axis=_grid_axes(grid))  # project out the (zero) mean
        sol, res, _ = _pcg(apply_A, apply_M, rhs, rtol, maxiter, grid.node_weight)
        sol = sol - sol.mean(axis=_grid_axes(grid))
        sol_all[..., :, c] = sol
        residuals.append(res)
    return PeriodicField(grid, sol_all), {"lambda_tilde": residuals}


def assemble_VW(g: PeriodicField, Lambda: PeriodicField, LambdaTilde, b: SymbolB):
    """V = mean((bD Lambda)* g (bD LambdaTilde)), W likewise with both tilde."""
    grid = g.grid
    if LambdaTilde is None:
        return np.zeros((b.m, b.n), dtype=complex), np.zeros((b.n, b.n), dtype=complex)
    bdl = bD_of_matrix(grid, b, Lambda.values)        # (..., m, m)
    bdt = bD_of_matrix(grid, b, LambdaTilde.values)   # (..., m, n)
    g_bdt = np.einsum("...ij,...jk->...ik", g.values, bdt)
    V = np.einsum("...ji,...jk->...ik", bdl.conj(), g_bdt).mean(axis=_grid_axes(grid))
    W = np.einsum("...ji,...jk->...ik", bdt.conj(), g_bdt).mean(axis=_grid_axes(grid))
    W = 0.5 * (W + W.conj().T)
    return V, W


def solve_cell(g, b, a_fields=None, rtol=1e-10, maxiter=5000, dealias=False):
    """Run both cell problems and assemble a CellSolution."""
    Lambda, g_tilde, g0, res1 = solve_lambda(g, b, rtol, maxiter, dealias)
    if a_fields:
        LambdaTilde, res2 = solve_lambda_tilde(g, a_fields, b, rtol, maxiter, dealias)
        res1.update(res2)
    else:
        LambdaTilde = None
    V, W = assemble_VW(g, Lambda, LambdaTilde, b)
    return CellSolution(Lambda, LambdaTilde, g_tilde, g0, V, W, res1)


# ---------------------------------------------------------------------------
# effective operator

@dataclass
class EffectiveOperator:
    """Constant-coefficient symbol of the homogenized operator.

    L0(xi) = b(xi)* g0 b(xi) - b(xi)* V - V* b(xi) + sum_j abar_j xi_j
             - W + Qbar + c5*Q0bar,
    with abar_j := mean(a_j + a_j*); L(xi) = L0(xi) + lambda0*Q0bar.
    """

    b: SymbolB
    g0: np.ndarray
    V: np.ndarray
    W: np.ndarray
    abar_sum: np.ndarray      # (d, n, n)
    Qbar: np.ndarray          # (n, n)
    Q0bar: np.ndarray         # (n, n)
    c5: float
    lambda0: float

    @property
    def n(self):
        return self.b.n

    def L0(self, xi):
        xi = np.asarray(xi, dtype=float)
        bxi = self.b.at(xi)
        quad = np.einsum("...mi,mk,...kj->...ij", bxi.conj(), self.g0, bxi)
        lin = np.einsum("...mi,mj->...ij", bxi.conj(), self.V)
        first = np.tensordot(xi, self.abar_sum, axes=([-1], [0]))
        const = -self.W + self.Qbar + self.c5 * self.Q0bar
        return quad - lin - lin.conj().swapaxes(-1, -2) + first + const

    def L(self, xi):
        return self.L0(xi) + self.lambda0 * self.Q0bar

    def positivity_scan(self, grid):
        """min eig of L0 over the grid's modes and the uniform constant
        c_check with L(xi) >= c_check (|xi|^2+1) on the mode set."""
        L0 = self.L0(grid.xi())
        eigs = np.linalg.eigvalsh(L0)
        lam = self.lambda0 * np.linalg.eigvalsh(self.Q0bar)[0]
        ratios = (eigs[..., 0] + lam) / (1.0 + grid.xi_norm2())
        return float(np.min(eigs)), float(np.min(ratios))


def build_effective(cell: CellSolution, a_fields, Q, Q0, c5, lambda0,
                    b: SymbolB | None = None, check_grid=None):
    """Assemble the mode-evaluable effective symbol from cell data and means."""
    if b is None:
        raise ValueError("pass the first order symbol b")
    grid = cell.grid
    n = b.n
    d = b.dim
    abar = np.zeros((d, n, n), dtype=complex)
    if a_fields:
        for j, aj in enumerate(a_fields):
            m = mean(aj)
            abar[j] = m + m.conj().T
    Qbar = mean(Q) if Q is not None else np.zeros((n, n), dtype=complex)
    Q0bar = mean(Q0) if isinstance(Q0, PeriodicField) else np.atleast_2d(np.asarray(Q0, dtype=complex))
    eff = EffectiveOperator(b=b, g0=cell.g0, V=cell.V, W=cell.W, abar_sum=abar,
                            Qbar=Qbar, Q0bar=Q0bar, c5=float(c5), lambda0=float(lambda0))
    grid_chk = check_grid or grid
    L0 = eff.L0(grid_chk.xi())
    dev = np.max(np.abs(L0 - L0.conj().swapaxes(-1, -2)))
    if dev > 1e-10 * max(np.max(np.abs(L0)), 1e-300):
        raise NotHermitian(f"assembled symbol deviates from Hermitian by {dev:.2e}")
    return eff


# ---------------------------------------------------------------------------
# magnetic Schrodinger specialization (scalar case, b(D) = D)

@dataclass
class SchrodingerModel:
    """Scalar periodic Schrodinger data and the derived operator coefficients."""

    A: PeriodicField               # d x 1 vector potential
    v: PeriodicField               # scalar, zero mean
    Vcal: PeriodicField            # scalar
    a_fields: list                 # d scalar fields a_j = -eta_j + i gamma_j
    Q: PeriodicField               # scalar potential Vcal + <gA, A>
    cell: CellSolution
    A0: np.ndarray                 # effective vector potential (d,)
    V0: float                      # effective scalar potential
    Phi: PeriodicField             # zero-mean solution of Laplace Phi = v
    omega: PeriodicField | None = None
    lambda_min: float | None = None


def _real_part_field(grid, values, what):
    im = np.max(np.abs(values.imag))
    scale = max(np.max(np.abs(values.real)), 1e-300)
    if im > 1e-10 * scale:
        raise ValueError(f"{what} must be real (imag magnitude {im:.2e})")
    return values.real.astype(complex)


def build_schrodinger(A: PeriodicField, v: PeriodicField, Vcal: PeriodicField,
                      g: PeriodicField, rtol=1e-10, maxiter=5000):
    """Derive a_j and Q from magnetic/electric potentials and homogenize.

    a_j = -eta_j + i gamma_j with eta = gA and gamma = -grad Phi, where Phi is
    the zero-mean periodic solution of Laplace Phi = v. Also returns the
    effective potentials A0 = g0^{-1} (Re V + mean(gA)) and
    V0 = mean(Vcal) + mean(<gA,A>) - <g0 A0, A0> - W.
    """
    from .symbols import gradient_symbol

    grid = g.grid
    d = grid.dim
    vv = _real_part_field(grid, v.values[..., 0, 0], "v")
    v_norm = np.sqrt(np.mean(np.abs(vv) ** 2))
    vbar = np.abs(vv.mean())
    if vbar > 1e-10 * max(v_norm, 1e-300):
        raise NonzeroMean(f"mean of v is {vbar:.3e}, must vanish")
    Av = _real_part_field(grid, A.values[..., 0] if A.cols == 1 else A.values, "A")
    Vv = _real_part_field(grid, Vcal.values[..., 0, 0], "Vcal")

    # Phi: spectral Poisson solve, division by -|xi|^2 off the zero mode
    xi2 = grid.xi_norm2()
    vm = grid.to_modes(vv)
    phim = np.zeros_like(vm)
    nz = xi2 > 1e-30
    phim[nz] = -vm[nz] / xi2[nz]
    phi = grid.to_nodes(phim).real
    # gamma_j = -d_j Phi; classical derivative d_j has mode symbol i*xi_j
    gamma = np.stack([-grid.to_nodes(1j * grid.xi()[..., j] * phim).real for j in range(d)], axis=-1)

    eta = np.einsum("...ij,...j->...i", g.values, Av)
    a_fields = [PeriodicField(grid, (-eta[..., j] + 1j * gamma[..., j]).astype(complex))
                for j in range(d)]
    q_vals = Vv + np.einsum("...j,...j->...", eta, Av)
    Q = PeriodicField(grid, q_vals.astype(complex))

    b = gradient_symbol(d)
    cell = solve_cell(g, b, a_fields, rtol=rtol, maxiter=maxiter)

    g0 = cell.g0.real
    V1 = cell.V.real[:, 0]
    eta_bar = eta.mean(axis=_grid_axes(grid)).real
    A0 = np.linalg.solve(g0, V1 + eta_bar)
    V0 = float((Vv.mean() + np.einsum("...j,...j->...", eta, Av).mean()
                - A0 @ (g0 @ A0) - cell.W[0, 0]).real)
    Phi = PeriodicField(grid, phi.astype(complex))
    Af = PeriodicField(grid, Av[..., None].astype(complex))
    return SchrodingerModel(A=Af, v=v, Vcal=Vcal, a_fields=a_fields, Q=Q,
                            cell=cell, A0=A0, V0=V0, Phi=Phi)


def solve_omega(g_check: PeriodicField, v_check: PeriodicField, dense_cutoff=4096,
                lanczos_tol=1e-12):
    """Ground state of D* g_check D + v_check on the cell, plus the shift.

    Returns (omega, lambda_min, v_shifted): omega is the positive periodic
    ground state normalized by mean(omega^2) = 1 (so that the integral of
    omega^2 over the cell equals the cell volume); v_shifted = v_check -
    lambda_min solves the shifted equation with eigenvalue zero.
    """
    from .symbols import gradient_symbol

    grid = g_check.grid
    d = grid.dim
    b = gradient_symbol(d)
    _check_g(g_check)
    vv = _real_part_field(grid, v_check.values[..., 0, 0], "v_check")
    principal = PrincipalPartOperator(grid, b, g_check.values)

    def apply_H(u):
        return principal(u[..., None])[..., 0] + vv * u

    ntot = grid.num_nodes
    if ntot <= dense_cutoff:
        cols = np.eye(ntot)
        H = np.empty((ntot, ntot))
        for k in range(ntot):
            out = apply_H(cols[:, k].reshape(grid.shape))
            H[:, k] = out.reshape(-1).real
        H = 0.5 * (H + H.T)
        eigvals, eigvecs = np.linalg.eigh(H)
        lam, w = float(eigvals[0]), eigvecs[:, 0].reshape(grid.shape)
    else:
        from scipy.sparse.linalg import LinearOperator, eigsh

        op = LinearOperator((ntot, ntot),
                            matvec=lambda x: apply_H(x.reshape(grid.shape)).reshape(-1).real,
                            dtype=float)
        vals, vecs = eigsh(op, k=1, which="SA", tol=lanczos_tol,
                           v0=np.ones(ntot), maxiter=5000)
        lam, w = float(vals[0]), vecs[:, 0].reshape(grid.shape)

    if w.mean() < 0:
        w = -w
    if np.min(w) <= 0:
        raise SignFlip("converged ground state changes sign on the grid")
    resid = np.sqrt(np.mean(np.abs(apply_H(w) - lam * w) ** 2)) / np.sqrt(np.mean(w**2))
    if resid > 1e-8 * max(1.0, abs(lam)):
        warnings.warn(f"ground-state Rayleigh residual {resid:.2e}", RuntimeWarning)
    w = w / np.sqrt(np.mean(w**2))
    omega = PeriodicField(grid, w.astype(complex))
    v_shifted = PeriodicField(grid, (vv - lam).astype(complex))
    return omega, lam, v_shifted
