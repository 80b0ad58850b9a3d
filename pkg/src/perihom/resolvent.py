"""Discrete generalized resolvents on the torus.

The oscillatory operator

    B u = b(D)* g b(D) u + sum_j (a_j D_j u + D_j(a_j* u)) + q u

acts on n-vector torus functions with sampled nodal coefficients (g includes
the oscillation, q the full potential including any positivity shift). Its
generalized resolvent (B - zeta q0)^{-1} is solved by preconditioned Krylov
iteration: conjugate gradients when the pencil is Hermitian positive definite
(real zeta below the spectrum), right-preconditioned restarted GMRES
otherwise; either way the returned iterate satisfies the *true* residual
bound ||(B - zeta q0) u - f|| <= rtol ||f||, which is re-checked explicitly
before returning. The natural preconditioner is the effective resolvent,
diagonal per Fourier mode.

The module also provides a small composable LinearMap algebra (forward +
adjoint closures) and the randomized power iteration used for all operator
norm measurements; Sobolev norms enter as Fourier-weight conjugations by
(1+|xi|^2)^{±1/2}, so every estimate is an L2-to-L2 power iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleZeta, ModeSingular, NoConvergence, SolverDiverged
from .fields import TorusFunction
from .lattice import TorusGrid
from .symbols import SymbolB
from .cellsolve import apply_b_adj_modes, apply_b_modes, make_multiplier


# ---------------------------------------------------------------------------
# spectral parameter

@dataclass
class SpectralParameter:
    """A complex spectral parameter off [c_flat, infinity)."""

    zeta: complex
    c_flat: float = 0.0

    def __post_init__(self):
        self.zeta = complex(self.zeta)
        if not np.isfinite(self.zeta.real) or not np.isfinite(self.zeta.imag):
            raise InadmissibleZeta("zeta must be finite")
        if self.zeta.imag == 0.0 and self.zeta.real >= self.c_flat:
            raise InadmissibleZeta(
                f"zeta={self.zeta} lies on the forbidden half-line [{self.c_flat}, inf)")

    @property
    def phi(self):
        """Argument of zeta - c_flat in (0, 2 pi)."""
        ang = np.angle(self.zeta - self.c_flat)
        if ang <= 0:
            ang += 2 * np.pi
        return float(ang)

    @property
    def magnitude(self):
        return abs(self.zeta)


# ---------------------------------------------------------------------------
# oscillatory operator

class OscillatoryOperator:
    """Matrix-free B = b(D)* g b(D) + lower order terms + potential."""

    def __init__(self, torus: TorusGrid, b: SymbolB, g_values, a_values=None,
                 q_values=None, q0_values=None, dealias=False):
        self.torus = torus
        self.b = b
        self.n = b.n
        self.g_values = np.asarray(g_values, dtype=complex)
        self.mul_g = make_multiplier(torus, self.g_values, dealias)
        self.a_values = None
        if a_values is not None:
            self.a_values = [np.asarray(a, dtype=complex) for a in a_values]
            self.mul_a = [make_multiplier(torus, a, dealias) for a in self.a_values]
            self.mul_a_star = [make_multiplier(torus, a.conj().swapaxes(-1, -2), dealias)
                               for a in self.a_values]
        self.q_values = None if q_values is None else np.asarray(q_values, dtype=complex)
        if self.q_values is not None:
            self.mul_q = make_multiplier(torus, self.q_values, dealias)
        if q0_values is None:
            q0_values = np.broadcast_to(np.eye(b.n), torus.shape + (b.n, b.n))
        self.q0_values = np.asarray(q0_values, dtype=complex)
        self.mul_q0 = make_multiplier(torus, self.q0_values, dealias)

    def apply(self, u):
        """B u for raw nodal values of shape grid + (n,)."""
        g = self.torus
        um = g.to_modes(u)
        flux = self.mul_g(g.to_nodes(apply_b_modes(g, self.b, um)))
        out = g.to_nodes(apply_b_adj_modes(g, self.b, g.to_modes(flux)))
        if self.a_values is not None:
            xi = g.xi()
            for j in range(g.dim):
                du = g.to_nodes(xi[..., j, None] * um)
                out = out + self.mul_a[j](du)
                w = self.mul_a_star[j](u)
                out = out + g.to_nodes(xi[..., j, None] * g.to_modes(w))
        if self.q_values is not None:
            out = out + self.mul_q(u)
        return out

    def pencil_apply(self, u, zeta):
        """(B - zeta q0) u."""
        return self.apply(u) - zeta * self.mul_q0(u)

    def flux(self, u):
        """g b(D) u, the flux of a nodal n-vector field (-> m components)."""
        g = self.torus
        return self.mul_g(g.to_nodes(apply_b_modes(g, self.b, g.to_modes(u))))

    def mean_symbol_preconditioner(self, zeta):
        """Per-mode inverse of the mean-coefficient pencil symbol.

        Fallback preconditioner when no effective resolvent is available:
        (b(xi)* mean(g) b(xi) + sum_j mean(a_j + a_j*) xi_j + mean(q)
         - zeta mean(q0))^{-1} applied mode by mode.
        """
        g = self.torus
        ax = tuple(range(g.dim))
        from .symbols import _b_on_grid
        bxi = _b_on_grid(self.b, g)
        gm = self.g_values.mean(axis=ax)
        mats = np.einsum("...mi,mk,...kj->...ij", bxi.conj(), gm, bxi)
        if self.a_values is not None:
            xi = g.xi()
            for j, a in enumerate(self.a_values):
                am = a.mean(axis=ax)
                mats = mats + xi[..., j, None, None] * (am + am.conj().T)
        if self.q_values is not None:
            mats = mats + self.q_values.mean(axis=ax)
        mats = mats - zeta * self.q0_values.mean(axis=ax)
        n = self.n
        flat = mats.reshape(-1, n, n)
        sv = np.linalg.svd(flat, compute_uv=False)
        if np.min(sv[:, -1]) <= 1e-14 * max(np.max(sv[:, 0]), 1e-300):
            return None  # symbol (nearly) singular at a mode; skip preconditioning
        inv = np.linalg.inv(flat).reshape(mats.shape)

        def apply_M(v):
            vm = g.to_modes(v)
            return g.to_nodes(np.einsum("...ij,...j->...i", inv, vm))

        return apply_M


def flux(op, u: TorusFunction):
    """Flux g b(D) u for an oscillatory operator or an effective resolvent."""
    vals = op.flux(u.values)
    return TorusFunction(u.grid, vals)


# ---------------------------------------------------------------------------
# effective resolvent (diagonal per mode)

class EffectiveResolvent:
    """(L0(xi) - zeta Q0bar)^{-1} applied mode by mode on a fixed torus."""

    def __init__(self, eff, torus: TorusGrid, cond_limit=1e14):
        self.eff = eff
        self.torus = torus
        self.n = eff.n
        self.cond_limit = cond_limit
        self._L0 = eff.L0(torus.xi())      # shape + (n, n)
        self._cache = {}

    def _mats(self, zeta):
        key = complex(zeta)
        if key not in self._cache:
            mats = self._L0 - zeta * self.eff.Q0bar
            if self.n == 1:
                vals = mats[..., 0, 0]
                amax, amin = np.max(np.abs(vals)), np.min(np.abs(vals))
                if amin == 0 or amax / amin > self.cond_limit:
                    raise ModeSingular(f"effective symbol singular at a mode for zeta={zeta}")
                self._cache[key] = 1.0 / vals
            else:
                sv = np.linalg.svd(mats, compute_uv=False)
                worst = np.max(sv[..., 0] / np.maximum(sv[..., -1], 1e-300))
                if worst > self.cond_limit:
                    raise ModeSingular(
                        f"effective symbol condition {worst:.2e} at a mode for zeta={zeta}")
                self._cache[key] = np.linalg.inv(mats)
        return self._cache[key]

    def solve(self, zeta, f):
        """Nodal solve of (B0 - zeta Q0bar) u = f; exact per mode."""
        g = self.torus
        fm = g.to_modes(f)
        inv = self._mats(zeta)
        if self.n == 1:
            um = inv[..., None] * fm
        else:
            um = np.einsum("...ij,...j->...i", inv, fm)
        return g.to_nodes(um)

    def flux(self, u):
        """Effective flux g0 b(D) u."""
        g = self.torus
        bm = apply_b_modes(g, self.eff.b, g.to_modes(u))
        return g.to_nodes(np.einsum("ij,...j->...i", self.eff.g0, bm))


def solve_effective(eff_res: EffectiveResolvent, zeta, f: TorusFunction):
    return TorusFunction(f.grid, eff_res.solve(zeta, f.values))


# ---------------------------------------------------------------------------
# Krylov solvers (true-residual contract)

def _gmres_right(apply_A, rhs, rtol, apply_M=None, restart=80, max_outer=30):
    """Right-preconditioned restarted GMRES on flattened complex arrays.

    Solves A M y = rhs, returns x = M y. Right preconditioning keeps the
    Arnoldi residual equal to the true residual of A x = rhs; the returned
    relative residual is recomputed from scratch anyway.
    """
    if apply_M is None:
        apply_M = lambda v: v
    shape = rhs.shape
    b = rhs.reshape(-1)
    norm_b = np.linalg.norm(b)
    if norm_b == 0:
        return rhs * 0.0, 0.0, 0, True
    x = np.zeros_like(b)
    total_iters = 0
    best_res = np.inf
    res = 1.0
    for outer in range(max_outer):
        r = b - apply_A(x.reshape(shape)).reshape(-1)
        beta = np.linalg.norm(r)
        if beta / norm_b <= rtol:
            return x.reshape(shape), beta / norm_b, total_iters, True
        V = np.empty((restart + 1, b.size), dtype=complex)
        H = np.zeros((restart + 1, restart), dtype=complex)
        cs = np.zeros(restart, dtype=complex)
        sn = np.zeros(restart, dtype=complex)
        gvec = np.zeros(restart + 1, dtype=complex)
        V[0] = r / beta
        gvec[0] = beta
        k_used = 0
        for k in range(restart):
            w = apply_A(apply_M(V[k].reshape(shape))).reshape(-1)
            for i in range(k + 1):
                H[i, k] = np.vdot(V[i], w)
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k].real > 1e-300:
                V[k + 1] = w / H[k + 1, k]
            # apply stored Givens rotations
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + np.conj(cs[i]) * H[i + 1, k]
                H[i, k] = t
            denom = np.sqrt(abs(H[k, k]) ** 2 + abs(H[k + 1, k]) ** 2)
            if denom < 1e-300:
                k_used = k + 1
                break
            cs[k] = np.conj(H[k, k]) / denom
            sn[k] = np.conj(H[k + 1, k]) / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            gvec[k + 1] = -np.conj(sn[k]) * gvec[k]
            gvec[k] = cs[k] * gvec[k]
            total_iters += 1
            k_used = k + 1
            if abs(gvec[k + 1]) / norm_b <= 0.5 * rtol:
                break
        y = np.linalg.solve(H[:k_used, :k_used], gvec[:k_used])
        x = x + apply_M((V[:k_used].T @ y).reshape(shape)).reshape(-1)
        r = b - apply_A(x.reshape(shape)).reshape(-1)
        res = np.linalg.norm(r) / norm_b
        if res <= rtol:
            return x.reshape(shape), res, total_iters, True
        if res > best_res * 0.999:
            # stagnation (often the double-precision residual floor);
            # return best effort, the caller enforces the contract
            return x.reshape(shape), res, total_iters, False
        best_res = res
    return x.reshape(shape), res, total_iters, False


def _cg_pencil(apply_A, rhs, rtol, apply_M=None, maxiter=10000):
    """CG for Hermitian positive definite pencils; best effort on stagnation."""
    if apply_M is None:
        apply_M = lambda v: v
    b = rhs
    norm_b = np.linalg.norm(b)
    if norm_b == 0:
        return rhs * 0.0, 0.0, 0, True
    x = np.zeros_like(b)
    r = b.copy()
    z = apply_M(r)
    p = z.copy()
    rz = np.vdot(r, z)
    best = np.inf
    stagnant = 0
    res = 1.0
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        pAp = np.vdot(p, Ap)
        if pAp.real <= 0:
            raise SolverDiverged("CG pencil lost positivity")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / norm_b
        if res <= rtol:
            return x, res, it, True
        if res < best * 0.9999:
            best, stagnant = res, 0
        else:
            stagnant += 1
            if stagnant > 80:
                return x, res, it, False
        z = apply_M(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, res, maxiter, False


def solve_oscillatory(B: OscillatoryOperator, zeta, f: TorusFunction, rtol=1e-10,
                      precond=None, method="auto", restart=80, max_outer=30,
                      c_flat=0.0):
    """Solve (B - zeta q0) u = f to a true relative residual <= rtol.

    `precond` may be an EffectiveResolvent (used at the same zeta), a callable
    v -> M v, or None. method: "auto" picks CG for real zeta < c_flat (the
    Hermitian positive definite branch), otherwise GMRES.
    """
    SpectralParameter(zeta, c_flat)   # validates admissibility
    if not 0 < rtol <= 1e-6:
        raise ValueError(f"rtol must be in (0, 1e-6], got {rtol}")
    zeta = complex(zeta)

    def apply_A(u):
        return B.pencil_apply(u, zeta)

    if precond is None:
        apply_M = B.mean_symbol_preconditioner(zeta)
    elif isinstance(precond, EffectiveResolvent):
        apply_M = lambda v: precond.solve(zeta, v)
    else:
        apply_M = precond

    use_cg = method == "cg" or (method == "auto" and zeta.imag == 0.0 and zeta.real < c_flat)
    kind = "cg" if use_cg else "gmres"

    # iterative refinement so the contract holds for the *fresh* residual
    norm_f = max(np.linalg.norm(f.values), 1e-300)
    sol = np.zeros_like(f.values)
    resid = f.values.copy()
    iters = 0
    true_res = 1.0
    for _ in range(4):
        tol_inner = min(0.5 * rtol * norm_f / max(np.linalg.norm(resid), 1e-300), 1e-2)
        if use_cg:
            flat_A = lambda v: apply_A(v.reshape(resid.shape)).reshape(-1)
            flat_M = None if apply_M is None else (
                lambda v: apply_M(v.reshape(resid.shape)).reshape(-1))
            dx, _, it, ok = _cg_pencil(flat_A, resid.reshape(-1), tol_inner, flat_M)
            dx = dx.reshape(resid.shape)
        else:
            dx, _, it, ok = _gmres_right(apply_A, resid, tol_inner, apply_M, restart, max_outer)
        iters += it
        new_sol = sol + dx
        new_resid = f.values - apply_A(new_sol)
        new_res = np.linalg.norm(new_resid) / norm_f
        if new_res >= true_res:
            break  # refinement no longer helps (residual floor)
        sol, resid, true_res = new_sol, new_resid, new_res
        if true_res <= rtol or not ok:
            break
    if true_res > rtol:
        raise SolverDiverged(f"returned residual {true_res:.3e} violates rtol {rtol:.1e}")
    info = {"method": kind, "iterations": iters, "relative_residual": float(true_res)}
    return TorusFunction(f.grid, sol), info


# ---------------------------------------------------------------------------
# composable linear maps with adjoints

@dataclass
class LinearMap:
    """A linear operator between component spaces on a common torus grid.

    forward/adjoint are closures on raw nodal arrays, shape grid + (k).
    Adjoints are with respect to the unweighted nodal l2 inner product (the
    quadrature weight cancels in every operator-norm ratio).
    """

    grid: TorusGrid
    k_in: int
    k_out: int
    forward: callable
    adjoint: callable

    def __call__(self, x):
        return self.forward(x)

    def compose(self, other):
        """self after other."""
        if other.k_out != self.k_in:
            raise ValueError("component mismatch in composition")
        return LinearMap(self.grid, other.k_in, self.k_out,
                         lambda x: self.forward(other.forward(x)),
                         lambda y: other.adjoint(self.adjoint(y)))

    def __matmul__(self, other):
        return self.compose(other)

    def __sub__(self, other):
        if (other.k_in, other.k_out) != (self.k_in, self.k_out):
            raise ValueError("component mismatch in difference")
        return LinearMap(self.grid, self.k_in, self.k_out,
                         lambda x: self.forward(x) - other.forward(x),
                         lambda y: self.adjoint(y) - other.adjoint(y))

    def __add__(self, other):
        if (other.k_in, other.k_out) != (self.k_in, self.k_out):
            raise ValueError("component mismatch in sum")
        return LinearMap(self.grid, self.k_in, self.k_out,
                         lambda x: self.forward(x) + other.forward(x),
                         lambda y: self.adjoint(y) + other.adjoint(y))

    def scaled(self, c):
        c = complex(c)
        return LinearMap(self.grid, self.k_in, self.k_out,
                         lambda x: c * self.forward(x),
                         lambda y: np.conj(c) * self.adjoint(y))


def lm_identity(grid, k):
    return LinearMap(grid, k, k, lambda x: x, lambda y: y)


def lm_mult(grid, coeff_values):
    """Pointwise multiplication by a matrix field; adjoint multiplies by F*."""
    coeff = np.asarray(coeff_values, dtype=complex)
    star = coeff.conj().swapaxes(-1, -2)
    return LinearMap(grid, coeff.shape[-1], coeff.shape[-2],
                     lambda x: np.einsum("...ij,...j->...i", coeff, x),
                     lambda y: np.einsum("...ij,...j->...i", star, y))


def lm_scalar_symbol(grid, symbol, k):
    """Fourier multiplier with a scalar symbol acting on k components."""
    sym = np.asarray(symbol)
    conj = sym.conj()
    fw = lambda x: grid.to_nodes(grid.to_modes(x) * sym[..., None])
    ad = lambda y: grid.to_nodes(grid.to_modes(y) * conj[..., None])
    return LinearMap(grid, k, k, fw, ad)


def lm_bD(grid, b: SymbolB):
    fw = lambda x: grid.to_nodes(apply_b_modes(grid, b, grid.to_modes(x)))
    ad = lambda y: grid.to_nodes(apply_b_adj_modes(grid, b, grid.to_modes(y)))
    return LinearMap(grid, b.n, b.m, fw, ad)


def lm_derivative_stack(grid, n):
    """u -> (D_1 u, ..., D_d u) stacked; adjoint sums D_j back (xi real)."""
    d = grid.dim
    xi = grid.xi()

    def fw(x):
        xm = grid.to_modes(x)
        out = np.empty(grid.shape + (d * n,), dtype=complex)
        for j in range(d):
            out[..., j * n:(j + 1) * n] = grid.to_nodes(xi[..., j, None] * xm)
        return out

    def ad(y):
        acc = np.zeros(grid.shape + (n,), dtype=complex)
        for j in range(d):
            ym = grid.to_modes(y[..., j * n:(j + 1) * n])
            acc += grid.to_nodes(xi[..., j, None] * ym)
        return acc

    return LinearMap(grid, n, d * n, fw, ad)


def lm_smoothing(grid, smoothing_kind, k):
    from .smoothing import smoothing_symbol
    sym = smoothing_symbol(smoothing_kind, grid)
    return lm_scalar_symbol(grid, sym.astype(complex), k)


def lm_resolvent_effective(eff_res: EffectiveResolvent, zeta):
    zeta = complex(zeta)
    return LinearMap(eff_res.torus, eff_res.n, eff_res.n,
                     lambda f: eff_res.solve(zeta, f),
                     lambda f: eff_res.solve(np.conj(zeta), f))


def lm_resolvent_oscillatory(B: OscillatoryOperator, zeta, precond=None, rtol=1e-8,
                             c_flat=0.0, counters=None):
    """Resolvent of the Hermitian pencil; adjoint solves at conj(zeta)."""
    zeta = complex(zeta)
    grid = B.torus

    def run(zz, f):
        u, info = solve_oscillatory(B, zz, TorusFunction(grid, f), rtol=rtol,
                                    precond=precond, c_flat=c_flat)
        if counters is not None:
            counters.append(info)
        return u.values

    return LinearMap(grid, B.n, B.n,
                     lambda f: run(zeta, f),
                     lambda f: run(np.conj(zeta), f))


# ---------------------------------------------------------------------------
# randomized operator norms

_WEIGHT_POWERS = {"l2": 0.0, "h1": 1.0, "h_minus_1": -1.0, "h-1": -1.0}


def _weight_map(grid, norm, k, invert):
    p = _WEIGHT_POWERS[norm]
    if p == 0.0:
        return lm_identity(grid, k)
    w = (1.0 + grid.xi_norm2()) ** (0.5 * p)
    if invert:
        w = 1.0 / w
    return lm_scalar_symbol(grid, w.astype(complex), k)


def estimate_opnorm(A: LinearMap, norm_in="l2", norm_out="l2", iters=60, seeds=5,
                    seed0=1234, rel_tol=1e-4, osc_limit=0.05, zero_floor=1e-13):
    """Randomized power iteration estimate of the (norm_in -> norm_out) norm.

    Conjugates A by Fourier weights so the estimate is a plain l2 singular
    value, then iterates x <- A~* A~ x from several seeded random starts.
    Returns the max over seeds with the seed spread as a quality signal.
    Raises NoConvergence when the Rayleigh quotient still oscillates by more
    than `osc_limit` after `iters` iterations.
    """
    if iters < 20:
        raise ValueError("iters must be >= 20")
    if seeds < 3:
        raise ValueError("seeds must be >= 3")
    Atil = _weight_map(A.grid, norm_out, A.k_out, invert=False) @ A \
        @ _weight_map(A.grid, norm_in, A.k_in, invert=True)
    per_seed = []
    for s in range(seeds):
        rng = np.random.default_rng(seed0 + 7919 * s)
        shape = A.grid.shape + (A.k_in,)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        x /= np.linalg.norm(x)
        history = []
        sigma = 0.0
        for _ in range(iters):
            y = Atil(x)
            z = Atil.adjoint(y)
            rayleigh = np.vdot(x, z).real
            sigma = np.sqrt(max(rayleigh, 0.0))
            history.append(sigma)
            nz = np.linalg.norm(z)
            if sigma < zero_floor or nz < 1e-300:
                break
            x = z / nz
            if len(history) >= 5:
                recent = history[-4:]
                if (max(recent) - min(recent)) <= rel_tol * max(recent[-1], 1e-300):
                    break
        else:
            tail = history[-5:]
            spread = (max(tail) - min(tail)) / max(tail[-1], 1e-300)
            if spread > osc_limit:
                raise NoConvergence(
                    f"power iteration oscillating by {spread:.1%} after {iters} iterations")
        per_seed.append(sigma)
    est = max(per_seed)
    spread = (est - min(per_seed)) / max(est, 1e-300)
    return {"estimate": float(est), "spread": float(spread),
            "per_seed": [float(v) for v in per_seed]}


def panel_lower_bound(A: LinearMap, norm_in="l2", norm_out="l2", panel=8, seed0=77,
                      band=4):
    """Max ratio over a deterministic panel of band-limited right-hand sides."""
    grid = A.grid
    win = _WEIGHT_POWERS[norm_in]
    wout = _WEIGHT_POWERS[norm_out]
    xi2 = grid.xi_norm2()
    m = grid.mode_numbers()
    mask = np.all(np.abs(m) <= band, axis=-1)
    best = 0.0
    for p in range(panel):
        rng = np.random.default_rng(seed0 + p)
        coeffs = np.zeros(grid.shape + (A.k_in,), dtype=complex)
        vals = rng.standard_normal((int(mask.sum()), A.k_in)) \
            + 1j * rng.standard_normal((int(mask.sum()), A.k_in))
        coeffs[mask] = vals
        f = grid.to_nodes(coeffs)
        den = np.sqrt(np.sum((1.0 + xi2)[..., None] ** win * np.abs(coeffs) ** 2))
        out = A(f)
        om = grid.to_modes(out)
        num = np.sqrt(np.sum((1.0 + xi2)[..., None] ** wout * np.abs(om) ** 2))
        if den > 0:
            best = max(best, num / den)
    return float(best)
