import numpy as np
import pytest

from perihom.cellsolve import (
    CellSolution,
    assemble_VW,
    build_effective,
    solve_cell,
    solve_lambda,
    solve_lambda_tilde,
)
from perihom.errors import NotPositive
from perihom.fields import PeriodicField, TorusFunction, constant_field, harmonic_mean, mean, norms
from perihom.lattice import TorusGrid, make_lattice
from perihom.symbols import SymbolB, gradient_symbol

LINE = make_lattice([[1.0]])
SQUARE = make_lattice(np.eye(2))


def line_grid(n=256):
    return TorusGrid(LINE, (n,))


def two_phase(grid):
    x = grid.axis_fractions(0)
    return PeriodicField(grid, np.where(x < 0.5, 1.0, 4.0).astype(complex))


def test_constant_coefficients_zero_corrector():
    g = constant_field(line_grid(32), 3.0)
    lam, gt, g0, _ = solve_lambda(g, gradient_symbol(1))
    assert np.max(np.abs(lam.values)) < 1e-12
    assert g0[0, 0] == pytest.approx(3.0)


def test_two_phase_1d_closed_form():
    grid = line_grid(256)
    g = two_phase(grid)
    lam, gt, g0, res = solve_lambda(g, gradient_symbol(1), rtol=1e-12)
    assert abs(g0[0, 0] - 1.6) < 1e-10          # harmonic mean, m = n
    assert max(res["lambda"]) < 1e-12
    # corrector is i * (real triangle wave), extremes -/+ 0.15 at x=0 and x=1/2
    x = grid.axis_fractions(0)
    tri = np.where(x < 0.5, 0.6 * x - 0.15, -0.6 * (x - 0.5) + 0.15)
    lam_im = lam.values[:, 0, 0].imag
    assert np.max(np.abs(lam.values.real)) < 1e-12
    assert lam_im[0] == pytest.approx(-0.15, abs=5e-3)
    assert lam_im[128] == pytest.approx(0.15, abs=5e-3)
    assert np.max(np.abs(lam_im - tri)) < 1e-2
    # flux field is exactly constant in 1d
    flux = gt.values[:, 0, 0]
    assert np.max(np.abs(flux - flux.mean())) < 1e-10
    # zero-mean constraint holds to 1e-10
    assert abs(lam.values.mean()) < 1e-10


def test_two_phase_residual_in_weak_norm():
    grid = line_grid(128)
    g = two_phase(grid)
    b = gradient_symbol(1)
    rtol = 1e-10
    lam, gt, g0, _ = solve_lambda(g, b, rtol=rtol)
    # residual b(D)* g (b(D)Lambda + 1) measured in the discrete H^{-1} norm
    from perihom.cellsolve import PrincipalPartOperator, apply_b_adj_modes

    A = PrincipalPartOperator(grid, b, g.values)
    rhs = -grid.to_nodes(apply_b_adj_modes(grid, b, grid.to_modes(g.values[..., :, 0])))
    resid = A(lam.values[..., :, 0]) - rhs
    r = norms(TorusFunction(grid, resid))["h_minus_1"]
    r0 = norms(TorusFunction(grid, rhs))["h_minus_1"]
    assert r <= 10 * rtol * max(r0, 1e-300)


def test_laminate_2d():
    grid = TorusGrid(SQUARE, (64, 64))
    x1 = grid.fractions()[..., 0]
    gam = np.where(x1 < 0.5, 1.0, 4.0)
    vals = np.zeros(grid.shape + (2, 2), dtype=complex)
    vals[..., 0, 0] = gam
    vals[..., 1, 1] = gam
    cell = solve_cell(PeriodicField(grid, vals), gradient_symbol(2))
    assert np.allclose(cell.g0, np.diag([1.6, 2.5]), atol=1e-9)


def test_g0_stable_under_refinement():
    coarse = solve_lambda(two_phase(line_grid(128)), gradient_symbol(1))[2]
    fine = solve_lambda(two_phase(line_grid(256)), gradient_symbol(1))[2]
    assert abs(coarse[0, 0] - fine[0, 0]) < 1e-9


def test_lambda_tilde_trivial_cases():
    grid = line_grid(64)
    g = constant_field(grid, 1.0)
    b = gradient_symbol(1)
    # constant a: source term vanishes
    lt, _ = solve_lambda_tilde(g, [constant_field(grid, 2.0 + 1.0j)], b)
    assert np.max(np.abs(lt.values)) < 1e-12
    lt0, _ = solve_lambda_tilde(g, [constant_field(grid, 0.0)], b)
    assert np.max(np.abs(lt0.values)) < 1e-12


def test_lambda_tilde_closed_form_and_W():
    grid = line_grid(128)
    x = grid.axis_fractions(0)
    g = constant_field(grid, 1.0)
    a = PeriodicField(grid, np.cos(2 * np.pi * x).astype(complex))
    b = gradient_symbol(1)
    lt, _ = solve_lambda_tilde(g, [a], b)
    expect = -1j * np.sin(2 * np.pi * x) / (2 * np.pi)
    assert np.max(np.abs(lt.values[:, 0, 0] - expect)) < 1e-12
    assert abs(lt.values.mean()) < 1e-12
    lam, _, _, _ = solve_lambda(g, b)
    V, W = assemble_VW(g, lam, lt, b)
    assert np.max(np.abs(V)) < 1e-12        # Lambda = 0 here
    assert W[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_VW_zero_when_lambda_tilde_missing():
    grid = line_grid(32)
    g = two_phase(grid)
    lam, _, _, _ = solve_lambda(g, gradient_symbol(1))
    V, W = assemble_VW(g, lam, None, gradient_symbol(1))
    assert np.max(np.abs(V)) == 0 and np.max(np.abs(W)) == 0


def random_positive_field_2d(rng, grid, m):
    """Smooth random Hermitian positive definite m x m field."""
    fr = grid.fractions()
    base = np.zeros(grid.shape + (m, m), dtype=complex)
    for _ in range(3):
        mode = rng.integers(-2, 3, size=2)
        phase = 2 * np.pi * (fr @ mode) + rng.uniform(0, 2 * np.pi)
        mat = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        base += np.cos(phase)[..., None, None] * (mat + mat.conj().T) * 0.15
    lam_min = np.min(np.linalg.eigvalsh(base))
    shift = max(0.0, -lam_min) + 0.5
    return PeriodicField(grid, base + shift * np.eye(m))


def test_voigt_reuss_bracketing_random_fields():
    rng = np.random.default_rng(21)
    grid = TorusGrid(SQUARE, (16, 16))
    b = gradient_symbol(2)  # m=2, n=1
    for _ in range(5):
        g = random_positive_field_2d(rng, grid, 2)
        cell = solve_cell(g, b)
        lo = harmonic_mean(g)
        hi = mean(g)
        assert np.min(np.linalg.eigvalsh(cell.g0 - lo)) >= -1e-8
        assert np.min(np.linalg.eigvalsh(hi - cell.g0)) >= -1e-8
        assert np.min(np.linalg.eigvalsh(cell.W)) >= -1e-10 * max(np.max(np.abs(cell.W)), 1e-300)


def test_divergence_free_columns_give_arithmetic_mean():
    # g = 2 I + cofactor Hessian of chi has divergence-free columns, so the
    # principal corrector vanishes and g0 = mean(g)
    grid = TorusGrid(SQUARE, (32, 32))
    fr = grid.fractions()
    cc = np.cos(2 * np.pi * fr[..., 0]) * np.cos(2 * np.pi * fr[..., 1])
    ss = np.sin(2 * np.pi * fr[..., 0]) * np.sin(2 * np.pi * fr[..., 1])
    vals = np.zeros(grid.shape + (2, 2), dtype=complex)
    vals[..., 0, 0] = 2.0 - 0.8 * cc
    vals[..., 1, 1] = 2.0 - 0.8 * cc
    vals[..., 0, 1] = -0.8 * ss
    vals[..., 1, 0] = -0.8 * ss
    g = PeriodicField(grid, vals)
    cell = solve_cell(g, gradient_symbol(2))
    assert np.max(np.abs(cell.Lambda.values)) < 1e-10
    assert np.allclose(cell.g0, mean(g), atol=1e-10)


def test_square_symbol_gives_harmonic_mean():
    # m = n = 2 with a Cauchy-Riemann type symbol: g0 equals the harmonic mean
    mats = np.zeros((2, 2, 2), dtype=complex)
    mats[0] = np.eye(2)
    mats[1] = np.array([[0.0, 1.0], [-1.0, 0.0]])
    b = SymbolB(mats)
    rng = np.random.default_rng(3)
    grid = TorusGrid(SQUARE, (16, 16))
    g = random_positive_field_2d(rng, grid, 2)
    cell = solve_cell(g, b)
    assert np.allclose(cell.g0, harmonic_mean(g), atol=1e-8)


def test_not_positive_rejected():
    grid = line_grid(32)
    x = grid.axis_fractions(0)
    g = PeriodicField(grid, (np.cos(2 * np.pi * x)).astype(complex))  # changes sign
    with pytest.raises(NotPositive):
        solve_lambda(g, gradient_symbol(1))


def test_build_effective_trivial_symbol():
    grid = line_grid(32)
    g = constant_field(grid, 1.0)
    b = gradient_symbol(1)
    cell = solve_cell(g, b)
    q0 = constant_field(grid, 1.0)
    eff = build_effective(cell, None, None, q0, c5=0.7, lambda0=1.7, b=b)
    for xi in (0.0, 1.5, -3.0):
        assert eff.L0([xi])[0, 0] == pytest.approx(xi**2 + 0.7)
        assert eff.L([xi])[0, 0] == pytest.approx(xi**2 + 0.7 + 1.7)


def test_build_effective_two_phase():
    grid = line_grid(128)
    cell = solve_cell(two_phase(grid), gradient_symbol(1))
    eff = build_effective(cell, None, None, constant_field(grid, 1.0),
                          c5=0.3, lambda0=1.3, b=gradient_symbol(1))
    assert eff.L0([2.0])[0, 0] == pytest.approx(1.6 * 4.0 + 0.3, abs=1e-9)
    lam_min, c_check = eff.positivity_scan(line_grid(64))
    assert lam_min >= 0.3 - 1e-12
    assert c_check > 0


def test_build_effective_dropout_when_lambda_tilde_zero():
    # V = W = 0: symbol reduces to b* g0 b + sum(mean(a_j + a_j*)) xi + Qbar + c5 Q0bar
    grid = line_grid(64)
    g = constant_field(grid, 2.0)
    b = gradient_symbol(1)
    a = [constant_field(grid, 0.5 + 0.25j)]
    q = constant_field(grid, 0.4)
    cell = solve_cell(g, b, a)
    assert np.max(np.abs(cell.LambdaTilde.values)) < 1e-12
    eff = build_effective(cell, a, q, constant_field(grid, 1.0), c5=0.0, lambda0=1.0, b=b)
    xi = 1.7
    expect = 2.0 * xi**2 + (0.5 + 0.5) * xi + 0.4
    assert eff.L0([xi])[0, 0].real == pytest.approx(expect)
    assert abs(eff.L0([xi])[0, 0].imag) < 1e-14
