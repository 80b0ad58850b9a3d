import numpy as np
import pytest

from perihom.fields import TorusFunction, norms
from perihom.lattice import TorusGrid, make_lattice
from perihom.smoothing import SmoothingKind, apply_smoothing, smoothing_symbol, steklov_symbol
from perihom.symbols import apply_bD, gradient_symbol

LINE = make_lattice([[1.0]])
SQUARE = make_lattice(np.eye(2))


def test_steklov_symbol_values():
    assert steklov_symbol(LINE, 0.25, 0.0) == pytest.approx(1.0)
    # d=1 unit cell, eps*xi = pi -> sin(pi/2)/(pi/2)
    assert steklov_symbol(LINE, 1.0, np.pi) == pytest.approx(2 / np.pi)
    # d=2 square cell, eps*xi = (2 pi, 0): first zero of sinc
    assert steklov_symbol(SQUARE, 1.0, [2 * np.pi, 0.0]) == pytest.approx(0.0, abs=1e-14)


def test_smoothings_fix_constants():
    g = TorusGrid(LINE, (32,))
    u = TorusFunction(g, np.full(32, 2.0 + 1.0j))
    for kind in ("steklov", "fourier", "none"):
        s = SmoothingKind(kind, eps=1 / 4 if kind != "none" else 0.0)
        out = apply_smoothing(s, u)
        assert np.allclose(out.values, u.values)


def test_fourier_cutoff_keeps_and_kills_modes():
    g = TorusGrid(LINE, (64,))
    x = g.nodes()[..., 0]
    eps = 1 / 8
    # mode k=2*pi*m: eps|k| < pi iff |m| < 4
    keep = TorusFunction(g, np.exp(1j * 2 * np.pi * 3 * x))
    kill = TorusFunction(g, np.exp(1j * 2 * np.pi * 5 * x))
    s = SmoothingKind("fourier", eps)
    assert np.allclose(apply_smoothing(s, keep).values, keep.values, atol=1e-12)
    assert np.max(np.abs(apply_smoothing(s, kill).values)) < 1e-12


def test_smoothing_commutes_with_derivative():
    rng = np.random.default_rng(1)
    g = TorusGrid(SQUARE, (16, 16))
    u = TorusFunction(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    b = gradient_symbol(2)
    s = SmoothingKind("steklov", 1 / 4)
    a = apply_bD(b, apply_smoothing(s, u)).values
    c = apply_smoothing(s, apply_bD(b, u)).values
    assert np.allclose(a, c, atol=1e-12)


def test_multiplier_magnitude_at_most_one():
    g = TorusGrid(SQUARE, (32, 32))
    for kind, eps in (("steklov", 1 / 8), ("fourier", 1 / 8)):
        sym = smoothing_symbol(SmoothingKind(kind, eps), g)
        assert np.max(np.abs(sym)) <= 1 + 1e-12


def band_limited(g, rng, band=3):
    coeffs = np.zeros(g.shape, dtype=complex)
    m = g.mode_numbers()
    mask = np.all(np.abs(m) <= band, axis=-1)
    coeffs[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    return TorusFunction(g, g.to_nodes(coeffs))


def du_l2(g, u):
    coeffs = g.to_modes(u.values)
    xi2 = g.xi_norm2()
    return float(np.sqrt(g.volume * np.sum(xi2[..., None] * np.abs(coeffs) ** 2)))


def test_smoothing_minus_identity_bounds():
    rng = np.random.default_rng(8)
    g = TorusGrid(SQUARE, (32, 32))
    lat = g.lattice
    for eps in (1 / 4, 1 / 8):
        for _ in range(5):
            u = band_limited(g, rng)
            du = du_l2(g, u)
            pi_u = apply_smoothing(SmoothingKind("fourier", eps), u)
            s_u = apply_smoothing(SmoothingKind("steklov", eps), u)
            err_pi = norms(TorusFunction(g, pi_u.values - u.values))["l2"]
            err_s = norms(TorusFunction(g, s_u.values - u.values))["l2"]
            assert err_pi <= eps / lat.r0 * du + 1e-12
            assert err_s <= eps * lat.r1 * du + 1e-12


def test_oscillating_multiplication_after_cutoff_is_bounded():
    # |[f^eps] Pi_eps|_{L2->L2} <= |O|^{-1/2} ||f||_{L2(cell)}, by randomized
    # operator-norm estimation
    from perihom.fields import PeriodicField, sample_scaled
    from perihom.resolvent import estimate_opnorm, lm_mult, lm_smoothing

    cell = TorusGrid(LINE, (32,))
    x = cell.axis_fractions(0)
    f = PeriodicField(cell, (1.0 + 0.9 * np.sign(np.cos(2 * np.pi * x))).astype(complex))
    # odd period count so no torus mode sits exactly on the zone boundary
    # (the inclusive tie rule would otherwise keep both +/- boundary atoms,
    # whose aliasing interference can exceed the continuum bound)
    eps = 1 / 7
    torus = TorusGrid(LINE, (224,), periods=7)
    feps = sample_scaled(f, eps, torus).values
    bound = np.sqrt(np.mean(np.abs(f.values[..., 0, 0]) ** 2))  # |O|=1
    A = lm_mult(torus, feps) @ lm_smoothing(torus, SmoothingKind("fourier", eps), 1)
    est = estimate_opnorm(A, iters=60, seeds=3)["estimate"]
    assert est <= bound + 1e-9
