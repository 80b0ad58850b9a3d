import numpy as np
import pytest

from perihom.corrector import CorrectorConfig, CorrectorOperator, apply_corrector, approx_flux, approx_resolvent
from perihom.fields import PeriodicField, TorusFunction, constant_field, norms
from perihom.lattice import TorusGrid, make_lattice
from perihom.problems import (
    ProblemModel,
    corrector_operator,
    effective_resolvent,
    oscillatory_operator,
    prepare,
    torus_for,
)
from perihom.resolvent import lm_resolvent_oscillatory, solve_oscillatory
from perihom.smoothing import SmoothingKind, smoothing_symbol
from perihom.symbols import gradient_symbol

LINE = make_lattice([[1.0]])


def two_phase_problem(n_cell=32, with_a=True):
    cell = TorusGrid(LINE, (n_cell,))
    x = cell.axis_fractions(0)
    g = PeriodicField(cell, np.where(x < 0.5, 1.0, 4.0).astype(complex))
    a = None
    if with_a:
        a = [PeriodicField(cell, (0.3 * np.cos(2 * np.pi * x)).astype(complex))]
    q = PeriodicField(cell, (0.2 + 0.1 * np.cos(2 * np.pi * x)).astype(complex))
    q0 = PeriodicField(cell, (1.0 + 0.5 * np.cos(2 * np.pi * x)).astype(complex))
    pb = ProblemModel(lattice=LINE, cell_grid=cell, b=gradient_symbol(1),
                      g=g, a_fields=a, Q=q, Q0=q0)
    return prepare(pb)


def constant_problem(n_cell=16):
    cell = TorusGrid(LINE, (n_cell,))
    pb = ProblemModel(lattice=LINE, cell_grid=cell, b=gradient_symbol(1),
                      g=constant_field(cell, 2.0), Q=constant_field(cell, 0.5))
    return prepare(pb)


def test_zero_corrector_for_constant_coefficients():
    pb = constant_problem()
    eps = 1 / 4
    torus = torus_for(pb, eps)
    res = effective_resolvent(pb, torus)
    rng = np.random.default_rng(0)
    f = TorusFunction(torus, rng.standard_normal(torus.shape + (1,)))
    out = apply_corrector(CorrectorConfig(), pb.cell, res, -1.0, f, eps, torus)
    assert np.max(np.abs(out.values)) < 1e-10
    # approximant equals the plain effective solve
    u0 = res.solve(-1.0, f.values)
    ua = approx_resolvent(CorrectorConfig(), pb.cell, res, -1.0, f, eps, torus)
    assert np.allclose(ua.values, u0, atol=1e-10)


def test_corrector_linearity():
    pb = two_phase_problem()
    eps = 1 / 8
    op = corrector_operator(pb, eps)
    rng = np.random.default_rng(1)
    shape = op.torus.shape + (1,)
    f1 = TorusFunction(op.torus, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    f2 = TorusFunction(op.torus, rng.standard_normal(shape))
    both = TorusFunction(op.torus, f1.values + f2.values)
    lhs = op.approx_resolvent(-1.0, both).values
    rhs = op.approx_resolvent(-1.0, f1).values + op.approx_resolvent(-1.0, f2).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_corrector_against_dense_composition():
    # single-mode input on a 64-node torus: compose the chain by hand
    pb = two_phase_problem()
    eps = 1 / 2
    torus = TorusGrid(LINE, (64,), periods=2)
    res = effective_resolvent(pb, torus)
    op = CorrectorOperator(CorrectorConfig(), pb.cell, res, eps, torus)
    x = torus.nodes()[..., 0]
    k = 2 * np.pi * 3
    f = TorusFunction(torus, np.exp(1j * k * x))
    got = op.apply_corrector(-1.0, f).values[..., 0]

    # chain by hand: u0 multiplier, then bD multiplier, then steklov symbol,
    # then exact nodal sampling of the corrector fields
    L0 = pb.eff.L0(np.array([[k]]))[0, 0, 0]
    q0bar = pb.eff.Q0bar[0, 0]
    u0_amp = 1.0 / (L0 + q0bar)
    sym = smoothing_symbol(SmoothingKind("steklov", eps), torus)
    km = torus.mode_numbers()[..., 0]
    sym_k = float(sym[km == 3][0])
    from perihom.fields import sample_scaled
    lam_eps = sample_scaled(pb.cell.Lambda, eps, torus).values[..., 0, 0]
    lt_eps = sample_scaled(pb.cell.LambdaTilde, eps, torus).values[..., 0, 0]
    hand = lam_eps * (sym_k * k * u0_amp * np.exp(1j * k * x)) \
        + lt_eps * (sym_k * u0_amp * np.exp(1j * k * x))
    assert np.max(np.abs(got - hand)) < 1e-12


def test_corrected_approximation_beats_plain_effective_in_h1():
    pb = two_phase_problem()
    eps = 1 / 32
    torus = torus_for(pb, eps)
    B = oscillatory_operator(pb, eps, torus)
    res = effective_resolvent(pb, torus)
    op = CorrectorOperator(CorrectorConfig(), pb.cell, res, eps, torus)
    rng = np.random.default_rng(3)
    coeffs = np.zeros(torus.shape + (1,), dtype=complex)
    coeffs[:4, 0] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    coeffs[-3:, 0] = rng.standard_normal(3)
    f = TorusFunction(torus, torus.to_nodes(coeffs))
    u_true = solve_oscillatory(B, -1.0, f, rtol=1e-9, precond=res)[0]
    u0 = res.solve(-1.0, f.values)
    u_corr = op.approx_resolvent(-1.0, f).values
    err_plain = norms(TorusFunction(torus, u_true.values - u0))["h1"]
    err_corr = norms(TorusFunction(torus, u_true.values - u_corr))["h1"]
    assert err_corr * 3.0 <= err_plain


def test_flux_approximant_constant_coefficients():
    pb = constant_problem()
    eps = 1 / 4
    torus = torus_for(pb, eps)
    res = effective_resolvent(pb, torus)
    rng = np.random.default_rng(4)
    f = TorusFunction(torus, rng.standard_normal(torus.shape + (1,)))
    # with the zero correctors the smoothing-free variant is g0 b(D) u0 exactly
    cfg = CorrectorConfig(smoothing="none", assume_bounded=True)
    out = approx_flux(cfg, pb.cell, res, -1.0, f, eps, pb.g, torus)
    expect = res.flux(res.solve(-1.0, f.values))
    assert np.allclose(out.values, expect, atol=1e-10)
    # the smoothed variant carries the cell-average multiplier on the flux term
    out_s = approx_flux(CorrectorConfig(), pb.cell, res, -1.0, f, eps, pb.g, torus)
    from perihom.resolvent import lm_smoothing
    sm = lm_smoothing(torus, SmoothingKind("steklov", eps), 1)
    assert np.allclose(out_s.values, 2.0 * sm(expect / 2.0), atol=1e-10)


def test_flux_approximant_two_resolution_rate():
    pb = two_phase_problem()
    errs = []
    for eps in (1 / 32, 1 / 64):
        torus = torus_for(pb, eps)
        B = oscillatory_operator(pb, eps, torus)
        res = effective_resolvent(pb, torus)
        op = CorrectorOperator(CorrectorConfig(), pb.cell, res, eps, torus, g_cell=pb.g)
        rng = np.random.default_rng(5)
        coeffs = np.zeros(torus.shape + (1,), dtype=complex)
        coeffs[:4, 0] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        f = TorusFunction(torus, torus.to_nodes(coeffs))
        u_true = solve_oscillatory(B, -1.0, f, rtol=1e-8, precond=res)[0]
        true_flux = B.flux(u_true.values)
        appr = op.approx_flux(-1.0, f).values
        errs.append(norms(TorusFunction(torus, true_flux - appr))["l2"])
    ratio = errs[0] / errs[1]
    assert 1.7 <= ratio <= 2.3   # O(eps): halving eps halves the error


def test_smoothing_variants_close_for_bounded_correctors():
    pb = two_phase_problem()
    eps = 1 / 16
    torus = torus_for(pb, eps)
    res = effective_resolvent(pb, torus)
    rng = np.random.default_rng(6)
    coeffs = np.zeros(torus.shape + (1,), dtype=complex)
    coeffs[:5, 0] = rng.standard_normal(5)
    f = TorusFunction(torus, torus.to_nodes(coeffs))
    zeta = -pb.lambda0
    outs = {}
    for smoothing in ("steklov", "fourier", "none"):
        cfg = CorrectorConfig(smoothing=smoothing, assume_bounded=True)
        op = CorrectorOperator(cfg, pb.cell, res, eps, torus)
        outs[smoothing] = op.approx_resolvent(zeta, f).values
    scale = norms(TorusFunction(torus, outs["steklov"]))["h1"]
    for other in ("fourier", "none"):
        diff = norms(TorusFunction(torus, outs["steklov"] - outs[other]))["h1"]
        assert diff <= 0.5 * eps * scale / eps * eps  # O(eps) of the solution scale


def test_shifted_operator_is_hermitian_and_nonnegative():
    pb = two_phase_problem()
    eps = 1 / 8
    B = oscillatory_operator(pb, eps)
    rng = np.random.default_rng(9)
    w = B.torus.node_weight
    shape = B.torus.shape + (1,)
    for _ in range(5):
        u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        lhs = w * np.vdot(v, B.apply(u))
        rhs = w * np.vdot(B.apply(v), u)
        assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), 1.0)
        quad = (w * np.vdot(u, B.apply(u))).real
        assert quad >= -1e-9 * (w * np.vdot(u, u)).real
    # the effective symbol is uniformly elliptic on the mode set
    lam_min, c_check = pb.eff.positivity_scan(torus_for(pb, eps))
    assert c_check > 0


def test_corrector_contributes_at_first_order():
    # eps*K f stays bounded in H1 while its L2 norm vanishes linearly
    pb = two_phase_problem()
    h1s, l2s, eps_list = [], [], [1 / 8, 1 / 16, 1 / 32]
    for eps in eps_list:
        torus = torus_for(pb, eps)
        res = effective_resolvent(pb, torus)
        op = CorrectorOperator(CorrectorConfig(), pb.cell, res, eps, torus)
        rng = np.random.default_rng(11)
        coeffs = np.zeros(torus.shape + (1,), dtype=complex)
        coeffs[:4, 0] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        f = TorusFunction(torus, torus.to_nodes(coeffs))
        kf = TorusFunction(torus, eps * op.apply_corrector(-1.0, f).values)
        n = norms(kf)
        h1s.append(n["h1"])
        l2s.append(n["l2"])
    assert max(h1s) / min(h1s) < 2.0                      # bounded in H1
    slope = np.polyfit(np.log(eps_list), np.log(l2s), 1)[0]
    assert abs(slope - 1.0) < 0.25                        # vanishes linearly in L2


def test_smoothing_free_variant_warns_without_assumption():
    pb = two_phase_problem()
    eps = 1 / 8
    torus = torus_for(pb, eps)
    res = effective_resolvent(pb, torus)
    with pytest.warns(RuntimeWarning, match="boundedness"):
        CorrectorOperator(CorrectorConfig(smoothing="none"), pb.cell, res, eps, torus)
    with pytest.warns(RuntimeWarning):
        CorrectorOperator(CorrectorConfig(drop_s_on_lambda=True), pb.cell, res, eps, torus)
