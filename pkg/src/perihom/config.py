"""Config parsing: coefficient fields, problem assembly, builtin demo models.

A run is described by one JSON document:

    {
      "lattice": [[...], ...],            # basis vectors, row major
      "cell_nodes": [N1, ...],
      "symbol": {"preset": "gradient"} | {"b_mats": [[[re, im], ...], ...]},
      "coefficients": {"g": FIELD, "a": A_SPEC | null, "Q": FIELD | null,
                        "Q0": FIELD | null},
      "schrodinger_check": {...},         # singular-potential model (optional)
      "corrector": {"smoothing": "steklov", ...},
      "sweep": {"eps_list": [...], "zeta_ref": [re, im], "zeta_abs_list": [...],
                 "phi_list": [...], "eps_ref": ..., "rho_offsets": [...],
                 "specs": [...]},
      "solver": {"rtol": 1e-8, "dealias": false},
      "opnorm": {"seeds": 5, "iters": 60, "panel": 8},
      "tolerances": {"rate": 0.15},
      "seeds": 1234
    }

FIELD is one of
    {"kind": "constant", "value": scalar | matrix}
    {"kind": "fourier", "shape": [r, c], "offset": scalar | matrix,
     "terms": [{"mode": [m1, ...], "amp": x | [re, im], "phase": 0.0,
                "matrix": [[...]]}]}     # value += amp*cos(2 pi <m, tau> + phase)*matrix
    {"kind": "two_phase", "axis": 0, "fraction": 0.5, "values": [v_lo, v_hi]}
    {"kind": "grid_file", "path": "...npy|csv", "shape": [r, c]}

in lattice coordinates tau (row-major node order for grid files). A_SPEC is
either {"fields": [FIELD, ...]} (one per direction) or {"schrodinger":
{"A": FIELD, "v": FIELD, "Vcal": FIELD}} which derives the first order
coefficients and the potential from magnetic/electric data.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .corrector import CorrectorConfig
from .fields import PeriodicField, constant_field
from .lattice import TorusGrid, make_lattice
from .problems import ProblemModel, build_sandwich_model
from .symbols import SymbolB, gradient_symbol


# ---------------------------------------------------------------------------
# field construction

def _as_matrix(value, shape=None):
    arr = np.atleast_2d(np.asarray(value, dtype=complex))
    if shape is not None and arr.shape != tuple(shape):
        arr = np.broadcast_to(arr, tuple(shape)).copy()
    return arr


def _complex_amp(x):
    if isinstance(x, (list, tuple)):
        return complex(x[0], x[1])
    return complex(x)


def build_field(grid: TorusGrid, spec, shape=(1, 1)):
    """Build a PeriodicField on `grid` from its config record."""
    kind = spec["kind"]
    shape = tuple(spec.get("shape", shape))
    if kind == "constant":
        return constant_field(grid, _as_matrix(spec["value"], shape))
    if kind == "fourier":
        fr = grid.fractions()
        vals = np.zeros(grid.shape + shape, dtype=complex)
        if "offset" in spec:
            vals += _as_matrix(spec["offset"], shape)
        for term in spec.get("terms", []):
            mode = np.asarray(term["mode"], dtype=float)
            phase = float(term.get("phase", 0.0))
            amp = _complex_amp(term.get("amp", 1.0))
            mat = _as_matrix(term["matrix"], shape) if "matrix" in term else np.ones(shape)
            osc = np.cos(2.0 * np.pi * (fr @ mode) + phase)
            vals += amp * osc[..., None, None] * mat
        return PeriodicField(grid, vals)
    if kind == "two_phase":
        axis = int(spec.get("axis", 0))
        frac = float(spec.get("fraction", 0.5))
        lo = _as_matrix(spec["values"][0], shape)
        hi = _as_matrix(spec["values"][1], shape)
        t = grid.fractions()[..., axis]
        sel = (t < frac)[..., None, None]
        return PeriodicField(grid, np.where(sel, lo, hi))
    if kind == "grid_file":
        return load_grid_field(grid, spec["path"], shape)
    raise ValueError(f"unknown field kind {kind!r}")


def load_grid_field(grid, path, shape):
    path = str(path)
    want = grid.shape + tuple(shape)
    if path.endswith(".npy"):
        vals = np.load(path)
    else:
        vals = np.loadtxt(path, dtype=complex, delimiter=",")
    vals = np.asarray(vals, dtype=complex).reshape(want)
    return PeriodicField(grid, vals)


def save_grid_field(path, field: PeriodicField):
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, field.values)
    else:
        flat = field.values.reshape(int(np.prod(field.grid.shape)), -1)
        np.savetxt(path, flat, delimiter=",", fmt="%.17e",
                   header=f"shape: {field.values.shape}")


# ---------------------------------------------------------------------------
# problem assembly

def build_symbol(cfg, d):
    sym = cfg.get("symbol", {"preset": "gradient"})
    if sym.get("preset") == "gradient":
        return gradient_symbol(d)
    mats = np.asarray(sym["b_mats"], dtype=float)
    if mats.ndim == 4:       # [re, im] pairs in the last axis
        mats = mats[..., 0] + 1j * mats[..., 1]
    return SymbolB(np.asarray(mats, dtype=complex))


def build_problem(cfg):
    """Returns (ProblemModel, SandwichModel | None) from a config document."""
    lattice = make_lattice(cfg["lattice"])
    grid = TorusGrid(lattice, tuple(cfg["cell_nodes"]))
    d = lattice.dim
    solver = cfg.get("solver", {})
    corr_cfg = cfg.get("corrector", {})
    corrector = CorrectorConfig(
        smoothing=corr_cfg.get("smoothing", "steklov"),
        drop_s_on_lambda=bool(corr_cfg.get("drop_s_lambda", False)),
        drop_s_on_lambda_tilde=bool(corr_cfg.get("drop_s_lambdatilde", False)),
        assume_bounded=bool(corr_cfg.get("assume_bounded", False)))

    if "schrodinger_check" in cfg:
        sc = cfg["schrodinger_check"]
        sandwich = build_sandwich_model(
            lattice, grid,
            g_check=build_field(grid, sc["g_check"], (d, d)),
            v_check=build_field(grid, sc["v_check"]),
            A=build_field(grid, sc.get("A", {"kind": "constant", "value": [[0.0]] * d}),
                          (d, 1)),
            v_hat_raw=build_field(grid, sc.get("v_hat", {"kind": "constant", "value": 0.0})),
            Vcal_check=build_field(grid, sc.get("Vcal", {"kind": "constant", "value": 0.0})),
            Q0_check=build_field(grid, sc.get("Q0", {"kind": "constant", "value": 1.0})),
            solver_rtol=float(solver.get("rtol", 1e-8)),
            cell_rtol=float(solver.get("cell_rtol", 1e-10)))
        sandwich.inner.corrector = corrector
        return sandwich.inner, sandwich

    coeffs = cfg["coefficients"]
    b = build_symbol(cfg, d)
    g = build_field(grid, coeffs["g"], (b.m, b.m))
    a_spec = coeffs.get("a")
    a_fields = None
    Q = build_field(grid, coeffs["Q"], (b.n, b.n)) if coeffs.get("Q") else None
    cell_pre = None
    if a_spec and "schrodinger" in a_spec:
        from .cellsolve import build_schrodinger
        sc = a_spec["schrodinger"]
        model = build_schrodinger(
            build_field(grid, sc["A"], (d, 1)),
            build_field(grid, sc["v"]),
            build_field(grid, sc.get("Vcal", {"kind": "constant", "value": 0.0})),
            g, rtol=float(solver.get("cell_rtol", 1e-10)))
        a_fields = model.a_fields
        Q = model.Q
        cell_pre = model.cell
    elif a_spec:
        a_fields = [build_field(grid, fs, (b.n, b.n)) for fs in a_spec["fields"]]
    Q0 = build_field(grid, coeffs["Q0"], (b.n, b.n)) if coeffs.get("Q0") else None

    problem = ProblemModel(lattice=lattice, cell_grid=grid, b=b, g=g,
                           a_fields=a_fields, Q=Q, Q0=Q0, corrector=corrector,
                           solver_rtol=float(solver.get("rtol", 1e-8)),
                           cell_rtol=float(solver.get("cell_rtol", 1e-10)),
                           dealias=bool(solver.get("dealias", False)))
    if cell_pre is not None:
        problem.cell = cell_pre
    return problem, None


def canonical_hash(cfg):
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# builtin demo configurations

TWO_PI = 2.0 * np.pi

DEMO_CONFIGS = {
    # constant coefficients: every discrepancy sits at solver-noise level
    "constant": {
        "lattice": [[1.0]],
        "cell_nodes": [16],
        "symbol": {"preset": "gradient"},
        "coefficients": {
            "g": {"kind": "constant", "value": 2.0},
            "a": None,
            "Q": {"kind": "constant", "value": 0.5},
            "Q0": {"kind": "constant", "value": 1.0},
        },
        "corrector": {"smoothing": "none", "assume_bounded": True},
        "expect_noise": True,
        "sweep": {"eps_list": [0.25, 0.125, 0.0625], "zeta_ref": [-1.0, 0.0],
                  "specs": ["L2_main", "D_corrector", "flux"]},
        "solver": {"rtol": 1e-8},
        "opnorm": {"seeds": 3, "iters": 30, "panel": 4},
        "seeds": 1234,
    },

    # the workhorse: 1d two-phase metric with magnetic/electric lower order
    # terms, on a cell of length 2 pi so torus modes are the integers
    "1d-two-phase": {
        "lattice": [[TWO_PI]],
        "cell_nodes": [32],
        "symbol": {"preset": "gradient"},
        "coefficients": {
            "g": {"kind": "two_phase", "axis": 0, "fraction": 0.5, "values": [1.0, 4.0]},
            "a": {"schrodinger": {
                "A": {"kind": "fourier", "offset": 0.4,
                      "terms": [{"mode": [1], "amp": 0.25}]},
                "v": {"kind": "fourier",
                      "terms": [{"mode": [1], "amp": 0.8}]},
                "Vcal": {"kind": "fourier", "offset": 0.2,
                         "terms": [{"mode": [2], "amp": 0.3}]},
            }},
            "Q0": {"kind": "fourier", "offset": 1.0,
                   "terms": [{"mode": [1], "amp": 0.5}]},
        },
        "corrector": {"smoothing": "steklov"},
        "sweep": {
            "eps_list": [0.125, 0.0625, 0.03125, 0.015625],
            "eps_ref": 0.03125,
            "zeta_ref": [-1.0, 0.0],
            "zeta_abs_list": [1.0, 4.0, 16.0, 64.0],
            "phi_list": [np.pi / 6, np.pi / 2, np.pi, 3 * np.pi / 2, 11 * np.pi / 6],
            "specs": ["L2_main", "H1_corrector", "D_corrector", "D_no_corrector",
                      "flux", "smoothing_equiv", "q0_h1hm1"],
        },
        "solver": {"rtol": 1e-8, "cell_rtol": 1e-10},
        "opnorm": {"seeds": 5, "iters": 60, "panel": 8},
        "tolerances": {"rate": 0.15, "smoothing_equiv": 0.2, "q0_h1hm1": 0.2},
        "torus_sensitivity": True,
        "seeds": 1234,
    },

    # wider-zeta regime: a weight-dominated model whose resolvent discrepancy
    # is pole-governed near the spectral bottom, so the rho envelope is tight
    "rho-regime-1d": {
        "lattice": [[TWO_PI]],
        "cell_nodes": [32],
        "symbol": {"preset": "gradient"},
        "coefficients": {
            "g": {"kind": "constant", "value": 1.0},
            "a": None,
            "Q": {"kind": "fourier", "offset": 2.0,
                  "terms": [{"mode": [1], "amp": 0.3}]},
            "Q0": {"kind": "fourier", "offset": 1.0,
                   "terms": [{"mode": [1], "amp": 0.7}]},
        },
        "corrector": {"smoothing": "steklov"},
        "sweep": {
            "eps_list": [0.125, 0.0625, 0.03125, 0.015625],
            "eps_ref": 0.03125,
            "zeta_ref": [-1.0, 0.0],
            "rho_offsets": [0.0625, 0.25, 1.0, 4.0],
            "specs": ["L2_rho", "H1_rho", "flux_rho"],
        },
        "solver": {"rtol": 1e-8, "cell_rtol": 1e-10},
        "opnorm": {"seeds": 5, "iters": 60, "panel": 8},
        "seeds": 1234,
    },

    # singular eps^{-2} potential, compared against the sandwiched effective
    "schrodinger-1d": {
        "lattice": [[1.0]],
        "cell_nodes": [32],
        "schrodinger_check": {
            "g_check": {"kind": "constant", "value": 1.0},
            "v_check": {"kind": "fourier", "terms": [{"mode": [1], "amp": 1.0}]},
            "A": {"kind": "fourier", "offset": 0.3, "terms": [{"mode": [1], "amp": 0.2}]},
            "v_hat": {"kind": "fourier", "terms": [{"mode": [1], "amp": 0.5}]},
            "Vcal": {"kind": "fourier", "offset": 0.2, "terms": [{"mode": [1], "amp": 0.1}]},
            "Q0": {"kind": "constant", "value": 1.0},
        },
        "sweep": {"eps_list": [0.125, 0.0625, 0.03125, 0.015625],
                  "zeta_ref": [-1.0, 0.0],
                  "specs": ["schrodinger_sandwich"]},
        "solver": {"rtol": 1e-8, "cell_rtol": 1e-10},
        "opnorm": {"seeds": 5, "iters": 60, "panel": 8},
        "tolerances": {"rate": 0.15},
        "seeds": 1234,
    },

    # divergence-free coefficient columns and curl first order data: both
    # correctors vanish yet the derivative discrepancy still decays like eps
    "zero-corrector-2d": {
        "lattice": [[TWO_PI, 0.0], [0.0, TWO_PI]],
        "cell_nodes": [16, 16],
        "symbol": {"preset": "gradient"},
        "coefficients": {
            "g": {"kind": "fourier", "shape": [2, 2],
                  "offset": [[2.0, 0.0], [0.0, 2.0]],
                  "terms": [
                      {"mode": [1, -1], "amp": -0.4,
                       "matrix": [[1.0, 1.0], [1.0, 1.0]]},
                      {"mode": [1, 1], "amp": -0.4,
                       "matrix": [[1.0, -1.0], [-1.0, 1.0]]},
                  ]},
            "a": {"fields": [
                {"kind": "fourier", "terms": [
                    {"mode": [1, -1], "amp": [0.0, 0.15]},
                    {"mode": [1, 1], "amp": [0.0, 0.15]}]},
                {"kind": "fourier", "terms": [
                    {"mode": [1, -1], "amp": [0.0, 0.15]},
                    {"mode": [1, 1], "amp": [0.0, -0.15]}]},
            ]},
            "Q": {"kind": "fourier", "offset": 0.3,
                  "terms": [{"mode": [1, 0], "amp": 0.1}]},
            "Q0": {"kind": "constant", "value": 1.0},
        },
        "sweep": {"eps_list": [0.25, 0.125, 0.0625], "zeta_ref": [-1.0, 0.0],
                  "specs": ["D_zero_corrector"]},
        "solver": {"rtol": 1e-8},
        "opnorm": {"seeds": 3, "iters": 30, "panel": 6, "rel_tol": 1e-3},
        "tolerances": {"rate": 0.3},
        "seeds": 1234,
    },
}


def demo_config(name):
    import copy
    if name not in DEMO_CONFIGS:
        raise KeyError(f"unknown demo {name!r}; available: {sorted(DEMO_CONFIGS)}")
    return copy.deepcopy(DEMO_CONFIGS[name])
