import itertools

import numpy as np
import pytest

from perihom.errors import DegenerateBasis, Incommensurable
from perihom.lattice import TorusGrid, in_brillouin, make_lattice


def brute_force_r0(lat, reach=3):
    """Exhaustive search over dual indices |m| <= reach."""
    best = np.inf
    for m in itertools.product(range(-reach, reach + 1), repeat=lat.dim):
        if not any(m):
            continue
        best = min(best, np.linalg.norm(np.array(m, float) @ lat.dual_basis))
    return 0.5 * best


def test_unit_1d_lattice():
    lat = make_lattice([[1.0]])
    assert lat.dual_basis[0, 0] == pytest.approx(2 * np.pi)
    assert lat.cell_volume == pytest.approx(1.0)
    assert lat.r0 == pytest.approx(np.pi)
    assert lat.r1 == pytest.approx(0.5)


def test_square_lattice():
    lat = make_lattice([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(lat.dual_basis, 2 * np.pi * np.eye(2))
    assert lat.r0 == pytest.approx(np.pi)
    assert lat.r1 == pytest.approx(np.sqrt(2) / 2)


def test_hexagonal_lattice_against_exhaustive_search():
    lat = make_lattice([[1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert lat.cell_volume == pytest.approx(np.sqrt(3) / 2)
    assert lat.r0 == pytest.approx(brute_force_r0(lat))
    # diameter realized by a_1 + a_2
    assert lat.r1 == pytest.approx(0.5 * np.linalg.norm(lat.basis[0] + lat.basis[1]))


def test_duality_reconstruction():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.integers(1, 4)
        basis = np.eye(d) + 0.3 * rng.standard_normal((d, d))
        try:
            lat = make_lattice(basis)
        except DegenerateBasis:
            continue
        # <b_j, a_i> = 2 pi delta_ji
        assert np.allclose(lat.dual_basis @ lat.basis.T, 2 * np.pi * np.eye(d), atol=1e-10)
        # reconstructing the basis from the dual recovers the original
        recon = 2 * np.pi * np.linalg.inv(lat.dual_basis).T
        assert np.max(np.abs(recon - lat.basis)) < 1e-10


def test_degenerate_basis_raises():
    with pytest.raises(DegenerateBasis):
        make_lattice([[1.0, 0.0], [2.0, 0.0]])


def test_in_brillouin_basics():
    sq = make_lattice(np.eye(2))
    assert in_brillouin(sq, [0.0, 0.0])
    line = make_lattice([[1.0]])
    assert in_brillouin(line, [3.0])       # |xi| < pi
    assert not in_brillouin(line, [3.2])   # |xi| > pi
    # boundary tie kept inside
    assert in_brillouin(sq, [np.pi, 0.0])


def test_in_brillouin_search_range_is_wide_enough():
    rng = np.random.default_rng(11)
    for basis in (np.eye(2), [[1.0, 0.0], [0.5, np.sqrt(3) / 2]], [[2.0, 0.1], [-0.3, 0.7]]):
        lat = make_lattice(basis)
        pts = rng.uniform(-1.0, 1.0, size=(400, 2)) @ lat.dual_basis
        got = in_brillouin(lat, pts)
        wide = in_brillouin(lat, pts, search_range=7)
        assert np.array_equal(got, wide)


def test_r0_is_half_the_shortest_dual_vector():
    lat = make_lattice([[1.4, 0.2], [0.0, 0.8]])
    for m in itertools.product(range(-4, 5), repeat=2):
        if not any(m):
            continue
        b = np.array(m, float) @ lat.dual_basis
        assert lat.r0 <= 0.5 * np.linalg.norm(b) + 1e-12


def test_brillouin_volume_monte_carlo():
    for basis in (np.eye(2), [[1.0, 0.0], [0.5, np.sqrt(3) / 2]]):
        lat = make_lattice(basis)
        rng = np.random.default_rng(5)
        n = 100_000
        u = rng.uniform(-1.0, 1.0, size=(n, 2))   # covers the Brillouin zone
        pts = u @ lat.dual_basis
        frac = np.mean(in_brillouin(lat, pts))
        vol = frac * (2.0 ** 2) * abs(np.linalg.det(lat.dual_basis))
        expect = (2 * np.pi) ** 2 / lat.cell_volume
        assert abs(vol - expect) / expect < 0.02


def test_torus_grid_shapes_and_modes():
    lat = make_lattice(np.eye(2))
    g = TorusGrid(lat, (8, 4))
    assert g.num_nodes == 32
    assert g.node_weight == pytest.approx(1.0 / 32)
    m = g.mode_numbers()
    assert m[..., 0].min() == -4 and m[..., 0].max() == 3
    assert m[..., 1].min() == -2 and m[..., 1].max() == 1
    # nodes are k/N combinations of the basis
    nodes = g.nodes()
    assert np.allclose(nodes[1, 0], lat.basis[0] / 8)
    with pytest.raises(ValueError):
        TorusGrid(lat, (7, 4))
    with pytest.raises(Incommensurable):
        TorusGrid(lat, (8, 4), periods=0)


def test_grid_fft_roundtrip():
    lat = make_lattice([[2 * np.pi]])
    g = TorusGrid(lat, (16,))
    rng = np.random.default_rng(3)
    u = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    assert np.allclose(g.to_nodes(g.to_modes(u)), u)
