import numpy as np
import pytest

from sepflow import (GraphError, GridSpec, SparseLaplacian, ValidationError, approx_schur,
                     exact_schur, grid_graph, load_sparsifier, one_step_vertex_sparsify,
                     recursive_vertex_sparsify, save_sparsifier, separator_tree_for_grid_block,
                     sparsify, spectral_bounds, weight_floor)

from conftest import gen_eig_range, partial_elimination_schur, random_connected_graph


def lap_of(g, conductance=None):
    c = 1.0 / g.weight if conductance is None else conductance
    return SparseLaplacian(g.laplacian_csr(c))


def block_lap(rows, cols, weights=None):
    g = grid_graph(rows, cols)
    w = np.ones(g.m) if weights is None else weights
    return SparseLaplacian(g.laplacian_csr(w)), g


class TestExactSchur:
    def test_series_resistors(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        s = exact_schur(lap, [0, 2])
        assert np.allclose(s.dense(), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)

    def test_star_to_triangle(self):
        lap = SparseLaplacian.from_edges(4, [0, 0, 0], [1, 2, 3], np.ones(3))
        s = exact_schur(lap, [1, 2, 3])
        expect = np.full((3, 3), -1 / 3) + np.diag([1.0, 1.0, 1.0])
        assert np.allclose(s.dense(), expect, atol=1e-12)

    def test_boundary_equals_vertices(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 2.0])
        s = exact_schur(lap, [0, 1, 2])
        assert np.allclose(s.dense(), lap.dense())

    def test_matches_partial_elimination_oracle(self, rng):
        for _ in range(40):
            n = int(rng.integers(5, 16))
            g = random_connected_graph(rng, n, int(rng.integers(0, n)))
            lap = lap_of(g)
            nb = int(rng.integers(2, max(n // 2, 3)))
            bdry = np.sort(rng.choice(n, size=nb, replace=False))
            ours = exact_schur(lap, bdry).dense()
            ref = partial_elimination_schur(lap.dense(), bdry)
            scale = np.abs(ref).max()
            assert np.allclose(ours, ref, atol=1e-9 * scale, rtol=1e-9)

    def test_isolated_interior_component_rejected(self):
        lap = SparseLaplacian.from_edges(5, [0, 1, 3], [1, 2, 4], np.ones(3))
        with pytest.raises(GraphError, match="no boundary vertex"):
            exact_schur(lap, [0, 2])

    def test_output_is_laplacian(self, rng):
        g = random_connected_graph(rng, 12, 10)
        s = exact_schur(lap_of(g), np.arange(4))
        s.validate(tol=1e-10)


class TestApproxSchur:
    def test_path_small_eps(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        bounds = spectral_bounds(lap)
        s = approx_schur(lap, [0, 2], bounds.kappa, 0.01)
        w = -s.dense()[0, 1]
        assert 0.495 <= w <= 0.505

    def test_boundary_equals_vertices_identity(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 2.0])
        s = approx_schur(lap, [0, 1, 2], 10.0, 0.1)
        assert np.allclose(s.dense(), lap.dense())

    def test_sandwich_on_random_graphs(self, rng):
        for _ in range(15):
            g = random_connected_graph(rng, 30, 40)
            lap = lap_of(g)
            bdry = np.arange(8)
            bounds = spectral_bounds(lap)
            approx = approx_schur(lap, bdry, bounds.kappa, 0.1)
            exact = exact_schur(lap, bdry)
            lo, hi = gen_eig_range(approx.dense(), exact.dense())
            assert 0.9 - 1e-6 <= lo and hi <= 1.1 + 1e-6

    def test_eps_range_enforced(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        with pytest.raises(GraphError):
            approx_schur(lap, [0, 2], 10.0, 0.7)

    def test_clamp_mass_recorded(self, rng):
        g = random_connected_graph(rng, 20, 15)
        lap = lap_of(g)
        s = approx_schur(lap, np.arange(5), spectral_bounds(lap).kappa, 0.2)
        assert "clamp_mass" in s.meta
        assert s.meta["clamp_mass"] >= 0.0


class TestSparsify:
    def test_under_budget_returns_input(self):
        lap = SparseLaplacian.from_edges(16, *np.triu_indices(16, k=1), np.ones(120))
        assert sparsify(lap, 0.5, seed=0) is lap

    def test_single_edge_unchanged(self):
        lap = SparseLaplacian.from_edges(2, [0], [1], [1.0])
        assert sparsify(lap, 0.5, seed=1) is lap

    def test_sampling_sandwich_success_rate(self):
        n = 64
        lap = SparseLaplacian.from_edges(n, *np.triu_indices(n, k=1), np.ones(n * (n - 1) // 2))
        dense = lap.dense()
        ok = 0
        for seed in range(100):
            s = sparsify(lap, 0.5, seed, c_s=0.5)
            assert s is not lap
            lo, hi = gen_eig_range(s.dense(), dense)
            ok += bool(0.5 <= lo and hi <= 1.5)
        assert ok >= 90

    def test_deterministic(self):
        n = 64
        lap = SparseLaplacian.from_edges(n, *np.triu_indices(n, k=1), np.ones(n * (n - 1) // 2))
        a = sparsify(lap, 0.5, seed=42, c_s=0.5)
        b = sparsify(lap, 0.5, seed=42, c_s=0.5)
        assert np.array_equal(a.dense(), b.dense())

    def test_sketched_resistances_path(self, rng):
        # n > 64 exercises the random-projection estimate
        n = 80
        t, h = np.triu_indices(n, k=1)
        keep = rng.random(t.size) < 0.6
        lap = SparseLaplacian.from_edges(n, t[keep], h[keep], rng.uniform(0.5, 2.0, keep.sum()))
        s = sparsify(lap, 0.5, seed=3, c_s=0.5)
        lo, hi = gen_eig_range(s.dense(), lap.dense())
        assert 0.5 <= lo and hi <= 1.5


class TestSpectralBounds:
    def test_single_unit_edge(self):
        lap = SparseLaplacian.from_edges(2, [0], [1], [1.0])
        b = spectral_bounds(lap)
        assert b.lam_min == 0.25 and b.lam_max == 2.0 and b.kappa == 8.0

    def test_path_of_two(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        b = spectral_bounds(lap)
        assert b.lam_min == pytest.approx(1 / 9) and b.lam_max == 3.0

    def test_kappa_bound(self):
        lap = SparseLaplacian.from_edges(4, [0, 1, 2], [1, 2, 3], [1.0, 4.0, 1.0])
        b = spectral_bounds(lap)
        n, u = 4, 4.0
        assert b.kappa == pytest.approx(256.0)
        assert b.kappa <= n**3 * u

    def test_bounds_bracket_true_spectrum(self, rng):
        for _ in range(20):
            g = random_connected_graph(rng, 10, 8)
            lap = lap_of(g)
            b = spectral_bounds(lap)
            eig = np.linalg.eigvalsh(lap.dense())
            assert b.lam_min <= eig[1] + 1e-12
            assert eig[-1] <= b.lam_max + 1e-12

    def test_max_edge_weight_at_most_twice_lam_n(self, rng):
        for _ in range(20):
            g = random_connected_graph(rng, 9, 7)
            lap = lap_of(g)
            eig = np.linalg.eigvalsh(lap.dense())
            assert lap.weights().max() <= 2 * eig[-1] + 1e-12


class TestWeightFloor:
    def test_additive_rule(self):
        lap = SparseLaplacian.from_edges(2, [0], [1], [1.0])
        out = weight_floor(lap, 0.25)
        assert -out.dense()[0, 1] == pytest.approx(1.0625)

    def test_sandwich(self, rng):
        for _ in range(10):
            g = random_connected_graph(rng, 10, 8)
            lap = lap_of(g)
            b = spectral_bounds(lap)
            out = weight_floor(lap, b.lam_min)
            lo, hi = gen_eig_range(out.dense(), lap.dense())
            assert 1.0 - 1e-12 <= lo and hi <= 1.0 + 1.0 / lap.n + 1e-12


class TestOneStep:
    def test_path_series_value(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        vs = one_step_vertex_sparsify(lap, [0, 2], 0.3, seed=0)
        w = -vs.laplacian.dense()[0, 1]
        assert 0.35 <= w <= 0.65
        vs.validate()

    def test_boundary_all_vertices(self):
        lap = SparseLaplacian.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
        vs = one_step_vertex_sparsify(lap, [0, 1, 2], 0.3, seed=0)
        lo, hi = gen_eig_range(vs.laplacian.dense(), lap.dense())
        assert 0.7 <= lo and hi <= 1.3

    def test_grid_block_perimeter(self, rng):
        lap, g = block_lap(5, 5)
        perim = np.array([v for v in range(25) if v // 5 in (0, 4) or v % 5 in (0, 4)])
        vs = one_step_vertex_sparsify(lap, perim, 0.2, seed=7)
        vs.validate()
        exact = exact_schur(lap, perim)
        lo, hi = gen_eig_range(vs.laplacian.dense(), exact.dense())
        assert 0.8 <= lo and hi <= 1.2

    def test_deterministic(self):
        lap, _ = block_lap(5, 5)
        perim = np.array([v for v in range(25) if v // 5 in (0, 4) or v % 5 in (0, 4)])
        a = one_step_vertex_sparsify(lap, perim, 0.2, seed=9)
        b = one_step_vertex_sparsify(lap, perim, 0.2, seed=9)
        assert np.array_equal(a.laplacian.dense(), b.laplacian.dense())


class TestRecursive:
    def test_leaf_equals_one_step(self):
        lap, g = block_lap(3, 3)
        tree = separator_tree_for_grid_block(GridSpec(3, 3), np.arange(9), leaf_cutoff=16)
        assert tree.root.is_leaf
        vs = recursive_vertex_sparsify(lap, [0, 8], tree, 0.3, seed=1)
        exact = exact_schur(lap, [0, 8])
        lo, hi = gen_eig_range(vs.laplacian.dense(), exact.dense())
        assert 0.7 <= lo and hi <= 1.3

    def test_path_of_nine(self):
        lap = SparseLaplacian.from_edges(9, np.arange(8), np.arange(1, 9), np.ones(8))
        tree = separator_tree_for_grid_block(GridSpec(2, 9), np.arange(9), leaf_cutoff=4)
        vs = recursive_vertex_sparsify(lap, [0, 8], tree, 0.3, seed=1)
        w = -vs.laplacian.dense()[0, 1]
        assert (1 - 0.3) / 8 <= w <= (1 + 0.3) / 8

    def test_8x8_one_side(self):
        lap, g = block_lap(8, 8)
        tree = separator_tree_for_grid_block(GridSpec(8, 8), np.arange(64), g=g)
        side = np.arange(8)
        vs = recursive_vertex_sparsify(lap, side, tree, 0.3, seed=5)
        vs.validate()
        exact = exact_schur(lap, side)
        lo, hi = gen_eig_range(vs.laplacian.dense(), exact.dense())
        assert 0.7 <= lo and hi <= 1.3

    def test_deterministic(self):
        lap, g = block_lap(8, 8)
        tree = separator_tree_for_grid_block(GridSpec(8, 8), np.arange(64), g=g)
        a = recursive_vertex_sparsify(lap, np.arange(8), tree, 0.3, seed=3)
        b = recursive_vertex_sparsify(lap, np.arange(8), tree, 0.3, seed=3)
        assert np.array_equal(a.laplacian.dense(), b.laplacian.dense())


class TestSchurIdentities:
    def test_schur_of_similar_graphs(self, rng):
        # reweighting H within (1 +- eps) of G keeps Schur complements sandwiched
        eps = 0.2
        for _ in range(10):
            g = random_connected_graph(rng, 12, 10)
            lap_g = lap_of(g)
            scale = rng.uniform(1 - eps, 1 + eps, g.m)
            lap_h = SparseLaplacian(g.laplacian_csr(scale / g.weight))
            bdry = np.arange(4)
            sg = exact_schur(lap_g, bdry).dense()
            sh = exact_schur(lap_h, bdry).dense()
            lo, hi = gen_eig_range(sh, sg)
            assert 1 - eps - 1e-9 <= lo and hi <= 1 + eps + 1e-9

    def test_dirichlet_energy_identity(self, rng):
        # x^T Schur x = min over interior extensions of the full quadratic form
        for _ in range(10):
            n = int(rng.integers(6, 21))
            g = random_connected_graph(rng, n, n)
            lap = lap_of(g)
            bdry = np.sort(rng.choice(n, size=int(rng.integers(2, n - 1)), replace=False))
            intr = np.setdiff1d(np.arange(n), bdry)
            schur = exact_schur(lap, bdry).dense()
            dense = lap.dense()
            x = rng.normal(size=bdry.size)
            l_intr = dense[np.ix_(intr, intr)]
            l_mid = dense[np.ix_(intr, bdry)]
            y = -np.linalg.solve(l_intr, l_mid @ x) if intr.size else np.zeros(0)
            z = np.zeros(n)
            z[bdry] = x
            z[intr] = y
            assert x @ schur @ x == pytest.approx(z @ dense @ z, abs=1e-8 * max(abs(x @ schur @ x), 1))

    def test_spectrum_relation(self, rng):
        for _ in range(10):
            n = int(rng.integers(6, 15))
            g = random_connected_graph(rng, n, n)
            lap = lap_of(g)
            bdry = np.arange(int(rng.integers(2, n - 1)))
            schur = exact_schur(lap, bdry).dense()
            le = np.linalg.eigvalsh(lap.dense())
            se = np.linalg.eigvalsh(schur)
            assert se[1] >= le[1] - 1e-9
            assert se[-1] <= n * le[-1] + 1e-9


class TestSerialization:
    def test_round_trip(self, tmp_path):
        lap, _ = block_lap(5, 5)
        perim = np.array([v for v in range(25) if v // 5 in (0, 4) or v % 5 in (0, 4)])
        vs = one_step_vertex_sparsify(lap, perim, 0.2, seed=7)
        path = tmp_path / "vs.txt"
        save_sparsifier(vs, path)
        loaded = load_sparsifier(path)
        assert loaded.provenance == "one-step"
        assert np.array_equal(loaded.boundary, vs.boundary)
        assert np.allclose(loaded.laplacian.dense(), vs.laplacian.dense())
