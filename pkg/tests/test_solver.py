import numpy as np
import pytest
import scipy.sparse as sp

from sepflow import (GraphError, SolverConvergenceError, SolverHandle, WeightedGraph,
                     electrical_flow, laplacian_from_resistances, optimum_energy,
                     residual_of_vector, solve_sdd, st_demand)

from conftest import dense_electrical, random_connected_graph


class TestSolveSdd:
    def test_2x2_closed_form(self):
        a = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
        x = solve_sdd(a, np.array([1.0, 0.0]), 1e-10)
        assert np.allclose(x, [2 / 3, 1 / 3], atol=1e-10)

    def test_path_laplacian(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], resistance=[1.0, 1.0])
        lap = laplacian_from_resistances(g)
        x = solve_sdd(lap.matrix, np.array([1.0, 0.0, -1.0]), 1e-10)
        assert np.allclose(x, [1.0, 0.0, -1.0], atol=1e-9)

    def test_matches_dense_pseudoinverse(self, rng):
        for _ in range(10):
            g = random_connected_graph(rng, 20, 15)
            lap = laplacian_from_resistances(g)
            d = rng.normal(size=g.n)
            d -= d.mean()
            x = solve_sdd(lap.matrix, d, 1e-8)
            ref = np.linalg.pinv(lap.dense()) @ d
            ref -= ref.mean()
            assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_anorm_contract_n50(self, rng):
        # |x - A^+ b|_A <= delta |A^+ b|_A against the dense pseudoinverse
        for delta in (1e-2, 1e-4, 1e-6):
            g = random_connected_graph(rng, 50, 60)
            lap = laplacian_from_resistances(g)
            a = lap.dense()
            d = rng.normal(size=g.n)
            d -= d.mean()
            # force the PCG path: the dense shortcut only covers n <= 64 handles
            handle = SolverHandle(lap.matrix, iteration_cap=10_000)
            x = handle.solve(d, delta=delta)
            ref = np.linalg.pinv(a) @ d
            err = x - ref
            err -= err.mean()
            anorm = np.sqrt(err @ a @ err)
            ref_norm = np.sqrt(ref @ a @ ref)
            assert anorm <= delta * ref_norm * 1.05

    def test_iteration_cap_errors_with_best_iterate(self, rng):
        g = random_connected_graph(rng, 80, 60)
        lap = laplacian_from_resistances(g)
        handle = SolverHandle(lap.matrix, iteration_cap=2)
        d = rng.normal(size=g.n)
        d -= d.mean()
        with pytest.raises(SolverConvergenceError) as err:
            handle.solve(d, delta=1e-12)
        assert err.value.best_iterate is not None
        assert err.value.achieved_residual is not None

    def test_rejects_rhs_outside_range(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], resistance=[1.0, 1.0])
        lap = laplacian_from_resistances(g)
        with pytest.raises(GraphError, match="null space"):
            solve_sdd(lap.matrix, np.array([1.0, 1.0, 1.0]), 1e-8)

    def test_deterministic_repeat(self, rng):
        g = random_connected_graph(rng, 30, 25)
        lap = laplacian_from_resistances(g)
        handle = SolverHandle(lap.matrix)
        d = rng.normal(size=g.n)
        d -= d.mean()
        x1 = handle.solve(d, delta=1e-8)
        x2 = handle.solve(d, delta=1e-8)
        assert np.array_equal(x1, x2)


class TestElectricalFlow:
    def test_series_path(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], resistance=[1.0, 1.0])
        res = electrical_flow(g, st_demand(3, 0, 2, 1.0), 1e-6)
        assert np.allclose(res.flow, [1.0, 1.0], atol=1e-9)
        assert res.energy == pytest.approx(2.0)

    def test_parallel_split(self):
        g = WeightedGraph(2, [(0, 1), (0, 1)], resistance=[1.0, 1.0])
        res = electrical_flow(g, st_demand(2, 0, 1, 1.0), 1e-6)
        assert np.allclose(res.flow, [0.5, 0.5], atol=1e-9)
        assert res.energy == pytest.approx(0.5)

    def test_grid_corner_energy(self):
        # unit 3x3 grid, corner-to-corner energy = d^T L^+ d
        from sepflow.grids import grid_graph

        g = grid_graph(3, 3)
        d = st_demand(g.n, 0, 8, 1.0)
        res = electrical_flow(g, d, 1e-8, resistances=np.ones(g.m))
        _, _, ref = dense_electrical(g, d, resistances=np.ones(g.m))
        assert res.energy == pytest.approx(ref, rel=1e-6)
        assert ref == pytest.approx(1.5, rel=1e-9)

    def test_contract_on_random_instances(self, rng):
        delta = 1e-3
        for _ in range(60):
            n = int(rng.integers(4, 31))
            g = random_connected_graph(rng, n, int(rng.integers(0, 2 * n)))
            d = rng.normal(size=n)
            d -= d.mean()
            res = electrical_flow(g, d, delta)
            fbar, _, eopt = dense_electrical(g, d)
            # part 1: demand exactness
            assert np.abs(residual_of_vector(res.flow, g) - d).max() <= 1e-9 * max(np.abs(d).max(), 1)
            # part 2: near-optimal energy
            assert res.energy <= (1 + delta) * eopt + 1e-12
            # part 3: summed per-edge energy deviation
            dev = np.abs(g.resistance * fbar**2 - g.resistance * res.flow**2).sum()
            assert dev <= delta * eopt + 1e-12
            # flow-potential duality
            assert d @ res.potentials >= (1 - delta) * eopt - 1e-12

    def test_zero_demand(self, rng):
        g = random_connected_graph(rng, 6, 4)
        res = electrical_flow(g, np.zeros(g.n), 1e-6)
        assert not res.flow.any()

    def test_disconnected_rejected(self):
        g = WeightedGraph(4, [(0, 1), (2, 3)], resistance=[1.0, 1.0])
        with pytest.raises(GraphError):
            electrical_flow(g, np.array([1.0, -1.0, 0.0, 0.0]), 1e-6)

    def test_energy_field_consistent(self, rng):
        g = random_connected_graph(rng, 12, 10)
        d = rng.normal(size=g.n)
        d -= d.mean()
        res = electrical_flow(g, d, 1e-4)
        assert res.recompute_energy(g.resistance) == pytest.approx(res.energy, rel=1e-10)


class TestOptimumEnergy:
    def test_single_resistor(self):
        g = WeightedGraph(2, [(0, 1)], resistance=[5.0])
        assert optimum_energy(g, st_demand(2, 0, 1, 1.0)) == pytest.approx(5.0)

    def test_series(self):
        g = WeightedGraph(4, [(0, 1), (1, 2), (2, 3)], resistance=np.ones(3))
        assert optimum_energy(g, st_demand(4, 0, 3, 1.0)) == pytest.approx(3.0)

    def test_k4_effective_resistance(self):
        edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        g = WeightedGraph(4, edges, resistance=np.ones(6))
        assert optimum_energy(g, st_demand(4, 0, 1, 1.0)) == pytest.approx(0.5, rel=1e-8)

    def test_matches_dense(self, rng):
        for _ in range(20):
            g = random_connected_graph(rng, 18, 12)
            d = rng.normal(size=g.n)
            d -= d.mean()
            _, _, ref = dense_electrical(g, d)
            assert optimum_energy(g, d) == pytest.approx(ref, rel=1e-8)
