import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepflow import (FlowState, GraphError, WeightedGraph, edge_congestion, energy,
                     group_congestion, laplacian_from_resistances, residual,
                     residual_of_vector, st_demand, zero_sum_demand)

from conftest import dense_laplacian, random_connected_graph


def path3():
    return WeightedGraph(3, [(0, 1), (1, 2)], capacity=[5.0, 3.0], weight=[1.0, 1.0],
                         resistance=[1.0, 1.0])


class TestConstruction:
    def test_orientation_canonicalized(self):
        g = WeightedGraph(4, [(3, 1), (0, 2)])
        assert g.tails.tolist() == [1, 0]
        assert g.heads.tolist() == [3, 2]

    def test_parallel_edges_kept_distinct(self):
        g = WeightedGraph(2, [(0, 1), (1, 0)], capacity=[1.0, 2.0])
        assert g.m == 2
        assert g.capacity.tolist() == [1.0, 2.0]

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError, match="self-loop"):
            WeightedGraph(3, [(1, 1)])

    def test_nonpositive_vectors_rejected(self):
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 1)], capacity=[0.0])
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 1)], weight=[-1.0])
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 1)], resistance=[np.inf])

    def test_connectivity_cached(self):
        assert path3().is_connected
        assert not WeightedGraph(3, [(0, 1)]).is_connected


class TestCongestion:
    def test_zero_flow(self):
        f = FlowState(np.zeros(2), np.zeros(3))
        assert edge_congestion(f, path3(), 0) == 0.0

    def test_sign_absolute(self):
        g = WeightedGraph(2, [(0, 1)], capacity=[3.0])
        f = FlowState(np.array([-3.0]), np.zeros(2))
        assert edge_congestion(f, g, 0) == 1.0

    def test_direct_ratio(self):
        g = WeightedGraph(2, [(0, 1)], capacity=[8.0])
        f = FlowState(np.array([2.0]), np.zeros(2))
        assert edge_congestion(f, g, 0) == 0.25


class TestGroupCongestion:
    def test_zero_flow(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], weight=[1.0, 2.0])
        f = FlowState(np.zeros(2), np.zeros(3))
        assert group_congestion(f, g, [0, 1]) == 0.0

    def test_three_four_five(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], weight=[1.0, 1.0])
        f = FlowState(np.array([3.0, 4.0]), np.zeros(3))
        assert group_congestion(f, g, [0, 1]) == pytest.approx(5.0)

    def test_weighted(self):
        g = WeightedGraph(3, [(0, 1), (1, 2)], weight=[2.0, 1.0])
        f = FlowState(np.array([1.0, 2.0]), np.zeros(3))
        assert group_congestion(f, g, [0, 1]) == pytest.approx(np.sqrt(6.0))

    def test_empty_group_rejected(self):
        f = FlowState(np.zeros(2), np.zeros(3))
        with pytest.raises(GraphError, match="empty group"):
            group_congestion(f, path3(), [])

    def test_dominates_single_edge(self, rng):
        # max_i group congestion >= sqrt(w(e)) |f(e)| for every e
        g = random_connected_graph(rng, 12, 10)
        flow = rng.normal(size=g.m)
        groups = [np.arange(0, g.m, 2), np.arange(1, g.m, 2)]
        f = FlowState(flow, np.zeros(g.n))
        best = max(group_congestion(f, g, grp) for grp in groups)
        assert best >= np.max(np.sqrt(g.weight) * np.abs(flow)) - 1e-12


class TestResidual:
    def test_unit_path_flow(self):
        # orientation a->b, b->c with tail +1 / head -1: source gets +1
        g = path3()
        f = FlowState(np.array([1.0, 1.0]), np.zeros(3))
        assert residual(f, g).tolist() == [1.0, 0.0, -1.0]

    def test_zero_flow(self):
        g = path3()
        assert residual(FlowState(np.zeros(2), np.zeros(3)), g).tolist() == [0, 0, 0]

    def test_circulation(self):
        g = WeightedGraph(3, [(0, 1), (1, 2), (0, 2)])
        # cyclic circulation: 0->1->2->0 means flow -1 on stored (0,2)
        f = FlowState(np.array([1.0, 1.0, -1.0]), np.zeros(3))
        assert np.abs(residual(f, g)).max() == 0.0

    def test_linear(self, rng):
        g = random_connected_graph(rng, 10, 8)
        f1, f2 = rng.normal(size=g.m), rng.normal(size=g.m)
        lhs = residual_of_vector(f1 + f2, g)
        rhs = residual_of_vector(f1, g) + residual_of_vector(f2, g)
        assert np.abs(lhs - rhs).max() < 1e-12 * max(np.abs(lhs).max(), 1.0)

    def test_sum_zero(self, rng):
        g = random_connected_graph(rng, 15, 20)
        f = rng.normal(size=g.m)
        assert abs(residual_of_vector(f, g).sum()) <= g.n * np.finfo(float).eps * np.abs(f).max()


class TestLaplacian:
    def test_single_edge(self):
        g = WeightedGraph(2, [(0, 1)], resistance=[2.0])
        lap = laplacian_from_resistances(g).dense()
        assert np.allclose(lap, [[0.5, -0.5], [-0.5, 0.5]])

    def test_path(self):
        lap = laplacian_from_resistances(path3()).dense()
        assert np.allclose(lap, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_parallel_conductances_add(self):
        g = WeightedGraph(2, [(0, 1), (0, 1)], resistance=[1.0, 1.0])
        assert np.allclose(laplacian_from_resistances(g).dense(), [[2, -2], [-2, 2]])

    def test_nonpositive_resistance_rejected(self):
        g = WeightedGraph(2, [(0, 1)])
        with pytest.raises(GraphError):
            laplacian_from_resistances(g, r=np.array([-1.0]))

    def test_row_sums_and_offdiagonals(self, rng):
        for _ in range(20):
            g = random_connected_graph(rng, 9, 6)
            lap = laplacian_from_resistances(g)
            lap.validate()
            mat = lap.dense()
            degree = np.diag(mat)
            assert np.abs(mat.sum(axis=1)).max() <= 1e-12 * degree.max()

    def test_quadratic_form_identity(self, rng):
        # x^T L x = sum_e (x_u - x_v)^2 / r(e), 100 random x, n <= 8
        g = random_connected_graph(rng, 8, 6)
        mat = laplacian_from_resistances(g).dense()
        for _ in range(100):
            x = rng.normal(size=g.n)
            direct = np.sum((x[g.tails] - x[g.heads]) ** 2 / g.resistance)
            assert abs(x @ mat @ x - direct) <= 1e-10 * max(direct, 1e-30)


class TestEnergy:
    def test_zero(self):
        assert energy(np.zeros(2), [1.0, 1.0]) == 0.0

    def test_unit(self):
        assert energy(np.ones(2), [1.0, 1.0]) == 2.0

    def test_signed(self):
        assert energy(np.array([1.0, -1.0]), [2.0, 3.0]) == 5.0


class TestDemand:
    def test_st_demand(self):
        d = st_demand(4, 0, 3, 2.5)
        assert d.tolist() == [2.5, 0.0, 0.0, -2.5]

    def test_rejects_nonzero_sum(self):
        with pytest.raises(GraphError, match="sum to zero"):
            zero_sum_demand(np.array([1.0, 1.0]))

    def test_matches_dense_laplacian(self, rng):
        g = random_connected_graph(rng, 7, 5)
        ours = laplacian_from_resistances(g).dense()
        ref = dense_laplacian(g.n, g.tails, g.heads, 1.0 / g.resistance)
        assert np.allclose(ours, ref, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.data())
def test_residual_matches_incidence_matrix(n, data):
    edges = data.draw(st.lists(
        st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]),
        min_size=1, max_size=12))
    g = WeightedGraph(n, edges)
    flow = np.array(data.draw(st.lists(
        st.floats(-5, 5, allow_nan=False), min_size=g.m, max_size=g.m)))
    b = np.zeros((g.m, n))
    for e, (u, v) in enumerate(zip(g.tails, g.heads)):
        b[e, u] = 1.0
        b[e, v] = -1.0
    assert np.allclose(residual_of_vector(flow, g), b.T @ flow, atol=1e-9)
