"""Core graph, Laplacian, flow and congestion types.

An undirected graph is stored with a fixed arbitrary orientation per edge
(tail < head by vertex index; parallel edges keep insertion order), so flow
signs are deterministic and serializable.  The incidence convention is
+1 at the tail and -1 at the head, hence ``residual(f) = B^T f`` and an s-t
demand has +F at the source and -F at the sink.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DisconnectedGraphError, GraphError


def _as_float_vector(x, m, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (m,):
        raise GraphError(f"{name} must have one entry per edge ({m}), got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise GraphError(f"{name} entries must be strictly positive and finite")
    return v


class WeightedGraph:
    """Undirected graph with per-edge capacity / weight / resistance vectors.

    Parameters
    ----------
    n : int
        Number of vertices, ids ``0..n-1``.
    edges : array-like of shape (m, 2)
        Endpoint pairs.  Orientation is canonicalized to tail < head.
    capacity, weight, resistance : array-like, optional
        Strictly positive per-edge vectors; missing ones default to 1
        (resistance stays ``None`` unless given).
    """

    def __init__(self, n, edges, capacity=None, weight=None, resistance=None):
        n = int(n)
        if n <= 0:
            raise GraphError("vertex count must be positive")
        e = np.asarray(edges, dtype=np.int64)
        if e.size == 0:
            e = e.reshape(0, 2)
        if e.ndim != 2 or e.shape[1] != 2:
            raise GraphError("edges must be an (m, 2) array of endpoint pairs")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            bad = int(np.flatnonzero(e[:, 0] == e[:, 1])[0])
            raise GraphError(f"self-loop at edge {bad}")
        m = e.shape[0]

        # canonical orientation: tail < head, insertion order kept
        tails = np.minimum(e[:, 0], e[:, 1])
        heads = np.maximum(e[:, 0], e[:, 1])

        self.n = n
        self.m = m
        self.tails = tails
        self.heads = heads
        self.capacity = _as_float_vector(capacity, m, "capacity") if capacity is not None else np.ones(m)
        self.weight = _as_float_vector(weight, m, "weight") if weight is not None else np.ones(m)
        self.resistance = _as_float_vector(resistance, m, "resistance") if resistance is not None else None

        for arr in (self.tails, self.heads, self.capacity, self.weight):
            arr.setflags(write=False)
        if self.resistance is not None:
            self.resistance.setflags(write=False)

        self._adj = None
        self._component = None
        self._bfs = None
        self._lap_builder = None

    # -- structure ---------------------------------------------------------

    @property
    def edges(self):
        """(m, 2) array of oriented (tail, head) pairs."""
        return np.column_stack([self.tails, self.heads])

    def adjacency(self):
        """CSR adjacency with edge ids as data (lazily built)."""
        if self._adj is None:
            rows = np.concatenate([self.tails, self.heads])
            cols = np.concatenate([self.heads, self.tails])
            eids = np.concatenate([np.arange(self.m), np.arange(self.m)])
            adj = sp.csr_matrix((eids + 1, (rows, cols)), shape=(self.n, self.n))
            # parallel edges collapse in CSR; keep a separate per-vertex edge list
            order = np.argsort(rows, kind="stable")
            self._adj = (adj, rows[order], cols[order], eids[order])
        return self._adj[0]

    def incident_edges(self):
        """Arrays (indptr, neighbor, edge_id) listing incidences per vertex."""
        rows = np.concatenate([self.tails, self.heads])
        cols = np.concatenate([self.heads, self.tails])
        eids = np.concatenate([np.arange(self.m), np.arange(self.m)])
        order = np.lexsort((eids, cols, rows))
        rows, cols, eids = rows[order], cols[order], eids[order]
        indptr = np.searchsorted(rows, np.arange(self.n + 1))
        return indptr, cols, eids

    def components(self):
        """Vertex component labels (cached)."""
        if self._component is None:
            nc, labels = sp.csgraph.connected_components(self.adjacency(), directed=False)
            self._component = (nc, labels)
        return self._component

    @property
    def is_connected(self):
        nc, _ = self.components()
        return nc == 1

    def require_connected(self, what="operation"):
        if not self.is_connected:
            raise DisconnectedGraphError(f"{what} requires a connected graph")

    # -- BFS tree (deterministic), used for exact residual repair ----------

    def bfs_tree(self):
        """Deterministic BFS forest: (parent, parent_edge, order, depth).

        Roots are the smallest vertex id of each component; neighbors are
        visited in ascending (vertex, edge-id) order.
        """
        if self._bfs is None:
            indptr, nbr, eid = self.incident_edges()
            parent = np.full(self.n, -1, dtype=np.int64)
            parent_edge = np.full(self.n, -1, dtype=np.int64)
            depth = np.full(self.n, -1, dtype=np.int64)
            order = []
            seen = np.zeros(self.n, dtype=bool)
            for root in range(self.n):
                if seen[root]:
                    continue
                seen[root] = True
                depth[root] = 0
                queue = [root]
                order.append(root)
                while queue:
                    nxt = []
                    for v in queue:
                        for j in range(indptr[v], indptr[v + 1]):
                            u = nbr[j]
                            if not seen[u]:
                                seen[u] = True
                                parent[u] = v
                                parent_edge[u] = eid[j]
                                depth[u] = depth[v] + 1
                                order.append(u)
                                nxt.append(u)
                    queue = nxt
            self._bfs = (parent, parent_edge, np.asarray(order), depth)
        return self._bfs

    def route_on_tree(self, q):
        """Flow vector whose residual equals ``q`` exactly, supported on the BFS tree.

        ``q`` must sum to zero on every component (up to rounding); the
        leftover at each root is dropped.
        """
        parent, parent_edge, _, depth = self.bfs_tree()
        carry = np.array(q, dtype=float)
        f = np.zeros(self.m)
        maxd = int(depth.max()) if self.n else 0
        by_depth = [np.flatnonzero(depth == d) for d in range(maxd + 1)]
        for d in range(maxd, 0, -1):
            idx = by_depth[d]
            e = parent_edge[idx]
            amount = carry[idx]
            # edge oriented tail->head; pushing from v toward parent
            sign = np.where(self.tails[e] == idx, 1.0, -1.0)
            np.add.at(f, e, sign * amount)
            np.add.at(carry, parent[idx], amount)
        return f

    # -- Laplacian ---------------------------------------------------------

    def laplacian_pattern(self):
        """Cached (indptr, indices, map) with ``data = map @ conductance``."""
        if self._lap_builder is None:
            n, m = self.n, self.m
            a, b = self.tails, self.heads
            rows = np.concatenate([a, b, a, b])
            cols = np.concatenate([a, b, b, a])
            sign = np.concatenate([np.ones(m), np.ones(m), -np.ones(m), -np.ones(m)])
            eids = np.concatenate([np.arange(m)] * 4)
            keys = rows * n + cols
            uniq, slot = np.unique(keys, return_inverse=True)
            mapper = sp.csr_matrix((sign, (slot, eids)), shape=(uniq.size, m))
            indices = (uniq % n).astype(np.int32)
            indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
            self._lap_builder = (indptr, indices, mapper)
        return self._lap_builder

    def laplacian_csr(self, conductance):
        """CSR Laplacian for the given per-edge conductances."""
        indptr, indices, mapper = self.laplacian_pattern()
        data = mapper @ np.asarray(conductance, dtype=float)
        return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(self.n, self.n))


@dataclass
class FlowState:
    """A flow vector on oriented edges together with the demand it targets.

    The flow is the single mutable array in the library; everything else is
    frozen after construction (single-writer rule).
    """

    flow: np.ndarray
    demand: np.ndarray

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=float)
        self.demand = np.asarray(self.demand, dtype=float)

    def residual(self, g: WeightedGraph):
        return residual(self, g)

    def is_routed(self, g: WeightedGraph, tol=1e-9):
        r = residual(self, g)
        scale = max(np.abs(self.demand).max(initial=0.0), 1.0)
        return np.abs(r - self.demand).max(initial=0.0) <= tol * scale


def zero_sum_demand(d, n=None, tol=1e-9):
    """Validate and return a demand vector; entries must sum to ~0."""
    d = np.asarray(d, dtype=float)
    if n is not None and d.shape != (n,):
        raise GraphError(f"demand must have {n} entries")
    scale = max(np.abs(d).max(initial=0.0), 1.0)
    if abs(d.sum()) > tol * scale * d.size:
        raise GraphError(f"demand does not sum to zero (sum={d.sum():.3e})")
    return d


def st_demand(n, s, t, amount):
    """Demand vector routing ``amount`` units from s (+) to t (-)."""
    if s == t:
        raise GraphError("source and sink coincide")
    d = np.zeros(n)
    d[s] = amount
    d[t] = -amount
    return d


# -- congestion and energy --------------------------------------------------


def edge_congestion(f: FlowState, g: WeightedGraph, e: int):
    """|f(e)| / u(e) for a single edge."""
    return abs(f.flow[e]) / g.capacity[e]


def edge_congestions(flow, capacity):
    """Vector of |f(e)| / u(e)."""
    return np.abs(flow) / capacity


def group_congestion(f: FlowState, g: WeightedGraph, group):
    """sqrt(sum_{e in group} w(e) f(e)^2) under the graph's weight vector."""
    idx = np.asarray(group, dtype=np.int64)
    if idx.size == 0:
        raise GraphError("group congestion of an empty group is undefined")
    fe = f.flow[idx]
    return float(np.sqrt(np.sum(g.weight[idx] * fe * fe)))


def group_congestions(flow, weight, groups):
    """Per-group sqrt(sum w f^2) for a list of edge-id arrays."""
    out = np.empty(len(groups))
    for i, idx in enumerate(groups):
        fe = flow[idx]
        out[i] = np.sqrt(np.sum(weight[idx] * fe * fe))
    return out


def residual(f: FlowState, g: WeightedGraph):
    """B^T f: net outflow at each vertex."""
    return residual_of_vector(f.flow, g)


def residual_of_vector(flow, g: WeightedGraph, edge_ids=None):
    """B^T f restricted to the given edge ids (all edges if None)."""
    flow = np.asarray(flow, dtype=float)
    if edge_ids is None:
        tails, heads, fe = g.tails, g.heads, flow
    else:
        idx = np.asarray(edge_ids, dtype=np.int64)
        tails, heads, fe = g.tails[idx], g.heads[idx], flow[idx]
    return (np.bincount(tails, weights=fe, minlength=g.n)
            - np.bincount(heads, weights=fe, minlength=g.n))


def energy(f: FlowState | np.ndarray, r):
    """Electrical energy sum_e r(e) f(e)^2."""
    flow = f.flow if isinstance(f, FlowState) else np.asarray(f, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise GraphError("resistances must be strictly positive")
    return float(np.sum(r * flow * flow))


# -- sparse Laplacians -------------------------------------------------------


@dataclass
class SparseLaplacian:
    """Symmetric graph Laplacian in CSR form with an optional boundary split.

    ``boundary`` (sorted vertex ids) induces the block partition used by
    Schur-complement routines.
    """

    matrix: sp.csr_matrix
    boundary: np.ndarray | None = None
    _edge_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise GraphError("Laplacian must be square")
        if self.boundary is not None:
            self.boundary = np.unique(np.asarray(self.boundary, dtype=np.int64))
            if self.boundary.size and (self.boundary[0] < 0 or self.boundary[-1] >= self.n):
                raise GraphError("boundary vertex out of range")

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def interior(self):
        if self.boundary is None:
            return np.arange(0)
        return np.setdiff1d(np.arange(self.n), self.boundary)

    def blocks(self, boundary=None):
        """(L_intr, L_mid, L_bdry, interior_ids, boundary_ids)."""
        bdry = self.boundary if boundary is None else np.unique(np.asarray(boundary, dtype=np.int64))
        if bdry is None:
            raise GraphError("no boundary set given")
        intr = np.setdiff1d(np.arange(self.n), bdry)
        mat = self.matrix.tocsr()
        l_intr = mat[intr][:, intr].tocsr()
        l_mid = mat[intr][:, bdry].tocsr()
        l_bdry = mat[bdry][:, bdry].tocsr()
        return l_intr, l_mid, l_bdry, intr, bdry

    def edge_list(self, drop_tol=0.0):
        """Off-diagonal structure as (tails, heads, weights), weights = -L(u,v).

        Entries with weight <= drop_tol * max_weight are dropped (exact zeros
        from clamping, and float dust when a tolerance is given).  The raw
        triple is cached; instances are treated as immutable.
        """
        if self._edge_cache is None:
            coo = sp.triu(self.matrix, k=1).tocoo()
            w = -coo.data
            keep = w > 0
            object.__setattr__(self, "_edge_cache", (coo.row[keep], coo.col[keep], w[keep]))
        row, col, w = self._edge_cache
        if drop_tol > 0 and w.size:
            keep = w > drop_tol * w.max(initial=0.0)
            return row[keep], col[keep], w[keep]
        return row, col, w

    def weights(self):
        _, _, w = self.edge_list()
        return w

    @property
    def num_edges(self):
        return self.edge_list()[0].size

    def dense(self):
        return self.matrix.toarray()

    def component_labels(self):
        nc, labels = sp.csgraph.connected_components(self.matrix, directed=False)
        return nc, labels

    def is_connected(self):
        nc, _ = self.component_labels()
        return nc == 1

    def validate(self, tol=1e-12):
        """Check symmetry, nonpositive off-diagonals and zero row sums."""
        mat = self.matrix.tocsr()
        asym = abs(mat - mat.T)
        scale = max(abs(mat).max(), 1e-300)
        if asym.nnz and asym.max() > tol * scale:
            raise GraphError("Laplacian is not symmetric")
        dense_diag = mat.diagonal()
        off_max = (mat - sp.diags(dense_diag)).max()
        if off_max > tol * scale:
            raise GraphError("Laplacian has positive off-diagonal entries")
        rowsum = np.asarray(mat.sum(axis=1)).ravel()
        if np.abs(rowsum).max(initial=0.0) > tol * max(dense_diag.max(initial=0.0), 1.0):
            raise GraphError("Laplacian row sums are not zero")
        return self

    @staticmethod
    def from_edges(n, tails, heads, conductance, boundary=None):
        tails = np.asarray(tails, dtype=np.int64)
        heads = np.asarray(heads, dtype=np.int64)
        c = np.asarray(conductance, dtype=float)
        rows = np.concatenate([tails, heads, tails, heads])
        cols = np.concatenate([tails, heads, heads, tails])
        vals = np.concatenate([c, c, -c, -c])
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        mat.sum_duplicates()
        return SparseLaplacian(mat, boundary=boundary)


def laplacian_from_resistances(g: WeightedGraph, r=None, boundary=None) -> SparseLaplacian:
    """Graph Laplacian with conductances 1/r(e); L = B^T R^{-1} B."""
    r = g.resistance if r is None else np.asarray(r, dtype=float)
    if r is None:
        raise GraphError("graph has no resistance vector and none was supplied")
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise GraphError("resistances must be strictly positive and finite")
    return SparseLaplacian(g.laplacian_csr(1.0 / r), boundary=boundary)


def laplacian_from_conductances(g: WeightedGraph, c, boundary=None) -> SparseLaplacian:
    """Graph Laplacian with the given per-edge conductances."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise GraphError("conductances must be strictly positive and finite")
    return SparseLaplacian(g.laplacian_csr(c), boundary=boundary)
