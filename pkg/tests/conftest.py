"""Shared fixtures and independent oracles used by the test suite.

The oracles here deliberately avoid the library's own code paths: dense
pseudoinverses for electrical quantities, vertex-at-a-time partial Gaussian
elimination for Schur complements, and dense generalized eigensolves for
spectral sandwiches.
"""

import numpy as np
import pytest
import scipy.linalg

from sepflow import WeightedGraph


def dense_laplacian(n, tails, heads, conductance):
    """Dense Laplacian assembled entry by entry (independent of the library)."""
    a = np.zeros((n, n))
    for u, v, c in zip(tails, heads, conductance):
        a[u, u] += c
        a[v, v] += c
        a[u, v] -= c
        a[v, u] -= c
    return a


def dense_electrical(g, d, resistances=None):
    """Optimal flow/potentials/energy via dense pseudoinverse."""
    r = g.resistance if resistances is None else np.asarray(resistances, dtype=float)
    lap = dense_laplacian(g.n, g.tails, g.heads, 1.0 / r)
    phi = np.linalg.pinv(lap) @ d
    flow = (phi[g.tails] - phi[g.heads]) / r
    energy = float(d @ phi)
    return flow, phi, energy


def eliminate_one(a, v):
    """Single step of Gaussian elimination of vertex v from a dense Laplacian."""
    n = a.shape[0]
    keep = [i for i in range(n) if i != v]
    piv = a[v, v]
    out = a[np.ix_(keep, keep)] - np.outer(a[keep, v], a[v, keep]) / piv
    return out


def partial_elimination_schur(a, boundary):
    """Eliminate interior vertices one at a time (independent Schur oracle)."""
    n = a.shape[0]
    labels = list(range(n))
    work = a.copy()
    bset = set(int(b) for b in boundary)
    while True:
        interior = [i for i, lab in enumerate(labels) if lab not in bset]
        if not interior:
            break
        v = interior[0]
        work = eliminate_one(work, v)
        del labels[v]
    order = np.argsort(labels)
    return work[np.ix_(order, order)]


def gen_eig_range(a, b):
    """Extreme generalized eigenvalues of (a, b) on the complement of ones."""
    n = a.shape[0]
    basis = scipy.linalg.null_space(np.ones((1, n)))
    vals = scipy.linalg.eigh(basis.T @ a @ basis, basis.T @ b @ basis, eigvals_only=True)
    return float(vals.min()), float(vals.max())


def random_connected_graph(rng, n, extra_edges, weight_range=(0.5, 2.0)):
    """Random spanning tree plus extra edges; weights are the graph's w vector."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    while len(edges) < n - 1 + extra_edges:
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u != v:
            edges.append((min(u, v), max(u, v)))
    w = rng.uniform(*weight_range, len(edges))
    return WeightedGraph(n, edges, weight=w, resistance=w,
                         capacity=rng.uniform(1.0, 10.0, len(edges)))


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
