"""Grid-family instance geometry shared by generators and benchmarks.

Vertices of an (layers x rows x cols) grid are numbered layer-major then
row-major; edges are emitted in a fixed scan order (east, south, up-layer per
vertex), which partition generators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphError
from .graphs import WeightedGraph


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    layers: int = 1

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise GraphError("grid dimensions must be at least 2x2")
        if self.layers < 1:
            raise GraphError("layer count must be positive")

    @property
    def n(self):
        return self.rows * self.cols * self.layers

    def vertex(self, layer, row, col):
        return (layer * self.rows + row) * self.cols + col

    def coords(self, v):
        layer, rem = divmod(v, self.rows * self.cols)
        row, col = divmod(rem, self.cols)
        return layer, row, col

    def coord_arrays(self, verts):
        verts = np.asarray(verts, dtype=np.int64)
        layer, rem = np.divmod(verts, self.rows * self.cols)
        row, col = np.divmod(rem, self.cols)
        return layer, row, col

    def edges(self):
        """(tail, head) pairs in canonical scan order."""
        out = []
        for layer in range(self.layers):
            for row in range(self.rows):
                for col in range(self.cols):
                    v = self.vertex(layer, row, col)
                    if col + 1 < self.cols:
                        out.append((v, self.vertex(layer, row, col + 1)))
                    if row + 1 < self.rows:
                        out.append((v, self.vertex(layer, row + 1, col)))
                    if layer + 1 < self.layers:
                        out.append((v, self.vertex(layer + 1, row, col)))
        return np.asarray(out, dtype=np.int64)

    @property
    def m(self):
        per_layer = self.rows * (self.cols - 1) + self.cols * (self.rows - 1)
        return self.layers * per_layer + (self.layers - 1) * self.rows * self.cols


def grid_graph(rows, cols, layers=1, capacity=None, weight=None, resistance=None) -> WeightedGraph:
    """Unit-capacity grid graph unless per-edge vectors are supplied."""
    spec = GridSpec(rows, cols, layers)
    g = WeightedGraph(spec.n, spec.edges(), capacity=capacity, weight=weight, resistance=resistance)
    g.grid = spec
    return g


def random_capacity_grid(rows, cols, layers=1, seed=0, low=1.0, high=10.0) -> WeightedGraph:
    """Grid with capacities drawn uniformly from [low, high] (seeded)."""
    spec = GridSpec(rows, cols, layers)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), 0xC2)))
    cap = rng.uniform(low, high, spec.m)
    g = WeightedGraph(spec.n, spec.edges(), capacity=cap)
    g.grid = spec
    return g
