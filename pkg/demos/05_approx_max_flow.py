"""End-to-end approximate maximum flow versus the exact oracle.

The pipeline: r-division -> per-group spectral vertex sparsifiers -> grouped
L2 flows on the shrunken quotient -> conversion back -> outer flow-oracle
loop with a doubling + binary search over the flow amount.
"""

import time

import numpy as np

from sepflow import (RunConfig, SparsifierPlan, approx_max_flow, edge_congestions,
                     exact_max_flow_oracle, grid_r_division, random_capacity_grid,
                     septrees_for_partition)
from sepflow.grids import GridSpec

size, eps, seed = 16, 0.1, 7
g = random_capacity_grid(size, size, seed=seed)
part = grid_r_division(size, size, 1, 32, terminals=(0, g.n - 1), graph=g)
print(f"{size}x{size} grid with capacities in [1,10]: {part.k} groups of <= 32 edges")

exact = exact_max_flow_oracle(g, 0, g.n - 1)
print(f"exact max flow: {exact.value:.4f} (min cut {exact.cut_capacity:.4f})")

t0 = time.time()
res = approx_max_flow(g, part, None, 0, g.n - 1, eps, RunConfig(eps=eps, r=32, seed=seed))
print(f"approximate:    {res.value:.4f}  ratio {res.value / exact.value:.4f} "
      f"in {time.time() - t0:.1f}s")
print(f"max edge congestion of the returned flow: "
      f"{edge_congestions(res.flow, g.capacity).max():.6f} (feasible)")
print(f"probes {res.stats.probes}, outer iterations {res.stats.iterations_outer}, "
      f"inner iterations {res.stats.iterations_inner_total}")

# the same run through recursive sparsifiers guided by separator trees
plan = SparsifierPlan(method="recursive",
                      septrees=septrees_for_partition(GridSpec(size, size), part, g))
t0 = time.time()
res2 = approx_max_flow(g, part, plan, 0, g.n - 1, eps, RunConfig(eps=eps, r=32, seed=seed))
print(f"recursive sparsifiers: {res2.value:.4f}  ratio {res2.value / exact.value:.4f} "
      f"in {time.time() - t0:.1f}s")
