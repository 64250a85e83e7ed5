"""Electrical flows 101: route a demand at minimum energy, check the contract.

The returned flow meets the demand exactly (the residual is repaired on a
spanning tree) and its energy is within (1 + delta) of d^T L^+ d.
"""

import numpy as np

from sepflow import (WeightedGraph, electrical_flow, grid_graph, optimum_energy,
                     residual_of_vector, st_demand)

# a 5x5 unit-resistance grid, one unit of current corner to corner
g = grid_graph(5, 5)
d = st_demand(g.n, 0, g.n - 1, 1.0)
res = electrical_flow(g, d, delta=1e-6, resistances=np.ones(g.m))

print("energy achieved:     ", res.energy)
print("certified lower bound:", res.optimum_estimate)
print("demand error:        ", np.abs(residual_of_vector(res.flow, g) - d).max())

# the optimum energy is d^T L^+ d; for a single resistor it is just r
single = WeightedGraph(2, [(0, 1)], resistance=[5.0])
print("one 5-ohm resistor:  ", optimum_energy(single, st_demand(2, 0, 1, 1.0)))

# potentials certify near-optimality from below: d^T phi <= optimum
print("duality value d^T phi:", d @ res.potentials)

# series/parallel sanity
series = WeightedGraph(3, [(0, 1), (1, 2)], resistance=[1.0, 1.0])
print("series flow:   ", electrical_flow(series, st_demand(3, 0, 2, 1.0), 1e-6).flow)
parallel = WeightedGraph(2, [(0, 1), (0, 1)], resistance=[1.0, 1.0])
print("parallel split:", electrical_flow(parallel, st_demand(2, 0, 1, 1.0), 1e-6).flow)
