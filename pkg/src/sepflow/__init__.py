"""Approximate maximum s-t flow on separable undirected graphs.

The pipeline: an r-division partitions the edges into small groups with
small vertex boundaries; each group is replaced by a spectral vertex
sparsifier of its Schur complement; a multiplicative-weights grouped-L2-flow
solver runs on the shrunken quotient graph; flows are converted back
group-by-group through local electrical routings; an outer flow-oracle loop
turns grouped flows into an approximate maximum flow (or a cut certificate).
"""

from .errors import (
    DisconnectedGraphError,
    GraphError,
    ParseError,
    SepflowError,
    SolverConvergenceError,
    ValidationError,
)
from .graphs import (
    FlowState,
    SparseLaplacian,
    WeightedGraph,
    edge_congestion,
    edge_congestions,
    energy,
    group_congestion,
    group_congestions,
    laplacian_from_conductances,
    laplacian_from_resistances,
    residual,
    residual_of_vector,
    st_demand,
    zero_sum_demand,
)
from .solver import (
    ElectricalFlowResult,
    SolverHandle,
    electrical_flow,
    optimum_energy,
    solve_sdd,
)
from .config import RunConfig, substream
from .dimacs import load_dimacs, save_dimacs
from .grids import GridSpec, grid_graph, random_capacity_grid
from .groupedflow import (
    GroupedFlowDiagnostics,
    GroupedFlowFail,
    GroupedFlowProblem,
    GroupedFlowResult,
    MWUState,
    check_mwu_step,
    grouped_flow,
    mwu_parameters,
    write_trace_csv,
)
from .maxflow import MaxFlowResult, exact_max_flow_oracle, widest_path_bottleneck
from .partition import (
    Partition,
    SeparatorNode,
    SeparatorTree,
    grid_r_division,
    load_partition,
    load_septree,
    partition_from_groups,
    save_partition,
    save_septree,
    separator_tree_for_grid_block,
    septrees_for_partition,
    validate_partition,
    validate_septree,
)
from .pipeline import (
    ApproxMaxFlowResult,
    CutCertificate,
    OracleWeights,
    SparsifiedInstance,
    SparsifierPlan,
    approx_grouped_flow,
    approx_max_flow,
    build_sparsified_instance,
    convert_flow,
    cut_certificate,
    oracle_edge_weights,
    route_fixed_flow,
    sweep_cut,
)
from .schur import (
    SpectralBounds,
    VertexSparsifier,
    approx_schur,
    exact_schur,
    load_sparsifier,
    one_step_vertex_sparsify,
    recursive_vertex_sparsify,
    save_sparsifier,
    sparsify,
    spectral_bounds,
    weight_floor,
)

__version__ = "0.1.0"
