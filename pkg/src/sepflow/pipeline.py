"""Flow conversion across sparsifiers, the two-level grouped-flow solver, the
flow-oracle outer loop producing the approximate maximum flow, and the cut
certificate extracted from a failed run.

Vertex id spaces: the original graph uses global ids; each group's sparsifier
lives on its (global) boundary vertex set; the quotient graph concatenates all
sparsifiers over the union of boundaries, with ``quotient_vertices`` mapping
quotient-local ids back to global ones.
"""

from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, substream, thread_count
from .errors import GraphError, SolverConvergenceError, ValidationError
from .graphs import (SparseLaplacian, WeightedGraph, edge_congestions, group_congestions,
                     residual_of_vector, st_demand, zero_sum_demand)
from .groupedflow import GroupedFlowFail, GroupedFlowProblem, grouped_flow
from .maxflow import widest_path_bottleneck
from .partition import Partition, SeparatorTree
from .schur import one_step_vertex_sparsify, recursive_vertex_sparsify
from .solver import SolverHandle, electrical_flow, solve_sdd


# -- oracle edge weights -------------------------------------------------------


@dataclass
class OracleWeights:
    """Per-edge multiplicative-weights state of the outer flow oracle."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 1.0 - 1e-12):
            raise GraphError("oracle weights must stay >= 1")

    def group_totals(self, groups):
        return np.array([self.values[grp].sum() for grp in groups])

    @property
    def total(self):
        return float(self.values.sum())


def oracle_edge_weights(w_oracle: OracleWeights | np.ndarray, capacity, groups, eps) -> np.ndarray:
    """Grouped-flow edge weights derived from oracle weights:

    w(e) = (1 - eps/2) / u(e)^2 * (w_oracle(e) / w_oracle(S_i) + eps / (4 |S_i|)).
    """
    values = w_oracle.values if isinstance(w_oracle, OracleWeights) else np.asarray(w_oracle, dtype=float)
    capacity = np.asarray(capacity, dtype=float)
    if eps >= 0.5 or eps <= 0:
        raise GraphError("oracle weights require 0 < eps < 1/2")
    w = np.empty_like(values)
    for grp in groups:
        grp = np.asarray(grp, dtype=np.int64)
        total = values[grp].sum()
        w[grp] = values[grp] / total + eps / (4.0 * grp.size)
    w *= (1.0 - eps / 2.0) / capacity**2
    return w


# -- sparsified instances ---------------------------------------------------------


@dataclass
class SparsifierPlan:
    """How to build per-group sparsifiers: one-step, or recursive along trees."""

    method: str = "one-step"
    septrees: list | None = None  # per-group SeparatorTree on global vertex ids
    c_s: float = 48.0

    def tree_for(self, i) -> SeparatorTree | None:
        if self.septrees is None:
            return None
        return self.septrees[i]


@dataclass
class SparsifiedInstance:
    """Original graph + partition with per-group sparsifiers assembled into a quotient."""

    graph: WeightedGraph
    partition: Partition
    weights: np.ndarray  # grouped-flow weights on original edges
    eps: float
    sparsifiers: list
    quotient_graph: WeightedGraph
    quotient_groups: list
    quotient_vertices: np.ndarray  # quotient-local -> global id

    def quotient_demand(self, d):
        d = zero_sum_demand(d, self.graph.n)
        support = np.flatnonzero(d)
        if support.size and not np.isin(support, self.quotient_vertices).all():
            bad = support[~np.isin(support, self.quotient_vertices)][0]
            raise GraphError(f"demand is nonzero at interior vertex {int(bad)}")
        return d[self.quotient_vertices]


def _build_group_sparsifier(args):
    (g, part, weights, eps, plan, seed, i) = args
    grp = part.groups[i]
    verts = part.group_vertices(g, i)
    idx = np.searchsorted(verts, g.tails[grp])
    jdx = np.searchsorted(verts, g.heads[grp])
    lap = SparseLaplacian.from_edges(verts.size, idx, jdx, 1.0 / weights[grp])
    bdry_local = np.searchsorted(verts, part.boundaries[i])
    if part.boundaries[i].size < 2:
        raise GraphError(f"group {i} has boundary of size {part.boundaries[i].size}; need >= 2")
    gseed = substream(seed, "sparsify", i)
    if plan.method == "recursive" and plan.tree_for(i) is not None:
        mapping = np.full(g.n, -1, dtype=np.int64)
        mapping[verts] = np.arange(verts.size)
        tree_local = plan.tree_for(i).relabel(mapping)
        vs = recursive_vertex_sparsify(lap, bdry_local, tree_local, eps, seed=gseed, c_s=plan.c_s)
    else:
        vs = one_step_vertex_sparsify(lap, bdry_local, eps, seed=gseed, c_s=plan.c_s)
    # re-express the sparsifier boundary in global ids
    vs.boundary = verts[vs.boundary]
    return vs


def build_sparsified_instance(g: WeightedGraph, part: Partition, weights, eps,
                              plan: SparsifierPlan | None = None, seed: int = 0,
                              threads: int | None = None) -> SparsifiedInstance:
    """Sparsify every group at error ``eps`` and assemble the quotient graph."""
    plan = plan or SparsifierPlan()
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (g.m,) or np.any(weights <= 0):
        raise GraphError("need one positive weight per edge")
    jobs = [(g, part, weights, eps, plan, seed, i) for i in range(part.k)]
    workers = thread_count() if threads is None else threads
    if workers > 1 and part.k > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            sparsifiers = list(pool.map(_build_group_sparsifier, jobs))
    else:
        sparsifiers = [_build_group_sparsifier(j) for j in jobs]

    qverts = np.unique(np.concatenate([vs.boundary for vs in sparsifiers]))
    tails, heads, wq, groups = [], [], [], []
    offset = 0
    for vs in sparsifiers:
        t, h, c = vs.laplacian.edge_list()
        gt = np.searchsorted(qverts, vs.boundary[t])
        gh = np.searchsorted(qverts, vs.boundary[h])
        if t.size == 0:
            raise GraphError("a group sparsifier has no edges; boundary too small")
        tails.append(gt)
        heads.append(gh)
        wq.append(1.0 / c)  # quotient grouped-flow weight = inverse conductance
        groups.append(np.arange(offset, offset + t.size))
        offset += t.size
    quotient = WeightedGraph(qverts.size,
                             np.column_stack([np.concatenate(tails), np.concatenate(heads)]),
                             weight=np.concatenate(wq))
    if not quotient.is_connected:
        raise GraphError("quotient graph is disconnected; sparsification failed")
    return SparsifiedInstance(graph=g, partition=part, weights=weights, eps=eps,
                              sparsifiers=sparsifiers, quotient_graph=quotient,
                              quotient_groups=groups, quotient_vertices=qverts)


# -- flow conversion -------------------------------------------------------------


def convert_flow(src_graph: WeightedGraph, src_groups, dst_graph: WeightedGraph, dst_groups,
                 f_src, eps, *, src_weights=None, dst_weights=None,
                 src_vertex_map=None, dst_vertex_map=None, check_boundaries=None):
    """Re-route a flow group-by-group through local electrical routings.

    For each group the boundary residual of the source flow is routed
    electrically in the destination group (delta = eps), which inflates each
    group congestion by at most ``1 + 3 eps`` when the group Schur complements
    are (1 +- eps)-close.  Boundary demands are preserved exactly; interior
    residuals are zero.
    """
    if len(src_groups) != len(dst_groups):
        raise GraphError("group counts differ")
    f_src = np.asarray(f_src, dtype=float)
    src_w = src_graph.weight if src_weights is None else np.asarray(src_weights, dtype=float)
    dst_w = dst_graph.weight if dst_weights is None else np.asarray(dst_weights, dtype=float)
    smap = np.arange(src_graph.n) if src_vertex_map is None else np.asarray(src_vertex_map)
    dmap = np.arange(dst_graph.n) if dst_vertex_map is None else np.asarray(dst_vertex_map)

    f_dst = np.zeros(dst_graph.m)
    for i, (sg, dg) in enumerate(zip(src_groups, dst_groups)):
        sg = np.asarray(sg, dtype=np.int64)
        dg = np.asarray(dg, dtype=np.int64)
        local_res = residual_of_vector(f_src, src_graph, sg)
        support = np.flatnonzero(np.abs(local_res) > 0)
        d_global = {}
        for v in support:
            d_global[int(smap[v])] = local_res[v]

        dverts = np.unique(np.concatenate([dst_graph.tails[dg], dst_graph.heads[dg]]))
        dglob = dmap[dverts]
        if check_boundaries is not None:
            bdry = np.asarray(check_boundaries[i])
            extra = [v for v in d_global if v not in set(int(x) for x in bdry)]
            for v in extra:
                if abs(d_global[v]) > 1e-9 * max(abs(local_res).max(), 1.0):
                    raise GraphError(f"group {i}: source residual at non-boundary vertex {v}")
        pos = {int(v): j for j, v in enumerate(dglob)}
        d_local = np.zeros(dverts.size)
        scale = max(np.abs(local_res).max(initial=0.0), 1.0)
        for v, val in d_global.items():
            if v not in pos:
                if abs(val) <= 1e-9 * scale:
                    continue  # interior rounding dust
                raise GraphError(f"group {i}: boundary vertex {v} missing from destination group")
            d_local[pos[v]] = val
        dust = d_local.sum()
        if abs(dust) <= 1e-9 * max(np.abs(d_local).max(initial=0.0), 1.0):
            d_local -= dust / d_local.size

        idx = np.searchsorted(dverts, dst_graph.tails[dg])
        jdx = np.searchsorted(dverts, dst_graph.heads[dg])
        sub = WeightedGraph(dverts.size, np.column_stack([idx, jdx]), weight=dst_w[dg])
        if not sub.is_connected:
            raise GraphError(f"group {i}: destination group subgraph is disconnected")
        if np.any(d_local):
            ef = electrical_flow(sub, d_local, eps, resistances=dst_w[dg])
            f_dst[dg] = ef.flow
    return f_dst


# -- two-level grouped flow --------------------------------------------------------


@dataclass
class ApproxGroupedFlowResult:
    status: str  # "ok" | "fail"
    flow: np.ndarray | None
    fail: GroupedFlowFail | None
    quotient_flow: np.ndarray | None
    inner_iterations: int
    instance: SparsifiedInstance
    max_group_congestion: float = float("nan")

    @property
    def failed(self):
        return self.status == "fail"


def approx_grouped_flow(instance: SparsifiedInstance, d, eps, *, strict=False,
                        early_exit_cap=4, max_iterations=200,
                        runtime_checks=True) -> ApproxGroupedFlowResult:
    """Grouped flow on the quotient graph at eps/2, converted back to the
    original graph at eps/10."""
    d = zero_sum_demand(d, instance.graph.n)
    d_schur = instance.quotient_demand(d)
    prob = GroupedFlowProblem(instance.quotient_graph, instance.quotient_groups,
                              d_schur, eps / 2.0)
    res = grouped_flow(prob, strict=strict, early_exit_cap=early_exit_cap,
                       runtime_checks=runtime_checks, max_iterations=max_iterations)
    if res.failed:
        return ApproxGroupedFlowResult(status="fail", flow=None, fail=res.fail,
                                       quotient_flow=None,
                                       inner_iterations=res.diagnostics.iterations,
                                       instance=instance)
    part = instance.partition
    f = convert_flow(instance.quotient_graph, instance.quotient_groups,
                     instance.graph, part.groups, res.flow, eps / 10.0,
                     dst_weights=instance.weights,
                     src_vertex_map=instance.quotient_vertices,
                     check_boundaries=part.boundaries)
    cong = group_congestions(f, instance.weights, part.groups)
    return ApproxGroupedFlowResult(status="ok", flow=f, fail=None, quotient_flow=res.flow,
                                   inner_iterations=res.diagnostics.iterations,
                                   instance=instance,
                                   max_group_congestion=float(cong.max(initial=0.0)))


# -- approximate max flow -----------------------------------------------------------


@dataclass
class MaxFlowRunStats:
    iterations_outer: int = 0
    iterations_inner_total: int = 0
    probes: int = 0
    width_failures: int = 0
    sparsifier_builds: int = 0
    timings: dict = field(default_factory=dict)
    trace_rows: list = field(default_factory=list)


@dataclass
class ApproxMaxFlowResult:
    value: float
    flow: np.ndarray
    eps: float
    max_edge_congestion: float
    per_group_congestion_max: float
    stats: MaxFlowRunStats
    fail_context: tuple | None = None  # (instance, fail, demand) for certificates
    seed: int = 0


def _oracle_phase(g, part, plan, s, t, flow_amount, eps, config, seed, stats,
                  w_oracle_init=None):
    """One fixed-F multiplicative-weights phase.

    Returns (success, best_value, best_flow, fail, w_oracle).  The update
    width is the iterate's own max congestion (floored), which converges in
    practical iteration counts; the theoretical width c_w sqrt(r/eps) is
    still enforced as the output check on every returned flow.
    """
    m = g.m
    rho_outer = math.ceil(config.c_w * math.sqrt(part.r) / math.sqrt(eps))
    n_outer = max(int(math.ceil(20.0 * rho_outer * math.log(max(m, 2)) * eps**-2)), 1)
    limit = n_outer if config.strict_paper else min(n_outer, config.max_outer_iterations)
    target = (1.0 - config.probe_slack * eps) * flow_amount

    w_oracle = np.ones(m) if w_oracle_init is None else np.asarray(w_oracle_init, dtype=float).copy()
    d = st_demand(g.n, s, t, flow_amount)
    flow_sum = np.zeros(m)
    accepted = 0
    best_value, best_flow = -np.inf, None
    fail = None
    stagnant = 0
    for it in range(1, limit + 1):
        stats.iterations_outer += 1
        w = oracle_edge_weights(w_oracle, g.capacity, part.groups, eps)
        inst = build_sparsified_instance(g, part, w, eps / 10.0, plan,
                                         seed=substream(seed, "phase", it))
        stats.sparsifier_builds += part.k
        qsize = inst.quotient_graph.m + inst.quotient_graph.n
        inner_cap = min(max(config.max_inner_iterations,
                            config.inner_budget_units // max(qsize, 1)),
                        config.inner_iteration_ceiling)
        try:
            res = approx_grouped_flow(inst, d, eps / 10.0,
                                      early_exit_cap=config.inner_early_exit_cap,
                                      max_iterations=inner_cap,
                                      strict=config.strict_paper)
        except (SolverConvergenceError, ValidationError):
            break  # the inner solver could not certify this F; unproductive probe
        stats.iterations_inner_total += res.inner_iterations
        if res.failed:
            fail = (inst, res.fail, d)
            break
        f = res.flow
        cong = edge_congestions(f, g.capacity)
        mc = float(cong.max())
        # oracle output contract checks (weighted average and width conditions)
        wsum = float(w_oracle @ cong)
        if wsum > (1.0 + eps) * w_oracle.sum() * (1.0 + 1e-6) or mc > rho_outer * (1.0 + 1e-6):
            stats.width_failures += 1
            break
        improved = False
        if mc > 0 and flow_amount / mc > best_value:
            best_value, best_flow = flow_amount / mc, f / mc
            improved = True
        flow_sum += f
        accepted += 1
        avg = flow_sum / accepted
        amc = float(edge_congestions(avg, g.capacity).max())
        if amc > 0 and flow_amount / amc > best_value:
            best_value, best_flow = flow_amount / amc, avg / amc
            improved = True
        stats.trace_rows.append((stats.probes, it, flow_amount, best_value, mc))
        if best_value >= target:
            break
        stagnant = 0 if improved else stagnant + 1
        if not config.strict_paper and stagnant >= config.outer_stagnation_limit:
            break
        width = rho_outer if config.strict_paper else max(mc, config.update_width_floor)
        w_oracle = w_oracle * (1.0 + (eps / width) * cong)
    success = best_value >= target
    return success, best_value, best_flow, fail, w_oracle


def approx_max_flow(g: WeightedGraph, part: Partition, plan: SparsifierPlan | None,
                    s: int, t: int, eps: float, config: RunConfig | None = None,
                    seed: int | None = None) -> ApproxMaxFlowResult:
    """(1 - O(eps))-approximate maximum s-t flow via the grouped-flow oracle.

    The flow amount F is located by doubling plus binary search over oracle
    success; every candidate flow is made strictly feasible by dividing by its
    maximum edge congestion, and the best feasible value seen is returned.
    """
    config = config or RunConfig(eps=eps)
    seed = config.seed if seed is None else seed
    plan = plan or SparsifierPlan(method=config.sparsifier_method, c_s=config.c_s)
    g.require_connected("approximate max flow")
    bdry_union = np.unique(np.concatenate([b for b in part.boundaries]))
    for v, name in ((s, "s"), (t, "t")):
        if v not in bdry_union:
            raise GraphError(f"{name} = {v} is not a boundary vertex of the partition")
    u_ratio = float(g.capacity.max() / g.capacity.min())
    if u_ratio > g.m / eps:
        msg = f"capacity ratio U(u) = {u_ratio:.3e} exceeds m/eps = {g.m / eps:.3e}"
        if config.capacity_ratio_policy == "reject":
            raise GraphError(msg)
        import warnings

        warnings.warn(msg, stacklevel=2)

    stats = MaxFlowRunStats()
    t_start = time.perf_counter()
    f_lo = widest_path_bottleneck(g, s, t)
    f_hi = float(g.capacity[(g.tails == s) | (g.heads == s)].sum())
    best_value, best_flow = 0.0, np.zeros(g.m)
    fail_ctx = None
    warm = {"w": None}

    def probe(flow_amount):
        nonlocal best_value, best_flow, fail_ctx
        stats.probes += 1
        w_init = None if config.strict_paper else warm["w"]
        ok, val, flow, fail, w_final = _oracle_phase(
            g, part, plan, s, t, flow_amount, eps, config,
            substream(seed, "F", stats.probes), stats, w_oracle_init=w_init)
        if not config.strict_paper:
            warm["w"] = w_final
        if fail is not None and fail_ctx is None:
            fail_ctx = fail
        if flow is not None and val > best_value:
            best_value, best_flow = val, flow
        return ok

    # doubling phase from the widest-path bottleneck, then binary refinement
    lo, hi = f_lo, f_hi
    if probe(f_lo):
        while lo < hi * 0.999 and stats.probes < config.max_probes:
            nxt = min(lo * 2.0, hi * 0.999)
            if probe(nxt):
                lo = nxt
            else:
                hi = nxt
                break
    else:
        lo = 0.0
    resolution = max(eps * f_lo, 1e-12)
    while hi - lo > resolution and stats.probes < config.max_probes:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    stats.timings["total"] = time.perf_counter() - t_start

    cong = edge_congestions(best_flow, g.capacity)
    gcong = group_congestions(best_flow, oracle_edge_weights(np.ones(g.m), g.capacity,
                                                             part.groups, eps), part.groups)
    return ApproxMaxFlowResult(
        value=best_value, flow=best_flow, eps=eps,
        max_edge_congestion=float(cong.max(initial=0.0)),
        per_group_congestion_max=float(gcong.max(initial=0.0)),
        stats=stats, fail_context=fail_ctx, seed=seed)


def route_fixed_flow(g: WeightedGraph, part: Partition, plan: SparsifierPlan | None,
                     s: int, t: int, flow_amount: float, eps: float,
                     config: RunConfig | None = None, seed: int | None = None):
    """Route a fixed amount; returns (result | None, fail_context | None)."""
    config = config or RunConfig(eps=eps)
    seed = config.seed if seed is None else seed
    plan = plan or SparsifierPlan(method=config.sparsifier_method, c_s=config.c_s)
    stats = MaxFlowRunStats()
    ok, val, flow, fail, _ = _oracle_phase(g, part, plan, s, t, flow_amount, eps, config,
                                           substream(seed, "fixed"), stats)
    if fail is not None:
        return None, fail
    if flow is None:
        raise SolverConvergenceError("no usable flow produced at the requested amount")
    cong = edge_congestions(flow, g.capacity)
    result = ApproxMaxFlowResult(
        value=val, flow=flow, eps=eps,
        max_edge_congestion=float(cong.max(initial=0.0)),
        per_group_congestion_max=float("nan"), stats=stats, seed=seed)
    return result, None


# -- cut certificate ------------------------------------------------------------------


@dataclass
class CutCertificate:
    """Vertex potentials certifying infeasibility, plus an optional swept cut."""

    potentials: np.ndarray
    gradient_capacity: float  # sum_e u(e) |phi_u - phi_v|  (<= 1)
    demand_value: float  # d^T phi  (>= 1 - 10 eps)
    cut_side: np.ndarray | None = None
    cut_capacity: float | None = None


def cut_certificate(instance: SparsifiedInstance, fail: GroupedFlowFail, eps,
                    demand=None, sweep=True) -> CutCertificate:
    """Extend the failing quotient potentials harmonically into every group
    interior, scale by 1 / max((1 + 10 eps) mu, sum u |grad phi|), and
    optionally sweep the potentials for an explicit cut."""
    g = instance.graph
    part = instance.partition
    d = fail.demand if demand is None else zero_sum_demand(demand, g.n)
    if demand is None:
        # fail.demand lives on the quotient; lift to global ids
        d_global = np.zeros(g.n)
        d_global[instance.quotient_vertices] = fail.demand
        d = d_global

    # high-accuracy potentials of the failing electrical problem on the quotient
    q = instance.quotient_graph
    lap_q = q.laplacian_csr(1.0 / fail.resistances)
    phi_q = solve_sdd(lap_q, d[instance.quotient_vertices], delta=1e-10)

    k = part.k
    eps_gf = fail.eps  # grouped-flow epsilon actually used on the quotient
    phi = np.zeros(g.n)
    phi[instance.quotient_vertices] = phi_q
    for i in range(k):
        grp = part.groups[i]
        verts = part.group_vertices(g, i)
        bdry = part.boundaries[i]
        interior = np.setdiff1d(verts, bdry)
        if interior.size == 0:
            continue
        r_grp = (fail.w_grp[i] + (eps_gf / k) * fail.mu) * instance.weights[grp]
        idx = np.searchsorted(verts, g.tails[grp])
        jdx = np.searchsorted(verts, g.heads[grp])
        lap = SparseLaplacian.from_edges(verts.size, idx, jdx, 1.0 / r_grp)
        li = np.searchsorted(verts, interior)
        lb = np.searchsorted(verts, bdry)
        mat = lap.matrix
        l_intr = mat[li][:, li]
        l_mid = mat[li][:, lb]
        rhs = -(l_mid @ phi_q[np.searchsorted(instance.quotient_vertices, bdry)])
        y = SolverHandle(l_intr).solve(rhs, delta=1e-10)
        phi[interior] = y

    grad = np.abs(phi[g.tails] - phi[g.heads])
    a_total = float(g.capacity @ grad)
    scale = max((1.0 + 10.0 * eps) * fail.mu, a_total)
    phi_scaled = phi / scale
    cert = CutCertificate(
        potentials=phi_scaled,
        gradient_capacity=a_total / scale,
        demand_value=float(d @ phi_scaled),
    )
    if sweep:
        src = int(np.flatnonzero(d > 0)[0]) if np.any(d > 0) else None
        snk = int(np.flatnonzero(d < 0)[0]) if np.any(d < 0) else None
        if src is not None and snk is not None:
            cert.cut_side, cert.cut_capacity = sweep_cut(g, phi_scaled, src, snk)
    return cert


def sweep_cut(g: WeightedGraph, phi, s, t):
    """Best threshold cut over the potential ordering that separates s from t."""
    order = np.argsort(-phi, kind="stable")
    rank = np.empty(g.n, dtype=np.int64)
    rank[order] = np.arange(g.n)
    if rank[s] > rank[t]:
        order = np.argsort(phi, kind="stable")
        rank[order] = np.arange(g.n)
    lo, hi = rank[s], rank[t]
    in_side = np.zeros(g.n, dtype=bool)
    cut = 0.0
    best = (np.inf, None)
    indptr, nbr, eid = g.incident_edges()
    for pos in range(hi):
        v = order[pos]
        in_side[v] = True
        for j in range(indptr[v], indptr[v + 1]):
            cut += -g.capacity[eid[j]] if in_side[nbr[j]] else g.capacity[eid[j]]
        if pos >= lo:
            if cut < best[0]:
                best = (cut, pos)
    cut_side = order[:best[1] + 1]
    return np.sort(cut_side), float(best[0])
