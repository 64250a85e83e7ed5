"""Multiplicative-weights solver for grouped L2 flows, with a fail certificate.

Each iteration routes the demand electrically under resistances
``(w_grp(i) + (eps/k) mu) * w(e)``; if the electrical energy exceeds the
total group weight ``mu``, no grouped flow of congestion 1 exists and the
solver returns a fail certificate.  Otherwise iterates whose group
congestions stay below the width ``rho`` are averaged into the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, ValidationError
from .graphs import WeightedGraph, zero_sum_demand
from .solver import DENSE_CUTOFF, SolverHandle, electrical_flow

DEFAULT_EARLY_EXIT_CAP = 40
DEFAULT_EARLY_EXIT_FRACTION = 0.1


def mwu_parameters(k: int, eps: float):
    """Width and iteration count: rho = 10 k^(1/3) eps^(-2/3), N = ceil(20 rho ln(k) eps^-2).

    N is floored at 1: a single-group problem reduces to one electrical flow.
    """
    if k < 1:
        raise GraphError("need at least one group")
    if not (0 < eps < 0.5):
        raise GraphError("grouped flow requires 0 < eps < 1/2")
    rho = 10.0 * k ** (1.0 / 3.0) * eps ** (-2.0 / 3.0)
    n_iter = max(int(math.ceil(20.0 * rho * math.log(k) * eps**-2)), 1)
    return rho, n_iter


@dataclass
class GroupedFlowProblem:
    """Grouped L2 flow instance: weights w, an edge partition, and a demand."""

    graph: WeightedGraph
    groups: list
    demand: np.ndarray
    eps: float

    def __post_init__(self):
        g = self.graph
        self.groups = [np.asarray(grp, dtype=np.int64) for grp in self.groups]
        gid = np.full(g.m, -1, dtype=np.int64)
        for i, grp in enumerate(self.groups):
            if grp.size == 0:
                raise GraphError(f"group {i} is empty")
            if np.any(gid[grp] >= 0):
                raise GraphError("groups overlap")
            gid[grp] = i
        if np.any(gid < 0):
            raise GraphError("groups do not cover all edges")
        self.group_of_edge = gid
        self.demand = zero_sum_demand(self.demand, g.n)
        if not (0 < self.eps < 0.5):
            raise GraphError("grouped flow requires 0 < eps < 1/2")

    @property
    def k(self):
        return len(self.groups)


@dataclass
class MWUState:
    """Per-iteration state of the multiplicative weights update."""

    w_grp: np.ndarray
    mu: float
    flow: np.ndarray
    n_accepted: int
    iteration: int
    rho: float
    n_iterations: int


@dataclass
class GroupedFlowFail:
    """Certificate data captured when the energy test fires."""

    iteration: int
    mu: float
    w_grp: np.ndarray
    resistances: np.ndarray
    potentials: np.ndarray
    energy: float
    demand: np.ndarray
    eps: float = 0.0


@dataclass
class GroupedFlowDiagnostics:
    iterations: int = 0
    accepted: int = 0
    early_exit: bool = False
    width_exceeded_events: int = 0
    max_group_congestion: float = float("nan")
    mu_final: float = float("nan")
    trace: list = field(default_factory=list)
    final_state: "MWUState | None" = None


@dataclass
class GroupedFlowResult:
    status: str  # "ok" | "fail"
    flow: np.ndarray | None
    fail: GroupedFlowFail | None
    diagnostics: GroupedFlowDiagnostics

    @property
    def failed(self):
        return self.status == "fail"


def check_mwu_step(w_before, w_after, congestions, eps, rho, tol=1e-9):
    """Assert the multiplicative-weights step invariants; returns step diagnostics.

    Part 1 (mu growth <= exp(eps/rho)) and part 2 (weights non-decreasing)
    are asserted; the conditional energy-growth statement for over-width
    groups is recorded, not asserted.
    """
    mu_before = float(np.sum(w_before))
    mu_after = float(np.sum(w_after))
    if mu_after > math.exp(eps / rho) * mu_before * (1.0 + tol):
        raise ValidationError(
            f"mu grew by {mu_after / mu_before:.12f} > exp(eps/rho) = {math.exp(eps / rho):.12f}")
    if np.any(w_after < w_before * (1.0 - tol)):
        raise ValidationError("a group weight decreased across an iteration")
    return {
        "mu_ratio": mu_after / mu_before,
        "over_width": bool(np.any(congestions >= rho)),
    }


def _group_congestions(flow, weight, gid, k):
    sums = np.bincount(gid, weights=weight * flow * flow, minlength=k)
    return np.sqrt(sums)


def write_trace_csv(diagnostics: GroupedFlowDiagnostics, path):
    """Write the per-iteration trace as CSV rows (t, mu, energy, max_cong, accepted)."""
    with open(path, "w") as fh:
        fh.write("t,mu,energy,max_group_congestion,accepted\n")
        for t, mu, energy, max_cong, accepted in diagnostics.trace:
            fh.write(f"{t},{mu!r},{energy!r},{max_cong!r},{int(accepted)}\n")


def grouped_flow(problem: GroupedFlowProblem, *, strict=False,
                 early_exit_cap=DEFAULT_EARLY_EXIT_CAP, runtime_checks=True,
                 trace=False, max_iterations=None, accelerated=None) -> GroupedFlowResult:
    """Multiplicative weights over groups around electrical flows.

    Returns a flow whose group congestions are at most ``1 + 10 eps``
    whenever a flow of congestion ``1 - eps`` exists, or a fail certificate.
    In strict mode the loop always runs the full iteration budget with the
    formula width; otherwise updates use the width-normalized step
    (the iterate's own max congestion, floored at 1), the loop may return
    early once the running average already meets the output contract
    (flagged in diagnostics), and ``max_iterations`` caps the budget
    (exhausting the cap without meeting the contract raises).
    """
    g = problem.graph
    g.require_connected("grouped flow")
    eps, k = problem.eps, problem.k
    d = problem.demand
    w = g.weight
    gid = problem.group_of_edge
    rho, n_iter = mwu_parameters(k, eps)
    delta_ef = eps**2 / (100.0 * rho)
    accelerated = (not strict) if accelerated is None else accelerated

    budget = n_iter if strict or max_iterations is None else min(n_iter, int(max_iterations))
    w_grp = np.ones(k)
    flow_sum = np.zeros(g.m)
    n_accepted = 0
    diag = GroupedFlowDiagnostics()
    # the nominal gate is t >= N/10; capped so practical runs stay usable
    early_gate = n_iter if strict else min(max(int(math.ceil(n_iter / 10.0)), 1), early_exit_cap)
    hint = None
    # lagged preconditioner: resistances drift slowly between iterations, so a
    # direct factorization is refreshed only when solves start taking long
    handle = None
    handle_age = 0
    last_iters = 0

    for t in range(1, budget + 1):
        mu = float(w_grp.sum())
        r = (w_grp[gid] + (eps / k) * mu) * w
        use_handle = None
        if g.n > DENSE_CUTOFF:
            if handle is None or last_iters > 10 or handle_age >= 30:
                handle = SolverHandle.for_graph(g, 1.0 / r, preconditioner="direct")
                handle_age = 0
                use_handle = handle
            else:
                use_handle = handle.rebind(g.laplacian_csr(1.0 / r))
                handle_age += 1
        ef = electrical_flow(g, d, delta_ef, resistances=r, potentials_hint=hint,
                             handle=use_handle)
        last_iters = ef.stats.iterations
        hint = ef.potentials
        diag.iterations = t
        if ef.energy > mu:
            diag.mu_final = mu
            fail = GroupedFlowFail(
                iteration=t, mu=mu, w_grp=w_grp.copy(), resistances=r,
                potentials=ef.potentials, energy=ef.energy, demand=d.copy(), eps=eps)
            if trace:
                diag.trace.append((t, mu, ef.energy, float("nan"), False))
            return GroupedFlowResult(status="fail", flow=None, fail=fail, diagnostics=diag)

        cong = _group_congestions(ef.flow, w, gid, k)
        if runtime_checks:
            weighted = float(w_grp @ cong)
            if weighted > mu * (1.0 + 1e-9):
                raise ValidationError(
                    f"iteration {t}: sum of weighted congestions {weighted:.6e} exceeds mu {mu:.6e}")

        accepted = bool(cong.max(initial=0.0) <= rho)
        if accepted:
            flow_sum += ef.flow
            n_accepted += 1
        else:
            diag.width_exceeded_events += 1

        width = max(float(cong.max(initial=0.0)), 1.0) if accelerated else rho
        w_new = w_grp * (1.0 + (eps / width) * cong)
        if runtime_checks:
            check_mwu_step(w_grp, w_new, cong, eps, width)
        w_grp = w_new
        if trace:
            diag.trace.append((t, mu, ef.energy, float(cong.max()), accepted))

        if not strict and n_accepted > 0 and t >= early_gate:
            avg = flow_sum / n_accepted
            avg_cong = _group_congestions(avg, w, gid, k)
            if avg_cong.max(initial=0.0) <= (1.0 + 10.0 * eps):
                diag.accepted = n_accepted
                diag.early_exit = True
                diag.max_group_congestion = float(avg_cong.max())
                diag.mu_final = float(w_grp.sum())
                diag.final_state = MWUState(w_grp=w_grp, mu=diag.mu_final, flow=flow_sum,
                                            n_accepted=n_accepted, iteration=t, rho=rho,
                                            n_iterations=n_iter)
                return GroupedFlowResult(status="ok", flow=avg, fail=None, diagnostics=diag)

    if n_accepted == 0:
        raise ValidationError("no iteration stayed under the width; cannot average")
    avg = flow_sum / n_accepted
    diag.accepted = n_accepted
    diag.max_group_congestion = float(_group_congestions(avg, w, gid, k).max())
    diag.mu_final = float(w_grp.sum())
    diag.final_state = MWUState(w_grp=w_grp, mu=diag.mu_final, flow=flow_sum,
                                n_accepted=n_accepted, iteration=budget, rho=rho,
                                n_iterations=n_iter)
    if budget < n_iter and diag.max_group_congestion > 1.0 + 10.0 * eps:
        from .errors import SolverConvergenceError

        raise SolverConvergenceError(
            f"grouped flow hit the iteration cap {budget} with max group congestion"
            f" {diag.max_group_congestion:.4f} > {1 + 10 * eps:.4f}",
            best_iterate=avg, achieved_residual=diag.max_group_congestion)
    return GroupedFlowResult(status="ok", flow=avg, fail=None, diagnostics=diag)
