"""Exact and approximate Schur complements, spectral sparsification, and the
one-step / recursive spectral vertex sparsifiers.

Conventions: boundary vertex sets are always sorted; returned Laplacians are
indexed by position in the sorted boundary.  Disconnected inputs are handled
per component (Schur complements of components add); a component whose
vertices are all interior makes the interior block singular and is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, ValidationError
from .graphs import SparseLaplacian
from .partition import SeparatorTree, SeparatorNode
from .solver import SolverHandle

APPROX_SCHUR_DELTA_FLOOR = 1e-12
SPARSIFY_EDGE_FACTOR = 48.0  # C_s
EXACT_RESISTANCE_CUTOFF = 64
SKETCH_OVERSAMPLE = 4


# -- spectral bounds ---------------------------------------------------------


@dataclass
class SpectralBounds:
    """Cheap eigenvalue bounds: lam_min <= lambda_2 and lambda_n <= lam_max."""

    lam_min: float
    lam_max: float

    @property
    def kappa(self):
        return self.lam_max / self.lam_min


def spectral_bounds(lap: SparseLaplacian) -> SpectralBounds:
    """lam_min = w_min / n^2, lam_max = n * w_max; kappa <= n^3 U(w)."""
    if not lap.is_connected():
        raise GraphError("spectral bounds require a connected graph")
    w = lap.weights()
    if w.size == 0:
        raise GraphError("graph has no edges")
    n = lap.n
    return SpectralBounds(lam_min=w.min() / n**2, lam_max=n * w.max())


def weight_floor(lap: SparseLaplacian, lam_min: float) -> SparseLaplacian:
    """Add lam_min / n^2 to every existing edge; L <= L' <= (1 + 1/n) L."""
    tails, heads, w = lap.edge_list()
    bump = lam_min / lap.n**2
    return SparseLaplacian.from_edges(lap.n, tails, heads, w + bump, boundary=lap.boundary)


# -- Schur complements --------------------------------------------------------


def _sorted_boundary(lap, v_bdry):
    bdry = np.unique(np.asarray(v_bdry, dtype=np.int64))
    if bdry.size == 0:
        raise GraphError("boundary set is empty")
    if bdry[0] < 0 or bdry[-1] >= lap.n:
        raise GraphError("boundary vertex out of range")
    return bdry


def _component_cases(lap, bdry):
    """Split into per-component (vertex ids, local boundary) subproblems."""
    nc, labels = lap.component_labels()
    cases = []
    bset = np.zeros(lap.n, dtype=bool)
    bset[bdry] = True
    for c in range(nc):
        verts = np.flatnonzero(labels == c)
        local_bdry = np.flatnonzero(bset[verts])
        if local_bdry.size == 0:
            raise GraphError(
                f"component of size {verts.size} has no boundary vertex; interior block is singular")
        cases.append((verts, local_bdry))
    return cases


def exact_schur(lap: SparseLaplacian, v_bdry) -> SparseLaplacian:
    """L_bdry - L_mid^T L_intr^{-1} L_mid by dense elimination of the interior."""
    bdry = _sorted_boundary(lap, v_bdry)
    if bdry.size == lap.n:
        return SparseLaplacian(lap.matrix.copy())
    out = np.zeros((bdry.size, bdry.size))
    pos = {int(v): i for i, v in enumerate(bdry)}
    for verts, local_bdry in _component_cases(lap, bdry):
        sub = lap.matrix[verts][:, verts].toarray()
        li = np.setdiff1d(np.arange(verts.size), local_bdry)
        lb = local_bdry
        if li.size == 0:
            schur = sub[np.ix_(lb, lb)]
        else:
            l_intr = sub[np.ix_(li, li)]
            l_mid = sub[np.ix_(li, lb)]
            l_bdry = sub[np.ix_(lb, lb)]
            try:
                y = np.linalg.solve(l_intr, l_mid)
            except np.linalg.LinAlgError as exc:
                raise GraphError("interior block is singular") from exc
            schur = l_bdry - l_mid.T @ y
            schur = 0.5 * (schur + schur.T)
        rows = [pos[int(verts[j])] for j in lb]
        out[np.ix_(rows, rows)] += schur
    out = _clean_laplacian_dense(out, tol=1e-13)
    return SparseLaplacian(sp.csr_matrix(out), boundary=None)


def _clean_laplacian_dense(a, tol):
    """Zero positive/dust off-diagonals and reset diagonals to weighted degrees."""
    off = a - np.diag(np.diag(a))
    scale = np.abs(off).max(initial=0.0)
    off[off > 0] = 0.0
    off[np.abs(off) <= tol * scale] = 0.0
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


def approx_schur(lap: SparseLaplacian, v_bdry, kappa: float, eps: float) -> SparseLaplacian:
    """Approximate Schur complement via column-by-column interior solves.

    Positive off-diagonals of the assembled matrix are clamped to zero and
    diagonals reset to weighted degrees; the clamped mass is checked against
    eps/10 of the trace so the cost of the clamp stays observable.
    """
    if not (0 < eps < 0.5):
        raise GraphError("approx_schur requires 0 < eps < 1/2")
    bdry = _sorted_boundary(lap, v_bdry)
    if bdry.size == lap.n:
        return SparseLaplacian(lap.matrix.copy())
    delta = max(2.0 * eps / (lap.n * kappa), APPROX_SCHUR_DELTA_FLOOR)
    out = np.zeros((bdry.size, bdry.size))
    pos = {int(v): i for i, v in enumerate(bdry)}
    adense = lap.matrix.toarray() if lap.n <= 128 else None
    for verts, local_bdry in _component_cases(lap, bdry):
        li = np.setdiff1d(np.arange(verts.size), local_bdry)
        lb = local_bdry
        if adense is not None:
            sub = adense[np.ix_(verts, verts)]
            if li.size == 0:
                schur = sub[np.ix_(lb, lb)]
            else:
                l_intr = sp.csr_matrix(sub[np.ix_(li, li)])
                l_mid = sub[np.ix_(li, lb)]
                l_bdry = sub[np.ix_(lb, lb)]
                y, _ = SolverHandle(l_intr).solve_with_stats(l_mid, delta=delta)
                schur = l_bdry - l_mid.T @ y
                schur = 0.5 * (schur + schur.T)
        else:
            sub = lap.matrix[verts][:, verts].tocsr()
            if li.size == 0:
                schur = sub[np.ix_(lb, lb)].toarray()
            else:
                l_intr = sub[li][:, li]
                l_mid = sub[li][:, lb].toarray()
                l_bdry = sub[lb][:, lb].toarray()
                y, _ = SolverHandle(l_intr).solve_with_stats(l_mid, delta=delta)
                schur = l_bdry - l_mid.T @ y
                schur = 0.5 * (schur + schur.T)
        rows = [pos[int(verts[j])] for j in lb]
        out[np.ix_(rows, rows)] += schur
    trace = np.trace(out)
    off = out - np.diag(np.diag(out))
    clamp_mass = float(off[off > 0].sum())
    if clamp_mass > (eps / 10.0) * max(trace, 1e-300):
        raise ValidationError(
            f"clamped positive off-diagonal mass {clamp_mass:.3e} exceeds eps/10 of trace {trace:.3e}")
    cleaned = _clean_laplacian_dense(out, tol=1e-13)
    result = SparseLaplacian(sp.csr_matrix(cleaned))
    result.meta = {"clamp_mass": clamp_mass, "delta": delta}
    return result


# -- spectral edge sparsification ---------------------------------------------


def _effective_resistances(lap: SparseLaplacian, tails, heads, eps, rng):
    """Per-edge effective resistances, exact (dense) for small n, sketched above."""
    n = lap.n
    if n <= EXACT_RESISTANCE_CUTOFF:
        pinv = np.linalg.pinv(lap.dense())
        d = np.diag(pinv)
        return d[tails] + d[heads] - 2.0 * pinv[tails, heads]
    k = max(8, int(math.ceil(SKETCH_OVERSAMPLE * math.log(n))))
    w = lap.weights()
    handle = SolverHandle(lap.matrix)
    sqw = np.sqrt(w)
    m = tails.size
    proj = rng.choice([-1.0, 1.0], size=(m, k)) / math.sqrt(k)
    # rows of Q W^{1/2} B stacked as columns: y_j = B^T (W^{1/2} q_j)
    y = np.zeros((n, k))
    np.add.at(y, tails, sqw[:, None] * proj)
    np.subtract.at(y, heads, sqw[:, None] * proj)
    z, _ = handle.solve_with_stats(y, delta=1e-4)
    diff = z[tails] - z[heads]
    return np.einsum("ij,ij->i", diff, diff)


def sparsify(lap: SparseLaplacian, eps: float, seed: int, c_s: float = SPARSIFY_EDGE_FACTOR) -> SparseLaplacian:
    """Spectral sparsifier by effective-resistance sampling with replacement.

    Graphs already under the edge budget ``c_s n ln(n) eps^-2`` are returned
    unchanged.  Sampling is deterministic given the seed; if a draw
    disconnects the graph the seed stream advances deterministically.
    """
    if not (0 < eps < 1):
        raise GraphError("sparsify requires 0 < eps < 1")
    tails, heads, w = lap.edge_list()
    n, m = lap.n, tails.size
    budget = c_s * n * math.log(max(n, 2)) / eps**2
    if m <= budget:
        return lap
    # sample count uses the concentration constant even when the budget knob
    # is tightened below it; q >> m draws keep almost every edge, so skip
    q = int(math.ceil(max(c_s, 9.0) * n * math.log(max(n, 2)) / eps**2))
    if q >= 20 * m:
        return lap
    for attempt in range(8):
        ss = np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), 0x5EA1, attempt))
        rng = np.random.default_rng(ss)
        r_eff = _effective_resistances(lap, tails, heads, eps, rng)
        scores = np.maximum(w * r_eff, 0.0)
        total = scores.sum()
        if total <= 0:
            raise GraphError("all sampling scores vanished")
        p = scores / total
        counts = np.bincount(rng.choice(m, size=q, p=p), minlength=m)
        keep = counts > 0
        new_w = counts[keep] * w[keep] / (q * p[keep])
        cand = SparseLaplacian.from_edges(n, tails[keep], heads[keep], new_w)
        if cand.is_connected() or not lap.is_connected():
            return cand
    raise ValidationError("sparsify produced a disconnected graph in 8 seeded attempts")


# -- vertex sparsifiers ----------------------------------------------------------


@dataclass
class VertexSparsifier:
    """Sparse Laplacian on boundary vertices, spectrally close to the Schur complement."""

    laplacian: SparseLaplacian
    boundary: np.ndarray  # sorted global vertex ids; row i <-> boundary[i]
    eps: float
    provenance: str  # "one-step" | "recursive"
    source_weight_ratio: float
    source_n: int
    c_s: float = SPARSIFY_EDGE_FACTOR
    meta: dict = field(default_factory=dict)

    @property
    def n_boundary(self):
        return self.boundary.size

    def edge_budget(self):
        nb = max(self.n_boundary, 2)
        return self.c_s * nb * math.log(nb) / self.eps**2

    def weight_ratio(self):
        w = self.laplacian.weights()
        return float(w.max() / w.min()) if w.size else 1.0

    def validate(self):
        self.laplacian.validate(tol=1e-9)
        if self.laplacian.num_edges > self.edge_budget():
            raise ValidationError(
                f"sparsifier has {self.laplacian.num_edges} edges, budget {self.edge_budget():.0f}")
        # loose reading of the m^5 bound, with 10x slack
        bound = 10.0 * self.source_n**5 * self.source_weight_ratio
        if self.n_boundary > 1 and self.weight_ratio() > bound:
            raise ValidationError(
                f"sparsifier weight ratio {self.weight_ratio():.3e} exceeds 10 n^5 U = {bound:.3e}")
        return self


def _weight_ratio(w):
    return float(w.max() / w.min()) if w.size else 1.0


def one_step_vertex_sparsify(lap: SparseLaplacian, v_bdry, eps: float, seed: int = 0,
                             c_s: float = SPARSIFY_EDGE_FACTOR) -> VertexSparsifier:
    """ApproxSchur(eps/3), Sparsify(eps/3), then a lam_min/n^2 weight floor."""
    if not (0 < eps < 0.5):
        raise GraphError("one_step_vertex_sparsify requires 0 < eps < 1/2")
    if not lap.is_connected():
        raise GraphError("one_step_vertex_sparsify requires a connected graph")
    bdry = _sorted_boundary(lap, v_bdry)
    bounds = spectral_bounds(lap)
    u_in = _weight_ratio(lap.weights())
    schur = approx_schur(lap, bdry, bounds.kappa, eps / 3.0)
    sparse = sparsify(schur, eps / 3.0, seed, c_s=c_s)
    floored = weight_floor(sparse, bounds.lam_min)
    return VertexSparsifier(
        laplacian=floored,
        boundary=bdry,
        eps=eps,
        provenance="one-step",
        source_weight_ratio=u_in,
        source_n=lap.n,
        c_s=c_s,
        meta={"kappa": bounds.kappa, "lam_min": bounds.lam_min},
    )


# recursive sparsification works on edge lists in global vertex ids


def _edges_of(lap: SparseLaplacian, verts):
    """(tails, heads, w) of lap in global ids given row i <-> verts[i]."""
    t, h, w = lap.edge_list()
    return verts[t], verts[h], w


def _local_lap(verts, tails, heads, w):
    """Laplacian on local indices for a node's vertex set."""
    idx = np.searchsorted(verts, tails)
    jdx = np.searchsorted(verts, heads)
    return SparseLaplacian.from_edges(verts.size, idx, jdx, w)


def _node_seed(seed, path):
    ss = np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), 0x7EC2, *path))
    return int(ss.generate_state(1)[0])


def recursive_vertex_sparsify(lap: SparseLaplacian, v_bdry, tree: SeparatorTree, eps: float,
                              seed: int = 0, c_s: float = SPARSIFY_EDGE_FACTOR) -> VertexSparsifier:
    """Recursive sparsification along a separator tree.

    Each level spends ``eps_step = eps / (2 * depth)``: children are
    sparsified, summed (separator-internal edges enter both children at half
    weight, so the sum reproduces the node), reduced to the node's boundary by
    ApproxSchur(eps_step/3) and thinned by Sparsify(eps_step/3).  A final
    weight floor keeps the weight ratio polynomially bounded.
    """
    if not (0 < eps < 0.5):
        raise GraphError("recursive_vertex_sparsify requires 0 < eps < 1/2")
    if not lap.is_connected():
        raise GraphError("recursive_vertex_sparsify requires a connected graph")
    bdry = _sorted_boundary(lap, v_bdry)
    depth = max(tree.depth(), 1)
    eps_step = eps / (2.0 * depth)
    bounds = spectral_bounds(lap)
    kappa_fwd = min(2.0**depth, 1e12) * bounds.kappa
    u_in = _weight_ratio(lap.weights())

    root_verts = np.unique(np.asarray(tree.root.vertices, dtype=np.int64))
    tails, heads, w = _edges_of(lap, np.arange(lap.n))
    missing = np.setdiff1d(np.unique(np.concatenate([tails, heads])), root_verts)
    if missing.size:
        raise ValidationError(f"separator tree does not cover graph vertices {missing[:5]}")

    out_bdry, ot, oh, ow = _sparsify_node(tree.root, tails, heads, w, bdry, eps_step,
                                          kappa_fwd, seed, c_s, path=())
    lap_out = _local_lap(out_bdry, ot, oh, ow)
    floored = weight_floor(lap_out, bounds.lam_min)
    return VertexSparsifier(
        laplacian=floored,
        boundary=out_bdry,
        eps=eps,
        provenance="recursive",
        source_weight_ratio=u_in,
        source_n=lap.n,
        c_s=c_s,
        meta={"kappa": bounds.kappa, "eps_step": eps_step, "depth": depth},
    )


def _sparsify_node(node: SeparatorNode, tails, heads, w, bdry, eps_step, kappa, seed, c_s, path):
    """Returns (boundary ids, tails, heads, weights) of the node's sparsifier."""
    verts = np.unique(np.asarray(node.vertices, dtype=np.int64))
    bdry = np.intersect1d(bdry, verts)
    if bdry.size == 0:
        raise GraphError("node has no boundary vertices")

    small = verts.size <= max(2 * bdry.size, 1)
    if node.is_leaf or small:
        local = _local_lap(verts, tails, heads, w)
        local_bdry = np.searchsorted(verts, bdry)
        vs = _one_step_local(local, local_bdry, eps_step, kappa,
                             _node_seed(seed, path + (0xF,)), c_s)
        t, h, ww = vs.laplacian.edge_list()
        return bdry, bdry[t], bdry[h], ww

    sep = np.unique(np.asarray(node.separator, dtype=np.int64))
    child_parts = []
    covered = np.zeros(tails.size, dtype=bool)
    for ci, child in enumerate((node.left, node.right)):
        cverts = np.unique(np.asarray(child.vertices, dtype=np.int64))
        core = np.setdiff1d(cverts, sep)
        in_core_t = np.isin(tails, core)
        in_core_h = np.isin(heads, core)
        in_sep_t = np.isin(tails, sep)
        in_sep_h = np.isin(heads, sep)
        own = (in_core_t | in_core_h) & (in_core_t | in_sep_t) & (in_core_h | in_sep_h)
        shared = in_sep_t & in_sep_h
        covered |= own | shared
        et = np.concatenate([tails[own], tails[shared]])
        eh = np.concatenate([heads[own], heads[shared]])
        ew = np.concatenate([w[own], 0.5 * w[shared]])
        child_bdry = np.union1d(np.intersect1d(cverts, bdry), sep)
        child_parts.append(
            _sparsify_node(child, et, eh, ew, child_bdry, eps_step, kappa, seed, c_s, path + (ci,)))
    if not covered.all():
        raise ValidationError(
            "separator does not cover the node: an edge joins the two child components")

    ct = np.concatenate([p[1] for p in child_parts])
    ch = np.concatenate([p[2] for p in child_parts])
    cw = np.concatenate([p[3] for p in child_parts])
    union = np.union1d(child_parts[0][0], child_parts[1][0])
    combined = _local_lap(union, ct, ch, cw)
    local_bdry = np.searchsorted(union, bdry)
    schur = approx_schur(combined, local_bdry, kappa, eps_step / 3.0)
    thin = sparsify(schur, eps_step / 3.0, _node_seed(seed, path + (0xA,)), c_s=c_s)
    t, h, ww = thin.edge_list()
    return bdry, bdry[t], bdry[h], ww


def _one_step_local(local: SparseLaplacian, local_bdry, eps_step, kappa, seed, c_s):
    """One-step body reusing a forwarded kappa (leaf case of the recursion)."""
    schur = approx_schur(local, local_bdry, kappa, eps_step / 3.0)
    sparse = sparsify(schur, eps_step / 3.0, seed, c_s=c_s)
    bdry = _sorted_boundary(local, local_bdry)
    return VertexSparsifier(
        laplacian=sparse,
        boundary=bdry,
        eps=eps_step,
        provenance="one-step",
        source_weight_ratio=_weight_ratio(local.weights()),
        source_n=local.n,
        c_s=c_s,
    )


# -- serialization ----------------------------------------------------------------


def save_sparsifier(vs: VertexSparsifier, path):
    tails, heads, w = vs.laplacian.edge_list()
    with open(path, "w") as fh:
        fh.write(f"vs {vs.n_boundary} {float(vs.eps)!r} {vs.provenance}\n")
        fh.write("ids " + " ".join(str(int(v)) for v in vs.boundary) + "\n")
        for t, h, ww in zip(tails, heads, w):
            fh.write(f"e {t} {h} {float(ww)!r}\n")


def load_sparsifier(path) -> VertexSparsifier:
    from .errors import ParseError

    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("vs "):
        raise ParseError("line 1: expected 'vs <n_bdry> <eps> <provenance>' header")
    _, nb, eps, prov = lines[0].split()
    if not lines[1].startswith("ids "):
        raise ParseError("line 2: expected boundary id mapping")
    boundary = np.array([int(x) for x in lines[1].split()[1:]], dtype=np.int64)
    if boundary.size != int(nb):
        raise ParseError(f"line 2: expected {nb} boundary ids, got {boundary.size}")
    tails, heads, w = [], [], []
    for i, ln in enumerate(lines[2:], start=3):
        parts = ln.split()
        if parts[0] != "e" or len(parts) != 4:
            raise ParseError(f"line {i}: expected 'e <t> <h> <w>'")
        tails.append(int(parts[1]))
        heads.append(int(parts[2]))
        w.append(float(parts[3]))
    lap = SparseLaplacian.from_edges(int(nb), np.array(tails, dtype=np.int64),
                                     np.array(heads, dtype=np.int64), np.array(w))
    return VertexSparsifier(
        laplacian=lap, boundary=boundary, eps=float(eps), provenance=prov,
        source_weight_ratio=1.0, source_n=int(nb),
    )
