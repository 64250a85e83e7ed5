"""r-divisions and recursive separator trees.

Generators cover 2D and layered 3D grids; structures for arbitrary graphs are
ingested from files and validated against every structural invariant (edge
partition exactness, group size, boundary size, separator balance and the
literal BFS separation property).  Designated terminals (s and t) are
force-added to the boundary of every group they touch so that s-t demands
stay boundary-supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, ParseError, ValidationError
from .graphs import WeightedGraph
from .grids import GridSpec

DEFAULT_C_DIV = 4.0
DEFAULT_C_BDRY = 8.0
DEFAULT_LEAF_CUTOFF = 16
ALPHA = 0.9


# -- r-divisions -------------------------------------------------------------


@dataclass
class Partition:
    """An r-division: edge groups with per-group boundary/interior vertex sets."""

    groups: list  # list of np.ndarray edge ids
    boundaries: list  # list of np.ndarray vertex ids (sorted)
    interiors: list  # list of np.ndarray vertex ids (sorted)
    r: int
    n: int
    m: int
    terminals: tuple = ()
    c_div: float = DEFAULT_C_DIV
    c_bdry: float = DEFAULT_C_BDRY
    blocks: list = field(default_factory=list, repr=False)

    @property
    def k(self):
        return len(self.groups)

    def group_of_edges(self):
        gid = np.full(self.m, -1, dtype=np.int64)
        for i, grp in enumerate(self.groups):
            gid[grp] = i
        return gid

    def group_vertices(self, g: WeightedGraph, i):
        grp = self.groups[i]
        return np.unique(np.concatenate([g.tails[grp], g.heads[grp]]))


def _boundary_sets(g: WeightedGraph, groups, terminals):
    """Per-group boundary/interior per the definition: a vertex is boundary of a
    group iff it touches the group and also touches another group (or is a
    designated terminal)."""
    gid = np.full(g.m, -1, dtype=np.int64)
    for i, grp in enumerate(groups):
        grp = np.asarray(grp, dtype=np.int64)
        if np.any(gid[grp] >= 0):
            dup = grp[gid[grp] >= 0][0]
            raise ValidationError(f"edge {int(dup)} in groups {int(gid[dup])} and {i}")
        gid[grp] = i
    if np.any(gid < 0):
        raise ValidationError(f"edge {int(np.flatnonzero(gid < 0)[0])} belongs to no group")

    k = len(groups)
    touch = [set() for _ in range(g.n)]
    for e in range(g.m):
        touch[g.tails[e]].add(int(gid[e]))
        touch[g.heads[e]].add(int(gid[e]))
    term = set(int(t) for t in terminals)
    boundaries, interiors = [], []
    for i, grp in enumerate(groups):
        verts = np.unique(np.concatenate([g.tails[grp], g.heads[grp]])) if len(grp) else np.array([], dtype=np.int64)
        is_bdry = np.array([len(touch[v]) > 1 or int(v) in term for v in verts], dtype=bool)
        boundaries.append(verts[is_bdry])
        interiors.append(verts[~is_bdry])
    return boundaries, interiors


def partition_from_groups(g: WeightedGraph, groups, r, terminals=(),
                          c_div=DEFAULT_C_DIV, c_bdry=DEFAULT_C_BDRY) -> Partition:
    """Build and validate a Partition from explicit edge groups."""
    groups = [np.unique(np.asarray(grp, dtype=np.int64)) for grp in groups]
    for i, grp in enumerate(groups):
        if grp.size == 0:
            raise ValidationError(f"group {i} is empty")
    boundaries, interiors = _boundary_sets(g, groups, terminals)
    part = Partition(groups=groups, boundaries=boundaries, interiors=interiors,
                     r=int(r), n=g.n, m=g.m, terminals=tuple(terminals),
                     c_div=c_div, c_bdry=c_bdry)
    validate_partition(part, g)
    return part


def validate_partition(part: Partition, g: WeightedGraph):
    """Enforce every r-division invariant; raises ValidationError naming the clause."""
    if g.n != part.n or g.m != part.m:
        raise ValidationError("partition does not match graph dimensions")
    gid = np.full(g.m, -1, dtype=np.int64)
    for i, grp in enumerate(part.groups):
        grp = np.asarray(grp)
        seen = gid[grp] >= 0
        if np.any(seen):
            dup = int(grp[seen][0])
            raise ValidationError(f"edge {dup} in groups {int(gid[dup])} and {i}")
        gid[grp] = i
    if np.any(gid < 0):
        raise ValidationError(f"edge {int(np.flatnonzero(gid < 0)[0])} belongs to no group")

    for i, grp in enumerate(part.groups):
        if len(grp) > part.r:
            raise ValidationError(f"group {i} has {len(grp)} edges > r = {part.r}")
    k_bound = max(part.c_div * g.n / part.r, 1.0)
    if part.k > k_bound:
        raise ValidationError(f"k = {part.k} exceeds c_div * n / r = {k_bound:.2f}")

    bdry_bound = part.c_bdry * math.sqrt(part.r)
    for i, b in enumerate(part.boundaries):
        if len(b) > bdry_bound:
            raise ValidationError(
                f"|V_bdry(S_{i})| = {len(b)} exceeds c_bdry * sqrt(r) = {bdry_bound:.2f}")

    ref_b, ref_i = _boundary_sets(g, part.groups, part.terminals)
    for i in range(part.k):
        if not np.array_equal(np.sort(part.boundaries[i]), ref_b[i]):
            raise ValidationError(f"boundary set of group {i} does not match its definition")
        if not np.array_equal(np.sort(part.interiors[i]), ref_i[i]):
            raise ValidationError(f"interior set of group {i} does not match its definition")
    return part


def _axis_parts(dim, parts):
    """Balanced split sizes (array_split semantics)."""
    q, rem = divmod(dim, parts)
    return [q + 1] * rem + [q] * (parts - rem)


def _block_edge_count(a, b, layers, owns_east, owns_south):
    internal = layers * (a * (b - 1) + b * (a - 1)) + (layers - 1) * a * b
    cuts = layers * (a if owns_east else 0) + layers * (b if owns_south else 0)
    return internal + cuts


def grid_r_division(rows, cols, layers, r, terminals=(), c_div=DEFAULT_C_DIV,
                    c_bdry=DEFAULT_C_BDRY, graph: WeightedGraph | None = None) -> Partition:
    """Axis-aligned r-division of a grid built by ``grids.grid_graph``.

    Blocks are balanced vertex tiles; each block owns its internal edges plus
    the cut edges on its east and south faces, so every edge lands in exactly
    one group.  The number of blocks per axis is the smallest that keeps every
    group at or below r edges.
    """
    if r < 4:
        raise GraphError("r must be at least 4")
    spec = GridSpec(rows, cols, layers)
    g = graph if graph is not None else None
    if g is None:
        from .grids import grid_graph

        g = grid_graph(rows, cols, layers)

    def feasible(p_r, p_c):
        ra, ca = _axis_parts(rows, p_r), _axis_parts(cols, p_c)
        worst = 0
        for i, a in enumerate(ra):
            for j, b in enumerate(ca):
                worst = max(worst, _block_edge_count(
                    a, b, layers, owns_east=j + 1 < p_c, owns_south=i + 1 < p_r))
        return worst <= r

    # blocks of side ~ sqrt(r / 2) in 2D, ~ sqrt(r / (3*layers - 1)) with layers
    side = max(1, math.isqrt(r // 2 if layers == 1 else r // (3 * layers - 1)))
    p_r, p_c = math.ceil(rows / side), math.ceil(cols / side)
    k_bound = max(c_div * spec.n / r, 1.0)
    if not feasible(p_r, p_c) or p_r * p_c > k_bound:
        # fall back to the smallest feasible k for small or ragged grids
        best = None
        for pr in range(1, rows + 1):
            for pc in range(1, cols + 1):
                if feasible(pr, pc):
                    key = (pr * pc, abs(pr - pc))
                    if best is None or key < best[0]:
                        best = (key, pr, pc)
                    break  # larger pc only adds groups for this pr
        if best is None:
            raise GraphError(f"no block decomposition fits r = {r}")
        _, p_r, p_c = best

    row_edges = np.cumsum([0] + _axis_parts(rows, p_r))
    col_edges = np.cumsum([0] + _axis_parts(cols, p_c))
    row_block = np.searchsorted(row_edges, np.arange(rows), side="right") - 1
    col_block = np.searchsorted(col_edges, np.arange(cols), side="right") - 1

    # owner of an edge = block of its canonical tail coordinate
    _, trow, tcol = spec.coord_arrays(g.tails)
    owner = row_block[trow] * p_c + col_block[tcol]
    groups = [np.flatnonzero(owner == b) for b in range(p_r * p_c)]
    groups = [grp for grp in groups if grp.size]

    part = partition_from_groups(g, groups, r, terminals=terminals, c_div=c_div, c_bdry=c_bdry)
    part.blocks = [
        (int(row_edges[i]), int(row_edges[i + 1]), int(col_edges[j]), int(col_edges[j + 1]))
        for i in range(p_r) for j in range(p_c)
    ]
    return part


# -- separator trees -----------------------------------------------------------


@dataclass
class SeparatorNode:
    vertices: np.ndarray
    separator: np.ndarray
    left: "SeparatorNode | None" = None
    right: "SeparatorNode | None" = None

    @property
    def is_leaf(self):
        return self.left is None and self.right is None

    def depth(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def preorder(self):
        yield self
        if not self.is_leaf:
            yield from self.left.preorder()
            yield from self.right.preorder()


@dataclass
class SeparatorTree:
    """Recursive alpha-separator hierarchy; separator edges belong to both
    children at half weight (the ``halved`` convention), so child Laplacians
    sum back to the parent exactly."""

    root: SeparatorNode
    alpha: float = ALPHA
    leaf_cutoff: int = DEFAULT_LEAF_CUTOFF
    c0: float = 1.0
    convention: str = "halved"

    def depth(self):
        return self.root.depth()

    def nodes(self):
        return list(self.root.preorder())

    def relabel(self, mapping):
        """New tree with every vertex id passed through ``mapping`` (an array)."""
        mapping = np.asarray(mapping, dtype=np.int64)

        def walk(node):
            new = SeparatorNode(vertices=np.sort(mapping[node.vertices]),
                                separator=np.sort(mapping[node.separator]))
            if not node.is_leaf:
                new.left = walk(node.left)
                new.right = walk(node.right)
            return new

        return SeparatorTree(root=walk(self.root), alpha=self.alpha,
                             leaf_cutoff=self.leaf_cutoff, c0=self.c0,
                             convention=self.convention)


def _grid_split(spec: GridSpec, verts, leaf_cutoff):
    """Axis-aligned median cut of a grid point set; returns (sep, left, right)."""
    layer, row, col = spec.coord_arrays(verts)
    axes = [(col, "col"), (row, "row"), (layer, "layer")]
    axes.sort(key=lambda t: -(t[0].max() - t[0].min()))
    for coords, _name in axes:
        lo, hi = coords.min(), coords.max()
        if hi - lo < 2:
            continue
        best = None
        for cut in range(lo + 1, hi):
            left = int((coords < cut).sum())
            right = int((coords > cut).sum())
            size = max(left, right)
            if best is None or size < best[0]:
                best = (size, cut)
        cut = best[1]
        sep = verts[coords == cut]
        left = verts[coords < cut]
        right = verts[coords > cut]
        if left.size and right.size:
            return sep, left, right
    return None


def separator_tree_for_grid_block(spec: GridSpec, vertices, leaf_cutoff=DEFAULT_LEAF_CUTOFF,
                                  g: WeightedGraph | None = None) -> SeparatorTree:
    """Separator tree for a grid block subgraph via axis-alternating median cuts.

    ``vertices`` are global grid vertex ids (a group's vertex set, fringe
    included).  The block must induce a connected subgraph.
    """
    verts = np.unique(np.asarray(vertices, dtype=np.int64))
    if g is not None and not _induced_connected(g, verts):
        raise GraphError("block subgraph is disconnected")

    max_sep = [0.0]

    def build(vs):
        if vs.size <= leaf_cutoff:
            return SeparatorNode(vertices=vs, separator=np.array([], dtype=np.int64))
        split = _grid_split(spec, vs, leaf_cutoff)
        if split is None:
            return SeparatorNode(vertices=vs, separator=np.array([], dtype=np.int64))
        sep, left, right = split
        max_sep[0] = max(max_sep[0], sep.size / math.sqrt(vs.size))
        node = SeparatorNode(vertices=vs, separator=np.sort(sep))
        node.left = build(np.sort(np.concatenate([left, sep])))
        node.right = build(np.sort(np.concatenate([right, sep])))
        return node

    root = build(verts)
    return SeparatorTree(root=root, alpha=ALPHA, leaf_cutoff=leaf_cutoff,
                         c0=max(max_sep[0], 1.0))


def septrees_for_partition(spec: GridSpec, part: Partition, g: WeightedGraph,
                           leaf_cutoff=DEFAULT_LEAF_CUTOFF):
    """One separator tree per group, on global vertex ids."""
    return [separator_tree_for_grid_block(spec, part.group_vertices(g, i), leaf_cutoff, g=g)
            for i in range(part.k)]


def _induced_connected(g: WeightedGraph, verts):
    vset = np.zeros(g.n, dtype=bool)
    vset[verts] = True
    keep = vset[g.tails] & vset[g.heads]
    if verts.size <= 1:
        return True
    import scipy.sparse as sp

    idx = np.searchsorted(verts, g.tails[keep])
    jdx = np.searchsorted(verts, g.heads[keep])
    adj = sp.csr_matrix((np.ones(idx.size), (idx, jdx)), shape=(verts.size, verts.size))
    nc, _ = sp.csgraph.connected_components(adj, directed=False)
    return nc == 1


def validate_septree(tree: SeparatorTree, g: WeightedGraph | None = None,
                     expected_root=None):
    """Check the recursive separator structure; BFS-checks the separation property."""
    if expected_root is not None:
        if not np.array_equal(np.sort(np.asarray(expected_root)), np.sort(tree.root.vertices)):
            raise ValidationError("root vertex set does not equal the group vertex set")
    n_root = tree.root.vertices.size
    depth_bound = math.ceil(math.log(max(n_root, 2)) / math.log(20.0 / 19.0)) + 2
    if tree.depth() > depth_bound:
        raise ValidationError(f"tree depth {tree.depth()} exceeds log_(20/19)(n) bound {depth_bound}")
    for node in tree.root.preorder():
        verts = np.asarray(node.vertices)
        if node.is_leaf:
            if verts.size > tree.leaf_cutoff:
                raise ValidationError(
                    f"leaf has {verts.size} vertices > leaf cutoff {tree.leaf_cutoff}")
            continue
        sep = np.asarray(node.separator)
        v1, v2 = np.asarray(node.left.vertices), np.asarray(node.right.vertices)
        if not np.array_equal(np.union1d(v1, v2), np.sort(verts)):
            raise ValidationError("children do not cover their parent node")
        if not np.array_equal(np.intersect1d(v1, v2), np.sort(sep)):
            raise ValidationError("children overlap outside the separator")
        c1 = np.setdiff1d(v1, sep)
        c2 = np.setdiff1d(v2, sep)
        if max(c1.size, c2.size) > tree.alpha * verts.size:
            raise ValidationError(
                f"separator is unbalanced: max component {max(c1.size, c2.size)}"
                f" > alpha * {verts.size}")
        if sep.size > tree.c0 * math.sqrt(verts.size) * (1 + 1e-9):
            raise ValidationError(
                f"separator of size {sep.size} exceeds c0 * sqrt({verts.size})")
        if g is not None and c1.size and c2.size:
            if _bfs_reaches(g, verts, sep, c1, c2):
                raise ValidationError("BFS from C1 reaches C2 after removing the separator")
    return tree


def _bfs_reaches(g: WeightedGraph, verts, sep, c1, c2):
    """True iff C1 reaches C2 inside the induced subgraph minus the separator."""
    vset = np.zeros(g.n, dtype=np.int8)
    vset[verts] = 1
    vset[sep] = 0
    keep = (vset[g.tails] == 1) & (vset[g.heads] == 1)
    import scipy.sparse as sp

    sub = np.flatnonzero(vset == 1)
    idx = np.searchsorted(sub, g.tails[keep])
    jdx = np.searchsorted(sub, g.heads[keep])
    adj = sp.csr_matrix((np.ones(idx.size), (idx, jdx)), shape=(sub.size, sub.size))
    _, labels = sp.csgraph.connected_components(adj, directed=False)
    l1 = labels[np.searchsorted(sub, c1)]
    l2 = labels[np.searchsorted(sub, c2)]
    return bool(np.isin(l1, l2).any())


# -- file formats ----------------------------------------------------------------


def save_partition(part: Partition, path):
    with open(path, "w") as fh:
        fh.write(f"k {part.k} r {part.r}\n")
        for i, grp in enumerate(part.groups):
            fh.write(f"g {i} " + " ".join(str(int(e)) for e in grp) + "\n")
        for i, b in enumerate(part.boundaries):
            fh.write(f"b {i} " + " ".join(str(int(v)) for v in b) + "\n")


def load_partition(path, g: WeightedGraph, terminals=(), c_div=DEFAULT_C_DIV,
                   c_bdry=DEFAULT_C_BDRY) -> Partition:
    """Parse and validate a partition file (validation is mandatory)."""
    groups = {}
    bdry = {}
    k = r = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts or parts[0] == "c":
                continue
            if parts[0] == "k":
                if len(parts) != 4 or parts[2] != "r":
                    raise ParseError(f"line {lineno}: expected 'k <num_groups> r <r>'")
                k, r = int(parts[1]), int(parts[3])
            elif parts[0] == "g":
                groups[int(parts[1])] = np.array([int(x) for x in parts[2:]], dtype=np.int64)
            elif parts[0] == "b":
                bdry[int(parts[1])] = np.array([int(x) for x in parts[2:]], dtype=np.int64)
            else:
                raise ParseError(f"line {lineno}: unknown record '{parts[0]}'")
    if k is None:
        raise ParseError("missing 'k ... r ...' header")
    if sorted(groups) != list(range(k)):
        raise ParseError(f"expected groups 0..{k - 1}, got {sorted(groups)}")
    glist = [groups[i] for i in range(k)]
    boundaries, interiors = _boundary_sets(g, glist, terminals)
    part = Partition(groups=glist, boundaries=boundaries, interiors=interiors,
                     r=r, n=g.n, m=g.m, terminals=tuple(terminals),
                     c_div=c_div, c_bdry=c_bdry)
    for i in range(k):
        if i in bdry and not np.array_equal(np.sort(bdry[i]), boundaries[i]):
            raise ValidationError(f"boundary set of group {i} does not match its definition")
    validate_partition(part, g)
    return part


def save_septree(tree: SeparatorTree, path):
    with open(path, "w") as fh:
        fh.write(f"c convention {tree.convention} alpha {float(tree.alpha)!r} "
                 f"leaf {tree.leaf_cutoff} c0 {float(tree.c0)!r}\n")
        ids = {}
        for node in tree.root.preorder():
            ids[id(node)] = len(ids)
        for node in tree.root.preorder():
            parent = -1
            for other in tree.root.preorder():
                if not other.is_leaf and (other.left is node or other.right is node):
                    parent = ids[id(other)]
                    break
            fh.write(f"node {ids[id(node)]} {parent} sep "
                     + " ".join(str(int(v)) for v in node.separator)
                     + " verts " + " ".join(str(int(v)) for v in node.vertices) + "\n")


def load_septree(path, g: WeightedGraph | None = None, expected_root=None) -> SeparatorTree:
    """Parse and validate a separator tree file (validation is mandatory)."""
    convention, alpha, leaf_cutoff, c0 = "halved", ALPHA, DEFAULT_LEAF_CUTOFF, None
    records = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "c":
                if "convention" in parts:
                    convention = parts[parts.index("convention") + 1]
                if "alpha" in parts:
                    alpha = float(parts[parts.index("alpha") + 1])
                if "leaf" in parts:
                    leaf_cutoff = int(parts[parts.index("leaf") + 1])
                if "c0" in parts:
                    c0 = float(parts[parts.index("c0") + 1])
                continue
            if parts[0] != "node" or "sep" not in parts or "verts" not in parts:
                raise ParseError(f"line {lineno}: expected 'node <id> <parent> sep ... verts ...'")
            si, vi = parts.index("sep"), parts.index("verts")
            records.append((int(parts[1]), int(parts[2]),
                            np.array([int(x) for x in parts[si + 1:vi]], dtype=np.int64),
                            np.array([int(x) for x in parts[vi + 1:]], dtype=np.int64)))
    if not records:
        raise ParseError("no node records found")
    nodes = {}
    for nid, _parent, sep, verts in records:
        nodes[nid] = SeparatorNode(vertices=np.sort(verts), separator=np.sort(sep))
    root = None
    children = {}
    for nid, parent, _sep, _verts in records:
        if parent < 0:
            if root is not None:
                raise ParseError("multiple root nodes")
            root = nodes[nid]
        else:
            children.setdefault(parent, []).append(nid)
    if root is None:
        raise ParseError("no root node (parent -1) found")
    for parent, kids in children.items():
        if len(kids) != 2:
            raise ParseError(f"node {parent} has {len(kids)} children, expected 2")
        nodes[parent].left = nodes[kids[0]]
        nodes[parent].right = nodes[kids[1]]
    if c0 is None:
        c0 = 1.0
        for node in root.preorder():
            if not node.is_leaf and node.vertices.size:
                c0 = max(c0, node.separator.size / math.sqrt(node.vertices.size))
    tree = SeparatorTree(root=root, alpha=alpha, leaf_cutoff=leaf_cutoff,
                         c0=c0, convention=convention)
    validate_septree(tree, g=g, expected_root=expected_root)
    return tree
