"""Extended DIMACS max-flow file I/O.

Header ``p max <n> <m>``; node lines ``n <id> s|t``; arc lines
``a <tail> <head> <capacity>`` read as undirected edges.  Vertex ids are
1-based in files (the DIMACS convention) and 0-based in memory.  An optional
sidecar weights file carries one positive real per edge in arc-line order;
absent weights default to 1.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .graphs import WeightedGraph


def load_dimacs(path, weights_path=None):
    """Parse a DIMACS file; returns (graph, s, t)."""
    n = m = None
    edges = []
    caps = []
    s = t = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts or parts[0] == "c":
                continue
            kind = parts[0]
            if kind == "p":
                if len(parts) != 4 or parts[1] != "max":
                    raise ParseError(f"line {lineno}: expected 'p max <n> <m>'")
                n, m = int(parts[2]), int(parts[3])
            elif kind == "n":
                if len(parts) != 3 or parts[2] not in ("s", "t"):
                    raise ParseError(f"line {lineno}: expected 'n <id> s|t'")
                if parts[2] == "s":
                    s = int(parts[1]) - 1
                else:
                    t = int(parts[1]) - 1
            elif kind == "a":
                if len(parts) != 4:
                    raise ParseError(f"line {lineno}: expected 'a <tail> <head> <capacity>'")
                u, v = int(parts[1]) - 1, int(parts[2]) - 1
                c = float(parts[3])
                if c <= 0:
                    raise ParseError(f"line {lineno}: capacity must be positive")
                edges.append((u, v))
                caps.append(c)
            else:
                raise ParseError(f"line {lineno}: unknown record '{kind}'")
    if n is None:
        raise ParseError("missing 'p max' header")
    if len(edges) != m:
        raise ParseError(f"header declares {m} arcs, file has {len(edges)}")
    weight = None
    if weights_path is not None:
        vals = []
        with open(weights_path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                for tok in raw.split():
                    try:
                        vals.append(float(tok))
                    except ValueError as exc:
                        raise ParseError(f"weights line {lineno}: bad value '{tok}'") from exc
        if len(vals) != len(edges):
            raise ParseError(f"weights file has {len(vals)} entries for {len(edges)} edges")
        weight = np.asarray(vals)
    g = WeightedGraph(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                      capacity=np.asarray(caps), weight=weight)
    return g, s, t


def save_dimacs(g: WeightedGraph, path, s=None, t=None, weights_path=None):
    """Write the graph as extended DIMACS (1-based ids)."""
    with open(path, "w") as fh:
        fh.write(f"p max {g.n} {g.m}\n")
        if s is not None:
            fh.write(f"n {int(s) + 1} s\n")
        if t is not None:
            fh.write(f"n {int(t) + 1} t\n")
        for a, b, c in zip(g.tails, g.heads, g.capacity):
            fh.write(f"a {int(a) + 1} {int(b) + 1} {float(c)!r}\n")
    if weights_path is not None:
        with open(weights_path, "w") as fh:
            for w in g.weight:
                fh.write(f"{float(w)!r}\n")
