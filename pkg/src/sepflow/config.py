"""Run configuration, constant overrides, and deterministic seed substreams."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import GraphError

MASK63 = (1 << 63) - 1


def substream(seed: int, *tags) -> int:
    """Deterministic 63-bit child seed for a named substream.

    Tags may be ints or short strings; results do not depend on scheduling,
    which keeps threaded runs reproducible.
    """
    ints = []
    for t in tags:
        if isinstance(t, str):
            ints.extend(t.encode())
        else:
            ints.append(int(t) & MASK63)
    ss = np.random.SeedSequence(entropy=(int(seed) & MASK63, *ints))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & MASK63


def thread_count(default=1):
    try:
        return max(int(os.environ.get("SEPFLOW_THREADS", default)), 1)
    except ValueError:
        return default


@dataclass
class RunConfig:
    """Knobs for the end-to-end solver; the defaults match the library constants."""

    eps: float = 0.1
    r: int = 32
    seed: int = 0
    strict_paper: bool = False

    # validation thresholds
    c_div: float = 4.0
    c_bdry: float = 8.0
    leaf_cutoff: int = 16

    # sparsification
    c_s: float = 48.0
    sparsifier_method: str = "one-step"  # or "recursive"

    # outer oracle loop
    c_w: float = 10.0
    max_outer_iterations: int = 40
    max_probes: int = 16
    probe_slack: float = 1.0 / 3.0  # probe succeeds at value >= (1 - slack*eps) * F
    update_width_floor: float = 1.2  # adaptive update width = max(iterate congestion, floor)
    outer_stagnation_limit: int = 6

    # inner grouped flow
    inner_early_exit_cap: int = 4
    max_inner_iterations: int = 80
    inner_budget_units: int = 200_000  # ~iterations * quotient size per oracle call
    inner_iteration_ceiling: int = 4000

    capacity_ratio_policy: str = "warn"  # or "reject"; capacities with U(u) >> m/eps

    def __post_init__(self):
        if not (0 < self.eps < 0.5):
            raise GraphError("config requires 0 < eps < 1/2")
        if self.r < 4:
            raise GraphError("config requires r >= 4")
        for name in ("c_div", "c_bdry", "c_s", "c_w"):
            if getattr(self, name) <= 0:
                raise GraphError(f"{name} must be positive")
        if self.sparsifier_method not in ("one-step", "recursive"):
            raise GraphError("sparsifier_method must be 'one-step' or 'recursive'")
