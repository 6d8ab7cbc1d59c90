"""Numerical tolerances shared by the solvers."""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # Newton solves of grad(phi)(t) = z and of the region duals
    residual: float = 1e-9
    max_iter: int = 200
    # divergence certificate for +inf transforms
    unbounded_value: float = 1e6
    unbounded_norm: float = 1e6
    # Levenberg damping kicks in above this condition number
    max_condition: float = 1e12
    golden: float = 1e-10
    # strict membership margin for the zero-rate shortcut
    membership: float = 1e-12
    # LP slack used to call a polyhedron nonempty
    lp_slack: float = 1e-9
    policy_change: float = 1e-6
    outer_max_iter: int = 100
    enumeration_cap: int = 10**6


DEFAULT = Tolerances()


def worker_count() -> int:
    """Worker cap from ``EXPONENTLAB_THREADS`` (default 1)."""
    raw = os.environ.get("EXPONENTLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
