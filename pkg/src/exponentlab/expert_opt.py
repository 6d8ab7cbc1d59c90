"""Expert loss exponent and its maximization over policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .mgf import xi_per_source
from .optim import maximin_simplex, simplex_grid
from .regions import RegionInfimum, RegionSet, build_regions, inf_rate_over_region
from .scenario import Expert, Policy, simplex_vertices_and_center


@dataclass(frozen=True)
class ExpertExponent:
    """``I(x)`` together with the per-``(m, d)`` probability exponents."""

    value: float
    matrix: np.ndarray
    infima: tuple  # infima[m][d] -> RegionInfimum
    rates: np.ndarray

    @property
    def binding(self) -> tuple:
        """The ``(m, d)`` cell attaining the minimum."""
        totals = np.where(np.isfinite(self.rates), self.matrix + self.rates, np.inf)
        m, d = np.unravel_index(int(np.argmin(totals)), totals.shape)
        return int(m), int(d)


def expert_exponent(
    expert: Expert,
    policy: Policy,
    regions: Optional[RegionSet] = None,
    tol: Tolerances = DEFAULT,
) -> ExpertExponent:
    """``I(x) = min_{m, d} inf_{A(d)} phi*_m(., x) + c(m, d)`` over finite rates.

    The full ``M x d`` matrix of region infima is returned, including cells
    whose rate is infinite, since agent 0 needs every entry.
    """
    regions = regions or build_regions(expert.loss, tol)
    rates = regions.rates
    M, D = rates.shape
    infima = tuple(
        tuple(inf_rate_over_region(m, policy, regions, d, tol) for d in range(D)) for m in range(M)
    )
    matrix = np.array([[infima[m][d].value for d in range(D)] for m in range(M)])
    totals = matrix + rates
    finite = np.isfinite(rates)
    value = float(totals[finite].min())
    return ExpertExponent(value, matrix, infima, rates)


@dataclass
class ExpertRun:
    """One alternating run started from ``initial``."""

    initial: Policy
    policy: Policy
    exponent: float
    iterations: int
    converged: bool
    trace: list  # (iteration, weights, I)


@dataclass
class ExpertSolution:
    expert_id: int
    policy: Policy
    exponent: float
    matrix: np.ndarray
    trace: list
    initial_guesses: list
    converged: bool
    runs: list = field(default_factory=list)
    method: str = "alternating"

    @property
    def total_iterations(self) -> int:
        return sum(r.iterations for r in self.runs)


def _policy_lp(expert_rates, ev: ExpertExponent, policy: Policy):
    """Linearize the exponent at the current tilts and solve the maximin LP."""
    intercepts, slopes = [], []
    M, D = expert_rates.shape
    for m in range(M):
        for d in range(D):
            c = expert_rates[m, d]
            inf_md: RegionInfimum = ev.infima[m][d]
            if not math.isfinite(c) or inf_md.unbounded:
                continue
            intercepts.append(float(inf_md.t @ inf_md.z) + c)
            slopes.append(-xi_per_source(policy, m, inf_md.t))
    return maximin_simplex(np.array(intercepts), np.array(slopes))


def _run_alternating(expert, regions, start: Policy, tol: Tolerances) -> ExpertRun:
    rates = regions.rates
    policy = start
    ev = expert_exponent(expert, policy, regions, tol)
    trace = [(0, policy.weights.copy(), ev.value)]
    for it in range(1, tol.outer_max_iter + 1):
        weights, _ = _policy_lp(rates, ev, policy)
        new = policy.with_weights(weights)
        ev = expert_exponent(expert, new, regions, tol)
        trace.append((it, new.weights.copy(), ev.value))
        step = float(np.max(np.abs(new.weights - policy.weights)))
        policy = new
        if step <= tol.policy_change:
            return ExpertRun(start, policy, ev.value, it, True, trace)
    return ExpertRun(start, policy, ev.value, tol.outer_max_iter, False, trace)


def optimize_expert_alternating(
    expert: Expert,
    models: Sequence,
    guesses: Optional[Sequence] = None,
    regions: Optional[RegionSet] = None,
    tol: Tolerances = DEFAULT,
) -> ExpertSolution:
    """Alternate between region minimizers and a policy LP, from several starts.

    Parameters
    ----------
    models : source models of the expert, in policy order.
    guesses : initial policies, or weight vectors; defaults to the simplex
        vertices plus the barycenter.
    """
    models = tuple(models)
    regions = regions or build_regions(expert.loss, tol)
    if guesses is None:
        starts = simplex_vertices_and_center(models)
    else:
        starts = [g if isinstance(g, Policy) else Policy(models, g) for g in guesses]
    if not starts:
        raise ValueError("at least one initial guess is required")
    runs = [_run_alternating(expert, regions, s, tol) for s in starts]
    pool = [r for r in runs if r.converged] or runs
    best = max(pool, key=lambda r: r.exponent)
    ev = expert_exponent(expert, best.policy, regions, tol)
    return ExpertSolution(
        expert.id, best.policy, ev.value, ev.matrix, best.trace, starts, best.converged, runs
    )


def optimize_expert_grid(
    expert: Expert,
    models: Sequence,
    step: float = 0.01,
    regions: Optional[RegionSet] = None,
    tol: Tolerances = DEFAULT,
) -> ExpertSolution:
    """Exhaustive search over the simplex grid of spacing ``step``."""
    models = tuple(models)
    if len(models) > 4:
        raise ValueError("grid search supports at most 4 sources")
    if not 0 < step <= 0.5 and len(models) > 1:
        raise ValueError("grid step must lie in (0, 0.5]")
    regions = regions or build_regions(expert.loss, tol)
    points = simplex_grid(len(models), step) if len(models) > 1 else np.ones((1, 1))
    best_val, best_pol, trace = -math.inf, None, []
    for k, w in enumerate(points):
        pol = Policy(models, w)
        val = expert_exponent(expert, pol, regions, tol).value
        trace.append((k, w, val))
        if val > best_val:
            best_val, best_pol = val, pol
    ev = expert_exponent(expert, best_pol, regions, tol)
    return ExpertSolution(expert.id, best_pol, ev.value, ev.matrix, trace, [], True, [], "grid")
