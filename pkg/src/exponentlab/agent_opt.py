"""Agent-0 loss exponents, policy optimization and expert selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .fenchel import lambda_star_tail
from .mgf import lambda_ij, lambda_ij_per_source
from .optim import golden_section_max, maximin_simplex
from .scenario import Policy, Scenario, simplex_vertices_and_center


class PreconditionError(ValueError):
    """Raised when an analysis is requested outside its hypotheses."""


@dataclass(frozen=True)
class PairTerm:
    """Inner maximum over ``s`` for one pair and one expert decision tuple."""

    i: int
    j: int
    decision: tuple
    value: float
    s: float
    weight_i: float  # q * inf-term + c0(i)
    weight_j: float


@dataclass(frozen=True)
class AgentExponent:
    expert_id: int
    policy: Policy
    value: float
    terms: tuple
    flavor: str

    @property
    def binding(self) -> Optional[PairTerm]:
        finite = [t for t in self.terms if math.isfinite(t.value)]
        return min(finite, key=lambda t: t.value) if finite else None


def _inner_max(a_i, a_j, i, j, policy, tol):
    """``max_{s in [0,1]} (1-s) a_i + s a_j - Lambda_ij(s, x0)``."""
    if math.isinf(a_i) or math.isinf(a_j):
        return math.inf, math.nan
    s, val = golden_section_max(
        lambda s: (1 - s) * a_i + s * a_j - lambda_ij(i, j, policy, s), 0.0, 1.0, tol.golden
    )
    return val, s


def _exponent(policy, c0, weights_by_decision, flavor, expert_id, tol) -> AgentExponent:
    """Shared core: ``weights_by_decision`` maps a decision tuple to per-hypothesis
    expert weights ``sum_k q_k inf_{A_k(p_k)} phi*_m``."""
    c0 = np.asarray(c0, dtype=float)
    M = len(c0)
    terms = []
    for dec, w in weights_by_decision:
        for i, j in itertools.combinations(range(M), 2):
            a_i, a_j = w[i] + c0[i], w[j] + c0[j]
            val, s = _inner_max(a_i, a_j, i, j, policy, tol)
            terms.append(PairTerm(i, j, dec, val, s, a_i, a_j))
    finite = [t.value for t in terms if math.isfinite(t.value)]
    value = min(finite) if finite else math.inf
    return AgentExponent(expert_id, policy, value, tuple(terms), flavor)


def agent_exponent(
    policy: Policy,
    c0,
    matrix: np.ndarray,
    q: float,
    expert_id: int = 0,
    tol: Tolerances = DEFAULT,
) -> AgentExponent:
    """Loss exponent of agent 0 consulting one expert.

    Parameters
    ----------
    c0 : agent-0 decay rates ``c_0(m)``.
    matrix : expert region infima ``inf_{A(d)} phi*_m`` at the expert's policy,
        shape ``(M, d)``.
    q : ratio of expert to agent-0 sample sizes; ``q = 0`` ignores the expert.
    """
    matrix = np.asarray(matrix, dtype=float)
    if q == 0:
        return no_expert_exponent(policy, c0, tol)
    per_decision = [((d,), q * matrix[:, d]) for d in range(matrix.shape[1])]
    flavor = "bayesian-01" if not np.any(c0) else "general"
    return _exponent(policy, c0, per_decision, flavor, expert_id, tol)


def no_expert_exponent(policy: Policy, c0, tol: Tolerances = DEFAULT) -> AgentExponent:
    M = len(c0)
    return _exponent(policy, c0, [((), np.zeros(M))], "no-expert", 0, tol)


def agent_exponent_01(policy: Policy, matrix, q: float, expert_id: int = 0, tol=DEFAULT):
    """Agent-0 exponent under the 0-1 loss (all ``c_0(m) = 0``)."""
    M = np.asarray(matrix).shape[0]
    res = agent_exponent(policy, np.zeros(M), matrix, q, expert_id, tol)
    return AgentExponent(res.expert_id, res.policy, res.value, res.terms, "bayesian-01")


def agent_exponent_multi(
    policy: Policy,
    c0,
    experts: Sequence,
    tol: Tolerances = DEFAULT,
) -> AgentExponent:
    """Agent 0 consulting several experts at once.

    ``experts`` is a sequence of ``(matrix, q)`` pairs; every tuple of their
    decisions is enumerated.
    """
    if not experts:
        raise ValueError("at least one expert is required")
    sizes = [np.asarray(mat).shape[1] for mat, _ in experts]
    if math.prod(sizes) > tol.enumeration_cap:
        raise PreconditionError(f"{math.prod(sizes)} decision tuples exceed the cap")
    per_tuple = []
    for dec in itertools.product(*(range(n) for n in sizes)):
        w = sum(q * np.asarray(mat, dtype=float)[:, p] for (mat, q), p in zip(experts, dec))
        per_tuple.append((dec, w))
    return _exponent(policy, c0, per_tuple, "multi-expert", -1, tol)


# ----------------------------------------------------------- optimization


@dataclass
class AgentRun:
    initial: Policy
    policy: Policy
    exponent: AgentExponent
    iterations: int
    converged: bool
    trace: list


@dataclass
class AgentSolution:
    policy: Policy
    exponent: AgentExponent
    converged: bool
    runs: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.exponent.value

    @property
    def trace(self) -> list:
        return max(self.runs, key=lambda r: r.exponent.value).trace if self.runs else []


def _agent_lp(ex: AgentExponent):
    intercepts, slopes = [], []
    for t in ex.terms:
        if not math.isfinite(t.value):
            continue
        intercepts.append((1 - t.s) * t.weight_i + t.s * t.weight_j)
        slopes.append(-lambda_ij_per_source(t.i, t.j, ex.policy, t.s))
    return maximin_simplex(np.array(intercepts), np.array(slopes))


def optimize_agent_policy(
    models: Sequence,
    c0,
    matrix,
    q: float,
    guesses: Optional[Sequence] = None,
    expert_id: int = 0,
    tol: Tolerances = DEFAULT,
) -> AgentSolution:
    """Alternate golden-section ``s`` steps with a policy LP, from several starts."""
    models = tuple(models)
    starts = (
        simplex_vertices_and_center(models)
        if guesses is None
        else [g if isinstance(g, Policy) else Policy(models, g) for g in guesses]
    )
    runs = []
    for start in starts:
        policy = start
        ex = agent_exponent(policy, c0, matrix, q, expert_id, tol)
        trace = [(0, policy.weights.copy(), ex.value)]
        converged, it = False, 0
        for it in range(1, tol.outer_max_iter + 1):
            if len(models) == 1:
                converged = True
                break
            weights, _ = _agent_lp(ex)
            new = policy.with_weights(weights)
            step = float(np.max(np.abs(new.weights - policy.weights)))
            policy = new
            ex = agent_exponent(policy, c0, matrix, q, expert_id, tol)
            trace.append((it, policy.weights.copy(), ex.value))
            if step <= tol.policy_change:
                converged = True
                break
        runs.append(AgentRun(start, policy, ex, it, converged, trace))
    pool = [r for r in runs if r.converged] or runs
    best = max(pool, key=lambda r: r.exponent.value)
    return AgentSolution(best.policy, best.exponent, best.converged, runs)


# ------------------------------------------------------------- selection


@dataclass
class SelectionRow:
    expert_id: int
    expert_policy: Policy
    agent_policy: Policy
    value: float
    value_01: float
    baseline: float
    baseline_01: float
    iterations: int
    converged: bool

    @property
    def audit(self) -> dict:
        """Slack of each link of the dominance chain (nonnegative when it holds)."""
        return {
            "general_vs_01": float(self.value - self.value_01),
            "expert_vs_none": float(self.value - self.baseline),
            "none_vs_none01": float(self.baseline - self.baseline_01),
        }


@dataclass
class SelectionReport:
    rows: list
    chosen: int
    fixed_policy: Optional[Policy] = None

    def row(self, k: int) -> SelectionRow:
        return next(r for r in self.rows if r.expert_id == k)

    def audit_passes(self, slack: float = 1e-9) -> bool:
        return all(v >= -slack for r in self.rows for v in r.audit.values())


def choose_expert(
    scenario: Scenario,
    expert_solutions: dict,
    fixed_weights=None,
    tol: Tolerances = DEFAULT,
) -> SelectionReport:
    """Rank experts by the agent-0 exponent they enable.

    Parameters
    ----------
    expert_solutions : maps expert id to an object with ``policy`` and
        ``matrix`` attributes (an :class:`ExpertSolution`).
    fixed_weights : evaluate every expert at this agent-0 policy instead of
        optimizing it.
    """
    models = scenario.models(0)
    c0 = scenario.agent0.rates
    M = scenario.M
    rows = []
    for e in scenario.experts:
        sol = expert_solutions[e.id]
        if fixed_weights is not None:
            pol = Policy(models, fixed_weights)
            ex = agent_exponent(pol, c0, sol.matrix, e.q, e.id, tol)
            iters, ok = 0, True
        else:
            opt = optimize_agent_policy(models, c0, sol.matrix, e.q, expert_id=e.id, tol=tol)
            pol, ex = opt.policy, opt.exponent
            best_run = max(opt.runs, key=lambda r: r.exponent.value)
            iters, ok = best_run.iterations, opt.converged
        rows.append(
            SelectionRow(
                e.id,
                sol.policy,
                pol,
                ex.value,
                agent_exponent_01(pol, sol.matrix, e.q, e.id, tol).value,
                no_expert_exponent(pol, c0, tol).value,
                no_expert_exponent(pol, np.zeros(M), tol).value,
                iters,
                ok,
            )
        )
    chosen = max(rows, key=lambda r: r.value).expert_id
    fixed = Policy(models, fixed_weights) if fixed_weights is not None else None
    return SelectionReport(rows, chosen, fixed)


# ------------------------------------------------- special-case analyses


def loss_augmented_lambda(i: int, j: int, policy: Policy, c0, s: float) -> float:
    """``Lambda_ij(s, x0) - (1-s) c0(i) - s c0(j)``."""
    return lambda_ij(i, j, policy, s) - (1 - s) * c0[i] - s * c0[j]


def is_hypothesis_loss_neutral(policy: Policy, c0, tol: float = 1e-6, golden: float = 1e-10):
    """Whether ``min_s`` of the loss-augmented log-MGF is the same for every pair.

    Returns
    -------
    (flag, {(i, j): minimum})
    """
    M = len(c0)
    mins = {}
    for i, j in itertools.combinations(range(M), 2):
        _, neg = golden_section_max(lambda s: -loss_augmented_lambda(i, j, policy, c0, s), 0, 1, golden)
        mins[(i, j)] = -neg
    vals = list(mins.values())
    return bool(max(vals) - min(vals) <= tol), mins


@dataclass(frozen=True)
class IgnoredExpertCheck:
    with_expert: float
    without_expert: float
    neutral: bool
    equal: bool

    @property
    def gap(self) -> float:
        return self.with_expert - self.without_expert


def check_ignored_expert(policy: Policy, c0, matrix, q: float, tol: float = 1e-6) -> IgnoredExpertCheck:
    """Compare the exponent with a coarse expert (fewer decisions than hypotheses)
    against the exponent without any expert, at the same agent-0 policy."""
    matrix = np.asarray(matrix, dtype=float)
    M, D = matrix.shape
    if D >= M:
        raise PreconditionError("expert must have fewer decisions than hypotheses")
    neutral, _ = is_hypothesis_loss_neutral(policy, c0, tol)
    lhs = agent_exponent(policy, c0, matrix, q).value
    rhs = no_expert_exponent(policy, c0).value
    return IgnoredExpertCheck(float(lhs), float(rhs), bool(neutral), bool(abs(lhs - rhs) <= tol))


@dataclass(frozen=True)
class OrderedPairTerm:
    i: int
    j: int
    rate: float  # one-sided pairwise transform at the expert's rate gap
    value: float
    s: float


def agent_exponent_pairwise(
    expert_rates,
    expert_policy: Policy,
    agent_policy: Policy,
    c0,
    q: float,
    tol: Tolerances = DEFAULT,
):
    """Agent-0 exponent for an expert with a square, row-constant loss.

    Each expert region infimum is replaced by the one-sided pairwise transform
    at the rate gap ``c(i) - c(j)``; ordered pairs are enumerated.

    Returns
    -------
    (value, tuple[OrderedPairTerm])
    """
    c = np.asarray(expert_rates, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    M = len(c)
    table = []
    for i, j in itertools.permutations(range(M), 2):
        rate = lambda_star_tail(j, i, expert_policy, c[i] - c[j], tol).value
        if math.isinf(rate):
            table.append(OrderedPairTerm(i, j, rate, math.inf, math.nan))
            continue
        s, val = golden_section_max(
            lambda s: s * q * rate - loss_augmented_lambda(i, j, agent_policy, c0, s),
            0.0,
            1.0,
            tol.golden,
        )
        table.append(OrderedPairTerm(i, j, rate, val, s))
    finite = [t.value for t in table if math.isfinite(t.value)]
    return (min(finite) if finite else math.inf), tuple(table)
