"""Decision functionals and asymptotic decision regions of an expert.

Coordinates: ``z`` lives in ``R^{M-1}`` and ``z0 = (0, z)`` prepends the
reference hypothesis.  A decision region ``A(d) = {z : f(z0, d) < 0}`` is a
finite union of polyhedra ``{z : G z >= h}``, one per sequence of maximizing
hypotheses ``(m_0, ..., m_{d-1})``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .config import DEFAULT, Tolerances
from .fenchel import damped_solve
from .mgf import mean_llr, phi_grad_hess
from .scenario import Expert, LossSpec, Policy


class EnumerationError(RuntimeError):
    """Raised when the number of sequences would exceed the enumeration cap."""


def _rates(loss: Union[LossSpec, Expert, np.ndarray]) -> np.ndarray:
    if isinstance(loss, Expert):
        return loss.loss.rates
    if isinstance(loss, LossSpec):
        return loss.rates
    return np.asarray(loss, dtype=float)


def lift(z) -> np.ndarray:
    """``z0 = (0, z)``."""
    return np.concatenate([[0.0], np.asarray(z, dtype=float)])


def f_tilde(loss, z0, d: int) -> float:
    """``max_m z0[m] - c(m, d)``; infinite rates drop out as ``-inf``."""
    return float(np.max(np.asarray(z0, dtype=float) - _rates(loss)[:, d]))


def f(loss, z0, d: int) -> float:
    """``f_tilde(d) - min_{d' != d} f_tilde(d')``; ``A(d)`` is where this is negative."""
    c = _rates(loss)
    if c.shape[1] < 2:
        raise ValueError("need at least two decisions")
    vals = np.max(np.asarray(z0, dtype=float)[:, None] - c, axis=0)
    others = np.delete(vals, d)
    return float(vals[d] - others.min())


def concrete_log_losses(loss, n: float) -> np.ndarray:
    """Log loss values ``-n c(m, d)``, kept in log form so large ``n`` cannot underflow."""
    return -n * _rates(loss)


def g_tilde(log_losses: np.ndarray, priors, z0, d: int, n: float) -> float:
    """``(1/n) log sum_m pi_m C(m, d, n) exp(n z0[m])`` given ``log C``."""
    with np.errstate(divide="ignore"):
        terms = np.log(priors) + log_losses[:, d] + n * np.asarray(z0, dtype=float)
    return float(logsumexp(terms) / n)


def g(log_losses: np.ndarray, priors, z0, d: int, n: float) -> float:
    vals = [g_tilde(log_losses, priors, z0, e, n) for e in range(log_losses.shape[1])]
    return vals[d] - min(v for e, v in enumerate(vals) if e != d)


@dataclass(frozen=True)
class Halfspace:
    """``z0[i] - z0[j] >= rhs`` where ``rhs = c(i, p) - c(j, q)``."""

    i: int
    p: int
    j: int
    q: int
    rhs: float

    def row(self, M: int) -> np.ndarray:
        r = np.zeros(M)
        r[self.i] += 1.0
        r[self.j] -= 1.0
        return r[1:]


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``{z : G z >= h}`` with unit-norm rows.

    ``sequences`` lists the maximizer sequences whose cells were merged into
    this piece; ``center`` is a Chebyshev-like interior point.
    """

    G: np.ndarray
    h: np.ndarray
    sequences: tuple
    center: np.ndarray
    radius: float

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    def contains(self, z, margin: float = 0.0) -> bool:
        """Strict interior membership ``G z > h + margin``."""
        if len(self.h) == 0:
            return True
        return bool(np.all(self.G @ np.asarray(z, dtype=float) > self.h + margin))

    def to_dict(self) -> dict:
        return {
            "sequences": [list(s) for s in self.sequences],
            "rows": self.G.tolist(),
            "rhs": self.h.tolist(),
            "center": self.center.tolist(),
        }


@dataclass(frozen=True, eq=False)
class RegionSet:
    rates: np.ndarray
    regions: tuple  # regions[d] -> tuple[Polyhedron]

    @property
    def M(self) -> int:
        return self.rates.shape[0]

    @property
    def d(self) -> int:
        return self.rates.shape[1]

    def decision_of(self, z, margin: float = 0.0) -> Optional[int]:
        """Decision whose region strictly contains ``z``, or ``None`` on boundaries."""
        for d, pieces in enumerate(self.regions):
            if any(p.contains(z, margin) for p in pieces):
                return d
        return None

    def to_dict(self) -> dict:
        return {"decisions": [[p.to_dict() for p in pieces] for pieces in self.regions]}


# ---------------------------------------------------------------- LP helpers


def _lp_min(cost, G, h):
    """``min cost @ z`` s.t. ``G z >= h``; returns value, ``-inf`` or ``None`` (infeasible)."""
    dim = len(cost)
    if len(h) == 0:
        return 0.0 if not np.any(cost) else -math.inf
    res = linprog(cost, A_ub=-G, b_ub=-h, bounds=[(None, None)] * dim, method="highs")
    if res.status == 2:
        return None
    if res.status == 3:
        return -math.inf
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)


def _chebyshev(G, h):
    """Largest ball (radius capped at 1) inside ``{G z >= h}`` for unit-norm rows."""
    dim = G.shape[1]
    if len(h) == 0:
        return np.zeros(dim), 1.0
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-G, np.ones((len(h), 1))])
    bounds = [(None, None)] * dim + [(None, 1.0)]
    res = linprog(cost, A_ub=a_ub, b_ub=-h, bounds=bounds, method="highs")
    if res.status != 0:
        return None, -math.inf
    return res.x[:dim], float(res.x[-1])


def _normalize(rows, rhs):
    """Scale rows to unit norm and drop exact duplicates, keeping the tightest."""
    best = {}
    for g_row, b in zip(rows, rhs):
        nrm = np.linalg.norm(g_row)
        g_row, b = g_row / nrm, b / nrm
        key = tuple(np.round(g_row, 12))
        if key not in best or b > best[key][1]:
            best[key] = (g_row, b)
    if not best:
        return np.zeros((0, len(rows[0]) if rows else 0)), np.zeros(0)
    keys = sorted(best)
    return np.array([best[k][0] for k in keys]), np.array([best[k][1] for k in keys])


def _drop_redundant(G, h, slack):
    keep = list(range(len(h)))
    for r in range(len(h)):
        others = [k for k in keep if k != r]
        low = _lp_min(G[r], G[others], h[others]) if others else -math.inf
        if low is not None and low >= h[r] - slack:
            keep = others
    return G[keep], h[keep]


def _valid_for(g_row, b, G, h, slack) -> bool:
    low = _lp_min(g_row, G, h)
    return low is not None and low >= b - slack


def _try_merge(a: Polyhedron, b: Polyhedron, slack: float) -> Optional[Polyhedron]:
    """Envelope test: return the union as one polyhedron if it is convex."""
    dim = a.dim
    keep_a = [r for r in range(len(a.h)) if _valid_for(a.G[r], a.h[r], b.G, b.h, slack)]
    keep_b = [r for r in range(len(b.h)) if _valid_for(b.G[r], b.h[r], a.G, a.h, slack)]
    env_G = np.vstack([a.G[keep_a], b.G[keep_b]]) if keep_a or keep_b else np.zeros((0, dim))
    env_h = np.concatenate([a.h[keep_a], b.h[keep_b]])
    # every point of env outside a must lie in b, and vice versa
    for poly, other, kept in ((a, b, keep_a), (b, a, keep_b)):
        for r in range(len(poly.h)):
            if r in kept:
                continue
            piece_G = np.vstack([env_G, -poly.G[r]])
            piece_h = np.concatenate([env_h, [-poly.h[r]]])
            for s in range(len(other.h)):
                low = _lp_min(other.G[s], piece_G, piece_h)
                if low is not None and low < other.h[s] - slack:
                    return None
    G, h = _normalize(list(env_G), list(env_h)) if len(env_h) else (env_G, env_h)
    G, h = _drop_redundant(G, h, slack)
    center, radius = _chebyshev(G, h)
    return Polyhedron(G, h, a.sequences + b.sequences, center, radius)


def _merge_all(pieces: list, slack: float) -> list:
    merged = True
    while merged:
        merged = False
        for u, v in itertools.combinations(range(len(pieces)), 2):
            union = _try_merge(pieces[u], pieces[v], slack)
            if union is not None:
                pieces = [p for k, p in enumerate(pieces) if k not in (u, v)]
                pieces.insert(u, union)
                merged = True
                break
    return pieces


def cell_halfspaces(rates: np.ndarray, seq, d: int):
    """Halfspaces of the cell for sequence ``seq`` in ``A(d)``.

    Returns ``None`` when the cell is empty for structural reasons (an
    infinite ``c(m_p, p)`` or a violated constant constraint).
    """
    M, D = rates.shape
    out = []
    for p, mp in enumerate(seq):
        if math.isinf(rates[mp, p]):
            return None
        for i in range(M):
            if i != mp and math.isfinite(rates[i, p]):
                out.append(Halfspace(mp, p, i, p, rates[mp, p] - rates[i, p]))
    for p, mp in enumerate(seq):
        if p == d:
            continue
        rhs = rates[mp, p] - rates[seq[d], d]
        if mp == seq[d]:
            # constant constraint 0 > rhs (strict: ties belong to no region)
            if not rhs < 0:
                return None
            continue
        out.append(Halfspace(mp, p, seq[d], d, rhs))
    return out


def build_regions(loss, tol: Tolerances = DEFAULT, merge: bool = True) -> RegionSet:
    """Enumerate, prune and merge the polyhedral pieces of every ``A(d)``."""
    rates = np.array(_rates(loss), dtype=float)
    M, D = rates.shape
    if D < 2:
        raise ValueError("decision space must have at least two decisions")
    if M**D > tol.enumeration_cap:
        raise EnumerationError(f"{M}^{D} sequences exceed the cap {tol.enumeration_cap}")
    if M == 1:
        raise ValueError("need at least two hypotheses")
    regions = []
    for d in range(D):
        pieces, seen = [], set()
        for seq in itertools.product(range(M), repeat=D):
            hs = cell_halfspaces(rates, seq, d)
            if hs is None:
                continue
            rows = [hsp.row(M) for hsp in hs]
            rhs = [hsp.rhs for hsp in hs]
            G, h = _normalize(rows, rhs) if rows else (np.zeros((0, M - 1)), np.zeros(0))
            center, radius = _chebyshev(G, h)
            if radius <= tol.lp_slack:
                continue
            G, h = _drop_redundant(G, h, tol.lp_slack)
            key = (tuple(map(tuple, np.round(G, 12))), tuple(np.round(h, 12)))
            if key in seen:
                continue
            seen.add(key)
            pieces.append(Polyhedron(G, h, (tuple(seq),), center, radius))
        if merge:
            pieces = _merge_all(pieces, tol.lp_slack)
        regions.append(tuple(pieces))
    return RegionSet(rates, tuple(regions))


# ------------------------------------------------------- region infimum


@dataclass(frozen=True)
class RegionInfimum:
    """``inf_{z in closure A(d)} phi*_m(z, x)`` with its minimizer and tilt.

    ``gap`` is the duality gap ``<lambda, G z - h>`` of the piece that attains
    the minimum; ``piece`` is its index (``None`` when the mean lies inside).
    """

    value: float
    z: np.ndarray
    t: np.ndarray
    piece: Optional[int]
    converged: bool
    gap: float
    iterations: int

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.value)


def _dual_value(m, policy, G, h, lam):
    t = G.T @ lam
    val, grad, hess = phi_grad_hess(m, policy, t)
    return lam @ h - val, grad, hess, t


def polyhedron_infimum(m: int, policy: Policy, poly: Polyhedron, tol: Tolerances = DEFAULT):
    """Minimize ``phi*_m`` over a closed polyhedron through its Lagrangian dual.

    The dual ``max_{lam >= 0} <lam, h> - phi_m(G^T lam)`` is smooth and
    concave; it is solved by projected Newton steps with an epsilon-active
    set and Armijo backtracking along the projection arc.
    """
    G, h = poly.G, poly.h
    if len(h) == 0:
        z = mean_llr(m, policy)
        return RegionInfimum(0.0, z, np.zeros_like(z), None, True, 0.0, 0)
    lam = np.zeros(len(h))
    dual, z, hess, t = _dual_value(m, policy, G, h, lam)
    converged = False
    it = 0
    for it in range(1, tol.max_iter + 1):
        grad = h - G @ z
        proj = np.where(lam > 0, grad, np.maximum(grad, 0.0))
        pg = float(np.max(np.abs(proj)))
        if pg <= tol.residual:
            converged = True
            break
        if dual > tol.unbounded_value or np.linalg.norm(lam) > tol.unbounded_norm:
            return RegionInfimum(math.inf, z, t, None, True, 0.0, it)
        eps = min(1e-8, pg)
        free = ~((lam <= eps) & (grad < 0))
        step = np.zeros_like(lam)
        if free.any():
            gf = G[free]
            step[free] = damped_solve(gf @ hess @ gf.T, grad[free], tol.max_condition)
        step[~free] = grad[~free]
        alpha, accepted = 1.0, False
        while alpha > 1e-14:
            lam_new = np.maximum(lam + alpha * step, 0.0)
            cand = _dual_value(m, policy, G, h, lam_new)
            if cand[0] >= dual + 1e-4 * grad @ (lam_new - lam):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # fall back to a projected gradient step
            alpha = 1.0
            while alpha > 1e-14:
                lam_new = np.maximum(lam + alpha * grad, 0.0)
                cand = _dual_value(m, policy, G, h, lam_new)
                if cand[0] >= dual + 1e-4 * grad @ (lam_new - lam):
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            break
        lam = lam_new
        dual, z, hess, t = cand
    gap = float(lam @ (G @ z - h))
    return RegionInfimum(max(dual, 0.0), z, t, None, converged, gap, it)


def inf_rate_over_region(
    m: int, policy: Policy, regions: RegionSet, d: int, tol: Tolerances = DEFAULT
) -> RegionInfimum:
    """``inf`` of ``phi*_m(., x)`` over the decision region ``A(d)``.

    Returns 0 at the mean LLR vector when it lies strictly inside ``A(d)``,
    ``inf`` when no piece is reachable by any tilt.
    """
    mean = mean_llr(m, policy)
    if f(regions.rates, lift(mean), d) < -tol.membership:
        return RegionInfimum(0.0, mean, np.zeros_like(mean), None, True, 0.0, 0)
    best = None
    for idx, poly in enumerate(regions.regions[d]):
        res = polyhedron_infimum(m, policy, poly, tol)
        if best is None or res.value < best.value:
            best = RegionInfimum(res.value, res.z, res.t, idx, res.converged, res.gap, res.iterations)
    if best is None:
        return RegionInfimum(math.inf, mean, np.zeros_like(mean), None, True, 0.0, 0)
    return best
