"""Cumulant generating functions of log-likelihood-ratio vectors.

For a source with per-hypothesis laws ``P_0..P_{M-1}`` the LLR vector is
``Z = (log dP_m/dP_0)_{m=1..M-1}``.  ``xi(source, m, t)`` is
``log E_m exp<t, Z>`` and ``phi(m, x, t)`` mixes it over a policy.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .scenario import FiniteSource, GaussianSource, Policy


class _GaussianLlr:
    """``Z = a*y + b`` with ``y ~ N(mean_m, variance)``."""

    def __init__(self, src: GaussianSource):
        mu, var = src.means, src.variance
        self.means = mu
        self.var = var
        self.a = (mu[1:] - mu[0]) / var
        self.b = (mu[0] ** 2 - mu[1:] ** 2) / (2 * var)

    def value_grad_hess(self, m, t):
        ta = t @ self.a
        val = t @ self.b + ta * self.means[m] + 0.5 * self.var * ta * ta
        grad = self.b + self.a * (self.means[m] + self.var * ta)
        hess = self.var * np.outer(self.a, self.a)
        return val, grad, hess

    def value(self, m, t):
        ta = t @ self.a
        return t @ self.b + ta * self.means[m] + 0.5 * self.var * ta * ta

    def mean(self, m):
        return self.a * self.means[m] + self.b


class _FiniteLlr:
    """Finite support: ``Z(y) = log P_m(y) - log P_0(y)``."""

    def __init__(self, src: FiniteSource):
        self.logp = np.log(src.probs)
        self.table = (self.logp[1:] - self.logp[0]).T  # (S, M-1)

    def value_grad_hess(self, m, t):
        w = self.logp[m] + self.table @ t
        val = logsumexp(w)
        p = np.exp(w - val)
        grad = p @ self.table
        centered = self.table - grad
        hess = centered.T @ (p[:, None] * centered)
        return val, grad, hess

    def value(self, m, t):
        return logsumexp(self.logp[m] + self.table @ t)

    def mean(self, m):
        return np.exp(self.logp[m]) @ self.table


@lru_cache(maxsize=None)
def llr_model(src):
    if isinstance(src, GaussianSource):
        return _GaussianLlr(src)
    if isinstance(src, FiniteSource):
        return _FiniteLlr(src)
    raise TypeError(f"unsupported source {src!r}")


def _vec(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float))


def xi(src, m: int, t) -> float:
    """Log-MGF of the source's LLR vector under hypothesis ``m``."""
    return float(llr_model(src).value(m, _vec(t)))


def xi_per_source(policy: Policy, m: int, t) -> np.ndarray:
    """``xi`` of every source of ``policy`` at the same tilt."""
    t = _vec(t)
    return np.array([llr_model(s).value(m, t) for s in policy.sources])


def phi(m: int, policy: Policy, t) -> float:
    """Policy-weighted log-MGF ``sum_g x_g xi(g, m, t)``."""
    return float(policy.weights @ xi_per_source(policy, m, t))


def phi_grad_hess(m: int, policy: Policy, t):
    """Value, gradient and Hessian of ``phi`` in ``t``.

    Sources with zero weight are skipped.
    """
    t = _vec(t)
    dim = t.shape[0]
    val, grad, hess = 0.0, np.zeros(dim), np.zeros((dim, dim))
    for w, src in zip(policy.weights, policy.sources):
        if w == 0:
            continue
        v, g, h = llr_model(src).value_grad_hess(m, t)
        val += w * v
        grad += w * g
        hess += w * h
    return float(val), grad, hess


def mean_llr(m: int, policy: Policy) -> np.ndarray:
    """Expected LLR vector under hypothesis ``m``; the zero of ``phi*``."""
    return sum(w * llr_model(s).mean(m) for w, s in zip(policy.weights, policy.sources))


def pair_direction(i: int, j: int, M: int) -> np.ndarray:
    """Direction ``e_j - e_i`` in LLR coordinates, with ``e_0 = 0``."""
    u = np.zeros(M - 1)
    if j > 0:
        u[j - 1] += 1.0
    if i > 0:
        u[i - 1] -= 1.0
    return u


def pairwise_log_moment(src, i: int, j: int, s: float) -> float:
    """``log E_i[(dP_j/dP_i)^s]`` for a single source."""
    return xi(src, i, s * pair_direction(i, j, src.M))


def lambda_ij(i: int, j: int, policy: Policy, s: float) -> float:
    """Pairwise log-moment ``sum_g x_g log E_i[(l_ji)^s]``."""
    M = policy.sources[0].M
    return phi(i, policy, s * pair_direction(i, j, M))


def lambda_ij_derivs(i: int, j: int, policy: Policy, s: float):
    """``(Lambda, Lambda', Lambda'')`` at ``s``."""
    M = policy.sources[0].M
    u = pair_direction(i, j, M)
    val, g, h = phi_grad_hess(i, policy, s * u)
    return val, float(g @ u), float(u @ h @ u)


def lambda_ij_per_source(i: int, j: int, policy: Policy, s: float) -> np.ndarray:
    M = policy.sources[0].M
    return xi_per_source(policy, i, s * pair_direction(i, j, M))
