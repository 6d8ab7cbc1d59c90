"""Convex conjugates of the log-MGFs and Chernoff information."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT, Tolerances
from .mgf import lambda_ij, lambda_ij_derivs, phi_grad_hess
from .optim import golden_section_max
from .scenario import Policy


@dataclass(frozen=True)
class TransformResult:
    value: float
    argmax: np.ndarray
    converged: bool
    iterations: int
    gradient_residual: float = 0.0

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.value)


def damped_solve(a: np.ndarray, b: np.ndarray, max_condition: float) -> np.ndarray:
    """Solve ``a p = b`` for PSD ``a``, adding Levenberg damping when ill-conditioned."""
    w, v = np.linalg.eigh(a)
    top = max(w[-1], 0.0)
    floor = max(top / max_condition, 1e-14)
    w = np.maximum(w, floor)
    return v @ ((v.T @ b) / w)


def phi_star(m: int, policy: Policy, z, tol: Tolerances = DEFAULT) -> TransformResult:
    """``sup_t <t, z> - phi(m, x, t)`` by damped Newton ascent.

    Returns ``inf`` once the objective or the tilt exceeds the unboundedness
    thresholds in ``tol``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    t = np.zeros_like(z)
    val, g, h = phi_grad_hess(m, policy, t)
    obj = -val
    for it in range(1, tol.max_iter + 1):
        r = z - g
        if np.max(np.abs(r)) <= tol.residual:
            return TransformResult(obj, t, True, it - 1, float(np.max(np.abs(r))))
        if obj > tol.unbounded_value or np.linalg.norm(t) > tol.unbounded_norm:
            return TransformResult(math.inf, t, True, it - 1, float(np.max(np.abs(r))))
        step = damped_solve(h, r, tol.max_condition)
        slope = r @ step
        alpha = 1.0
        while True:
            t_new = t + alpha * step
            val_new, g_new, h_new = phi_grad_hess(m, policy, t_new)
            obj_new = t_new @ z - val_new
            if obj_new >= obj + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        if obj_new <= obj and alpha < 1e-12:
            return TransformResult(obj, t, False, it, float(np.max(np.abs(r))))
        t, g, h, obj = t_new, g_new, h_new, obj_new
    return TransformResult(obj, t, False, tol.max_iter, float(np.max(np.abs(z - g))))


def lambda_star(i: int, j: int, policy: Policy, z: float, tol: Tolerances = DEFAULT) -> TransformResult:
    """``sup_s s*z - Lambda_ij(s, x)`` over the real line."""
    d0 = lambda_ij_derivs(i, j, policy, 0.0)[1]
    if abs(d0 - z) <= tol.residual:
        return TransformResult(0.0, np.array([0.0]), True, 0)
    sign = 1.0 if z > d0 else -1.0
    # bracket the root of Lambda'(s) = z on the side pointed to by sign
    lo, hi = 0.0, sign
    it = 0
    while sign * (lambda_ij_derivs(i, j, policy, hi)[1] - z) < 0:
        lo, hi = hi, 2 * hi
        it += 1
        if abs(hi) > tol.unbounded_norm:
            value = hi * z - lambda_ij(i, j, policy, hi)
            if value > tol.unbounded_value:
                return TransformResult(math.inf, np.array([hi]), True, it)
            return TransformResult(value, np.array([hi]), False, it)
    a, b = min(lo, hi), max(lo, hi)
    s = 0.5 * (a + b)
    for it in range(it, it + tol.max_iter):
        _, d1, d2 = lambda_ij_derivs(i, j, policy, s)
        r = d1 - z
        if abs(r) <= tol.residual:
            break
        if r > 0:
            b = s
        else:
            a = s
        s_new = s - r / d2 if d2 > 0 else None
        s = s_new if s_new is not None and a < s_new < b else 0.5 * (a + b)
        if b - a < 1e-15:
            break
    value = s * z - lambda_ij(i, j, policy, s)
    ok = abs(r) <= tol.residual or b - a < 1e-15
    return TransformResult(max(value, 0.0), np.array([s]), ok, it, abs(r))


def lambda_star_tail(i: int, j: int, policy: Policy, z: float, tol: Tolerances = DEFAULT) -> TransformResult:
    """One-sided transform ``sup_{s >= 0} s*z - Lambda_ij(s, x)``.

    It vanishes below the mean of the pairwise LLR, so it is the large-deviation
    rate of the upper tail event.
    """
    d0 = lambda_ij_derivs(i, j, policy, 0.0)[1]
    if z <= d0:
        return TransformResult(0.0, np.array([0.0]), True, 0)
    return lambda_star(i, j, policy, z, tol)


def chernoff_info(i: int, j: int, policy: Policy, tol: Tolerances = DEFAULT):
    """``-min_{s in [0,1]} Lambda_ij(s, x)`` and the minimizing ``s``."""
    s, neg = golden_section_max(lambda s: -lambda_ij(i, j, policy, s), 0.0, 1.0, tol.golden)
    return max(neg, 0.0), s
