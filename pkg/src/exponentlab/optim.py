"""Small numerical helpers: golden-section search, maximin LP, simplex grids."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

_INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section_max(f, a: float, b: float, tol: float = 1e-10):
    """Maximize a unimodal ``f`` on ``[a, b]``.

    Endpoints are evaluated too, so maxima sitting on the boundary are
    returned exactly.

    Returns
    -------
    (x, f(x))
    """
    fa, fb = f(a), f(b)
    lo, hi = a, b
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    mid = 0.5 * (lo + hi)
    candidates = [(fa, a), (fb, b), (fc, c), (fd, d), (f(mid), mid)]
    best = max(candidates, key=lambda p: p[0])
    return best[1], best[0]


def maximin_simplex(intercepts, slopes):
    """Solve ``max_x min_r intercepts[r] + slopes[r] @ x`` over the simplex.

    Parameters
    ----------
    intercepts : (R,) array
    slopes : (R, G) array

    Returns
    -------
    (x, value)
    """
    alpha = np.asarray(intercepts, dtype=float)
    beta = np.atleast_2d(np.asarray(slopes, dtype=float))
    R, G = beta.shape
    # variables (x_1..x_G, r); minimize -r
    cost = np.zeros(G + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-beta, np.ones((R, 1))])
    b_ub = alpha
    a_eq = np.hstack([np.ones((1, G)), np.zeros((1, 1))])
    bounds = [(0, None)] * G + [(None, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"policy LP failed: {res.message}")
    x = np.clip(res.x[:G], 0.0, None)
    return x / x.sum(), float(res.x[-1])


def simplex_grid(dim: int, step: float) -> np.ndarray:
    """All points of the ``dim``-simplex whose coordinates are multiples of ``step``."""
    n = int(round(1.0 / step))
    if not math.isclose(n * step, 1.0, rel_tol=1e-9):
        raise ValueError("grid step must divide 1")
    pts = []
    for cuts in itertools.combinations(range(n + dim - 1), dim - 1):
        bounds = (-1,) + cuts + (n + dim - 1,)
        pts.append([bounds[i + 1] - bounds[i] - 1 for i in range(dim)])
    return np.array(pts, dtype=float) / n
