"""Test-side oracles shared by several test modules."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


def central_difference(f, x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def transport_lp(a, b) -> float:
    """Earth mover's distance on labels 0..Z-1 with |i - j| cost, by linear programming."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    Z = a.size
    cost = np.abs(np.subtract.outer(np.arange(Z), np.arange(Z))).ravel().astype(float)
    rows = np.zeros((Z, Z * Z))
    cols = np.zeros((Z, Z * Z))
    for i in range(Z):
        rows[i, i * Z : (i + 1) * Z] = 1.0
        cols[i, i::Z] = 1.0
    A_eq = np.vstack([rows, cols])
    b_eq = np.concatenate([a, b])
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    # default feasibility tolerances (1e-7) leave ~1e-8 objective error
    assert res.status == 0, res.message
    return float(res.fun)
