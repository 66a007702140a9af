"""Central finite-difference oracles used to audit analytic gradients.

These helpers differentiate *values* only, so they stay independent of the
analytic gradient paths they are used to check.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def central_diff_gradient(fn: Callable[[Array], float], x, rel_step: float = 1e-5) -> Array:
    """Coordinate-wise central differences with step h_i = rel_step * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def directional_diff(fn: Callable[[Array], float], x, direction, rel_step: float = 1e-6) -> float:
    """Central-difference derivative of fn along a unit direction."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    h = rel_step * (1.0 + np.linalg.norm(x))
    return (fn(x + h * v) - fn(x - h * v)) / (2.0 * h)


def gradient_rel_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Norm of the difference relative to the larger gradient norm.

    The floor keeps the ratio meaningful near stationary points, where both
    gradients are tiny and the comparison degrades to an absolute one.
    """
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = max(floor, float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return float(np.linalg.norm(analytic - numeric)) / denom
