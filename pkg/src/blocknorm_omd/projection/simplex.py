"""Closed-form projections onto the probability simplex."""
from __future__ import annotations

import numpy as np

from ..errors import DomainError


def euclidean_project_simplex(y, scale: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{z >= 0, Σz = scale}`` by sort-and-threshold."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("expected a nonempty 1-d vector")
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - scale
    ks = np.arange(1, y.size + 1)
    rho = np.flatnonzero(u * ks > css)[-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(y - tau, 0.0)


def entropic_project_simplex(y, scale: float = 1.0) -> np.ndarray:
    """KL projection onto the simplex, i.e. L1 normalisation."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("expected a nonempty 1-d vector")
    if np.any(y <= 0):
        raise DomainError("entropic projection needs y > 0")
    return scale * (y / y.sum())


def softmax_from_dual(theta: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Entropic projection expressed on the dual point ``θ = 1 + ln y``.

    Entries equal to ``-inf`` (zero mass) stay exactly zero.
    """
    top = np.max(theta)
    w = np.exp(theta - top)
    return scale * (w / w.sum())
