"""Convex bodies and Bregman projections onto them.

``bregman_project`` picks the cheapest exact method for the pair
(mirror map, body):

* Euclidean-type maps on a simplex: sort-and-threshold;
* the entropic map on a simplex: normalisation;
* block-norm maps on simplices and simplex pyramids: KKT root finding
  (:mod:`.structured`), verified by its Frank–Wolfe gap;
* anything else: away-step Frank–Wolfe over the vertex list.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import DomainError, NumericalFailure
from ..mirror_maps import ENTROPIC, MirrorMapSpec, block_constants, potential_grad, potential_grad_inverse
from .bodies import GENERAL, PYRAMID, SIMPLEX, BodySpec, lmo
from .frank_wolfe import frank_wolfe_project, fw_gap
from .simplex import entropic_project_simplex, euclidean_project_simplex, softmax_from_dual
from .structured import BlockKKT

__all__ = [
    "BodySpec",
    "lmo",
    "euclidean_project_simplex",
    "entropic_project_simplex",
    "bregman_project",
    "project_dual",
    "fw_gap",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 100_000


@lru_cache(maxsize=64)
def _kernel(m: MirrorMapSpec) -> BlockKKT:
    gamma, p = block_constants(m.n)
    return BlockKKT(gamma, p, m.partition)


def _warm_weights(body: BodySpec, z: np.ndarray) -> np.ndarray:
    if body.kind == SIMPLEX:
        return np.clip(z, 0.0, None) / body.scale
    mu = min(max(body.apex_weight(z), 0.0), 1.0)
    base = np.clip(z - mu * body.apex, 0.0, None)
    w = np.append(base / body.scale, mu)
    return w


def project_dual(
    m: MirrorMapSpec,
    body: BodySpec,
    theta,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    method: str = "auto",
    state: dict | None = None,
) -> np.ndarray:
    """Bregman projection of the primal point whose gradient is ``theta``.

    Equivalent to ``bregman_project(m, body, ∇h⁻¹(θ))`` but never forms the
    primal point, so entropic dual points with ``-inf`` entries (zero mass)
    are allowed.  ``state`` is an optional dict used to warm-start
    consecutive projections.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (body.d,):
        raise ValueError(f"expected a vector of length {body.d}")
    if method not in ("auto", "frank_wolfe"):
        raise ValueError(f"unknown projection method {method!r}")
    if method == "auto":
        if body.kind == SIMPLEX:
            if m.kind == ENTROPIC:
                return softmax_from_dual(theta, body.scale)
            if m.is_quadratic:
                return euclidean_project_simplex(m.gamma * theta, body.scale)
            z = _kernel(m).project_simplex(theta, body.scale, state)
            return _verified(m, body, theta, z, tol, max_iters)
        if body.kind == PYRAMID and m.kind != ENTROPIC:
            z = _kernel(m).project_pyramid(theta, body.scale, body.apex, body.d, state, tol)
            return _verified(m, body, theta, z, tol, max_iters)
    if m.kind == ENTROPIC and not np.all(np.isfinite(theta)):
        raise DomainError("entropic dual point must be finite off the simplex")
    y = potential_grad_inverse(m, theta)
    if body.contains(y, atol=tol):
        # a feasible point has Frank-Wolfe gap zero: it is its own projection
        return y
    z, _, _ = frank_wolfe_project(m, body, theta, tol, max_iters)
    return z


def _verified(m, body, theta, z, tol, max_iters):
    if fw_gap(m, body, theta, z) <= tol:
        return z
    z, _, _ = frank_wolfe_project(m, body, theta, tol, max_iters, weights=_warm_weights(body, z))
    return z


def bregman_project(
    m: MirrorMapSpec,
    body: BodySpec,
    y,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    method: str = "auto",
) -> np.ndarray:
    """``argmin_{z ∈ body} B_h(z‖y)`` to Frank–Wolfe gap ``tol``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (body.d,):
        raise ValueError(f"expected a vector of length {body.d}")
    if m.kind == ENTROPIC and np.any(y <= 0):
        raise DomainError("entropic projection needs y > 0")
    if method == "auto" and body.kind == SIMPLEX:
        if m.kind == ENTROPIC:
            return entropic_project_simplex(y, body.scale)
        if m.is_quadratic:
            return euclidean_project_simplex(y, body.scale)
    return project_dual(m, body, potential_grad(m, y), tol, max_iters, method)


__all__ += ["NumericalFailure", "GENERAL", "PYRAMID", "SIMPLEX"]
