"""Away-step Frank–Wolfe for Bregman projections onto vertex-represented bodies."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from ..errors import NumericalFailure
from ..mirror_maps import ENTROPIC, MirrorMapSpec, potential_grad, potential_value
from .bodies import BodySpec

CLAMP = 1e-300


def _grad_fn(m: MirrorMapSpec):
    if m.kind == ENTROPIC:
        return lambda z: potential_grad(m, np.maximum(z, CLAMP))
    return lambda z: potential_grad(m, z)


def _value_fn(m: MirrorMapSpec):
    if m.kind == ENTROPIC:
        return lambda z: potential_value(m, np.maximum(z, 0.0))
    return lambda z: potential_value(m, z)


def frank_wolfe_project(
    m: MirrorMapSpec,
    body: BodySpec,
    theta: np.ndarray,
    tol: float = 1e-9,
    max_iters: int = 100_000,
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int]:
    """Minimise ``h(z) − ⟨θ, z⟩`` over ``body``.

    Returns ``(z, gap, iterations)`` where ``gap`` is the final Frank–Wolfe
    duality gap.  ``weights`` optionally warm-starts the barycentric
    coordinates.
    """
    grad_h = _grad_fn(m)
    V = body.vertices
    nv = V.shape[0]
    if weights is None:
        h = _value_fn(m)
        objective = np.array([h(V[k]) for k in range(nv)]) - V @ theta
        w = np.zeros(nv)
        w[int(np.argmin(objective))] = 1.0
    else:
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        w /= w.sum()
    z = w @ V
    gap = np.inf
    for it in range(max_iters):
        if it and it % 200 == 0:
            z = w @ V
        g = grad_h(z) - theta
        vals = V @ g
        gz = float(g @ z)
        s = int(np.argmin(vals))
        gap = gz - float(vals[s])
        if gap <= tol:
            return z, gap, it
        act = np.flatnonzero(w > 0)
        a = int(act[np.argmax(vals[act])])
        away_gap = float(vals[a]) - gz
        if gap >= away_gap or w[a] >= 1.0:
            direction = V[s] - z
            gmax = 1.0
            fw = True
        else:
            direction = z - V[a]
            gmax = w[a] / (1.0 - w[a])
            fw = False

        def slope(gam):
            return float((grad_h(z + gam * direction) - theta) @ direction)

        if slope(gmax) <= 0:
            step = gmax
        else:
            step = brentq(slope, 0.0, gmax, xtol=1e-300, rtol=1e-15, maxiter=200)
        if step <= 0.0:
            # line search cannot make progress in floating point
            break
        if fw:
            w *= 1.0 - step
            w[s] += step
            z = z + step * direction
        else:
            w *= 1.0 + step
            w[a] = 0.0 if step == gmax else w[a] - step
            z = z + step * direction
    raise NumericalFailure(
        f"Frank-Wolfe projection stopped with gap {gap:.3e} > tol {tol:.1e}", gap=float(gap)
    )


def fw_gap(m: MirrorMapSpec, body: BodySpec, theta: np.ndarray, z: np.ndarray) -> float:
    """Frank–Wolfe duality gap of ``h(·) − ⟨θ, ·⟩`` at ``z``."""
    g = _grad_fn(m)(z) - theta
    return float(g @ z) - float(body.vertex_values(g).min())
