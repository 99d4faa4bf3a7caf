"""Potentials, their gradients and inverse gradients, and Bregman divergences.

Three families are supported:

* Euclidean, ``h(x) = ½‖x‖²``;
* Entropic, ``h(x) = Σ x_i ln x_i`` on the nonnegative orthant;
* BlockNorm over a partition into ``n`` blocks,
  ``h_n(x) = 1/(γ_n p_n) Σ_j ‖x_{B_j}‖^{p_n}``, which is 1-strongly convex
  with respect to the block norm on its unit ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import DomainError
from .geometry import Partition

EUCLIDEAN = "euclidean"
ENTROPIC = "entropic"
BLOCK_NORM = "block_norm"


def block_constants(n: int) -> tuple[float, float]:
    """``(γ_n, p_n)`` for the n-block potential."""
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return 1.0, 2.0
    if n == 2:
        return 0.5, 2.0
    ln = math.log(n)
    return 1.0 / (math.e * ln), 1.0 + 1.0 / ln


@dataclass(frozen=True)
class MirrorMapSpec:
    kind: str
    partition: Partition | None = None

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, ENTROPIC, BLOCK_NORM):
            raise ValueError(f"unknown mirror map kind {self.kind!r}")
        if (self.kind == BLOCK_NORM) != (self.partition is not None):
            raise ValueError("a partition is required for, and only for, block-norm maps")

    @classmethod
    def euclidean(cls) -> "MirrorMapSpec":
        return cls(EUCLIDEAN)

    @classmethod
    def entropic(cls) -> "MirrorMapSpec":
        return cls(ENTROPIC)

    @classmethod
    def block_norm(cls, partition: Partition) -> "MirrorMapSpec":
        return cls(BLOCK_NORM, partition)

    @property
    def n(self) -> int | None:
        if self.kind == BLOCK_NORM:
            return self.partition.n
        return 1 if self.kind == EUCLIDEAN else None

    @property
    def gamma(self) -> float | None:
        return None if self.kind == ENTROPIC else block_constants(self.n)[0]

    @property
    def p(self) -> float | None:
        return None if self.kind == ENTROPIC else block_constants(self.n)[1]

    @property
    def is_quadratic(self) -> bool:
        return self.kind != ENTROPIC and self.p == 2.0

    @property
    def name(self) -> str:
        if self.kind == BLOCK_NORM:
            return f"block_norm[n={self.n}]"
        return self.kind

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        if self.partition is not None:
            out["partition"] = self.partition.block_of.tolist()
        return out

    def __repr__(self) -> str:
        return f"MirrorMapSpec({self.name})"


def _vec(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if d is not None and x.size != d:
        raise ValueError(f"expected length {d}, got {x.size}")
    return x


def _dim(m: MirrorMapSpec) -> int | None:
    return m.partition.d if m.partition is not None else None


# ---------------------------------------------------------------------------
# norms attached to each geometry


def primal_norm(m: MirrorMapSpec, x) -> float:
    """The norm in which ``m`` is 1-strongly convex."""
    x = _vec(x, _dim(m))
    if m.kind == EUCLIDEAN:
        return float(np.linalg.norm(x))
    if m.kind == ENTROPIC:
        return float(np.abs(x).sum())
    return float(np.linalg.norm(m.partition.to_blocks(x), axis=-1).sum())


def dual_norm(m: MirrorMapSpec, g) -> float:
    g = _vec(g, _dim(m))
    if m.kind == EUCLIDEAN:
        return float(np.linalg.norm(g))
    if m.kind == ENTROPIC:
        return float(np.abs(g).max())
    return float(np.linalg.norm(m.partition.to_blocks(g), axis=-1).max())


# ---------------------------------------------------------------------------
# potential and gradients


def potential_value(m: MirrorMapSpec, x) -> float:
    x = _vec(x, _dim(m))
    if m.kind == EUCLIDEAN:
        return 0.5 * float(x @ x)
    if m.kind == ENTROPIC:
        if np.any(x < 0):
            raise DomainError("entropic potential needs x >= 0")
        return float(xlogy(x, x).sum())
    gamma, p = block_constants(m.n)
    r = np.linalg.norm(m.partition.to_blocks(x), axis=-1)
    return float((r**p).sum() / (gamma * p))


def _block_grad(m: MirrorMapSpec, x: np.ndarray) -> np.ndarray:
    gamma, p = block_constants(m.n)
    if p == 2.0:
        return x / gamma
    xb = m.partition.to_blocks(x)
    r = np.linalg.norm(xb, axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        scale = np.where(r > 0, r ** (p - 2.0), 0.0) / gamma
    return m.partition.from_blocks(scale * xb)


def _block_grad_inverse(m: MirrorMapSpec, theta: np.ndarray) -> np.ndarray:
    gamma, p = block_constants(m.n)
    if p == 2.0:
        return gamma * theta
    tb = m.partition.to_blocks(theta)
    rho = np.linalg.norm(tb, axis=-1, keepdims=True)
    r = (gamma * rho) ** (1.0 / (p - 1.0))
    with np.errstate(divide="ignore"):
        scale = np.where(rho > 0, gamma * r ** (2.0 - p), 0.0)
    return m.partition.from_blocks(scale * tb)


def potential_grad(m: MirrorMapSpec, x) -> np.ndarray:
    """``∇h(x)``; block-norm blocks that are exactly zero map to zero."""
    x = _vec(x, _dim(m))
    if m.kind == EUCLIDEAN:
        return x.copy()
    if m.kind == ENTROPIC:
        if np.any(x <= 0):
            raise DomainError("entropic gradient needs x > 0")
        return 1.0 + np.log(x)
    return _block_grad(m, x)


def potential_grad_inverse(m: MirrorMapSpec, theta) -> np.ndarray:
    theta = _vec(theta, _dim(m))
    if m.kind == EUCLIDEAN:
        return theta.copy()
    if m.kind == ENTROPIC:
        return np.exp(theta - 1.0)
    return _block_grad_inverse(m, theta)


def bregman_div(m: MirrorMapSpec, x, y) -> float:
    """``B_h(x‖y) = h(x) − h(y) − ⟨∇h(y), x − y⟩``."""
    x = _vec(x, _dim(m))
    y = _vec(y, x.size)
    if m.kind == EUCLIDEAN:
        diff = x - y
        return 0.5 * float(diff @ diff)
    if m.kind == ENTROPIC:
        if np.any(y <= 0) or np.any(x < 0):
            raise DomainError("entropic divergence needs x >= 0 and y > 0")
        # same value as the defining formula, without the cancellation
        return max(0.0, float((rel_entr(x, y) - x + y).sum()))
    gamma, p = block_constants(m.n)
    if p == 2.0:
        diff = x - y
        return float(diff @ diff) / (2.0 * gamma)
    value = potential_value(m, x) - potential_value(m, y) - float(_block_grad(m, y) @ (x - y))
    return max(0.0, value)
