"""Loss sequences and the adversarial / stochastic instances built from them.

Losses are linear, ``f_t(x) = -<c_t, x>`` (sign ``"negated"``) or
``f_t(x) = <c_t, x>`` (sign ``"plain"``).  The coefficient vectors are
stored sparsely as fixed-width rows of indices and values; unused slots hold
index 0 with value 0.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ._rng import as_generator
from .projection import BodySpec

NEGATED = "negated"
PLAIN = "plain"


class LossSeq:
    """A horizon-``T`` sequence of linear losses on ``R^d``."""

    def __init__(self, indices, values, d: int, sign: str = NEGATED, linear: bool = True,
                 meta: dict | None = None):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if indices.ndim != 2 or indices.shape != values.shape:
            raise ValueError("indices and values must be matching (T, k) arrays")
        if indices.shape[0] < 1:
            raise ValueError("a loss sequence needs T >= 1")
        if sign not in (NEGATED, PLAIN):
            raise ValueError(f"unknown sign convention {sign!r}")
        if indices.size and (indices.min() < 0 or indices.max() >= d):
            raise ValueError("loss index out of range")
        self.indices = indices
        self.values = values
        self.d = int(d)
        self.sign = sign
        self.linear = bool(linear)
        self.meta = dict(meta or {})

    @classmethod
    def from_dense(cls, C, sign: str = NEGATED, meta: dict | None = None) -> "LossSeq":
        C = np.asarray(C, dtype=float)
        if C.ndim != 2:
            raise ValueError("expected a (T, d) coefficient matrix")
        nnz = (C != 0).sum(axis=1)
        k = max(int(nnz.max()), 1)
        idx = np.zeros((C.shape[0], k), dtype=np.int64)
        val = np.zeros((C.shape[0], k))
        for t in range(C.shape[0]):
            nz = np.flatnonzero(C[t])
            idx[t, : nz.size] = nz
            val[t, : nz.size] = C[t, nz]
        return cls(idx, val, C.shape[1], sign, meta=meta)

    @property
    def T(self) -> int:
        return self.indices.shape[0]

    @property
    def factor(self) -> float:
        """``+1`` or ``-1``: gradient = factor · c."""
        return -1.0 if self.sign == NEGATED else 1.0

    def __len__(self) -> int:
        return self.T

    def coefficients(self, t: int) -> np.ndarray:
        """Dense ``c_t`` (0-based ``t``)."""
        c = np.zeros(self.d)
        np.add.at(c, self.indices[t], self.values[t])
        return c

    def gradient(self, t: int) -> np.ndarray:
        return self.factor * self.coefficients(t)

    def sparse_gradient(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self.indices[t], self.factor * self.values[t]

    def value(self, t: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.factor * float(self.values[t] @ x[self.indices[t]])

    def gradient_sum(self, upto: int | None = None) -> np.ndarray:
        """Sum of the first ``upto`` gradients (all of them by default)."""
        upto = self.T if upto is None else upto
        g = np.zeros(self.d)
        np.add.at(g, self.indices[:upto].ravel(), self.values[:upto].ravel())
        return self.factor * g

    def scaled(self, factor: float) -> "LossSeq":
        meta = dict(self.meta, scale=self.meta.get("scale", 1.0) * factor)
        return LossSeq(self.indices, self.values * factor, self.d, self.sign, self.linear, meta)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "indices", "values"])
            for t in range(self.T):
                keep = self.values[t] != 0
                w.writerow([
                    t + 1,
                    " ".join(str(i) for i in self.indices[t][keep]),
                    " ".join(repr(float(v)) for v in self.values[t][keep]),
                ])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LossSeq)
            and self.d == other.d
            and self.sign == other.sign
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"LossSeq(T={self.T}, d={self.d}, sign={self.sign})"


# ---------------------------------------------------------------------------
# sampling sparse 0-1 vectors


def _distinct_rows(rng: np.random.Generator, size: int, k: int, m: int) -> np.ndarray:
    """``size`` rows of ``k`` distinct uniform draws from ``range(m)``."""
    if k > m:
        raise ValueError(f"cannot draw {k} distinct values from {m}")
    if k == 0:
        return np.zeros((size, 0), dtype=np.int64)
    if k * k > m:
        return np.argsort(rng.random((size, m)), axis=1)[:, :k].astype(np.int64)
    out = rng.integers(0, m, size=(size, k))
    while True:
        s = np.sort(out, axis=1)
        bad = np.flatnonzero((s[:, 1:] == s[:, :-1]).any(axis=1))
        if bad.size == 0:
            return out
        out[bad] = rng.integers(0, m, size=(bad.size, k))


def sparse_support(rng, special, d: int, S: int) -> np.ndarray:
    """Rows whose first entry is ``special[t]`` followed by ``S − 1`` distinct
    coordinates drawn uniformly from the other ``d − 1``."""
    special = np.asarray(special, dtype=np.int64)
    others = _distinct_rows(as_generator(rng), special.size, S - 1, d - 1)
    others = others + (others >= special[:, None])
    return np.concatenate([special[:, None], others], axis=1)


def sparse_sampler(d: int, S: int, special: int = 0):
    """Sampler ``(rng, size) -> (indices, values)`` of S-sparse 0-1 vectors
    with a fixed coordinate ``special`` always in the support."""
    if not 1 <= S <= d:
        raise ValueError("need 1 <= S <= d")

    def sample(rng, size: int):
        idx = sparse_support(rng, np.full(size, special), d, S)
        return idx, np.ones(idx.shape)

    return sample


def uniform_sparse_sampler(d: int, S: int):
    """Sampler of 0-1 vectors whose support is a uniform S-subset of ``range(d)``."""
    if not 1 <= S <= d:
        raise ValueError("need 1 <= S <= d")

    def sample(rng, size: int):
        gen = as_generator(rng)
        idx = sparse_support(gen, gen.integers(0, d, size=size), d, S)
        return idx, np.ones(idx.shape)

    return sample


# ---------------------------------------------------------------------------
# instance generators


def figure1_schedule(T: int) -> np.ndarray:
    """0-based special coordinate ``i(t)`` for ``t = 1..T``."""
    T0 = int(math.floor(2.0 * math.sqrt(T)))
    t = np.arange(1, T + 1)
    odd = t % 2 == 1
    return np.where(t <= T0, np.where(odd, 0, 1), np.where(odd, 2, 3)).astype(np.int64)


def figure1_losses(d: int = 4096, T: int = 250, rng=None, S: int | None = None) -> LossSeq:
    """S-sparse 0-1 losses whose special coordinate cycles 1,2 then 3,4."""
    if d < 4:
        raise ValueError("the schedule needs d >= 4")
    S = int(math.floor(math.log(d))) if S is None else int(S)
    if not 1 <= S <= d:
        raise ValueError(f"sparsity S={S} must lie in [1, d]")
    special = figure1_schedule(T)
    idx = sparse_support(rng, special, d, S)
    meta = {"instance": "figure1", "S": S, "T0": int(math.floor(2.0 * math.sqrt(T)))}
    return LossSeq(idx, np.ones(idx.shape), d, NEGATED, meta=meta)


def log_improvement_losses(d: int, T: int, rng=None, S: int | None = None):
    """Simplex instance with ``c_1 = 1`` and ``S − 1`` other uniform coordinates.

    Returns ``(body, losses, x1)``.
    """
    S = int(round(math.log(d))) if S is None else int(S)
    if not 1 <= S <= d:
        raise ValueError(f"sparsity S={S} must lie in [1, d]")
    if T < math.log(d):
        raise ValueError("the instance needs T >= ln d")
    idx = sparse_support(rng, np.zeros(T, dtype=np.int64), d, S)
    losses = LossSeq(idx, np.ones(idx.shape), d, NEGATED, meta={"instance": "log_improvement", "S": S})
    return BodySpec.simplex(d), losses, np.full(d, 1.0 / d)


def cube_root(d: int) -> int:
    c = int(round(d ** (1.0 / 3.0)))
    if c**3 != d:
        raise ValueError(f"d={d} is not a perfect cube")
    return c


def poly_improvement_instance(d: int, T: int, rng=None, rescale: bool = True):
    """Polytope ``conv(Δ_d ∪ {A·1})`` with ``A = d^{-2/3}`` and ``S = d^{1/3}``.

    With ``rescale`` the body is divided by ``R = A·d = d^{1/3}`` and the
    losses multiplied by ``R``, so every point's loss value is unchanged.
    Returns ``(body, losses, x1, R)`` where ``x1`` is the apex.
    """
    c = cube_root(d)
    S, R = c, float(c)
    A = 1.0 / (c * c)
    idx = sparse_support(rng, np.zeros(T, dtype=np.int64), d, S)
    meta = {"instance": "poly_improvement", "S": S, "A": A, "R": R}
    losses = LossSeq(idx, np.ones(idx.shape), d, NEGATED, meta=meta)
    body = BodySpec.simplex_hull_with_center(d, A)
    if not rescale:
        return body, losses, np.full(d, A), 1.0
    return BodySpec.scaled(body, 1.0 / R), losses.scaled(R), np.full(d, 1.0 / d), R


def alternating_adversary_losses(case: int, T: int):
    """Deterministic two-dimensional losses defeating the alternating scheme.

    Returns ``(body, losses, x1)`` with plain-sign gradients.
    """
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    if T < 16 or T % 8:
        raise ValueError("T must be at least 16 and divisible by 8")
    t = np.arange(1, T + 1)
    odd = t % 2 == 1
    G = np.zeros((T, 2))
    if case == 1:
        G[odd, 0] = -1.0
        G[~odd & (t > T // 8), 1] = -2.0
    else:
        G[odd, 1] = -1.0
    idx = np.tile(np.arange(2), (T, 1))
    losses = LossSeq(idx, G, 2, PLAIN, meta={"instance": "alternating", "case": case})
    return BodySpec.simplex(2), losses, np.array([0.5, 0.5])


def mixed_case_adversary(T: int, rng=None) -> LossSeq:
    """One fair coin picks Case 1 (heads) or Case 2 for the whole horizon."""
    case = 1 if as_generator(rng).random() < 0.5 else 2
    return alternating_adversary_losses(case, T)[1]
