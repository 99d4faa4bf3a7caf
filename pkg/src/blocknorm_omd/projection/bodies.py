"""Convex bodies given by their vertices.

Besides arbitrary vertex lists, two structured families get O(d) vertex
arithmetic and specialised projections:

* ``simplex``: vertices ``s·e_1, …, s·e_d``;
* ``pyramid``: the same plus an apex ``a·1`` with ``a·d ≠ s``.

Both are closed under rescaling, so ``scaled`` keeps the structure.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

SIMPLEX = "simplex"
PYRAMID = "pyramid"
GENERAL = "general"


class BodySpec:
    """Convex hull of a finite vertex list."""

    def __init__(self, vertices, label: str = "polytope"):
        V = np.array(vertices, dtype=float, ndmin=2)
        if V.ndim != 2 or V.shape[0] == 0 or V.shape[1] == 0:
            raise ValueError("vertices must be a nonempty (count, d) array")
        V.setflags(write=False)
        self._init(V.shape[1], GENERAL, 1.0, None, V, label)

    def _init(self, d, kind, scale, apex, V, label):
        self.d = int(d)
        self.kind = kind
        self.scale = float(scale)
        self.apex = None if apex is None else float(apex)
        self._V = V
        self.label = label

    @classmethod
    def _structured(cls, d, kind, scale, apex, label) -> "BodySpec":
        obj = cls.__new__(cls)
        obj._init(d, kind, scale, apex, None, label)
        return obj

    # named constructors -----------------------------------------------------

    @classmethod
    def simplex(cls, d: int) -> "BodySpec":
        if int(d) != d or d < 1:
            raise ValueError("d must be a positive integer")
        return cls._structured(d, SIMPLEX, 1.0, None, f"simplex(d={d})")

    @classmethod
    def simplex_hull_with_center(cls, d: int, A: float) -> "BodySpec":
        """Convex hull of the unit vectors and ``A·1``."""
        if int(d) != d or d < 1:
            raise ValueError("d must be a positive integer")
        if A < 0:
            raise ValueError("A must be nonnegative")
        label = f"simplex_hull_with_center(d={d}, A={A:g})"
        if A == 0:
            V = np.vstack([np.eye(d), np.zeros(d)])
            return cls(V, label)
        if A * d == 1.0:
            # the extra point is the barycentre; the hull is the simplex
            body = cls.simplex(d)
            body.label = label
            return body
        return cls._structured(d, PYRAMID, 1.0, A, label)

    @classmethod
    def scaled(cls, body: "BodySpec", factor: float) -> "BodySpec":
        """Every vertex multiplied by ``factor`` (> 0)."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        label = f"{factor:g}*{body.label}"
        if body.kind == GENERAL:
            return cls(body._V * factor, label)
        apex = None if body.apex is None else body.apex * factor
        return cls._structured(body.d, body.kind, body.scale * factor, apex, label)

    # vertex access ------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        if self.kind == GENERAL:
            return self._V.shape[0]
        return self.d + (self.kind == PYRAMID)

    @property
    def vertices(self) -> np.ndarray:
        """Dense ``(count, d)`` vertex matrix (materialised on demand)."""
        if self._V is None:
            V = self.scale * np.eye(self.d)
            if self.kind == PYRAMID:
                V = np.vstack([V, np.full(self.d, self.apex)])
            V.setflags(write=False)
            self._V = V
        return self._V

    def vertex(self, k: int) -> np.ndarray:
        if not 0 <= k < self.n_vertices:
            raise IndexError(k)
        if self.kind == GENERAL:
            return self._V[k].copy()
        if k == self.d:
            return np.full(self.d, self.apex)
        v = np.zeros(self.d)
        v[k] = self.scale
        return v

    def vertex_values(self, direction) -> np.ndarray:
        """``⟨direction, v_k⟩`` for every vertex, in vertex order."""
        g = np.asarray(direction, dtype=float)
        if g.shape[-1] != self.d:
            raise ValueError(f"direction must have length {self.d}")
        if self.kind == GENERAL:
            return g @ self._V.T
        vals = self.scale * g
        if self.kind == PYRAMID:
            vals = np.concatenate([vals, self.apex * g.sum(axis=-1, keepdims=True)], axis=-1)
        return vals

    def barycenter(self) -> np.ndarray:
        if self.kind == GENERAL:
            return self._V.mean(axis=0)
        if self.kind == SIMPLEX:
            return np.full(self.d, self.scale / self.d)
        return np.full(self.d, (self.scale + self.apex) / (self.d + 1))

    # membership ---------------------------------------------------------------

    def contains(self, x, atol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,) or not np.all(np.isfinite(x)):
            return False
        if self.kind == SIMPLEX:
            return bool(x.min() >= -atol and abs(x.sum() - self.scale) <= atol * max(1.0, self.d**0.5))
        if self.kind == PYRAMID:
            mu = self.apex_weight(x)
            if mu < -atol or mu > 1 + atol:
                return False
            return bool(x.min() >= mu * self.apex - atol)
        # nonnegative least squares on the barycentric system
        A = np.vstack([self._V.T, np.ones(self._V.shape[0])])
        b = np.append(x, 1.0)
        _, resid = nnls(A, b)
        return bool(resid <= atol * max(1.0, np.linalg.norm(b)))

    def apex_weight(self, x) -> float:
        """For pyramids, the weight ``μ`` of the apex implied by ``Σx``."""
        s, a = self.scale, self.apex
        return (float(np.sum(x)) - s) / (a * self.d - s)

    def to_dict(self) -> dict:
        out = {"label": self.label, "kind": self.kind, "d": self.d}
        if self.kind == GENERAL:
            out["vertices"] = self._V.tolist()
        else:
            out["scale"] = self.scale
            if self.apex is not None:
                out["apex"] = self.apex
        return out

    def __repr__(self) -> str:
        return f"BodySpec({self.label})"


def lmo(body: BodySpec, direction) -> tuple[int, np.ndarray]:
    """Vertex minimising ``⟨direction, v⟩``; ties go to the lowest index."""
    k = int(np.argmin(body.vertex_values(direction)))
    return k, body.vertex(k)
