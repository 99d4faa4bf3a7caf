"""Online mirror descent: the step, the online loop and regret accounting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import as_generator
from .errors import DomainError, NumericalFailure, UnsupportedLossError
from .geometry import Partition
from .instances import LossSeq
from .mirror_maps import (
    BLOCK_NORM,
    ENTROPIC,
    EUCLIDEAN,
    MirrorMapSpec,
    bregman_div,
    potential_grad,
    potential_value,
    primal_norm,
)
from .projection import DEFAULT_MAX_ITERS, DEFAULT_TOL, BodySpec, GENERAL, PYRAMID, project_dual

FIXED = "fixed"
THEORY_SQRT2 = "theory_sqrt2"
THEORY_PLAIN = "theory_plain"
SCHEDULE = "schedule"

ITERATE_BUDGET = 10_000_000


@dataclass(frozen=True)
class StepSizeRule:
    """Constant step sizes from a formula, or an explicit per-round schedule."""

    kind: str
    eta: float | None = None
    D: float | None = None
    G: float | None = None
    T: int | None = None
    schedule: tuple = ()

    def __post_init__(self):
        if self.kind == FIXED:
            if not (self.eta is not None and self.eta > 0 and math.isfinite(self.eta)):
                raise ValueError("fixed step size must be a positive finite number")
        elif self.kind in (THEORY_SQRT2, THEORY_PLAIN):
            for name in ("D", "G", "T"):
                v = getattr(self, name)
                if v is None or not v > 0:
                    raise ValueError(f"{self.kind} needs positive {name}")
        elif self.kind == SCHEDULE:
            if not self.schedule or any(not e > 0 for e in self.schedule):
                raise ValueError("a schedule needs positive step sizes")
        else:
            raise ValueError(f"unknown step-size rule {self.kind!r}")

    @classmethod
    def fixed(cls, eta: float) -> "StepSizeRule":
        return cls(FIXED, eta=float(eta))

    @classmethod
    def theory_sqrt2(cls, D: float, G: float, T: int) -> "StepSizeRule":
        """``η = (D/G)·√(2/T)``."""
        return cls(THEORY_SQRT2, D=float(D), G=float(G), T=int(T))

    @classmethod
    def theory_plain(cls, D: float, G: float, T: int) -> "StepSizeRule":
        """``η = D/(G·√T)``."""
        return cls(THEORY_PLAIN, D=float(D), G=float(G), T=int(T))

    @classmethod
    def from_schedule(cls, etas) -> "StepSizeRule":
        return cls(SCHEDULE, schedule=tuple(float(e) for e in etas))

    @property
    def constant(self) -> float | None:
        if self.kind == FIXED:
            return self.eta
        if self.kind == THEORY_SQRT2:
            return self.D / self.G * math.sqrt(2.0 / self.T)
        if self.kind == THEORY_PLAIN:
            return self.D / (self.G * math.sqrt(self.T))
        return None

    def eta_at(self, t: int) -> float:
        """Step size used after observing the loss of round ``t`` (1-based)."""
        if self.kind == SCHEDULE:
            return self.schedule[min(t, len(self.schedule)) - 1]
        return self.constant

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "eta": self.constant}
        if self.kind in (THEORY_SQRT2, THEORY_PLAIN):
            out.update(D=self.D, G=self.G, T=self.T)
        if self.kind == SCHEDULE:
            out["schedule"] = list(self.schedule)
        return out


@dataclass
class RunRecord:
    """Everything observed during one online run.

    ``iterates`` is ``None`` when ``d·T`` exceeds the storage budget; the
    first coordinate is always kept in ``x1_coord``.  When the body had to be
    rescaled into the map's unit ball, iterates live in the rescaled body and
    ``R`` is the factor; loss values are the same in both scalings.
    """

    iterates: np.ndarray | None
    x1_coord: np.ndarray
    losses: np.ndarray
    cum_loss: float
    offline_opt_value: float
    offline_opt_vertex: int
    regret_trace: np.ndarray
    seed: int | None = None
    manifest: dict = field(default_factory=dict)
    R: float = 1.0

    @property
    def T(self) -> int:
        return self.losses.size

    @property
    def regret(self) -> float:
        return float(self.regret_trace[-1])

    def to_csv(self, path, write_manifest: bool = True) -> None:
        path = Path(path)
        cum = np.cumsum(self.losses)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "loss", "cum_loss", "regret", "x1_coord"])
            for t in range(self.T):
                w.writerow([t + 1, repr(float(self.losses[t])), repr(float(cum[t])),
                            repr(float(self.regret_trace[t])), repr(float(self.x1_coord[t]))])
        if write_manifest:
            man = dict(self.manifest, seed=self.seed, R=self.R,
                       offline_opt_value=self.offline_opt_value,
                       offline_opt_vertex=self.offline_opt_vertex)
            path.with_suffix(".json").write_text(json.dumps(man, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Partition):
        return obj.to_dict()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# the step


def dual_point(m: MirrorMapSpec, x: np.ndarray) -> np.ndarray:
    """``∇h(x)``, with ``-inf`` for zero coordinates under the entropic map."""
    if m.kind == ENTROPIC:
        if np.any(x < 0):
            raise DomainError("entropic iterate has a negative coordinate")
        with np.errstate(divide="ignore"):
            return 1.0 + np.log(x)
    return potential_grad(m, x)


def mirror_descent_step(
    x,
    body: BodySpec,
    m: MirrorMapSpec,
    grad,
    eta: float,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    state: dict | None = None,
) -> np.ndarray:
    """``Π_K((∇h)^{-1}(∇h(x) − η·grad))``.

    The projection is computed from the dual point directly, so an entropic
    coordinate at zero stays at zero.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != x.shape:
        raise ValueError("gradient and point have different shapes")
    theta = dual_point(m, x) - eta * grad
    return project_dual(m, body, theta, tol, max_iters, state=state)


# ---------------------------------------------------------------------------
# offline optimum, diameter, gradient bounds


def exact_offline_optimum(body: BodySpec, losses: LossSeq) -> tuple[int, float]:
    """Best vertex in hindsight and its total loss (linear losses only)."""
    if not losses.linear:
        raise UnsupportedLossError("the offline optimum is exact only for linear losses")
    vals = body.vertex_values(losses.gradient_sum())
    k = int(np.argmin(vals))
    return k, float(vals[k])


def max_vertex_norm(body: BodySpec, m: MirrorMapSpec) -> float:
    """Largest primal norm of a vertex (L1 for the entropic map)."""
    if body.kind == GENERAL:
        return max(primal_norm(m, v) for v in body.vertices)
    out = primal_norm(m, body.vertex(0))
    if body.kind == PYRAMID:
        out = max(out, primal_norm(m, body.vertex(body.d)))
    return out


def _vertex_divergences(body: BodySpec, m: MirrorMapSpec, x1: np.ndarray) -> np.ndarray:
    if body.kind == GENERAL:
        return np.array([bregman_div(m, v, x1) for v in body.vertices])
    # every scaled unit vector has the same potential value under these maps
    g = potential_grad(m, x1)
    base = potential_value(m, body.vertex(0)) - potential_value(m, x1) + float(g @ x1)
    out = base - body.scale * g
    if body.kind == PYRAMID:
        out = np.append(out, bregman_div(m, body.vertex(body.d), x1))
    return np.maximum(out, 0.0)


def diameter(body: BodySpec, m: MirrorMapSpec, x1) -> float:
    """``√(max_{z∈K} B_h(z‖x1))``, attained at a vertex since ``B(·‖x1)`` is convex."""
    x1 = np.asarray(x1, dtype=float)
    return math.sqrt(float(_vertex_divergences(body, m, x1).max()))


def euclidean_radius(body: BodySpec, x1) -> float:
    """``max_{z∈K} ‖z − x1‖₂`` (the plain distance, not the Bregman diameter)."""
    x1 = np.asarray(x1, dtype=float)
    if body.kind == GENERAL:
        return float(np.linalg.norm(body.vertices - x1, axis=1).max())
    # ‖s·e_k − x1‖² = s² − 2 s x1_k + ‖x1‖²
    sq = body.scale**2 - 2.0 * body.scale * x1 + float(x1 @ x1)
    out = float(np.sqrt(np.maximum(sq, 0.0)).max())
    if body.kind == PYRAMID:
        out = max(out, float(np.linalg.norm(body.vertex(body.d) - x1)))
    return out


def euclidean_diameter(body: BodySpec) -> float:
    """``max_{x,z∈K} ‖x − z‖₂``, attained between two vertices."""
    if body.kind == GENERAL:
        V = body.vertices
        sq = (V * V).sum(1)
        return float(np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * V @ V.T, 0.0)).max())
    out = body.scale * math.sqrt(2.0) if body.d > 1 else 0.0
    if body.kind == PYRAMID:
        out = max(out, euclidean_radius(BodySpec.simplex(body.d) if body.scale == 1.0
                                        else BodySpec.scaled(BodySpec.simplex(body.d), body.scale),
                                        body.vertex(body.d)))
    return out


def _sparse_dual_norms(m: MirrorMapSpec, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Dual norms of a batch of sparse vectors with distinct indices per row."""
    v2 = vals * vals
    if m.kind == EUCLIDEAN or (m.kind == BLOCK_NORM and m.n == 1):
        return np.sqrt(v2.sum(axis=1))
    if m.kind == ENTROPIC or m.partition.block_size == 1:
        return np.sqrt(v2.max(axis=1))
    blk = m.partition.block_of[idx]
    same = blk[:, :, None] == blk[:, None, :]
    per_entry = np.einsum("rij,rj->ri", same, v2)
    return np.sqrt(per_entry.max(axis=1))


def gradient_bound_estimate(m: MirrorMapSpec, loss_gen, samples: int = 100_000, rng=None,
                            batch: int = 20_000) -> float:
    """``√E[‖∇f‖_*²]`` by Monte Carlo.

    ``loss_gen(rng, size)`` returns ``(indices, values)`` arrays of shape
    ``(size, k)`` describing sparse gradients with distinct indices per row.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    gen = as_generator(rng)
    total, done = 0.0, 0
    while done < samples:
        size = min(batch, samples - done)
        idx, vals = loss_gen(gen, size)
        total += float((_sparse_dual_norms(m, np.asarray(idx), np.asarray(vals, float)) ** 2).sum())
        done += size
    return math.sqrt(total / samples)


def max_dual_norm(m: MirrorMapSpec, losses: LossSeq) -> float:
    """Exact ``max_t ‖∇f_t‖_*`` over a loss sequence."""
    vals = losses.factor * losses.values
    idx = losses.indices
    # padded slots carry zero values and cannot change any block norm
    norms = np.empty(losses.T)
    for t in range(losses.T):
        g = np.zeros(losses.d)
        np.add.at(g, idx[t], vals[t])
        nz = np.flatnonzero(g)
        norms[t] = _sparse_dual_norms(m, nz[None, :], g[nz][None, :])[0] if nz.size else 0.0
    return float(norms.max())


# ---------------------------------------------------------------------------
# the online loop


def _attach_step(exc: Exception, t: int) -> Exception:
    exc.step = t
    return exc


class RunTrace:
    """Loss and regret bookkeeping shared by every online player.

    Call :meth:`observe` once per round with the point played; it returns
    the loss incurred.  :meth:`record` then assembles a :class:`RunRecord`.
    """

    def __init__(self, body: BodySpec, losses: LossSeq, store_iterates: bool | None = None):
        self.body = body
        self.losses = losses
        T = losses.T
        self.keep = ITERATE_BUDGET >= body.d * T if store_iterates is None else store_iterates
        self.iterates = np.empty((T, body.d)) if self.keep else None
        self.x1_coord = np.empty(T)
        self.loss_vals = np.empty(T)
        self.regret = np.empty(T)
        self.gsum = np.zeros(body.d)
        self.cum = 0.0

    def observe(self, t: int, x: np.ndarray) -> float:
        if self.keep:
            self.iterates[t] = x
        self.x1_coord[t] = x[0]
        value = self.losses.value(t, x)
        self.loss_vals[t] = value
        self.cum += value
        idx, gv = self.losses.sparse_gradient(t)
        np.add.at(self.gsum, idx, gv)
        self.regret[t] = self.cum - float(self.body.vertex_values(self.gsum).min())
        return value

    def record(self, seed=None, manifest: dict | None = None, R: float = 1.0) -> RunRecord:
        k, opt = exact_offline_optimum(self.body, self.losses)
        return RunRecord(self.iterates, self.x1_coord, self.loss_vals, float(self.cum), opt, k,
                         self.regret, seed, dict(manifest or {}), R)


def fit_into_unit_ball(body: BodySpec, m: MirrorMapSpec, losses: LossSeq, x1):
    """Rescale ``(body, losses, x1)`` by ``R = max vertex norm`` when ``R > 1``."""
    R = max_vertex_norm(body, m)
    if R > 1.0 + 1e-12:
        return BodySpec.scaled(body, 1.0 / R), losses.scaled(R), np.asarray(x1, float) / R, R
    return body, losses, np.asarray(x1, float), 1.0


def _body_manifest(body: BodySpec):
    if body.kind != GENERAL or body.d * body.n_vertices <= 100_000:
        return body.to_dict()
    return body.label


def run_omd(
    body: BodySpec,
    m: MirrorMapSpec,
    losses: LossSeq,
    rule: StepSizeRule,
    x1,
    seed: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    store_iterates: bool | None = None,
    manifest: dict | None = None,
) -> RunRecord:
    """Online mirror descent with step sizes from ``rule``.

    Bodies outside the unit ball of the map's norm are first shrunk by
    ``R = max vertex norm`` and the losses multiplied by ``R``.
    """
    x = np.asarray(x1, dtype=float)
    if x.shape != (body.d,) or losses.d != body.d:
        raise ValueError("body, start point and losses must share the dimension")
    if not body.contains(x, atol=1e-9):
        raise ValueError("start point is not in the body")
    body, losses, x, R = fit_into_unit_ball(body, m, losses, x)
    T = losses.T
    trace = RunTrace(body, losses, store_iterates)
    state: dict = {}
    for t in range(T):
        trace.observe(t, x)
        if t + 1 == T:
            break
        try:
            x = mirror_descent_step(x, body, m, losses.gradient(t), rule.eta_at(t + 1),
                                    tol, max_iters, state)
        except (NumericalFailure, DomainError) as exc:
            raise _attach_step(exc, t + 1)
    man = {
        "body": _body_manifest(body),
        "map": m.to_dict(),
        "rule": rule.to_dict(),
        "T": T,
        "R": R,
        "rescaled": R != 1.0,
        "tol": tol,
    }
    man.update(manifest or {})
    return trace.record(seed, man, R)
