"""Combining several mirror maps: naive alternation and MirrorWeights."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_generator
from .errors import DomainError, NumericalFailure
from .geometry import random_equal_partition
from .instances import LossSeq
from .mirror_maps import MirrorMapSpec
from .omd_core import (
    RunRecord,
    RunTrace,
    StepSizeRule,
    _attach_step,
    _body_manifest,
    euclidean_diameter,
    fit_into_unit_ball,
    max_dual_norm,
    mirror_descent_step,
)
from .projection import DEFAULT_MAX_ITERS, DEFAULT_TOL, BodySpec

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# alternating between two maps


def alternating_omd_run(
    body: BodySpec,
    losses: LossSeq,
    eta_euc: float,
    eta_ent: float,
    x1,
    tol: float = DEFAULT_TOL,
    seed: int | None = None,
) -> RunRecord:
    """Euclidean steps after odd rounds, entropic steps after even rounds."""
    maps = (MirrorMapSpec.euclidean(), MirrorMapSpec.entropic())
    etas = (float(eta_euc), float(eta_ent))
    if min(etas) <= 0:
        raise ValueError("step sizes must be positive")
    x = np.asarray(x1, dtype=float)
    if not body.contains(x):
        raise ValueError("start point is not in the body")
    trace = RunTrace(body, losses)
    T = losses.T
    for t in range(T):
        trace.observe(t, x)
        if t + 1 == T:
            break
        # round t + 1 is odd exactly when t is even
        which = t % 2
        try:
            x = mirror_descent_step(x, body, maps[which], losses.gradient(t), etas[which], tol)
        except (NumericalFailure, DomainError) as exc:
            raise _attach_step(exc, t + 1)
    man = {"body": _body_manifest(body), "strategy": "alternating", "eta_euc": etas[0],
           "eta_ent": etas[1], "T": T}
    return trace.record(seed, man)


# ---------------------------------------------------------------------------
# MirrorWeights


@dataclass
class Portfolio:
    """Experts ``(map, step rule)`` with the loss-range bound ``rho`` and MW rate ``epsilon``."""

    entries: list
    rho: float
    epsilon: float
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a portfolio needs at least one expert")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.labels:
            self.labels = [f"{m.name}|eta={r.constant:.4g}" for m, r in self.entries]

    @classmethod
    def create(cls, entries, rho: float, T: int, labels=None) -> "Portfolio":
        """Portfolio with ``ε = √(ln N / T)``."""
        entries = list(entries)
        return cls(entries, float(rho), math.sqrt(math.log(len(entries)) / T), list(labels or []))

    @property
    def N(self) -> int:
        return len(self.entries)

    def to_list(self) -> list:
        return [
            {"label": lab, "n": m.n, "kind": m.kind, "eta": r.constant}
            for lab, (m, r) in zip(self.labels, self.entries)
        ]


def mw_update(log_w: np.ndarray, expert_losses, epsilon: float, rho: float):
    """One multiplicative-weights round in log space.

    Returns ``(new_log_w, p)`` with ``p`` the normalised weights.  The log
    weights are shifted so their maximum is 0, which leaves ``p`` unchanged.
    """
    lw = np.asarray(log_w, dtype=float) - epsilon * np.asarray(expert_losses, dtype=float) / rho
    lw = lw - lw.max()
    w = np.exp(lw)
    return lw, w / w.sum()


@dataclass
class MirrorWeightsResult:
    meta: RunRecord
    experts: list
    weights: np.ndarray
    failed: list


def loss_range(body: BodySpec, losses: LossSeq) -> float:
    """``max_t (max_v f_t(v) − min_v f_t(v))`` over the body's vertices."""
    out = 0.0
    for t in range(losses.T):
        vals = body.vertex_values(losses.gradient(t))
        out = max(out, float(vals.max() - vals.min()))
    return out


def mirror_weights_run(
    body: BodySpec,
    portfolio: Portfolio,
    losses: LossSeq,
    x1,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | None = None,
    weight_every: int = 1,
) -> MirrorWeightsResult:
    """Play the probability-weighted average of one OMD expert per portfolio entry.

    An expert whose step fails is frozen at its last iterate (with a logged
    warning); it keeps being charged its loss so the weights stay consistent.
    """
    x1 = np.asarray(x1, dtype=float)
    if not body.contains(x1):
        raise ValueError("start point is not in the body")
    T, N = losses.T, portfolio.N
    if N > 1 and T < math.log(N):
        raise ValueError("MirrorWeights needs T >= ln N")
    experts = []
    for m, rule in portfolio.entries:
        b, l, z, R = fit_into_unit_ball(body, m, losses, x1)
        experts.append({"m": m, "rule": rule, "body": b, "losses": l, "z": z, "R": R,
                        "state": {}, "trace": RunTrace(b, l, store_iterates=False), "alive": True})
    trace = RunTrace(body, losses)
    log_w = np.zeros(N)
    p = np.full(N, 1.0 / N)
    keep = range(0, T, max(1, int(weight_every)))
    weights = np.empty((len(keep), N))
    row = 0
    failed = []
    for t in range(T):
        X = [e["z"] * e["R"] if e["R"] != 1.0 else e["z"] for e in experts]
        x = p[0] * X[0]
        for k in range(1, N):
            x = x + p[k] * X[k]
        trace.observe(t, x)
        f = np.array([e["trace"].observe(t, e["z"]) for e in experts])
        if t % max(1, int(weight_every)) == 0:
            weights[row] = p
            row += 1
        log_w, p = mw_update(log_w, f, portfolio.epsilon, portfolio.rho)
        if t + 1 == T:
            break
        for k, e in enumerate(experts):
            if not e["alive"]:
                continue
            try:
                e["z"] = mirror_descent_step(e["z"], e["body"], e["m"], e["losses"].gradient(t),
                                             e["rule"].eta_at(t + 1), tol, max_iters, e["state"])
            except (NumericalFailure, DomainError) as exc:
                e["alive"] = False
                failed.append(k)
                log.warning("expert %s frozen after round %d: %s", portfolio.labels[k], t + 1, exc)
    man = {"body": _body_manifest(body), "strategy": "mirror_weights", "N": N,
           "rho": portfolio.rho, "epsilon": portfolio.epsilon, "T": T,
           "portfolio": portfolio.to_list(), "failed": failed}
    meta = trace.record(seed, man)
    records = []
    for lab, e in zip(portfolio.labels, experts):
        records.append(e["trace"].record(seed, {"label": lab, "map": e["m"].to_dict(),
                                                "rule": e["rule"].to_dict(), "R": e["R"]}, e["R"]))
    return MirrorWeightsResult(meta, records, weights, failed)


def build_block_norm_portfolio(
    d: int,
    T: int,
    body: BodySpec,
    x1=None,
    losses_preview: LossSeq | None = None,
    G_euc: float | None = None,
    rho: float | None = None,
    rng=None,
    ns=None,
    grid_radius: int | None = None,
) -> Portfolio:
    """One expert per (block count ``2^k``, dyadic step size).

    Step sizes are ``η_0·2^j`` for ``|j| ≤ ⌈log₂ d⌉`` around
    ``η_0 = (D_euc/G_euc)·√(2/T)``.  ``G_euc`` comes from the argument, else
    from ``losses_preview``, else 1.  ``rho`` defaults to the exact loss range
    of ``losses_preview`` when given and to 2 otherwise.
    """
    if d < 1 or d & (d - 1):
        raise ValueError(f"d={d} is not a power of two")
    if body.d != d:
        raise ValueError("body dimension does not match d")
    if T < 4 * math.log(max(math.log(d), 1.0)):
        raise ValueError("the portfolio needs T >= 4 ln ln d")
    gen = as_generator(rng)
    L = int(round(math.log2(d)))
    J = L if grid_radius is None else int(grid_radius)
    if G_euc is None:
        G_euc = max_dual_norm(MirrorMapSpec.euclidean(), losses_preview) if losses_preview is not None else 1.0
    if rho is None:
        rho = loss_range(body, losses_preview) if losses_preview is not None else 2.0
    D_euc = euclidean_diameter(body)
    eta0 = D_euc / G_euc * math.sqrt(2.0 / T)
    ns = [2**k for k in range(L + 1)] if ns is None else list(ns)
    entries, labels = [], []
    for n in ns:
        m = MirrorMapSpec.block_norm(random_equal_partition(d, n, gen))
        for j in range(-J, J + 1):
            entries.append((m, StepSizeRule.fixed(eta0 * 2.0**j)))
            labels.append(f"n={n}|j={j}")
    return Portfolio.create(entries, rho, T, labels)
