"""Executable invariant report: each suite returns a list of :class:`Check`."""
from __future__ import annotations

import math

import numpy as np

from ..geometry import block_norm, dual_block_norm, random_equal_partition
from ..instances import LossSeq, figure1_losses, log_improvement_losses, poly_improvement_instance
from ..meta import mw_update
from ..mirror_maps import (
    MirrorMapSpec,
    bregman_div,
    potential_grad,
    potential_grad_inverse,
    potential_value,
    primal_norm,
)
from ..omd_core import StepSizeRule, diameter, max_dual_norm, run_omd
from ..projection import (
    BodySpec,
    bregman_project,
    entropic_project_simplex,
    euclidean_project_simplex,
)
from .config import validate
from .experiments import Check, dyadic
from .runner import run_experiment


def _maps(d: int, rng, ns=(1, 2, 4)) -> list:
    out = [MirrorMapSpec.euclidean(), MirrorMapSpec.entropic()]
    out += [MirrorMapSpec.block_norm(random_equal_partition(d, n, rng)) for n in ns if n > 1 and d % n == 0]
    out.append(MirrorMapSpec.block_norm(random_equal_partition(d, d, rng)))
    return out


def _unit_ball_point(m, d, rng):
    """Random point with block norm at most one (or on the simplex for entropic)."""
    if m.kind == "entropic":
        return rng.dirichlet(np.full(d, 0.5)) + 1e-12
    x = rng.standard_normal(d) * rng.random(d)
    return x / max(primal_norm(m, x), 1e-300) * rng.random() ** (1.0 / d)


def _interior_point(m, d, rng):
    """Point whose coordinates stay away from zero, where finite differences are reliable."""
    if m.kind == "entropic":
        return rng.dirichlet(np.ones(d)) + 0.01
    x = rng.uniform(0.2, 1.0, d) * rng.choice([-1.0, 1.0], d)
    return 0.9 * x / primal_norm(m, x)


def suite_geometry(rng) -> list[Check]:
    worst_h = worst_tri = worst_sw = worst_dual = 0.0
    for _ in range(200):
        d = int(rng.choice([8, 12, 16, 64]))
        n = int(rng.choice([k for k in range(1, d + 1) if d % k == 0]))
        p = random_equal_partition(d, n, rng)
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        a = float(rng.standard_normal() * 3)
        worst_h = max(worst_h, abs(block_norm(a * x, p) - abs(a) * block_norm(x, p)))
        worst_tri = max(worst_tri, block_norm(x + y, p) - block_norm(x, p) - block_norm(y, p))
        bn = block_norm(x, p)
        worst_sw = max(worst_sw, np.linalg.norm(x) - bn, bn - np.abs(x).sum())
    for _ in range(10):
        d, n = 16, int(rng.choice([1, 2, 4, 8, 16]))
        p = random_equal_partition(d, n, rng)
        x = rng.standard_normal(d)
        U = rng.standard_normal((10_000, d))
        U /= np.array([block_norm(u, p) for u in U])[:, None]
        worst_dual = max(worst_dual, float((U @ x).max()) - dual_block_norm(x, p))
    return [
        Check("block norm homogeneity", worst_h <= 1e-12, f"max error {worst_h:.2e}"),
        Check("block norm triangle inequality", worst_tri <= 1e-12, f"max excess {worst_tri:.2e}"),
        Check("L2 <= block norm <= L1", worst_sw <= 1e-12, f"max violation {worst_sw:.2e}"),
        Check("sampled dual value <= dual block norm", worst_dual <= 1e-12, f"max excess {worst_dual:.2e}"),
    ]


def suite_kernels(rng) -> list[Check]:
    d = 16
    out = []
    for m in _maps(d, rng, ns=(2, 4, 8)):
        worst_sc = worst_fd = worst_rt = 0.0
        neg = 0.0
        strict = True
        for _ in range(10_000 if m.kind != "entropic" else 2_000):
            x, y = _unit_ball_point(m, d, rng), _unit_ball_point(m, d, rng)
            b = bregman_div(m, x, y)
            worst_sc = max(worst_sc, 0.5 * primal_norm(m, x - y) ** 2 - b)
            neg = min(neg, b)
            if np.linalg.norm(x - y) >= 1e-3 and b < 1e-9:
                strict = False
        for _ in range(100):
            x = _interior_point(m, d, rng)
            g = potential_grad(m, x)
            h = 1e-6
            fd = np.array([(potential_value(m, x + h * e) - potential_value(m, x - h * e)) / (2 * h)
                           for e in np.eye(d)])
            worst_fd = max(worst_fd, float(np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-8)))
            worst_rt = max(worst_rt, float(np.max(np.abs(potential_grad_inverse(m, g) - x))))
            th = rng.standard_normal(d)
            worst_rt = max(worst_rt, float(np.max(np.abs(potential_grad(m, potential_grad_inverse(m, th)) - th))))
        out += [
            Check(f"{m.name} strong convexity", worst_sc <= 1e-10, f"max deficit {worst_sc:.2e}"),
            Check(f"{m.name} gradient vs finite differences", worst_fd <= 1e-5, f"max rel error {worst_fd:.2e}"),
            Check(f"{m.name} gradient roundtrip", worst_rt <= 1e-10, f"max error {worst_rt:.2e}"),
            Check(f"{m.name} Bregman divergence positivity", neg >= -1e-12 and strict,
                  f"min value {neg:.2e}, strict={strict}"),
        ]
    return out


def suite_projection(rng, tol: float = 1e-9) -> list[Check]:
    d = 12
    out = []
    bodies = [BodySpec.simplex(d), BodySpec.simplex_hull_with_center(d, 0.3 / d)]
    for body in bodies:
        V = body.vertices
        for m in _maps(d, rng, ns=(3, 4)):
            if m.kind == "entropic" and body.kind != "simplex":
                continue
            worst_vi = worst_pyth = worst_idem = 0.0
            for _ in range(20):
                y = rng.random(d) + 0.05 if m.kind == "entropic" else rng.standard_normal(d) * 0.5
                z = bregman_project(m, body, y, tol)
                if m.kind == "entropic":
                    gz = potential_grad(m, np.maximum(z, 1e-300))
                else:
                    gz = potential_grad(m, z)
                gy = potential_grad(m, y)
                worst_vi = max(worst_vi, -float(((V - z) @ (gz - gy)).min()))
                bzy = bregman_div(m, z, y)
                for v in V:
                    if m.kind == "entropic":
                        v = np.maximum(v, 1e-300)
                    lhs = bregman_div(m, v, y) - bregman_div(m, v, np.maximum(z, 1e-300)) - bzy
                    worst_pyth = max(worst_pyth, -lhs)
                if m.kind != "entropic" or z.min() > 0:
                    worst_idem = max(worst_idem, float(np.linalg.norm(bregman_project(m, body, z, tol) - z)))
            out += [
                Check(f"{body.label} {m.name} variational inequality", worst_vi <= 10 * tol,
                      f"worst {worst_vi:.2e}"),
                Check(f"{body.label} {m.name} Pythagorean inequality", worst_pyth <= 10 * tol,
                      f"worst {worst_pyth:.2e}"),
                Check(f"{body.label} {m.name} idempotence", worst_idem <= 10 * tol, f"worst {worst_idem:.2e}"),
            ]
    simplex = BodySpec.simplex(d)
    worst_e = worst_k = 0.0
    for _ in range(100):
        y = rng.standard_normal(d)
        a = bregman_project(MirrorMapSpec.euclidean(), simplex, y, tol, method="frank_wolfe")
        worst_e = max(worst_e, float(np.linalg.norm(a - euclidean_project_simplex(y), np.inf)))
        y = rng.random(d) + 0.05
        a = bregman_project(MirrorMapSpec.entropic(), simplex, y, tol, method="frank_wolfe")
        worst_k = max(worst_k, float(np.linalg.norm(a - entropic_project_simplex(y), np.inf)))
    # the Frank-Wolfe gap is a value gap, so coordinates agree to about sqrt(tol)
    out += [
        Check("Frank-Wolfe vs Euclidean closed form", worst_e <= 10 * math.sqrt(tol), f"max diff {worst_e:.2e}"),
        Check("Frank-Wolfe vs entropic closed form", worst_k <= 10 * math.sqrt(tol), f"max diff {worst_k:.2e}"),
    ]
    return out


def regret_law_runs(rng, runs: int = 25, d: int = 64):
    """Randomized sparse-loss OMD runs on the simplex with ``√2·D·G_emp·√T`` bounds."""
    out = []
    body = BodySpec.simplex(d)
    for _ in range(runs):
        n = int(rng.choice(dyadic(d)))
        m = MirrorMapSpec.euclidean() if n == 1 else MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
        T = int(rng.integers(50, 300))
        S = int(rng.integers(1, 12))
        idx = np.stack([rng.choice(d, S, replace=False) for _ in range(T)])
        vals = rng.uniform(-1, 1, size=idx.shape)
        losses = LossSeq(idx, vals, d)
        x1 = rng.dirichlet(np.ones(d))
        D = diameter(body, m, x1)
        G = max_dual_norm(m, losses)
        rec = run_omd(body, m, losses, StepSizeRule.theory_sqrt2(D, G, T), x1)
        out.append((n, T, rec, math.sqrt(2) * D * G * math.sqrt(T)))
    return out


def suite_omd(rng) -> list[Check]:
    runs = regret_law_runs(rng)
    worst = max(rec.regret - bound for _, _, rec, bound in runs)
    feas = 0.0
    for n, T, rec, _ in runs[:5]:
        m = MirrorMapSpec.euclidean()
        for x in rec.iterates[:: max(1, T // 10)]:
            feas = max(feas, float(np.linalg.norm(bregman_project(m, BodySpec.simplex(x.size), x) - x)))
    losses = figure1_losses(64, 100, np.random.default_rng(7))
    p = random_equal_partition(64, 8, np.random.default_rng(8))
    m = MirrorMapSpec.block_norm(p)
    a = run_omd(BodySpec.simplex(64), m, losses, StepSizeRule.fixed(0.3), np.full(64, 1 / 64), seed=1)
    b = run_omd(BodySpec.simplex(64), m, losses, StepSizeRule.fixed(0.3), np.full(64, 1 / 64), seed=1)
    res = run_experiment(validate({"experiment": "diameter_check", "d": 256, "seeds": list(range(20))}))
    return [
        Check("regret <= sqrt2 D G_emp sqrt(T) on 25 runs", worst <= 1e-6, f"worst margin {worst:.3f}"),
        Check("iterates are feasible", feas <= 1e-6, f"max re-projection move {feas:.2e}"),
        Check("identical seeds give identical traces", np.array_equal(a.regret_trace, b.regret_trace), ""),
    ] + res.checks


def suite_instances(rng) -> list[Check]:
    d, T = 256, 400
    ok = True
    for losses in (figure1_losses(d, T, rng),
                   log_improvement_losses(d, T, rng)[1],
                   poly_improvement_instance(216, T, rng, rescale=False)[1]):
        S = losses.meta["S"]
        for t in range(0, losses.T, 37):
            c = losses.coefficients(t)
            ok &= int((c != 0).sum()) == S and bool(np.all((c == 0) | (c == 1)))
    d = 64
    _, losses, _ = log_improvement_losses(d, 100_000, rng)
    S = losses.meta["S"]
    counts = np.bincount(losses.indices.ravel(), minlength=d)[1:]
    q = (S - 1) / (d - 1)
    se = math.sqrt(q * (1 - q) / losses.T)
    z = float(np.max(np.abs(counts / losses.T - q)) / se)
    same = figure1_losses(64, 50, np.random.default_rng(3)) == figure1_losses(64, 50, np.random.default_rng(3))
    return [
        Check("losses are S-sparse 0-1 vectors", ok, ""),
        Check("log instance support frequencies", z <= 3.0, f"max |z| = {z:.2f} over {d - 1} coordinates"),
        Check("identical seeds give identical losses", same, ""),
    ]


def suite_meta(rng, with_alternating: bool = True) -> list[Check]:
    lw = np.zeros(5)
    simplex_ok = shift_ok = True
    for _ in range(200):
        f = rng.uniform(-3, 3, size=5)
        lw2, p = mw_update(lw, f, 0.1, 2.0)
        _, p_shift = mw_update(lw, f + rng.uniform(-5, 5), 0.1, 2.0)
        simplex_ok &= abs(p.sum() - 1) <= 1e-12 and bool(np.all(p > 0))
        shift_ok &= bool(np.max(np.abs(p - p_shift)) <= 1e-12)
        lw = lw2
    res = run_experiment(validate({"experiment": "mirror_weights", "seeds": [0, 1, 2],
                                   "params": {"g_samples": 5000}}))
    out = [Check("weights stay on the simplex", simplex_ok, ""),
           Check("common loss shift leaves weights unchanged", shift_ok, "")] + res.checks
    if with_alternating:
        out += run_experiment(validate({"experiment": "alternating"})).checks
    return out


def suite_lemma1(rng) -> list[Check]:
    return run_experiment(validate({"experiment": "lemma1_check"})).checks


def suite_diameter(rng) -> list[Check]:
    return run_experiment(validate({"experiment": "diameter_check"})).checks


def suite_regret_law(rng) -> list[Check]:
    runs = regret_law_runs(rng)
    bad = [(n, T, rec.regret, b) for n, T, rec, b in runs if rec.regret > b + 1e-6]
    worst = max(rec.regret - b for _, _, rec, b in runs)
    return [Check("regret <= sqrt2 D G_emp sqrt(T)", not bad,
                  f"{len(runs) - len(bad)} of {len(runs)} runs; worst margin {worst:.3f}")]


def suite_determinism(rng) -> list[Check]:
    cfg = validate({"experiment": "figure1", "d": 64, "T": 60, "seeds": [0, 1],
                    "params": {"ns": [1, 8], "g_samples": 2000, "eta_exponents": [0, 0]}})
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    c = run_experiment(cfg, workers=2)
    key = lambda r: (r["cell"], r["seed"], r["variant"])
    same = lambda x, y: sorted(x.rows, key=key) == sorted(y.rows, key=key)
    return [Check("repeated experiment runs are identical", same(a, b), ""),
            Check("parallel and serial runs are identical", same(a, c), "")]


def suite_mirror_weights(rng) -> list[Check]:
    return suite_meta(rng, with_alternating=False)


SUITES = {
    "geometry": suite_geometry,
    "kernels": suite_kernels,
    "projection": suite_projection,
    "omd": suite_omd,
    "instances": suite_instances,
    "meta": suite_meta,
    "diameter": suite_diameter,
    "lemma1": suite_lemma1,
    "regret_law": suite_regret_law,
    "determinism": suite_determinism,
    "mirror_weights": suite_mirror_weights,
}

# "all" covers every module once; the narrower suites are subsets
ALL = ("geometry", "kernels", "projection", "omd", "instances", "meta", "lemma1", "determinism")


def run_suite(name: str, seed: int = 0) -> list[Check]:
    names = ALL if name == "all" else (name,)
    if any(n not in SUITES for n in names):
        raise KeyError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    out = []
    for n in names:
        out += SUITES[n](np.random.default_rng(seed))
    return out
