"""Experiment definitions.

Each experiment splits into *cells* (a configuration such as one block
count) that are run once per seed.  ``run_cell`` returns plain rows plus the
run records to persist; ``checks`` turns aggregated rows into pass/fail
verdicts, and ``plot`` optionally draws an SVG.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .._rng import derive_seed
from ..geometry import random_equal_partition
from ..instances import (
    alternating_adversary_losses,
    figure1_losses,
    log_improvement_losses,
    mixed_case_adversary,
    poly_improvement_instance,
    sparse_sampler,
    uniform_sparse_sampler,
)
from ..meta import Portfolio, alternating_omd_run, loss_range, mirror_weights_run
from ..mirror_maps import MirrorMapSpec
from ..omd_core import (
    StepSizeRule,
    diameter,
    euclidean_diameter,
    euclidean_radius,
    fit_into_unit_ball,
    gradient_bound_estimate,
    max_dual_norm,
    run_omd,
)
from ..projection import BodySpec
from . import svg


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tail = f": {self.detail}" if self.detail else ""
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}{tail}"


@dataclass
class CellOutput:
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)  # (tag, RunRecord)
    partitions: dict = field(default_factory=dict)  # tag -> block_of list


def instance_seed(cfg, seed: int) -> int:
    """Seed of the loss sequence; shared by every cell so cells are paired."""
    return derive_seed(cfg["master_seed"], 0, seed)


def cell_seed(cfg, cell_index: int, seed: int) -> int:
    return derive_seed(cfg["master_seed"], cell_index + 1, seed)


def block_map(d: int, n: int, rng) -> MirrorMapSpec:
    if n == 1:
        return MirrorMapSpec.euclidean()
    return MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))


def _partition_of(m: MirrorMapSpec) -> dict:
    return {"map": m.partition.block_of.tolist()} if m.partition is not None else {}


def dyadic(d: int) -> list[int]:
    return [2**k for k in range(int(math.log2(d)) + 1) if d % 2**k == 0]


def stats(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# figure 1


def _fig1_ns(cfg):
    return cfg["params"]["ns"] or dyadic(cfg["d"])


def _fig1_S(cfg):
    S = cfg["params"]["S"]
    return int(math.floor(math.log(cfg["d"]))) if S is None else S


def fig1_cells(cfg):
    return [{"id": f"n{n}", "n": n} for n in _fig1_ns(cfg)]


def fig1_run(cfg, cell, cell_index, seed) -> CellOutput:
    d, T, p = cfg["d"], cfg["T"], cfg["params"]
    S = _fig1_S(cfg)
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    losses = figure1_losses(d, T, np.random.default_rng(instance_seed(cfg, seed)), S)
    body, x1 = BodySpec.simplex(d), np.full(d, 1.0 / d)
    m = block_map(d, cell["n"], rng)
    D = diameter(body, m, x1)
    G = max(gradient_bound_estimate(m, sparse_sampler(d, S, i), p["g_samples"], rng) for i in range(4))
    out = CellOutput()
    rec = run_omd(body, m, losses, StepSizeRule.theory_sqrt2(D, G, T), x1, seed=seed)
    out.rows.append({"variant": "theory", "eta": rec.manifest["rule"]["eta"], "regret": rec.regret,
                     "D": D, "G": G})
    out.records.append(("theory", rec))
    eta0 = euclidean_diameter(body) / math.sqrt(S) * math.sqrt(2.0 / T)
    lo, hi = p["eta_exponents"]
    for j in range(lo, hi + 1):
        eta = eta0 * 2.0**j
        rec = run_omd(body, m, losses, StepSizeRule.fixed(eta), x1, seed=seed)
        out.rows.append({"variant": f"grid{j:+d}", "eta": eta, "regret": rec.regret})
        out.records.append((f"grid{j:+d}", rec))
    return out


def fig1_best(agg: dict) -> dict:
    """Best seed-mean regret over the step-size grid for every cell."""
    best = {}
    for (cell, variant), a in agg.items():
        if variant.startswith("grid") and (cell not in best or a["mean"] < best[cell]["mean"]):
            best[cell] = dict(a, variant=variant)
    return best


def fig1_checks(cfg, agg):
    best = fig1_best(agg)
    d = cfg["d"]
    need = {"n1", "n16", f"n{d}"}
    if not need <= set(best):
        return [Check("figure1 ordering", True, "skipped: needs n=1, 16 and d cells")]
    b1, b16, bd = best["n1"]["mean"], best["n16"]["mean"], best[f"n{d}"]["mean"]
    return [
        Check("figure1 n=16 beats n=1 and n=d", b16 < b1 and b16 < bd,
              f"best-grid mean regret n=1 {b1:.2f}, n=16 {b16:.2f}, n={d} {bd:.2f}"),
        Check("figure1 n=16 regret <= 15", b16 <= 15.0, f"{b16:.2f}"),
        Check("figure1 n=1 and n=d regret >= 18", min(b1, bd) >= 18.0, f"{b1:.2f}, {bd:.2f}"),
    ]


def fig1_plot(cfg, agg):
    best = fig1_best(agg)
    cells = [c for c in fig1_cells(cfg) if c["id"] in best]
    labels = [str(int(math.log2(c["n"]))) for c in cells]
    return svg.bar_chart(
        labels,
        {"best step size": [best[c["id"]]["mean"] for c in cells],
         "theory step size": [agg.get((c["id"], "theory"), {"mean": float("nan")})["mean"] for c in cells]},
        errors={"best step size": [best[c["id"]]["stderr"] for c in cells],
                "theory step size": [agg.get((c["id"], "theory"), {"stderr": 0.0})["stderr"] for c in cells]},
        title=f"Regret at T={cfg['T']} vs number of blocks (d={cfg['d']})",
        xlabel="log2 n", ylabel="mean regret",
    )


# ---------------------------------------------------------------------------
# logarithmic improvement on the simplex


def _log_S(cfg):
    S = cfg["params"]["S"]
    return int(round(math.log(cfg["d"]))) if S is None else S


def log_cells(cfg):
    return [{"id": "opgd", "n": 1}, {"id": "oeg"}, {"id": "block_S", "n": _log_S(cfg)}]


def log_run(cfg, cell, cell_index, seed) -> CellOutput:
    d, T, p = cfg["d"], cfg["T"], cfg["params"]
    S = _log_S(cfg)
    body, losses, x1 = log_improvement_losses(d, T, np.random.default_rng(instance_seed(cfg, seed)), S)
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    row = {"variant": "-"}
    if cell["id"] == "opgd":
        m, rule = MirrorMapSpec.euclidean(), StepSizeRule.fixed(math.sqrt(1 - 1 / d) / math.sqrt(S * T))
    elif cell["id"] == "oeg":
        m, rule = MirrorMapSpec.entropic(), StepSizeRule.fixed(math.sqrt(math.log(d) / T))
    else:
        m = block_map(d, S, rng)
        D = diameter(body, m, x1)
        G = gradient_bound_estimate(m, sparse_sampler(d, S, 0), p["g_samples"], rng)
        rule = StepSizeRule.theory_sqrt2(D, G, T)
        row.update(D=D, G=G)
    rec = run_omd(body, m, losses, rule, x1, seed=seed)
    row.update(eta=rule.constant, regret=rec.regret)
    return CellOutput([row], [("run", rec)])


def log_bounds(cfg):
    d, T = cfg["d"], cfg["T"]
    S = _log_S(cfg)
    T0 = 1 + 0.5 * math.sqrt((1 - 1 / d) * S * T)
    return {"opgd": T0 / 4, "oeg": 0.25 * math.sqrt(T * math.log(d)),
            "upper": cfg["params"]["C"] * math.log(math.log(d)) * math.sqrt(T)}


def log_checks(cfg, agg):
    b = log_bounds(cfg)
    o, e, s = agg[("opgd", "-")], agg[("oeg", "-")], agg[("block_S", "-")]
    ratio = min(o["mean"], e["mean"]) / s["mean"]
    target = cfg["params"]["ratio_target"]
    return [
        Check("OPGD regret >= T0/4", o["mean"] + 3 * o["stderr"] >= b["opgd"],
              f"mean {o['mean']:.2f} ± {o['stderr']:.2f} vs {b['opgd']:.2f}"),
        Check("OEG regret >= sqrt(T ln d)/4", e["mean"] + 3 * e["stderr"] >= b["oeg"],
              f"mean {e['mean']:.2f} ± {e['stderr']:.2f} vs {b['oeg']:.2f}"),
        Check("block n=S regret <= C lnln(d) sqrt(T)", s["mean"] <= b["upper"],
              f"mean {s['mean']:.2f} vs {b['upper']:.2f}"),
        Check(f"min(OPGD, OEG) / block n=S >= {target:g}", ratio >= target, f"ratio {ratio:.3f}"),
    ]


# ---------------------------------------------------------------------------
# polynomial improvement on the pyramid


def poly_cells(cfg):
    S = round(cfg["d"] ** (1 / 3))
    return [{"id": "opgd", "n": 1}, {"id": "block_d", "n": cfg["d"]}, {"id": "block_S", "n": S}]


def z1_iterate_bound(d: int, T: int, R: float) -> np.ndarray:
    K = 128.0 / T * math.log(d * T) ** 2
    return 1.0 / d + math.sqrt(K) / (R * math.sqrt(R)) * np.arange(T)


def poly_run(cfg, cell, cell_index, seed) -> CellOutput:
    d, T, p = cfg["d"], cfg["T"], cfg["params"]
    P, losses, xa, _ = poly_improvement_instance(
        d, T, np.random.default_rng(instance_seed(cfg, seed)), rescale=False)
    S = losses.meta["S"]
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    row = {"variant": "-"}
    if cell["id"] == "opgd":
        m = MirrorMapSpec.euclidean()
        rule = StepSizeRule.theory_plain(euclidean_radius(P, xa), math.sqrt(S), T)
        rec = run_omd(P, m, losses, rule, xa, seed=seed)
    elif cell["id"] == "block_d":
        m = block_map(d, d, rng)
        Ph, Lh, zh, R = fit_into_unit_ball(P, m, losses, xa)
        rule = StepSizeRule.theory_plain(diameter(Ph, m, zh), max_dual_norm(m, Lh), T)
        rec = run_omd(Ph, m, Lh, rule, zh, seed=seed, manifest={"R": R, "rescaled": True})
        rec.R = R
        ok = bool(np.all(rec.x1_coord <= z1_iterate_bound(d, T, R) + 1e-12))
        row.update(R=R, z1_bound_holds=ok, z1_max=float(rec.x1_coord.max()))
    else:
        m = block_map(d, S, rng)
        D = diameter(P, m, xa)
        G = gradient_bound_estimate(m, sparse_sampler(d, S, 0), p["g_samples"], rng)
        rule = StepSizeRule.theory_sqrt2(D, G, T)
        rec = run_omd(P, m, losses, rule, xa, seed=seed)
        row.update(D=D, G=G, R=rec.R)
    row.update(eta=rule.constant, regret=rec.regret)
    return CellOutput([row], [("run", rec)])


def poly_checks(cfg, agg, rows):
    o, dd, s = agg[("opgd", "-")], agg[("block_d", "-")], agg[("block_S", "-")]
    target = cfg["params"]["ratio_target"]
    holds = [r["z1_bound_holds"] for r in rows if r["cell"] == "block_d" and "z1_bound_holds" in r]
    need = cfg["params"]["min_bound_seeds"]
    return [
        Check(f"OPGD / block n=S >= {target:g}", o["mean"] / s["mean"] >= target,
              f"{o['mean']:.2f} / {s['mean']:.2f} = {o['mean'] / s['mean']:.3f}"),
        Check(f"block n=d / block n=S >= {target:g}", dd["mean"] / s["mean"] >= target,
              f"{dd['mean']:.2f} / {s['mean']:.2f} = {dd['mean'] / s['mean']:.3f}"),
        Check("z1 iterate bound for block n=d", sum(holds) >= min(need, len(holds)),
              f"holds for {sum(holds)} of {len(holds)} seeds"),
    ]


# ---------------------------------------------------------------------------
# alternating maps


def alt_cells(cfg):
    p = cfg["params"]
    return [{"id": f"euc{ee:g}_ent{en:g}_T{T}", "eta_euc": ee, "eta_ent": en, "T": T}
            for T in p["horizons"] for ee in p["eta_euc"] for en in p["eta_ent"]]


def _alt_regret(case, T, ee, en):
    body, losses, x1 = alternating_adversary_losses(case, T)
    return alternating_omd_run(body, losses, ee, en, x1)


def alt_run(cfg, cell, cell_index, seed) -> CellOutput:
    ee, en, T = cell["eta_euc"], cell["eta_ent"], cell["T"]
    out = CellOutput()
    regrets = {}
    for horizon in (T, 2 * T):
        if cfg["params"]["expectation"] == "exact":
            recs = [_alt_regret(c, horizon, ee, en) for c in (1, 2)]
            regrets[horizon] = 0.5 * (recs[0].regret + recs[1].regret)
            for c, rec in zip((1, 2), recs):
                out.records.append((f"T{horizon}_case{c}", rec))
        else:
            losses = mixed_case_adversary(horizon, np.random.default_rng(instance_seed(cfg, seed)))
            rec = alternating_omd_run(BodySpec.simplex(2), losses, ee, en, np.array([0.5, 0.5]))
            regrets[horizon] = rec.regret
            out.records.append((f"T{horizon}", rec))
    r1, r2 = regrets[T], regrets[2 * T]
    out.rows.append({"variant": "-", "eta_euc": ee, "eta_ent": en, "T": T, "regret": r1,
                     "regret_2T": r2, "ratio": r2 / r1 if r1 != 0 else float("nan"),
                     "rate": r1 / T})
    return out


def alt_seed_means(rows) -> list[dict]:
    """Per step-size cell, average regret(T) and regret(2T) over seeds."""
    groups = {}
    for r in rows:
        if not r.get("failed"):
            groups.setdefault(r["cell"], []).append(r)
    out = []
    for rs in groups.values():
        r1 = float(np.mean([r["regret"] for r in rs]))
        r2 = float(np.mean([r["regret_2T"] for r in rs]))
        T = rs[0]["T"]
        out.append({"eta_euc": rs[0]["eta_euc"], "eta_ent": rs[0]["eta_ent"], "T": T,
                    "regret": r1, "regret_2T": r2,
                    "ratio": r2 / r1 if r1 != 0 else float("nan"), "rate": r1 / T})
    return out


def alt_checks(cfg, agg, rows):
    p = cfg["params"]
    lo, hi = p["ratio_band"]
    means = alt_seed_means(rows)
    out = []
    for T in p["horizons"]:
        mine = [r for r in means if r["T"] == T]
        bad = [r for r in mine if not (lo <= r["ratio"] <= hi and r["rate"] >= p["min_rate"])]
        worst = ", ".join(f"(euc {r['eta_euc']:g}, ent {r['eta_ent']:g}: ratio {r['ratio']:.3f}, "
                          f"rate {r['rate']:.4f})" for r in bad[:4])
        out.append(Check(f"alternating linear regret at T={T}", not bad,
                         f"{len(mine) - len(bad)} of {len(mine)} step-size pairs pass"
                         + (f"; failing e.g. {worst}" if bad else "")))
    return out


def alt_plot(cfg, agg, rows):
    series = {}
    for r in sorted(alt_seed_means(rows), key=lambda r: r["T"]):
        key = f"euc={r['eta_euc']:g}, ent={r['eta_ent']:g}"
        xs, ys = series.setdefault(key, ([], []))
        for T, reg in ((r["T"], r["regret"]), (2 * r["T"], r["regret_2T"])):
            if T not in xs:
                xs.append(T)
                ys.append(reg)
    return svg.line_chart(series, title="Alternating Euclidean/entropic steps: expected regret",
                          xlabel="T", ylabel="regret")


# ---------------------------------------------------------------------------
# MirrorWeights


def mw_cells(cfg):
    return [{"id": "mirror_weights"}]


def theory_portfolio(body, losses, x1, d, ns, g_samples, rng, S):
    entries, labels = [], []
    for n in ns:
        m = block_map(d, n, rng)
        D = diameter(body, m, x1)
        G = max(gradient_bound_estimate(m, sparse_sampler(d, S, i), g_samples, rng) for i in range(4))
        entries.append((m, StepSizeRule.theory_sqrt2(D, G, losses.T)))
        labels.append(f"n={n}")
    return Portfolio.create(entries, loss_range(body, losses), losses.T, labels)


def mw_run(cfg, cell, cell_index, seed) -> CellOutput:
    d, T, p = cfg["d"], cfg["T"], cfg["params"]
    losses = figure1_losses(d, T, np.random.default_rng(instance_seed(cfg, seed)))
    S = losses.meta["S"]
    body, x1 = BodySpec.simplex(d), np.full(d, 1.0 / d)
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    if p["portfolio"] == "theory":
        port = theory_portfolio(body, losses, x1, d, p["ns"], p["g_samples"], rng, S)
    else:
        from ..meta import build_block_norm_portfolio

        port = build_block_norm_portfolio(d, T, body, x1, losses_preview=losses, rng=rng)
    res = mirror_weights_run(body, port, losses, x1, seed=seed)
    best = min(r.regret for r in res.experts)
    slack = 2 * port.rho * math.sqrt(T * math.log(port.N))
    row = {"variant": "-", "regret": res.meta.regret, "best_expert": best, "slack": slack,
           "rho": port.rho, "N": port.N, "bound_holds": res.meta.regret <= best + slack + 1e-6}
    # the degenerate one-expert portfolio must reproduce plain OMD exactly
    m0, r0 = port.entries[0]
    single = mirror_weights_run(body, Portfolio.create([(m0, r0)], port.rho, T), losses, x1)
    plain = run_omd(body, m0, losses, r0, x1)
    row["single_expert_exact"] = bool(np.array_equal(single.meta.regret_trace, plain.regret_trace))
    out = CellOutput([row], [("meta", res.meta)])
    out.records += [(f"expert{k}", r) for k, r in enumerate(res.experts)]
    return out


def mw_checks(cfg, agg, rows):
    ok = [r["bound_holds"] for r in rows]
    exact = [r["single_expert_exact"] for r in rows]
    gaps = [r["regret"] - r["best_expert"] - r["slack"] for r in rows]
    return [
        Check("MirrorWeights regret <= best expert + 2 rho sqrt(T ln N)", all(ok),
              f"{sum(ok)} of {len(ok)} runs; worst margin {max(gaps):.3f}"),
        Check("one-expert MirrorWeights equals plain OMD bit-exactly", all(exact),
              f"{sum(exact)} of {len(exact)} runs"),
    ]


# ---------------------------------------------------------------------------
# Monte Carlo check of the sparse dual-norm bound


def dual_moment_cells(cfg):
    return [{"id": f"d{d}_S{S}_n{n}", "d": d, "S": S, "n": n} for d, S, n in cfg["params"]["cases"]]


def dual_moment_bound(S: int, n: int) -> float:
    return 6.0 * max(S / n, math.log(n))


def dual_moment_run(cfg, cell, cell_index, seed) -> CellOutput:
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    m = block_map(cell["d"], cell["n"], rng)
    value = gradient_bound_estimate(m, uniform_sparse_sampler(cell["d"], cell["S"]),
                                    cfg["params"]["samples"], rng) ** 2
    bound = dual_moment_bound(cell["S"], cell["n"])
    return CellOutput([{"variant": "-", "regret": value, "mean_sq_dual": value, "bound": bound,
                        "passed": value <= bound}], partitions=_partition_of(m))


def dual_moment_checks(cfg, agg, rows):
    return [Check(f"sparse dual-norm bound {r['cell']}", r["passed"],
                  f"E[dual^2] = {r['mean_sq_dual']:.4f} <= {r['bound']:.4f}") for r in rows]


# ---------------------------------------------------------------------------
# simplex diameter bound


def diam_cells(cfg):
    ns = cfg["params"]["ns"] or dyadic(cfg["d"])
    return [{"id": f"n{n}", "n": n} for n in ns]


def diam_run(cfg, cell, cell_index, seed) -> CellOutput:
    d, n = cfg["d"], cell["n"]
    rng = np.random.default_rng(cell_seed(cfg, cell_index, seed))
    m = block_map(d, n, rng)
    x1 = rng.dirichlet(np.ones(d))
    D = diameter(BodySpec.simplex(d), m, x1)
    bound = 2.0 * math.sqrt(1.0 + math.log(n))
    return CellOutput([{"variant": "-", "regret": D, "diameter": D, "bound": bound,
                        "passed": D <= bound + 1e-9}], partitions=_partition_of(m))


def diam_checks(cfg, agg, rows):
    out = []
    for cell in diam_cells(cfg):
        mine = [r for r in rows if r["cell"] == cell["id"]]
        worst = max(r["diameter"] for r in mine)
        out.append(Check(f"diameter bound n={cell['n']}", all(r["passed"] for r in mine),
                         f"max D {worst:.4f} <= {mine[0]['bound']:.4f} over {len(mine)} start points"))
    return out


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Experiment:
    name: str
    cells: object
    run: object
    checks: object
    plot: object = None


def _agg_only(fn):
    return lambda cfg, agg, rows: fn(cfg, agg)


REGISTRY = {
    "figure1": Experiment("figure1", fig1_cells, fig1_run, _agg_only(fig1_checks),
                          lambda cfg, agg, rows: fig1_plot(cfg, agg)),
    "log_improvement": Experiment("log_improvement", log_cells, log_run, _agg_only(log_checks)),
    "poly_improvement": Experiment("poly_improvement", poly_cells, poly_run, poly_checks),
    "alternating": Experiment("alternating", alt_cells, alt_run, alt_checks, alt_plot),
    "mirror_weights": Experiment("mirror_weights", mw_cells, mw_run, mw_checks),
    "lemma1_check": Experiment("lemma1_check", dual_moment_cells, dual_moment_run, dual_moment_checks),
    "diameter_check": Experiment("diameter_check", diam_cells, diam_run, diam_checks),
}
