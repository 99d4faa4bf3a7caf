"""Experiment configuration: YAML loading, defaults and strict validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import yaml

EXPERIMENTS = (
    "figure1",
    "log_improvement",
    "poly_improvement",
    "alternating",
    "mirror_weights",
    "lemma1_check",
    "diameter_check",
)

TOP_LEVEL = {"experiment", "d", "T", "seeds", "out", "master_seed", "workers", "params"}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _defaults(experiment: str) -> dict:
    if experiment == "figure1":
        return {"d": 4096, "T": 250, "seeds": list(range(20)),
                "params": {"ns": None, "S": None, "eta_exponents": [-4, 6],
                           "g_samples": 100_000}}
    if experiment == "log_improvement":
        return {"d": 4096, "T": 10_000, "seeds": list(range(20)),
                "params": {"S": None, "g_samples": 100_000, "ratio_target": 2.0, "C": 10.0}}
    if experiment == "poly_improvement":
        return {"d": 1728, "T": 4096, "seeds": list(range(10)),
                "params": {"g_samples": 100_000, "ratio_target": 2.0, "min_bound_seeds": 9}}
    if experiment == "alternating":
        return {"d": 2, "T": 4096, "seeds": [0],
                "params": {"horizons": [1024, 2048, 4096],
                           "eta_euc": [1e-3, 1e-2, 1e-1, 1.0, 10.0],
                           "eta_ent": [1e-3, 1e-2, 1e-1, 1.0, 10.0],
                           "expectation": "exact", "ratio_band": [1.8, 2.2],
                           "min_rate": 0.005}}
    if experiment == "mirror_weights":
        return {"d": 64, "T": 1000, "seeds": list(range(10)),
                "params": {"ns": [1, 4, 8, 16, 64], "portfolio": "theory",
                           "g_samples": 20_000}}
    if experiment == "lemma1_check":
        return {"d": None, "T": None, "seeds": [0],
                "params": {"cases": [[64, 8, 8], [256, 16, 4], [4096, 8, 16]],
                           "samples": 100_000}}
    if experiment == "diameter_check":
        return {"d": 256, "T": None, "seeds": list(range(20)), "params": {"ns": None}}
    raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown field {where}{key!r}")
        out[key] = val
    return out


def _check_int(name, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")


def _check_positive_list(name, v):
    if not isinstance(v, list) or not v or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0 or not math.isfinite(x)
        for x in v
    ):
        raise ConfigError(f"{name} must be a nonempty list of positive numbers")


def validate(cfg: dict) -> dict:
    """Fill defaults and reject anything malformed.  Returns a new dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(cfg) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    exp = cfg.get("experiment")
    if exp is None:
        raise ConfigError("missing field 'experiment'")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    base = _defaults(exp)
    params = cfg.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    out = {
        "experiment": exp,
        "d": cfg.get("d", base["d"]),
        "T": cfg.get("T", base["T"]),
        "seeds": cfg.get("seeds", base["seeds"]),
        "out": cfg.get("out"),
        "master_seed": cfg.get("master_seed", 0),
        "workers": cfg.get("workers", 1),
        "params": _merge(base["params"], params, "params."),
    }
    seeds = out["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a nonempty list of nonnegative integers")
    for s in seeds:
        _check_int("seed", s, 0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    _check_int("master_seed", out["master_seed"], 0)
    _check_int("workers", out["workers"], 1)
    if out["d"] is not None:
        _check_int("d", out["d"], 1)
    if out["T"] is not None:
        _check_int("T", out["T"], 1)
    if out["out"] is not None and not isinstance(out["out"], str):
        raise ConfigError("out must be a path string")
    _validate_params(exp, out)
    return out


def _validate_params(exp: str, cfg: dict) -> None:
    p, d, T = cfg["params"], cfg["d"], cfg["T"]
    if exp == "figure1":
        if d < 4:
            raise ConfigError("figure1 needs d >= 4")
        if p["ns"] is not None:
            for n in p["ns"]:
                _check_int("params.ns entry", n)
                if d % n:
                    raise ConfigError(f"block count {n} does not divide d={d}")
        ej = p["eta_exponents"]
        if not (isinstance(ej, list) and len(ej) == 2 and all(isinstance(v, int) for v in ej)
                and ej[0] <= ej[1]):
            raise ConfigError("params.eta_exponents must be [low, high] integers")
        _check_int("params.g_samples", p["g_samples"])
    elif exp == "log_improvement":
        if d < 3:
            raise ConfigError("log_improvement needs d >= 3")
        if T < math.log(d):
            raise ConfigError("log_improvement needs T >= ln d")
        S = round(math.log(d)) if p["S"] is None else p["S"]
        _check_int("params.S", S)
        if S > d or d % S:
            raise ConfigError(f"sparsity S={S} must divide d={d} (it is also the block count)")
        _check_int("params.g_samples", p["g_samples"])
    elif exp == "poly_improvement":
        c = round(d ** (1 / 3))
        if c**3 != d:
            raise ConfigError(f"poly_improvement needs a perfect-cube d, got {d}")
        _check_int("params.g_samples", p["g_samples"])
    elif exp == "alternating":
        hs = p["horizons"]
        if not isinstance(hs, list) or not hs:
            raise ConfigError("params.horizons must be a nonempty list")
        for h in hs:
            _check_int("horizon", h, 16)
            if h % 8:
                raise ConfigError("every horizon must be divisible by 8")
        _check_positive_list("params.eta_euc", p["eta_euc"])
        _check_positive_list("params.eta_ent", p["eta_ent"])
        if p["expectation"] not in ("exact", "sampled"):
            raise ConfigError("params.expectation must be 'exact' or 'sampled'")
        if d != 2:
            raise ConfigError("the alternating instance lives in d=2")
    elif exp == "mirror_weights":
        if p["portfolio"] not in ("theory", "block_norm_grid"):
            raise ConfigError("params.portfolio must be 'theory' or 'block_norm_grid'")
        if p["portfolio"] == "theory":
            if not isinstance(p["ns"], list) or not p["ns"]:
                raise ConfigError("params.ns must be a nonempty list")
            for n in p["ns"]:
                _check_int("params.ns entry", n)
                if d % n:
                    raise ConfigError(f"block count {n} does not divide d={d}")
        _check_int("params.g_samples", p["g_samples"])
        if p["portfolio"] == "block_norm_grid" and d & (d - 1):
            raise ConfigError("block_norm_grid portfolios need d a power of two")
    elif exp == "lemma1_check":
        cases = p["cases"]
        if not isinstance(cases, list) or not cases:
            raise ConfigError("params.cases must be a nonempty list of [d, S, n]")
        for case in cases:
            if not (isinstance(case, list) and len(case) == 3):
                raise ConfigError("each lemma1 case is [d, S, n]")
            dd, S, n = case
            for name, v in (("d", dd), ("S", S), ("n", n)):
                _check_int(f"case {name}", v)
            if S > dd or dd % n:
                raise ConfigError(f"invalid lemma1 case {case}")
        _check_int("params.samples", p["samples"])
    elif exp == "diameter_check":
        if p["ns"] is not None:
            for n in p["ns"]:
                _check_int("params.ns entry", n)
                if d % n:
                    raise ConfigError(f"block count {n} does not divide d={d}")


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return data if data is not None else {}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
