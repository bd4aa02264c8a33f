"""Batch experiment runner.

Every subcommand has a table of parameters with defaults.  Values are resolved from the
defaults, then a YAML config file (`--config`), then `--set key=value`, then the
subcommand's own flags.  Each run writes `<subcommand>.csv` and `<subcommand>.json` under
`--out`; the JSON embeds the resolved configuration.

Exit codes: 0 success, 1 configuration error, 2 precondition failure, 3 verification
failure (outputs are still written; the failed inequality is the finding).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; the message starts with the offending field path."""


# ---------------------------------------------------------------- helpers shared by runners


def random_affine_pair(rng: np.random.Generator, thick: bool):
    """Two linked affine Cantor sets whose thickness product is > 1 (thick) or <= 1.

    The hulls interleave, so each contains an endpoint of the other and neither set can
    sit inside a gap of the other.
    """
    from .cantor import affine_s_system

    def ratios(tau: float) -> tuple[float, float]:
        # self-similar two-branch set: tau = min(c1, c2) / (1 - c1 - c2)
        spread = float(rng.uniform(1.0, 1.6))
        c = 1.0 / (1.0 + spread + 1.0 / tau)
        return (c, c * spread) if rng.random() < 0.5 else (c * spread, c)

    if thick:
        t1 = float(rng.uniform(1.1, 3.0))
        t2 = float(rng.uniform(1.05 / t1, 3.0))
    else:
        t1 = float(rng.uniform(0.2, 0.95))
        t2 = float(rng.uniform(0.2, 0.95 / t1 if 0.95 / t1 < 1 else 0.95))
    s = float(rng.uniform(0.1, 0.9))
    L = float(rng.uniform(1.05 - s, 2.0))
    K1 = affine_s_system(*ratios(t1), base=(0.0, 1.0))
    K2 = affine_s_system(*ratios(t2), base=(s, s + L))
    return K1, K2


def _fmt(x: Any) -> Any:
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if x is None or isinstance(x, str):
        return x
    return str(x)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\r\n")
    header = list(rows[0])
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v) for v in (r[h] for h in header)])
    return buf.getvalue()


Result = tuple[list[dict], dict, bool | None]


# ---------------------------------------------------------------- runners


def run_thickness(p: dict, seed: int) -> Result:
    from .cantor import thickness, u_bridges_quadratic
    K = u_bridges_quadratic(p["mu"], p["m"], p["depth"])
    rows = [{"depth": d, "tau": thickness(K, d).tau} for d in range(1, p["depth"] + 1)]
    return rows, {"tau_final": rows[-1]["tau"]}, None


def run_bridges(p: dict, seed: int) -> Result:
    from .cantor import u_bridges_quadratic
    K = u_bridges_quadratic(p["mu"], p["m"], p["depth"])
    rows = []
    for g in range(p["depth"] + 1):
        lo, hi, ln = K.line(g)
        for i in range(len(lo)):
            rows.append({"generation": g, "itinerary": "".join(map(str, K.itinerary(g, i))),
                         "lo": float(lo[i]), "hi": float(hi[i]), "length": float(ln[i])})
    return rows, {"bridges": len(rows)}, None


def run_gap_lemma(p: dict, seed: int) -> Result:
    from .cantor import gap_lemma_check, s_bridges
    rng = np.random.default_rng(seed)
    rows, ok = [], True
    for thick in (True, False):
        for i in range(p["pairs"]):
            S1, S2 = random_affine_pair(rng, thick)
            K1, K2 = s_bridges(S1, p["depth"]), s_bridges(S2, p["depth"])
            res = gap_lemma_check(K1, K2, p["depth"])
            good = (res.applicable and res.witness is not None) if thick else not res.applicable
            ok &= good
            rows.append({"family": "thick" if thick else "thin", "index": i,
                         "tau_product": res.tau_product, "applicable": res.applicable,
                         "witness": res.witness, "expected": good, "reason": res.reason})
    return rows, {"all_expected": ok}, ok


def run_distortion(p: dict, seed: int) -> Result:
    from .cantor import distortion_report, u_bridges_quadratic
    from .cantor.core import kappa_threshold
    K = u_bridges_quadratic(p["mu"], p["m"], p["kappa_depth"])
    kappa = kappa_threshold(K)
    if kappa is None:
        raise ValueError("no generation threshold found within the computed depth")
    gens = list(range(kappa, kappa + p["extra_generations"] + 1))
    K = u_bridges_quadratic(p["mu"], p["m"], gens[-1] + 1)
    rep = distortion_report(K, gens)
    rows = [{"letter": s.letter, "min_ratio": s.min_ratio, "max_ratio": s.max_ratio,
             "lower": s.lower, "upper": s.upper, "count": s.count} for s in rep.letters]
    ok = all(s.lower <= s.min_ratio and s.max_ratio <= s.upper for s in rep.letters)
    ok &= rep.min_gap_over_child >= 2.0 ** -(p["m"] + 1) and rep.min_child_over_bottom_interval >= 1 / 3
    return rows, {"kappa": kappa, "min_gap_over_child": rep.min_gap_over_child,
                  "min_child_over_bottom_interval": rep.min_child_over_bottom_interval}, ok


def run_link_search(p: dict, seed: int) -> Result:
    from .linking import linking_search, standard_pair
    pair, B0, A0 = standard_pair(p["m"], p["c"])
    res = linking_search(pair, B0, A0, p["eps"], depth=p["depth"])
    rows = [{"check": k, "passed": bool(v)} for k, v in sorted(res.checks.items())]
    return rows, {"delta": str(res.delta), "alignment": str(res.alignment), "valid": res.valid}, res.valid


def run_linear_growth(p: dict, seed: int) -> Result:
    from .linking import growth_checks, linear_growth, standard_pair
    pair, B0, A0 = standard_pair(p["m"], p["c"])
    seq = linear_growth(pair, B0, A0, p["eps"], K=p["K"], depth=p["depth"])
    rows = [{"k": lv.k, "delta": str(lv.delta), "n": lv.n, "i": lv.i} for lv in seq.levels]
    checks = growth_checks(pair, seq, p["depth"]) if seq.failure is None else {}
    ok = seq.failure is None and all(checks.values())
    return rows, {"failure": seq.failure, "checks": checks}, ok


def run_critical_chain(p: dict, seed: int) -> Result:
    from .linking import chain_generations, critical_chain
    g = chain_generations(K=p["K"], m=p["m"], T=p["T"])
    rows, ok = [], True
    for j, k in enumerate(g.k):
        n_hat = g.n_hat[j + 1]
        v = ("12" * k)[:k]
        w_hat = ("21" * n_hat)[:n_hat]
        cc = critical_chain(k, p["z0"], n_hat, v, w_hat)
        rev = cc.s_itinerary == cc.u_itinerary[::-1]
        env = g.i_hat[j] + n_hat < g.C1_fit * (g.k[j] * (p["T"] or 1)) + g.C2_fit if p["T"] else True
        ok &= rev and env
        rows.append({"k": k, "i_hat": g.i_hat[j], "n_hat_next": n_hat, "bracket": cc.bracket,
                     "length": cc.length, "reversal": rev})
    return rows, {"C1_fit": g.C1_fit, "C2_fit": g.C2_fit}, ok


def run_perturb_budget(p: dict, seed: int) -> Result:
    from .perturb import budget_threshold, c_t_budget, displacement_cr_norm, perturbation_sequence
    thr = budget_threshold(p["r"], p["m"], p["N_u"], p["r_minus"])
    rows = []
    for T in p["T_values"]:
        try:
            ct = c_t_budget(T, p["r"], p["m"], p["N_u"], 1.0, 1.0, 0, p["r_minus"])
        except ValueError:
            ct = None
        norm = None
        if T > thr:
            seq = perturbation_sequence(T, levels=p["levels"], r=p["r"], m=p["m"], N_u=p["N_u"],
                                        r_minus=p["r_minus"])
            norm = displacement_cr_norm(seq.composite, p["r"])
        rows.append({"T": T, "C_T": ct, "norm": norm})
    norms = [r["norm"] for r in rows if r["norm"] is not None]
    ok = all(b < a for a, b in zip(norms, norms[1:]))
    return rows, {"threshold": thr}, ok


def _chain_setup(p: dict):
    from .wander import ChainModel, Generations, default_setup
    gens = Generations.linear(p["i_slope"], 0, p["n_slope"], 0)
    return default_setup(ChainModel(), tuple(p["switches"]), gens, span=p["span"],
                         eps_factor=p["eps_factor"])


def run_chain(p: dict, seed: int) -> Result:
    from .wander import (ChainModel, Generations, Schedule, chain_constants, half_power_threshold,
                         z0_feasible)
    model = ChainModel()
    zc = z0_feasible(model.omega, model.lam, model.sigma, model.eta)
    z0 = p["z0"] or zc.z0
    sched = Schedule(z0, tuple(p["switches"]))
    gens = Generations.linear(p["i_slope"], 0, p["n_slope"], 0)
    c = chain_constants(sched, model, p["K"] + 1, generations=gens, eps=p["eps"])
    rows = []
    worst = 0.0
    for k in range(1, p["K"] + 1):
        r = c.row(k)
        res = c.recurrence_residual(k)
        worst = max(worst, res)
        rows.append({"k": k, "z": r.z, "i_hat": r.i_hat, "n_hat_next": r.n_hat_next,
                     "bracket": r.bracket, "p": r.p, "q": r.q, "r": r.r,
                     "log10_b": r.log_b / math.log(10), "m": r.m, "recurrence_residual": res})
    ks = half_power_threshold(c)
    return rows, {"z0": z0, "eta1": zc.eta1, "binding": zc.binding, "k_star": ks,
                  "max_recurrence_residual": worst}, worst <= 1e-10


def run_rectangle_lemma(p: dict, seed: int) -> Result:
    from .wander import verify_rectangle_lemma
    st = _chain_setup(p)
    rep = verify_rectangle_lemma(st.chain)
    rows = [{"k": r.k, "log10_b": r.log10_b, "margin": r.margin, "j_ratio": r.j_ratio,
             "passed": r.passed} for r in rep.rows]
    return rows, {"k0": st.k0, "eps": st.eps, "min_margin": rep.min_margin,
                  "j_inside_half": rep.j_inside_half}, rep.all_passed


def run_wander(p: dict, seed: int) -> Result:
    from .wander import ChainMap, TwoSheetLift, verify_wandering
    st = _chain_setup(dict(p, eps_factor=1.0, span=p["rounds"] + 2))
    fmap = ChainMap(st.chain)
    rep = verify_wandering(fmap, st.k0, p["rounds"])
    ok = rep.passed
    summary = {"k0": st.k0, "horizon": rep.horizon, "pairwise_disjoint": rep.pairwise_disjoint,
               "diameters_decreasing": rep.diameters_decreasing, "visits_both": rep.visits_both}
    if p["lift"]:
        lift = verify_wandering(TwoSheetLift(fmap), st.k0, p["rounds"])
        summary["lift_passed"] = lift.passed
        ok &= lift.passed
    rows = [{"k": c[0], "m_hat": c[1], "log10_diam": c[2], "log10_diam_R": c[3]} for c in rep.checkpoints]
    return rows, summary, ok


def run_historic(p: dict, seed: int) -> Result:
    from .measures import geometric_switches, historic_detect, schedule_from_switches
    sw = p["switches"]
    if sw == "geometric":
        switches = tuple(math.ceil(p["first"] * p["ratio"] ** a - 1e-9) for a in range(p["Kmax"]))
        checkpoints = switches
        sched = schedule_from_switches(p["z0"], switches)
    elif sw == "none":
        checkpoints = geometric_switches(p["first"], p["ratio"], p["first"] * p["ratio"] ** (p["Kmax"] - 1))
        sched = schedule_from_switches(p["z0"], ())
    else:
        raise ValueError(f"switches must be 'geometric' or 'none', got {sw!r}")
    rep = historic_detect(sched, max(checkpoints), checkpoints_at=checkpoints, tolerance=p["tolerance"])
    rows = []
    for c, a, b in zip(rep.checkpoints, rep.dist_nu0, rep.dist_nu1):
        fp, fph, fo = c.fractions()
        rows.append({"k": c.k, "m_hat": c.m_hat, "weight_p": fp, "weight_phat": fph,
                     "weight_other": fo, "dist_to_nu0": a, "dist_to_nu1": b})
    summary = json.loads(rep.to_json())
    expected = sw == "geometric"
    return rows, summary, rep.historic == expected


def run_henon_scan(p: dict, seed: int) -> Result:
    from .maps import henon
    from .saddle import find_saddles, fold_excess, tangency_bisect
    rows = []
    for a in np.linspace(p["a_min"], p["a_max"], p["steps"]):
        a = float(a)
        sad = find_saddles(henon(a, p["b"]), (-3.0, 3.0, -3.0, 3.0))
        try:
            fe = fold_excess(henon, a, p["b"])[0]
        except (ArithmeticError, ValueError):
            fe = None
        rows.append({"a": a, "saddles": len(sad), "fold_excess": fe})
    summary: dict = {}
    if p["bisect"]:
        t = tangency_bisect(henon, p["b"], (p["a_min"], p["a_max"]), tol=p["tol"])
        summary = {"a_tangency": t.parameter, "residual": t.residual, "curvature": t.second_derivative}
    return rows, summary, None


def run_renorm(p: dict, seed: int) -> Result:
    from .saddle import perturbed_renorm_model, renorm_fit
    model = perturbed_renorm_model(p["lam"], p["sigma"], p["coupling"], p["cubic"])
    rows = []
    for n in p["n_values"]:
        f = renorm_fit(model, n, p["mu_bar"])
        rows.append({"n": n, "mu": f.mu, "defect": f.defect, "scale_x": f.scale_x, "scale_y": f.scale_y})
    d = [r["defect"] for r in rows]
    return rows, {"final_defect": d[-1]}, all(b < a for a, b in zip(d, d[1:]))


SUBCOMMANDS: dict[str, tuple[Callable[[dict, int], Result], dict, str]] = {
    "thickness": (run_thickness, {"m": 4, "mu": -2.0, "depth": 10}, "thickness per depth"),
    "bridges": (run_bridges, {"m": 4, "mu": -2.0, "depth": 5}, "u-bridge intervals"),
    "gap-lemma": (run_gap_lemma, {"pairs": 50, "depth": 14}, "randomized Gap Lemma certificates"),
    "distortion": (run_distortion, {"m": 3, "mu": -2.0, "kappa_depth": 10, "extra_generations": 6},
                   "parent/child ratio bounds"),
    "link-search": (run_link_search, {"m": 16, "c": 0.4, "eps": 0.05, "depth": 12}, "one linking search"),
    "linear-growth": (run_linear_growth, {"m": 16, "c": 0.4, "eps": 0.5, "K": 8, "depth": 12},
                      "linear-growth sequence"),
    "critical-chain": (run_critical_chain, {"K": 50, "z0": 3, "m": 16, "T": None}, "chain itineraries"),
    "perturb-budget": (run_perturb_budget, {"r": 3, "m": 3, "N_u": 2, "r_minus": 2.1,
                                            "T_values": [13, 14, 16, 20, 30], "levels": 6},
                       "bump budgets and perturbation norms"),
    "chain": (run_chain, {"z0": None, "K": 30, "eps": 1.0, "i_slope": 3, "n_slope": 2,
                          "switches": []}, "constant ladder"),
    "rectangle-lemma": (run_rectangle_lemma, {"span": 20, "eps_factor": 1.0, "i_slope": 3,
                                              "n_slope": 2, "switches": []}, "Rectangle Lemma check"),
    "wander": (run_wander, {"rounds": 5, "lift": True, "i_slope": 3, "n_slope": 2, "switches": []},
               "interval wandering check"),
    "historic": (run_historic, {"z0": 3, "switches": "geometric", "Kmax": 12, "first": 8,
                                "ratio": 2.0, "tolerance": 0.05}, "historic-behaviour detection"),
    "henon-scan": (run_henon_scan, {"b": 0.1, "a_min": 1.8, "a_max": 1.9, "steps": 5, "bisect": True,
                                    "tol": 1e-6}, "fold excess over a parameter range"),
    "renorm": (run_renorm, {"lam": 0.2, "sigma": 3.0, "coupling": 0.5, "cubic": 0.3, "mu_bar": -1.0,
                            "n_values": [3, 4, 5, 6, 7, 8]}, "renormalization defect per n"),
}


# ---------------------------------------------------------------- configuration


def _coerce(path: str, value: Any, default: Any) -> Any:
    if default is None:
        if value is None or isinstance(value, (int, float)) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected a number or null, got {value!r}")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, list):
        if isinstance(value, list):
            return value
    raise ConfigError(f"{path}: expected {type(default).__name__}, got {value!r}")


def resolve_config(sub: str, config_path: str | None, sets: Sequence[str], flags: dict,
                   seed: int | None, threads: int | None) -> dict:
    _, defaults, _ = SUBCOMMANDS[sub]
    params = dict(defaults)
    cfg_seed, cfg_threads = 0, 1
    if config_path:
        try:
            raw = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"config: cannot read {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a mapping")
        unknown = set(raw) - {"schema_version", "experiment", "params", "seed", "threads"}
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
        if raw.get("experiment", sub) != sub:
            raise ConfigError(f"experiment: config is for {raw['experiment']!r}, not {sub!r}")
        given = raw.get("params") or {}
        if not isinstance(given, dict):
            raise ConfigError("params: must be a mapping")
        for k, v in given.items():
            if k not in defaults:
                raise ConfigError(f"params.{k}: unknown key")
            params[k] = _coerce(f"params.{k}", v, defaults[k])
        cfg_seed = _coerce("seed", raw.get("seed", 0), 0)
        cfg_threads = _coerce("threads", raw.get("threads", 1), 1)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected key=value")
        k, v = item.split("=", 1)
        k = k.strip().removeprefix("params.")
        if k not in defaults:
            raise ConfigError(f"params.{k}: unknown key")
        params[k] = _coerce(f"params.{k}", yaml.safe_load(v), defaults[k])
    for k, v in flags.items():
        if v is not None:
            params[k] = _coerce(f"params.{k}", yaml.safe_load(v), defaults[k])
    seed = cfg_seed if seed is None else seed
    threads = cfg_threads if threads is None else threads
    if threads < 1:
        raise ConfigError("threads: must be at least 1")
    return {"schema_version": SCHEMA_VERSION, "experiment": sub, "params": params,
            "seed": seed, "threads": threads}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wanderlab", description=__doc__.splitlines()[0])
    sp = ap.add_subparsers(dest="subcommand", required=True)
    for name, (_, defaults, helptext) in SUBCOMMANDS.items():
        s = sp.add_parser(name, help=helptext)
        s.add_argument("--config", help="YAML config with schema_version, experiment, params, seed")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int)
        for k, v in defaults.items():
            s.add_argument(f"--{k}", dest=f"param__{k}", default=None, metavar="VALUE",
                           help=f"default {v!r}")
    return ap


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    sub = ns.subcommand
    flags = {k.removeprefix("param__"): v for k, v in vars(ns).items() if k.startswith("param__")}
    try:
        cfg = resolve_config(sub, ns.config, ns.set, flags, ns.seed, ns.threads)
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: out: {exc}", file=sys.stderr)
        return 1
    runner = SUBCOMMANDS[sub][0]
    try:
        rows, summary, ok = runner(cfg["params"], cfg["seed"])
    except (ValueError, ArithmeticError, KeyError) as exc:
        print(f"precondition failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    body = {"config": cfg, "result": _fmt(summary), "verified": ok}
    (out / f"{sub}.csv").write_text(_csv(rows), encoding="utf-8", newline="")
    (out / f"{sub}.json").write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"experiment": sub, "verified": ok, "rows": len(rows)}, sort_keys=True), file=stdout)
    return 3 if ok is False else 0


def main() -> None:
    sys.exit(run())
