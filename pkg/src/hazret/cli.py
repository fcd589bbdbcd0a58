"""Configuration-driven experiment runner.

``hazret run --config exp.json --out results/`` validates the config, runs
one experiment and writes ``results.csv``, ``results.json`` and, with
``--emit-svg``, ``histogram.svg``.  Exit status is 0 on success, 2 when the
config is invalid and 3 when the result is flagged (too much censoring or a
tolerance breach).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .balls import (ball, ball_experiment, interval_map, median_recurrence_slope)
from .core import Convention, CylinderUnion, as_word
from .geolaw import (PROOF_FINAL, STATEMENT, BoundInputs, hazard_bound, lemma34_parameter,
                     optimize_bound, tv_distance, tv_to_geometric)
from .measures import FiniteMarkovModel, load_model, phi_function, set_measure
from .montecarlo import (CENSOR_FLAG, bound_for_sets, cylinder_pair_experiment,
                         mc_noise, simulate_sigma)
from .oracle import bernoulli_pair_instance, build_window_chain, exact_sigma_distribution
from .report import config_hash, histogram_svg, write_csv, write_json
from .tower import Roof, TowerModel, lift_set, sigma_tower, tsig_survey

log = logging.getLogger("hazret")

KINDS = ["oracle-vs-mc", "corollary22", "bound", "balls", "recurrence", "tower", "lemma34"]
MC_C = 5.0  # flag threshold for TV-lower > c / sqrt(samples) against an oracle

_word = {"oneOf": [{"type": "string", "pattern": "^[0-9]+$"},
                   {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}]}
_words = {"type": "array", "items": _word, "minItems": 1}
_prob = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_symbolic = {
    "oneOf": [
        {"type": "object", "required": ["kind", "probs"], "additionalProperties": False,
         "properties": {"kind": {"const": "iid"},
                        "probs": {"type": "array", "items": {"type": "number", "minimum": 0},
                                  "minItems": 1}}},
        {"type": "object", "required": ["kind", "Q"], "additionalProperties": False,
         "properties": {"kind": {"const": "markov"},
                        "Q": {"type": "array", "minItems": 1,
                              "items": {"type": "array", "items": {"type": "number", "minimum": 0}}}}},
        {"type": "object", "required": ["kind"], "additionalProperties": False,
         "properties": {"kind": {"const": "gauss"}, "digit_cap": {"type": "integer", "minimum": 1}}},
    ]
}
_finite = {"type": "object", "properties": {"kind": {"enum": ["iid", "markov"]}}}
_interval = {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"enum": ["doubling", "gauss"]},
                            "digit_cap": {"type": "integer", "minimum": 1}}}
_radii = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
          "minItems": 1}


def _when(kind, then):
    return {"if": {"properties": {"kind": {"const": kind}}}, "then": then}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "hazret experiment",
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": KINDS},
        "model": {"type": "object"},
        "sets": {"type": "object"},
        "mc": {"type": "object", "additionalProperties": False,
               "properties": {"n_samples": {"type": "integer", "minimum": 1},
                              "horizon": {"type": ["integer", "null"], "minimum": 0},
                              "threads": {"type": "integer", "minimum": 0},
                              "tv_max": {"type": "number", "minimum": 0},
                              "n_starts": {"type": "integer", "minimum": 1},
                              "n_orbits": {"type": "integer", "minimum": 0},
                              "tolerance": {"type": "number", "minimum": 0}}},
        "seeds": {"type": "object", "additionalProperties": False,
                  "properties": {"master": {"type": "integer", "minimum": 0}}},
        "bound": {"type": "object"},
    },
    "allOf": [
        _when("oracle-vs-mc", {
            "required": ["model", "sets", "mc"],
            "properties": {
                "model": {"allOf": [_symbolic, _finite]},
                "mc": {"required": ["n_samples"]},
                "sets": {"type": "object", "required": ["U", "V"], "additionalProperties": False,
                         "properties": {"U": _words, "V": _words,
                                        "convention": {"enum": [c.value for c in Convention]},
                                        "K": {"type": "integer", "minimum": 0}}}}}),
        _when("corollary22", {
            "required": ["model", "sets", "mc"],
            "properties": {
                "model": _symbolic,
                "mc": {"required": ["n_samples"]},
                "sets": {"type": "object", "required": ["ns"], "additionalProperties": False,
                         "properties": {"ns": {"type": "array", "minItems": 1,
                                               "items": {"type": "integer", "minimum": 1}},
                                        "m_rule": {"oneOf": [{"enum": ["equal", "match"]},
                                                             {"type": "integer"}]},
                                        "lam": {"type": "number", "exclusiveMinimum": 0},
                                        "xi": _word, "eta": _word}}}}),
        _when("bound", {
            "required": ["bound"],
            "properties": {"bound": {
                "type": "object", "additionalProperties": False,
                "required": ["pU", "pV", "pUr", "pVr", "n", "m", "M", "R", "r", "kappa", "phi"],
                "properties": {
                    "pU": _prob, "pV": _prob, "pUr": _prob, "pVr": _prob,
                    "n": {"type": "integer", "minimum": 1}, "m": {"type": "integer", "minimum": 1},
                    "M": {"type": "integer", "minimum": 1}, "R": {"type": "integer", "minimum": 1},
                    "r": {"type": "integer", "minimum": 0},
                    "kappa": {"type": "integer", "minimum": 0},
                    "phi": {"oneOf": [
                        {"type": "object", "required": ["kind"], "additionalProperties": False,
                         "properties": {"kind": {"const": "zero"}}},
                        {"type": "object", "required": ["kind", "Q"], "additionalProperties": False,
                         "properties": {"kind": {"const": "markov"}, "Q": {"type": "array"}}},
                        {"type": "object", "required": ["kind", "C", "beta"],
                         "additionalProperties": False,
                         "properties": {"kind": {"const": "exponential"},
                                        "C": {"type": "number", "minimum": 0},
                                        "beta": {"type": "number", "exclusiveMinimum": 0}}},
                        {"type": "object", "required": ["kind", "values"],
                         "additionalProperties": False,
                         "properties": {"kind": {"const": "table"},
                                        "values": {"type": "array",
                                                   "items": {"type": "number", "minimum": 0,
                                                             "maximum": 1}}}}]},
                    "M_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    "R_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    "r_grid": {"type": "array", "items": {"type": "integer", "minimum": 0}}}}}}),
        _when("balls", {
            "required": ["model", "sets", "mc"],
            "properties": {
                "model": _interval,
                "mc": {"required": ["n_samples"]},
                "sets": {"type": "object", "required": ["x", "y", "radii"],
                         "additionalProperties": False,
                         "properties": {"x": _prob, "y": _prob, "radii": _radii,
                                        "r_y_factor": {"type": "number", "exclusiveMinimum": 0}}}}}),
        _when("recurrence", {
            "required": ["model", "sets"],
            "properties": {
                "model": _interval,
                "sets": {"type": "object", "required": ["radii"], "additionalProperties": False,
                         "properties": {"radii": _radii, "dimension": {"type": "number"}}}}}),
        _when("tower", {
            "required": ["model", "sets", "mc"],
            "properties": {
                "model": {"type": "object", "required": ["base", "roof"],
                          "additionalProperties": False,
                          "properties": {"base": {"allOf": [_symbolic, _finite]},
                                         "roof": {"oneOf": [
                                             {"type": "integer", "minimum": 1},
                                             {"type": "object",
                                              "additionalProperties": {"type": "integer",
                                                                       "minimum": 1}}]}}},
                "mc": {"required": ["n_samples"]},
                "sets": {"type": "object", "required": ["U", "V"], "additionalProperties": False,
                         "properties": {"U": _words, "V": _words,
                                        "U_level": {"type": "integer", "minimum": 0},
                                        "V_level": {"type": "integer", "minimum": 0}}}}}),
        _when("lemma34", {
            "required": ["model"],
            "properties": {"model": {"type": "object", "required": ["p", "q"],
                                     "additionalProperties": False,
                                     "properties": {"kind": {"const": "bernoulli_pair"},
                                                    "p": _prob, "q": _prob}}}}),
    ],
}


class ConfigError(Exception):
    """Invalid configuration; ``pointer`` locates the offending value."""

    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


def validate_config(config) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(err.message, pointer)


def _union(words, A):
    return CylinderUnion.of([as_word(w) for w in words], A)


def _row(kind, seed, **kw):
    row = {"kind": kind, "seed": seed}
    row.update(kw)
    return row


def _hist(pmf, rho, title):
    return None if pmf is None else (pmf, rho, title)


def _flag_censoring(flags, censored, samples, where):
    if samples and censored / samples > CENSOR_FLAG:
        flags.append(f"{where}: {censored} of {samples} paths censored")


def run_oracle_vs_mc(cfg, seed, threads):
    model = load_model(cfg["model"])
    A = model.alphabet_size
    sets, mc = cfg["sets"], cfg["mc"]
    U, V = _union(sets["U"], A), _union(sets["V"], A)
    conv = Convention(sets.get("convention", Convention.TAU_FROM_0.value))
    pU, pV = set_measure(model, U), set_measure(model, V)
    rho = pV / (pU + pV)
    N = mc["n_samples"]
    horizon = mc.get("horizon") or int(math.ceil(50.0 / pV))
    sim = simulate_sigma(model, U, V, N, horizon, seed, conv, threads=threads)
    flags = []
    _flag_censoring(flags, sim.censored, N, "simulation")
    chain = build_window_chain(model, max(U.length, V.length))
    K = max(sets.get("K", 0), sim.pmf.K if sim.pmf is not None else 0, 64)
    exact = exact_sigma_distribution(chain, U, V, K, conv)
    tv = tv_distance(sim.pmf, exact) if sim.pmf is not None else None
    kept = N - sim.censored
    if tv is not None and tv.lower > MC_C / math.sqrt(max(kept, 1)):
        flags.append(f"TV-lower {tv.lower:.4g} exceeds {MC_C}/sqrt(samples)")
    bound = bound_for_sets(model, U, V)
    row = _row(cfg["kind"], seed, n=U.length, m=V.length, pU=pU, pV=pV, rho=rho,
               tv_lower=tv.lower if tv else None, tv_upper=tv.upper if tv else None,
               bound_statement=bound.statement if bound else None,
               bound_proof=bound.proof_final if bound else None,
               censored=sim.censored, samples=N)
    details = {
        "convention": conv.value, "horizon": horizon,
        "tv_mc_vs_oracle": list(tv) if tv else None,
        "tv_oracle_vs_geometric": list(tv_to_geometric(exact, rho)),
        "oracle_pmf": exact.to_dict(),
        "empirical_pmf": sim.pmf.to_dict() if sim.pmf is not None else None,
        "bound": vars(bound) if bound else None,
    }
    return [row], details, flags, _hist(sim.pmf, rho, "simulated count vs geometric")


def run_corollary22(cfg, seed, threads):
    model = load_model(cfg["model"])
    sets, mc = cfg["sets"], cfg["mc"]
    N = mc["n_samples"]
    kw = {}
    if "xi" in sets or "eta" in sets:
        if not ("xi" in sets and "eta" in sets):
            raise ConfigError("give both xi and eta", "/sets")
        kw = {"xi": as_word(sets["xi"]), "eta": as_word(sets["eta"])}
    rep = cylinder_pair_experiment(model, sets["ns"], N, seed, m_rule=sets.get("m_rule", "equal"),
                                   lam=sets.get("lam", 1.0), horizon=mc.get("horizon"),
                                   threads=threads, **kw)
    rows, flags, per_n = [], [], []
    for r in rep.rows:
        _flag_censoring(flags, r.censored, N, f"n={r.n}")
        rows.append(_row(cfg["kind"], seed, n=r.n, m=r.m, pU=r.pU, pV=r.pV, rho=r.rho,
                         tv_lower=r.tv.lower, tv_upper=r.tv.upper,
                         bound_statement=r.bound.statement if r.bound else None,
                         bound_proof=r.bound.proof_final if r.bound else None,
                         censored=r.censored, samples=N))
        per_n.append({"n": r.n, "m": r.m, "tv": list(r.tv), "noise": r.noise, "kappa": r.kappa,
                      "bound": vars(r.bound) if r.bound else None,
                      "empirical_pmf": r.pmf.to_dict() if r.pmf is not None else None})
    if "tv_max" in mc and rep.rows[-1].tv.lower > mc["tv_max"]:
        flags.append(f"TV-lower at n={rep.rows[-1].n} exceeds {mc['tv_max']}")
    details = {"xi": list(rep.xi), "eta": list(rep.eta), "resamples": rep.resamples, "per_n": per_n}
    last = rep.rows[-1]
    return rows, details, flags, _hist(last.pmf, last.rho, f"n = {last.n}")


def _phi_from(spec):
    kind = spec["kind"]
    if kind == "zero":
        return lambda k: 0.0
    if kind == "markov":
        return phi_function(FiniteMarkovModel(spec["Q"]))
    if kind == "exponential":
        C, beta = spec["C"], spec["beta"]
        return lambda k: min(1.0, C * math.exp(-beta * k))
    vals = spec["values"]
    return lambda k: float(vals[min(k, len(vals)) - 1]) if vals else 0.0


def run_bound(cfg, seed, threads):
    b = cfg["bound"]
    phi = _phi_from(b["phi"])
    inputs = BoundInputs(b["pU"], b["pV"], b["pUr"], b["pVr"], b["n"], b["m"], b["M"], b["R"],
                         b["r"], b["kappa"], phi)
    stmt = hazard_bound(inputs, STATEMENT)
    proof = hazard_bound(inputs, PROOF_FINAL)
    details = {"statement": stmt, "proof_final": proof}
    if any(k in b for k in ("M_grid", "R_grid", "r_grid")):
        grids = (b.get("M_grid", [b["M"]]), b.get("R_grid", [b["R"]]), b.get("r_grid", [b["r"]]))
        const = lambda val: (lambda r: val)
        for variant in (STATEMENT, PROOF_FINAL):
            opt = optimize_bound(b["pU"], b["pV"], const(b["pUr"]), const(b["pVr"]), b["n"], b["m"],
                                 b["kappa"], phi, *grids, variant)
            details[f"optimum_{variant}"] = opt._asdict()
    rho = b["pV"] / (b["pU"] + b["pV"])
    row = _row(cfg["kind"], seed, n=b["n"], m=b["m"], r=b["r"], pU=b["pU"], pV=b["pV"], rho=rho,
               bound_statement=stmt, bound_proof=proof)
    return [row], details, [], None


def run_balls(cfg, seed, threads):
    imap = interval_map(cfg["model"])
    sets, mc = cfg["sets"], cfg["mc"]
    N = mc["n_samples"]
    x, y = sets["x"], sets["y"]
    fac = sets.get("r_y_factor", 1.0)
    res = ball_experiment(imap, x, y, sets["radii"], N, seed, r_y_factor=fac, threads=threads)
    rows, flags, per_r = [], [], []
    for r in res:
        _flag_censoring(flags, r.censored, N, f"r={r.r}")
        pU = ball(x, r.r).measure(imap)
        pV = ball(y, r.r * fac).measure(imap)
        rows.append(_row(cfg["kind"], seed, r=r.r, pU=pU, pV=pV, rho=r.rho, tv_lower=r.tv.lower,
                         tv_upper=r.tv.upper, censored=r.censored, samples=N))
        per_r.append({"r": r.r, "tv": list(r.tv), "noise": r.noise,
                      "empirical_pmf": r.pmf.to_dict() if r.pmf is not None else None})
    if "tv_max" in mc and res[-1].tv.lower > mc["tv_max"]:
        flags.append(f"TV-lower at r={res[-1].r} exceeds {mc['tv_max']}")
    return rows, {"map": imap.kind, "x": x, "y": y, "per_r": per_r}, flags, \
        _hist(res[-1].pmf, res[-1].rho, f"r = {res[-1].r:g}")


def run_recurrence(cfg, seed, threads):
    imap = interval_map(cfg["model"])
    sets, mc = cfg["sets"], cfg.get("mc", {})
    radii = sets["radii"]
    n_starts = mc.get("n_starts", 20)
    median, ests = median_recurrence_slope(imap, radii, seed, n_starts,
                                           horizon=mc.get("horizon") or (1 << 22))
    flags = []
    truncated = sum(e.truncated for e in ests)
    if truncated:
        flags.append(f"{truncated} return times censored")
    dim = sets.get("dimension", 1.0)
    if "tolerance" in mc and abs(median - dim) > mc["tolerance"]:
        flags.append(f"median slope {median:.4g} is farther than {mc['tolerance']} from {dim}")
    rows = [_row(cfg["kind"], seed, r=float(r), censored=sum(float(r) not in e.radii for e in ests),
                 samples=n_starts) for r in radii]
    details = {"median_slope": median, "starts": [e.to_dict() for e in ests]}
    return rows, details, flags, None


def run_tower(cfg, seed, threads):
    base = load_model(cfg["model"]["base"])
    roof_spec = cfg["model"]["roof"]
    roof = Roof.constant(roof_spec) if isinstance(roof_spec, int) else Roof.of(roof_spec)
    tower = TowerModel(base, roof)
    A = base.alphabet_size
    sets, mc = cfg["sets"], cfg["mc"]
    Ub, Vb = _union(sets["U"], A), _union(sets["V"], A)
    U = lift_set(tower, Ub, sets.get("U_level", 0))
    V = lift_set(tower, Vb, sets.get("V_level", 0))
    pU, pV = set_measure(base, Ub), set_measure(base, Vb)
    rho = pV / (pU + pV)
    N = mc["n_samples"]
    horizon = mc.get("horizon") or int(math.ceil(50.0 / pV))
    sim = sigma_tower(tower, U, V, N, horizon, seed, threads=threads)
    flags = []
    _flag_censoring(flags, sim.censored, N, "tower simulation")
    tv = tv_to_geometric(sim.pmf, rho) if sim.pmf is not None else None
    if tv is not None and "tv_max" in mc and tv.lower > mc["tv_max"]:
        flags.append(f"TV-lower {tv.lower:.4g} exceeds {mc['tv_max']}")
    details = {"mean_roof": tower.mean_roof, "floor_measures": tower.floor_measures(),
               "horizon_base_steps": horizon,
               "empirical_pmf": sim.pmf.to_dict() if sim.pmf is not None else None}
    n_orb = mc.get("n_orbits", 0)
    if n_orb:
        s = tsig_survey(tower, U, V, n_orb, seed)
        details["transfer_identity"] = vars(s)
        if s.corrected_violations:
            flags.append(f"{s.corrected_violations} orbits break the transfer identity")
    row = _row(cfg["kind"], seed, n=Ub.length, m=Vb.length, pU=pU, pV=pV, rho=rho,
               tv_lower=tv.lower if tv else None, tv_upper=tv.upper if tv else None,
               censored=sim.censored, samples=N)
    return [row], details, flags, _hist(sim.pmf, rho, "tower count vs base geometric")


def run_lemma34(cfg, seed, threads):
    p, q = cfg["model"]["p"], cfg["model"]["q"]
    model, U, V = bernoulli_pair_instance(p, q)
    rho = lemma34_parameter(p, q)
    K = int(math.ceil(math.log(1e-16) / math.log1p(-rho)))
    exact = exact_sigma_distribution(build_window_chain(model, 1), U, V, K)
    tv = tv_to_geometric(exact, rho)
    flags = [] if tv.upper <= 1e-10 else [f"oracle TV upper {tv.upper:.3g} exceeds 1e-10"]
    row = _row(cfg["kind"], seed, n=1, m=1, pU=set_measure(model, U), pV=set_measure(model, V),
               rho=rho, tv_lower=tv.lower, tv_upper=tv.upper, censored=0, samples=0)
    details = {"parameter": rho, "oracle_tv": list(tv), "K": K}
    mc = cfg.get("mc")
    hist = None
    if mc and mc.get("n_samples"):
        N = mc["n_samples"]
        sim = simulate_sigma(model, U, V, N, mc.get("horizon") or int(math.ceil(50 / p)), seed,
                             threads=threads)
        _flag_censoring(flags, sim.censored, N, "simulation")
        mtv = tv_to_geometric(sim.pmf, rho)
        details["mc_tv"] = list(mtv)
        details["mc_noise"] = mc_noise(rho, N - sim.censored)
        row.update(censored=sim.censored, samples=N)
        hist = _hist(sim.pmf, rho, "coin-pair count vs geometric")
    return [row], details, flags, hist


RUNNERS = {"oracle-vs-mc": run_oracle_vs_mc, "corollary22": run_corollary22, "bound": run_bound,
           "balls": run_balls, "recurrence": run_recurrence, "tower": run_tower,
           "lemma34": run_lemma34}


def run_experiment(config: dict, out_dir, seed=None, threads=None, emit_svg=False) -> int:
    """Validate, run and write reports; returns the process exit code."""
    validate_config(config)
    cfg = json.loads(json.dumps(config))
    if seed is not None:
        cfg.setdefault("seeds", {})["master"] = int(seed)
    seed = cfg.get("seeds", {}).get("master", 0)
    if threads is None:
        threads = cfg.get("mc", {}).get("threads", 1)
    try:
        rows, details, flags, hist = RUNNERS[cfg["kind"]](cfg, seed, threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "kind": cfg["kind"], "version": __version__, "seed": seed,
        "config_hash": config_hash(cfg), "config": cfg, "rows": rows,
        "censored": {"total": sum(r.get("censored") or 0 for r in rows),
                     "per_row": [r.get("censored") for r in rows]},
        "tv_intervals": [[r.get("tv_lower"), r.get("tv_upper")] for r in rows],
        "flags": flags, "flagged": bool(flags), "details": details,
    }
    write_csv(out / "results.csv", rows)
    write_json(out / "results.json", report)
    if emit_svg and hist is not None:
        histogram_svg(out / "histogram.svg", *hist)
    for f in flags:
        log.warning("flagged: %s", f)
    return 3 if flags else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hazret", description="Return counts before a hazard: exact laws, "
                                 "simulation and geometric approximation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--threads", type=int, default=None, help="worker threads (0 = all cores)")
    run.add_argument("--emit-svg", action="store_true", help="also write histogram.svg")
    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HAZRET_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return 0
    try:
        config = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        return run_experiment(config, args.out, args.seed, args.threads, args.emit_svg)
    except ConfigError as exc:
        where = f" at {exc.pointer}" if exc.pointer else ""
        print(f"error: invalid config{where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
