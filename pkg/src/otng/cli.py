"""Command-line driver: ``otng <command> --config path.json [--out dir] [--seed u64] [--threads k]``.

Each command writes CSV files (header row, repr floats, ``\\n`` endings) and
a JSON sidecar ``<file>.json`` holding the fully resolved configuration.
Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""
import argparse
import copy
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np

from .errors import ConfigError, NonConvergence, OTNGError
from .manifold import displacement_convexity_gap
from .models import (dirichlet_target, graph_from_spec, hierarchical_model, hypercube_graph,
                     independence_model, square_graph, three_state_model)
from .optim import (PRECONDITIONERS, StepRule, expectation_objective, kl_objective, moment_stop,
                    run_descent, vector_field_scan)
from .simplex import (exponential_geodesic, fisher_rao_geodesic, fmt, static_lp_distance,
                      wasserstein_distance)

log = logging.getLogger("otng")

EXAMPLE_QS = [[0.75, 0.125, 0.125], [0.125, 0.75, 0.125], [0.125, 0.125, 0.75]]
EXAMPLE_F = [0.0, -2.0, -4.0, 6.0]

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_solver = {"type": "object", "properties": {"n_intervals": {"type": "integer", "minimum": 1},
                                            "max_iter": {"type": "integer", "minimum": 1},
                                            "tol": _num, "memory": {"type": "integer"},
                                            "max_halvings": {"type": "integer"}},
           "additionalProperties": False}
_graph = {"type": "object"}
_common = {"seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
           "experiment": {"type": "string"}}

SCHEMAS = {
    "geodesic-triangle": {
        "type": "object", "additionalProperties": False,
        "properties": {**_common, "graph": _graph, "q": {"type": "array", "items": _vec,
                                                         "minItems": 3, "maxItems": 3},
                       "solver": _solver, "n_points": {"type": "integer", "minimum": 2}}},
    "vector-field": {
        "type": "object", "additionalProperties": False,
        "properties": {**_common, "grid": {"type": "integer", "minimum": 2},
                       "omega_bd": _vec, "f": _vec, "delta": _num,
                       "preconditioners": {"type": "array", "items": {"enum": list(PRECONDITIONERS)}}}},
    "mle-benchmark": {
        "type": "object", "additionalProperties": False,
        "properties": {**_common, "n": {"type": "integer", "minimum": 1, "maximum": 10},
                       "k": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                       "bases": {"type": "array", "items": {"enum": ["sigma", "pi"]}},
                       "preconditioners": {"type": "array", "items": {"enum": list(PRECONDITIONERS)}},
                       "step_rules": {"type": "array", "items": {"enum": ["fixed", "adaptive", "adam"]}},
                       "n_targets": {"type": "integer", "minimum": 1},
                       "gamma0": {"type": "number", "exclusiveMinimum": 0},
                       "max_iters": {"type": "integer", "minimum": 1},
                       "auc_bins": {"type": "integer", "minimum": 1},
                       "write_traces": {"type": "boolean"}}},
    "convexity-scan": {
        "type": "object", "additionalProperties": False,
        "properties": {**_common, "grid": {"type": "integer", "minimum": 2}, "omega_bd": _vec,
                       "f": _vec, "n_phi": {"type": "integer", "minimum": 1}, "lambda": _num,
                       "delta": _num}},
    "distance-compare": {
        "type": "object", "additionalProperties": False,
        "properties": {**_common, "graph": _graph, "points": {"type": "array", "items": _vec},
                       "pairs": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                            "minItems": 2, "maxItems": 2}},
                       "solver": _solver}},
}

DEFAULTS = {
    "geodesic-triangle": {"graph": {"type": "path", "n": 3}, "q": EXAMPLE_QS,
                          "solver": {"n_intervals": 32}, "n_points": 33},
    "vector-field": {"grid": 20, "omega_bd": [0.1, 1.0, 10.0], "f": EXAMPLE_F, "delta": 1e-6,
                     "preconditioners": list(PRECONDITIONERS)},
    "mle-benchmark": {"n": 4, "k": None, "bases": ["sigma", "pi"],
                      "preconditioners": list(PRECONDITIONERS), "step_rules": ["adaptive"],
                      "n_targets": 5, "gamma0": 1e-3, "max_iters": 50000, "auc_bins": 20,
                      "write_traces": True},
    "convexity-scan": {"grid": 20, "omega_bd": [0.1, 10.0], "f": EXAMPLE_F, "n_phi": 50,
                       "lambda": 0.0, "delta": 0.025},
    "distance-compare": {"graph": {"type": "path", "n": 3}, "points": EXAMPLE_QS,
                         "pairs": None, "solver": {"n_intervals": 32}},
}

STOCHASTIC = {"mle-benchmark", "convexity-scan"}


# ---------------------------------------------------------------- output helpers

class Output:
    """Writes files into ``out`` and a provenance sidecar next to each."""

    def __init__(self, out, command, config):
        self.out = out
        self.command = command
        self.config = config
        self.files = []
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        full = os.path.join(self.out, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def _sidecar(self, name):
        with open(self.path(name) + ".json", "w", newline="\n") as fh:
            json.dump({"command": self.command, "file": name, "config": self.config},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
        self._sidecar(name)

    def json(self, name, data):
        with open(self.path(name), "w", newline="\n") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._sidecar(name)


def _pool_map(fn, items, threads):
    """Map in a thread pool; results come back in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _wtag(w):
    return repr(float(w)).replace(".", "p")


# ---------------------------------------------------------------- commands

def cmd_geodesic_triangle(cfg, out, threads=1):
    g = graph_from_spec(cfg["graph"])
    qs = [np.asarray(q, dtype=float) for q in cfg["q"]]
    if any(len(q) != g.n for q in qs):
        raise ConfigError("every q must have one entry per graph vertex")
    chart = three_state_model() if g.n == 3 else None
    pairs = [(0, 1), (1, 2), (0, 2)]

    def solve(ij):
        i, j = ij
        return wasserstein_distance(g, qs[i], qs[j], cfg["solver"])

    results = _pool_map(solve, pairs, threads)
    ts = np.linspace(0.0, 1.0, cfg["n_points"])
    summary = {"pairs": []}
    for (i, j), (W, path) in zip(pairs, results):
        tag = f"q{i + 1}_q{j + 1}"
        paths = {"wasserstein": (path.t, path.points),
                 "exponential": (ts, np.array([exponential_geodesic(qs[i], qs[j], t) for t in ts])),
                 "fisher_rao": (ts, np.array([fisher_rao_geodesic(qs[i], qs[j], t) for t in ts]))}
        for kind, (t, P) in paths.items():
            out.csv(f"{kind}_{tag}.csv", ["t"] + [f"p_{k + 1}" for k in range(g.n)],
                    [[float(tk)] + [float(x) for x in row] for tk, row in zip(t, P)])
            if chart is not None:
                out.csv(f"{kind}_{tag}_chart.csv", ["t", "theta_1", "theta_2"],
                        [[float(tk)] + [float(x) for x in chart.theta_of(row)] for tk, row in zip(t, P)])
        mid = path.points[len(path.points) // 2]
        summary["pairs"].append({"from": i + 1, "to": j + 1, "W": float(W),
                                 "iterations": path.report["iterations"],
                                 "midpoint": [float(x) for x in mid]})
    out.json("triangle_summary.json", summary)
    return summary


def cmd_vector_field(cfg, out, threads=1):
    model = independence_model()
    obj = expectation_objective(cfg["f"])
    # cell centres of a grid x grid partition of [0, 1]^2
    grid = (np.arange(cfg["grid"]) + 0.5) / cfg["grid"]
    cells = [(w, pre) for w in cfg["omega_bd"] for pre in cfg["preconditioners"]]

    def run(cell):
        w, pre = cell
        return vector_field_scan(model, square_graph(w_bd=w), obj, grid, pre, cfg["delta"])

    fields = _pool_map(run, cells, threads)
    for (w, pre), F in zip(cells, fields):
        out.csv(f"field_{pre}_w{_wtag(w)}.csv", ["xi_1", "xi_2", "v_1", "v_2"],
                [[float(x) for x in r] for r in F])
    return {"fields": len(cells)}


def _target_seed(seed, t):
    return np.random.SeedSequence([seed, t])


def cmd_mle_benchmark(cfg, out, threads=1):
    n = cfg["n"]
    ks = cfg["k"] or list(range(1, n + 1))
    if any(k > n for k in ks):
        raise ConfigError("k must not exceed n")
    g = hypercube_graph(n)
    targets = [dirichlet_target(2 ** n, _target_seed(cfg["seed"], t)).q for t in range(cfg["n_targets"])]
    cells = [(t, k, basis, pre, rule) for t in range(len(targets)) for k in ks
             for basis in cfg["bases"] for pre in cfg["preconditioners"] for rule in cfg["step_rules"]]

    def run(cell):
        t, k, basis, pre, rule = cell
        model = hierarchical_model(n, k=k, basis=basis)
        q = targets[t]
        return run_descent(model, g, np.zeros(model.dim), kl_objective(q), pre,
                           StepRule(rule, cfg["gamma0"]),
                           moment_stop(model, q, max_iters=cfg["max_iters"]))

    traces = _pool_map(run, cells, threads)
    rows = []
    for (t, k, basis, pre, rule), tr in zip(cells, traces):
        s = tr.summary()
        rows.append([t, k, basis, pre, rule, s["iters"], float(s["final_D"]), float(s["auc_norm"]),
                     s["status"]])
        if cfg["write_traces"]:
            out.csv(f"traces/trace_t{t}_k{k}_{basis}_{pre}_{rule}.csv",
                    ["iter", "D", "gamma", "grad_norm"],
                    [[i, float(d), float(gm), float(gn)]
                     for i, (d, gm, gn) in enumerate(zip(tr.D, tr.gamma, tr.grad_norm))])
    out.csv("runs.csv", ["target", "k", "basis", "preconditioner", "step_rule", "iters", "final_D",
                         "auc_norm", "status"], rows)
    table = []
    keys = [(k, basis, pre, rule) for k in ks for basis in cfg["bases"]
            for pre in cfg["preconditioners"] for rule in cfg["step_rules"]]
    for key in keys:
        sel = [r for r in rows if tuple(r[1:5]) == key]
        table.append(list(key) + [float(np.mean([r[6] for r in sel])), float(np.mean([r[5] for r in sel])),
                                  sum(r[8] == "moments" for r in sel), len(sel)])
    out.csv("summary.csv", ["k", "basis", "preconditioner", "step_rule", "mean_final_D",
                            "mean_iters", "n_converged", "n_runs"], table)
    bins = np.linspace(0.0, max(1.0, max(r[7] for r in rows)), cfg["auc_bins"] + 1)
    hist = []
    for pre in cfg["preconditioners"]:
        for rule in cfg["step_rules"]:
            vals = [r[7] for r in rows if r[3] == pre and r[4] == rule]
            counts, _ = np.histogram(vals, bins)
            for lo, hi, c in zip(bins[:-1], bins[1:], counts):
                hist.append([pre, rule, float(lo), float(hi), int(c)])
    out.csv("auc_histogram.csv", ["preconditioner", "step_rule", "bin_lo", "bin_hi", "count"], hist)
    return {"runs": len(rows), "summary_rows": len(table)}


def cmd_convexity_scan(cfg, out, threads=1):
    model = independence_model()
    f = np.asarray(cfg["f"], dtype=float)
    grid = np.linspace(cfg["delta"], 1 - cfg["delta"], cfg["grid"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    phis = rng.standard_normal((cfg["n_phi"], 4))

    def run(w):
        g = square_graph(w_bd=w)
        return [[float(x), float(y),
                 min(displacement_convexity_gap(model, g, np.array([x, y]), phi, f, cfg["lambda"])
                     for phi in phis)] for x in grid for y in grid]

    scans = _pool_map(run, cfg["omega_bd"], threads)
    summary = {"scans": []}
    for w, rows in zip(cfg["omega_bd"], scans):
        out.csv(f"gap_w{_wtag(w)}.csv", ["xi_1", "xi_2", "min_gap"], rows)
        gaps = np.array([r[2] for r in rows])
        summary["scans"].append({"omega_bd": float(w), "min_gap": float(gaps.min()),
                                 "n_nonnegative": int((gaps >= 0).sum()), "n_cells": len(rows)})
    out.json("convexity_summary.json", summary)
    return summary


def cmd_distance_compare(cfg, out, threads=1):
    g = graph_from_spec(cfg["graph"])
    pts = [np.asarray(p, dtype=float) for p in cfg["points"]]
    if any(len(p) != g.n for p in pts):
        raise ConfigError("every point must have one entry per graph vertex")
    pairs = cfg["pairs"] or [(i, j) for i in range(len(pts)) for j in range(i + 1, len(pts))]
    for i, j in pairs:
        if not (0 <= i < len(pts) and 0 <= j < len(pts)):
            raise ConfigError(f"pair ({i}, {j}) out of range")

    def run(ij):
        i, j = ij
        W, _ = wasserstein_distance(g, pts[i], pts[j], cfg["solver"])
        return W, static_lp_distance(g, pts[i], pts[j])

    res = _pool_map(run, pairs, threads)
    rows = [[i, j, float(W), float(W * W), float(lp), float(np.sqrt(lp)), float(W * W - lp)]
            for (i, j), (W, lp) in zip(pairs, res)]
    out.csv("distances.csv", ["i", "j", "W", "W2", "LP", "sqrt_LP", "W2_minus_LP"], rows)
    return {"pairs": len(rows)}


COMMANDS = {
    "geodesic-triangle": cmd_geodesic_triangle,
    "vector-field": cmd_vector_field,
    "mle-benchmark": cmd_mle_benchmark,
    "convexity-scan": cmd_convexity_scan,
    "distance-compare": cmd_distance_compare,
}


# ---------------------------------------------------------------- config

def resolve_config(command, raw, seed=None):
    """Validate ``raw`` against the command schema and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("experiment", command) != command:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {command!r}")
    try:
        jsonschema.validate(raw, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update(copy.deepcopy(raw))
    cfg["experiment"] = command
    if seed is not None:
        cfg["seed"] = int(seed)
    if command in STOCHASTIC and cfg.get("seed") is None:
        raise ConfigError(f"{command} needs a seed (config 'seed' or --seed)")
    if "solver" in cfg:
        solver = dict(DEFAULTS[command].get("solver", {}))
        solver.update(cfg["solver"])
        cfg["solver"] = solver
    return cfg


def run_command(command, raw, out, seed=None, threads=1):
    cfg = resolve_config(command, raw, seed)
    try:
        result = COMMANDS[command](cfg, Output(out, command, cfg), threads)
    except (ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, OTNGError) and not isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg, result


def build_parser():
    ap = argparse.ArgumentParser(prog="otng", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default="otng_out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="64-bit seed, overrides the config")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for experiment cells")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        _, result = run_command(args.command, raw, args.out, args.seed, args.threads)
    except ConfigError as exc:
        print(f"otng: config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"otng: solver did not converge: {exc}", file=sys.stderr)
        return 3
    log.info("done: %s", result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
