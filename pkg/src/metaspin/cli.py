"""Command-line experiment runner.

Usage::

    metaspin <subcommand> --config <file> [--out <dir>] [--threads N]
    metaspin schema

Every run writes ``manifest.json`` (configuration echo, content hash,
timings and the SHA-256 of each data file) next to the subcommand outputs:
``records.jsonl`` with one record per replica, seed or trial, and
``summary.csv`` with one row per system size.  Data files depend on the
configuration only; the timings live in the manifest alone.

Exit codes: 0 ok, 2 configuration error, 3 regime error, 4 budget
exhausted (capped runs or too few completed replicas for a fit).
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__, capacity, config as cfgmod, constants, coupling, cw_chain, dynamics, landscape
from .errors import InsufficientDataError, ParameterError, RegimeError
from .graph import complete_graph, generate_er
from .rng import replica_rng, replica_seed
from .spin import SpinConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_BUDGET = 0, 2, 3, 4


# --------------------------------------------------------------------------
# exponent fit


def fit_exponent(records, params=None, estimator="pooled", min_points=constants.FIT_MIN_POINTS,
                 min_reps=constants.FIT_MIN_REPLICAS):
    """Regress the log mean crossover time on ``n``.

    Parameters
    ----------
    records : iterable of dict
        Per-replica records with ``n``, ``time`` and ``outcome`` (only
        ``"hit_target"`` counts as completed) and, for the quenched
        estimator, ``graph_seed``.
    params : ModelParams, optional
        If given, the slope is compared with ``beta Gamma*`` and the implied
        exponents ``E_n = (log mean - beta n Gamma*) / log n`` are reported
        against the band ``|E_n| <= beta (t - m) 11/6``.  The band is not
        asserted.
    estimator : {"pooled", "quenched"}
        ``pooled`` takes the log of the mean over all replicas at each ``n``;
        ``quenched`` averages the logs of the per-graph means.

    Returns
    -------
    dict
    """
    by_n = {}
    for r in records:
        by_n.setdefault(int(r["n"]), []).append(r)
    counts = {n: sum(r["outcome"] == "hit_target" for r in rs) for n, rs in sorted(by_n.items())}
    if len(counts) < min_points or min(counts.values()) < min_reps:
        raise InsufficientDataError(
            f"need >= {min_points} sizes with >= {min_reps} completed replicas each", counts)
    ns = sorted(by_n)
    log_means = []
    for n in ns:
        done = [r for r in by_n[n] if r["outcome"] == "hit_target"]
        if estimator == "pooled":
            log_means.append(math.log(np.mean([r["time"] for r in done])))
        elif estimator == "quenched":
            graphs = {}
            for r in done:
                graphs.setdefault(r["graph_seed"], []).append(r["time"])
            log_means.append(float(np.mean([math.log(np.mean(v)) for v in graphs.values()])))
        else:
            raise ParameterError(f"unknown estimator {estimator!r}")
    slope, intercept, r2 = dynamics.fit_log_slope(ns, np.exp(log_means))
    out = {"estimator": estimator, "ns": ns, "log_means": log_means, "counts": counts, "slope": slope,
           "intercept": intercept, "r2": r2}
    if params is not None:
        roots = landscape.find_roots(params)
        bg = params.beta * landscape.barrier(params)
        band = params.beta * (roots.t - roots.m) * 11.0 / 6.0
        implied = [(lm - bg * n) / math.log(n) for n, lm in zip(ns, log_means)]
        out.update({"beta_gamma": bg, "rel_error": slope / bg - 1.0, "E_band": band, "E_implied": implied,
                    "E_within_band": [abs(e) <= band for e in implied]})
    return out


# --------------------------------------------------------------------------
# output helpers


def _jsonl(rows):
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows)


def _csv(rows):
    if not rows:
        return ""
    keys = list(rows[0])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r.get(k))
                    for k in keys})
    return buf.getvalue()


def _clean(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _row(d):
    return {k: _clean(v) for k, v in d.items()}


# --------------------------------------------------------------------------
# subcommands; each returns (records, summary_rows, extra manifest entries)


def _graph(cfg, params, n, seed):
    if params.kind == "mean_field" or cfg.params.p == 1.0:
        return complete_graph(n)
    return generate_er(n, cfg.params.p, seed)


def run_landscape(cfg, threads):
    recs, rows = [], []
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        tab = landscape.build_tables(params, n)
        for k in range(n + 1):
            recs.append(_row({"n": n, "k": k, "a": tab.grid[k], "I": tab.I[k], "J": tab.J[k], "R": tab.R[k],
                              "I_n": tab.I_n[k], "J_n": tab.J_n[k], "R_n": tab.R_n[k]}))
        r = tab.roots
        chi = landscape.chi_threshold(params.lam) if params.lam >= 1 else None
        rows.append(_row({"n": n, "regime": tab.regime.value, "chi": chi,
                          "m": r.m if r else None, "t": r.t if r else None, "s": r.s if r else None,
                          "M": r.M_n if r else None, "T": r.T_n if r else None, "S": r.S_n if r else None,
                          "barrier": tab.barrier}))
    header = {"params": {"p": cfg.params.p, "beta": cfg.params.beta, "h": cfg.params.h}, "sizes": rows}
    files = {"table.csv": _csv(recs), "header.json": json.dumps(header, sort_keys=True, indent=2) + "\n"}
    return recs, rows, {"_files": files}


def run_cwexact(cfg, threads):
    recs = []
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        ex = cw_chain.exact_crossover(params, n)
        kr = cw_chain.log_kramers_time(params, n)
        recs.append(_row({"n": n, "M": ex["M"], "T": ex["T"], "S": ex["S"], "log_mean": ex["log_mean"],
                          "mean": ex["mean"], "log_kramers": kr, "ratio": math.exp(kr - ex["log_mean"])}))
    rows = [dict(r) for r in recs]
    params0 = cfg.model_params()
    roots = landscape.find_roots(params0)
    gam = landscape.barrier(params0)
    summary = [{"params": {"p": cfg.params.p, "beta": cfg.params.beta, "h": cfg.params.h, "n": r["n"]},
                "m": roots.m, "t": roots.t, "s": roots.s, "barrier": gam, "kramers": math.exp(r["log_kramers"]),
                "exact_mean": r["mean"], "ratio": r["ratio"]} for r in recs]
    extra = {"_files": {"cwexact.json": json.dumps(summary, sort_keys=True, indent=2) + "\n"}}
    if len(recs) >= 2:
        slope, intercept, r2 = dynamics.fit_log_slope([r["n"] for r in recs], [r["mean"] for r in recs])
        bg = cfg.params.beta * landscape.barrier(cfg.model_params())
        for r in rows:
            r.update({"slope": slope, "intercept": intercept, "r2": r2, "beta_gamma": bg})
    return recs, rows, extra


def run_simulate(cfg, threads):
    recs, rows = [], []
    j = 0
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        horizon = cfg.caps.horizon if cfg.caps.horizon is not None else 2.0 * n
        vols, jumps = [], []
        for gs in cfg.seeds.graphs:
            g = _graph(cfg, params, n, gs)
            seed = replica_seed(cfg.seeds.base, j)
            j += 1

            def one(i, g=g, seed=seed):
                rng = replica_rng(seed, i)
                st = dynamics.SimState(g, params, SpinConfig.all_minus(n), rng)
                k = dynamics.jumps_in_time(st, horizon)
                return {"n": n, "graph_seed": gs, "replica": i, "seed": replica_seed(seed, i),
                        "horizon": horizon, "jumps": k, "final_volume": st.volume}

            out = dynamics.map_replicas(one, cfg.seeds.replicas, threads)
            recs.extend(out)
            vols += [r["final_volume"] for r in out]
            jumps += [r["jumps"] for r in out]
        rows.append(_row({"n": n, "replicas": len(vols), "horizon": horizon, "mean_jumps": float(np.mean(jumps)),
                          "mean_final_volume": float(np.mean(vols))}))
    return recs, rows, {}


def run_crossover(cfg, threads):
    regime = landscape.classify_regime(cfg.model_params())
    if regime is not landscape.Regime.METASTABLE:
        raise RegimeError(f"crossover needs the metastable regime, got {regime.value}")
    recs, rows = [], []
    j = 0
    capped = 0
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        per_n = []
        for gs in cfg.seeds.graphs:
            g = _graph(cfg, params, n, gs)
            seed = replica_seed(cfg.seeds.base, j)
            j += 1
            est = dynamics.estimate_crossover(g, params, cfg.seeds.replicas, seed, cfg.caps.step_cap, threads)
            for r in est.records:
                r["graph_seed"] = gs
            per_n += est.records
        recs += per_n
        done = [r["time"] for r in per_n if r["outcome"] == "hit_target"]
        capped += len(per_n) - len(done)
        mean = float(np.mean(done)) if done else None
        se = float(np.std(done, ddof=1) / math.sqrt(len(done))) if len(done) > 1 else None
        roots = landscape.find_roots(params, n)
        rows.append(_row({"n": n, "M": roots.M_n, "S": roots.S_n, "replicas": len(per_n), "completed": len(done),
                          "mean": mean, "stderr": se}))
    extra = {"capped_runs": capped}
    if len(rows) >= constants.FIT_MIN_POINTS:
        try:
            fit = fit_exponent(recs, cfg.model_params(), cfg.estimator)
        except InsufficientDataError as exc:
            extra["fit_refused"] = {"reason": str(exc), "counts": {str(k): v for k, v in exc.counts.items()}}
            fit = None
        if fit is not None:
            for r in rows:
                r.update({"slope": fit["slope"], "intercept": fit["intercept"], "r2": fit["r2"],
                          "beta_gamma": fit["beta_gamma"], "E_band": fit["E_band"]})
            extra["fit"] = _row({k: v for k, v in fit.items() if not isinstance(v, (list, dict))})
            extra["fit"]["E_implied"] = fit["E_implied"]
    if capped or "fit_refused" in extra:
        extra["budget_exhausted"] = True
    return recs, rows, extra


def run_capacity(cfg, threads):
    recs, rows = [], []
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        rep = capacity.sandwich_check(n, params, cfg.seeds.graphs, eps=cfg.eps)
        recs += [_row(r.to_dict()) for r in rep.records]
        rows.append(_row({"n": n, "seeds": len(rep.records), "ordered_fraction": rep.fraction,
                          "levels": rep.levels}))
    return recs, rows, {}


def run_couple(cfg, threads):
    recs, rows = [], []
    for n in cfg.params.sizes:
        params = cfg.model_params(n)
        gs = cfg.seeds.graphs[0]
        g = _graph(cfg, params, n, gs)
        seed = replica_seed(cfg.seeds.base, n)
        if cfg.mode == "short":
            out = coupling.short_coupling_trials(g, params, cfg.seeds.replicas, seed, cfg.caps.horizon,
                                                 cfg.caps.max_transitions)
            trial_recs = [{"n": n, "graph_seed": gs, "seed": replica_seed(seed, r["trial"]), "merged": r["merged"],
                           "merge_time": r["merge_time"], "max_W1": r["max_W1"], "attempts": 1,
                           "transitions": r["transitions"]} for r in out]
        else:
            out = coupling.long_coupling_trials(g, params, cfg.seeds.replicas, seed, cfg.caps.budget,
                                                cfg.caps.horizon, cfg.caps.max_transitions, cfg.caps.step_cap)
            trial_recs = [{"n": n, "graph_seed": gs, "seed": replica_seed(seed, r["trial"]), "merged": r["merged"],
                           "merge_time": r["merge_time"], "max_W1": None, "attempts": r["attempts"]} for r in out]
        recs += [_row(r) for r in trial_recs]
        merged = sum(r["merged"] for r in trial_recs)
        rows.append(_row({"n": n, "trials": len(trial_recs), "merged": merged,
                          "median_attempts": float(np.median([r["attempts"] for r in trial_recs]))}))
    return recs, rows, {}


RUNNERS = {"landscape": run_landscape, "cwexact": run_cwexact, "simulate": run_simulate,
           "crossover": run_crossover, "capacity": run_capacity, "couple": run_couple}


# --------------------------------------------------------------------------
# driver


def run(cfg, out_dir=None, threads=None):
    """Execute a parsed configuration and write its artifacts.

    Returns
    -------
    int
        Exit status.
    """
    out_dir = out_dir or cfg.output.get("dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    recs, rows, extra = RUNNERS[cfg.subcommand](cfg, threads)
    files = {"records.jsonl": _jsonl(recs), "summary.csv": _csv(rows)}
    files.update(extra.pop("_files", {}))
    digests = {}
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        digests[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    status = EXIT_BUDGET if extra.get("budget_exhausted") else EXIT_OK
    manifest = {"version": __version__, "config": cfg.to_dict(), "config_hash": cfgmod.content_hash(cfg),
                "outputs": digests, "results": extra, "status": status,
                "timings": {"started": started, "wall_seconds": time.perf_counter() - t0}}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def _error(kind, message, status, out_dir=None, counts=None):
    rec = {"error": kind, "message": message, "exit_code": status}
    if counts:
        rec["counts"] = {str(k): v for k, v in counts.items()}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
                json.dump(rec, fh, sort_keys=True)
                fh.write("\n")
        except OSError:
            pass
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="metaspin", description="Metastability experiments for Glauber dynamics.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in cfgmod.SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, help="worker threads (default: $METASPIN_THREADS or 1)")
    sub.add_parser("schema", help="print the configuration JSON schema")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(cfgmod.SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    out_dir = args.out
    try:
        cfg = cfgmod.load(args.config)
        if cfg.subcommand != args.command:
            raise ParameterError(f"config is for {cfg.subcommand!r}, not {args.command!r}")
        out_dir = out_dir or cfg.output.get("dir", "out")
        threads = dynamics.resolve_threads(args.threads)
        return run(cfg, out_dir, threads)
    except (ParameterError, OSError) as exc:
        return _error("config", str(exc), EXIT_CONFIG, out_dir)
    except RegimeError as exc:
        return _error("regime", str(exc), EXIT_REGIME, out_dir)
    except InsufficientDataError as exc:
        return _error("budget", str(exc), EXIT_BUDGET, out_dir, exc.counts)


if __name__ == "__main__":
    sys.exit(main())
