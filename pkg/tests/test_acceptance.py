"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""

import json
import math

import numpy as np
import pytest
from mpmath import mpf

from metaspin import capacity, cli, config, coupling, cw_chain, dynamics, landscape
from metaspin.graph import complete_graph, generate_er
from metaspin.rng import make_rng, replica_seed
from metaspin.spin import ModelParams, SpinConfig, energy, energy_via_boundary, delta_energy_flip

from oracles import doob_mean_solve, harmonic_solve


# --------------------------------------------------------------------------
# 1. closed forms for the simple random walk


def test_criterion_01_srw_closed_forms(report):
    worst_h = worst_e = 0.0
    for N in range(1, 101):
        chain = cw_chain.BirthDeathChain(np.ones(N + 1), np.ones(N + 1))
        x = np.arange(N + 1)
        worst_h = max(worst_h, float(np.max(np.abs(cw_chain.harmonic(chain) - x / N))))
        xs = np.arange(1, N + 1)
        worst_e = max(worst_e, float(np.max(np.abs(cw_chain.conditional_mean_hits(chain) - (N * N - xs * xs) / 3.0))))
    ok = worst_h <= 1e-9 and worst_e <= 1e-9
    report(1, ok, f"max |h_N - x/N| = {worst_h:.2e}, max |e_N - (N^2-x^2)/3| = {worst_e:.2e} (tol 1e-9, N <= 100)")
    assert ok


# --------------------------------------------------------------------------
# 2. oracle equivalence on random chains


def _rel(a, b):
    b = float(b)
    return abs(float(a) - b) / abs(b) if b != 0 else abs(float(a))


def test_criterion_02_oracle_equivalence(report):
    rng = np.random.default_rng(20240601)
    worst_h = worst_e = 0.0
    for _ in range(50):
        N = int(rng.integers(2, 201))
        up = np.exp(rng.uniform(-2.0, 2.0, N + 1))
        down = np.exp(rng.uniform(-2.0, 2.0, N + 1))
        chain = cw_chain.BirthDeathChain(up, down)
        h = cw_chain.harmonic(chain)
        e = cw_chain.conditional_mean_hits(chain)
        ho = harmonic_solve(up, down)
        eo = doob_mean_solve(up, down)
        worst_h = max(worst_h, max(_rel(h[x], ho[x]) for x in range(1, N + 1)))
        worst_e = max(worst_e, max(_rel(e[x - 1], eo[x - 1]) for x in range(1, N)))
    ok = worst_h < 1e-8 and worst_e < 1e-8
    report(2, ok, f"50 random chains: max rel err harmonic {worst_h:.2e}, conditional mean {worst_e:.2e} (tol 1e-8)")
    assert ok


# --------------------------------------------------------------------------
# 3. lumping at p = 1


def test_criterion_03_lumping(report):
    mismatches, checked = 0, 0
    for n in (2, 3, 60, 200, 500):
        for beta, h in ((1.5, 0.1), (0.7, 0.3), (4.0, 0.02)):
            params = ModelParams(1.0, beta, h, n=n)
            up, down = cw_chain.cw_rates(n, 1.0, beta, h)
            st = dynamics.SimState(complete_graph(n), params, SpinConfig.all_minus(n), make_rng(0))
            for k in range(n + 1):
                ru, rd = st.induced_volume_rates()
                mismatches += (ru != up[k]) + (rd != down[k])
                checked += 2
                if k < n:
                    st.flip(k)
    ok = mismatches == 0
    report(3, ok, f"{checked} volume rates on K_n, n in {{2,3,60,200,500}}: {mismatches} mismatches (exact equality)")
    assert ok


# --------------------------------------------------------------------------
# 4. Kramers asymptotics against the exact chain


def test_criterion_04_kramers(report):
    params = ModelParams(1.0, 1.5, 0.1)
    ratios = {}
    for n in (200, 400, 800):
        ex = cw_chain.exact_crossover(params, n)
        ratios[n] = math.exp(cw_chain.log_kramers_time(params, n) - ex["log_mean"])
    dev = [abs(1 - ratios[n]) for n in (200, 400, 800)]
    ok = 0.8 <= ratios[400] <= 1.25 and dev[0] > dev[1] > dev[2]
    txt = ", ".join(f"n={n}: {r:.4f}" for n, r in ratios.items())
    report(4, ok, f"Kramers/exact ratio {txt}; in [0.8, 1.25] at n=400 and approaching 1")
    assert ok


# --------------------------------------------------------------------------
# 5. Monte Carlo against the exact chain at p = 1


def test_criterion_05_mc_vs_exact(report):
    n = 60
    params = ModelParams(1.0, 1.5, 0.1, n=n)
    est = dynamics.estimate_crossover(complete_graph(n), params, replicas=2000, seed=5)
    roots = landscape.find_roots(params, n)
    exact = cw_chain.mean_hitting_time_ct(cw_chain.build_cw_chain(params), roots.M_n, roots.S_n)
    z = abs(est.mean - exact) / est.stderr
    ok = est.completed == 2000 and z <= 3.0
    report(5, ok, f"n=60, 2000 replicas: MC {est.mean:.3f} +- {est.stderr:.3f} vs exact {exact:.3f} (z = {z:.2f}, tol 3)")
    assert ok


# --------------------------------------------------------------------------
# 6. exponent on Erdos-Renyi graphs


C6_P, C6_BETA = 0.5, 3.0
C6_NS = (40, 48, 56)
C6_GRAPHS = 48
C6_REPLICAS = 40


@pytest.mark.slow
def test_criterion_06_er_exponent(report):
    h = landscape.field_for_barrier(C6_P, C6_BETA, 6.0 / (C6_BETA * 56))
    base = ModelParams(C6_P, C6_BETA, h)
    recs = []
    j = 0
    for n in C6_NS:
        params = base.with_n(n)
        for gs in range(C6_GRAPHS):
            est = dynamics.estimate_crossover(generate_er(n, C6_P, gs), params, C6_REPLICAS, replica_seed(2024, j))
            j += 1
            for r in est.records:
                r["graph_seed"] = gs
            recs += est.records
    fit = cli.fit_exponent(recs, base, estimator="quenched")
    pooled = cli.fit_exponent(recs, base, estimator="pooled")
    ok = abs(fit["rel_error"]) < 0.25
    implied = ", ".join(f"{e:.2f}" for e in fit["E_implied"])
    report(6, ok, f"quenched slope {fit['slope']:.4f} vs beta*Gamma* {fit['beta_gamma']:.4f} "
                  f"({100 * fit['rel_error']:+.1f}%, tol 25%); pooled slope {pooled['slope']:.4f}; "
                  f"implied E_n [{implied}] vs band +-{fit['E_band']:.2f} (reported only)")
    assert ok


# --------------------------------------------------------------------------
# 7. capacity identity, cut bound and sandwich


C7 = ModelParams(0.6, 2.5, 0.02)


def test_criterion_07_capacity(report):
    worst, cut_ok = 0.0, True
    M, _, S = landscape.grid_roots(C7, 12)
    for seed in range(20):
        fc = capacity.FullChain(generate_er(12, C7.p, seed), C7)
        c = capacity.capacity_of(fc, fc.level(M), fc.level(S))
        worst = max(worst, abs(c["dirichlet"] - c["flux"]) / c["dirichlet"])
        cut_ok &= min(c["cut"], c["best_cut"], c["indicator"]) >= c["dirichlet"]
    rep = capacity.sandwich_check(14, C7, range(20))
    ok = worst < 1e-9 and cut_ok and rep.fraction >= 0.9
    report(7, ok, f"n=12, 20 seeds: max rel |Dirichlet - flux| = {worst:.1e} (tol 1e-9), indicator cuts >= cap: "
                  f"{cut_ok}; n=14 sandwich Pl <= P <= Pu on {100 * rep.fraction:.0f}% of 20 seeds (need 90%)")
    assert ok


# --------------------------------------------------------------------------
# 8. coupling


C8 = ModelParams(0.6, 3.0, 0.08)


def test_criterion_08_coupling(report):
    n = 200
    g = generate_er(n, C8.p, 0)
    trials = coupling.short_coupling_trials(g, C8.with_n(n), 100, seed=0)
    merged = sum(t["merged"] for t in trials)
    l1, l2 = 1.0, 1.2
    _, _, same = coupling.couple_exponentials(l1, l2, make_rng(8), size=10**6)
    fail = 1.0 - same.mean()
    bound = coupling.tv_bound(l1, l2)
    ok = merged >= 99 and fail <= bound
    report(8, ok, f"n=200 (beta*n*Gamma* = {C8.beta * n * landscape.barrier(C8):.1f}): {merged}/100 merged by time 2n "
                  f"(need 99); meeting-failure frequency {fail:.4f} <= bound {bound:.4f} over 10^6 draws")
    assert ok


# --------------------------------------------------------------------------
# 9. drift regime


def test_criterion_09_drift_flat(report):
    params = ModelParams(0.5, 4.0, 0.6)
    ns = (100, 200, 400)
    means = []
    for i, n in enumerate(ns):
        est = dynamics.estimate_drift_crossover(generate_er(n, params.p, i), params.with_n(n), 200, seed=90 + i)
        means.append(est.mean)
    slope, _, _ = dynamics.fit_log_slope(ns, means)
    h6 = landscape.field_for_barrier(C6_P, C6_BETA, 6.0 / (C6_BETA * 56))
    ref = C6_BETA * landscape.barrier(ModelParams(C6_P, C6_BETA, h6))
    ok = abs(slope) < 0.005 and slope < ref
    txt = ", ".join(f"{m:.3f}" for m in means)
    report(9, ok, f"h > p: means [{txt}] over n {ns}, log-slope {slope:+.5f} (|.| < 0.005) vs metastable "
                  f"beta*Gamma* {ref:.4f}")
    assert ok


# --------------------------------------------------------------------------
# 10. invariant suite


def test_criterion_10_invariants(report):
    failures = []
    rng = make_rng(10)

    # detailed balance of the full chain and of the mean-field chain
    fc = capacity.FullChain(generate_er(10, 0.5, 1), ModelParams(0.5, 2.0, 0.1))
    if fc.reversibility_defect() != 0.0:
        failures.append("full-chain detailed balance")
    for prm in (ModelParams(1.0, 1.5, 0.1, n=50), ModelParams(0.5, 3.0, 0.05, n=80)):
        ch = cw_chain.build_cw_chain(prm)
        lnu = cw_chain.log_gibbs_nu(prm.n, prm.p, prm.beta, prm.h)
        lhs = lnu[:-1] + np.log(ch.up[:-1])
        rhs = lnu[1:] + np.log(ch.down[1:])
        if np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))) > 1e-10:
            failures.append("nu reversibility")

    # energy identities
    g = generate_er(14, 0.4, 3)
    for _ in range(200):
        s = SpinConfig.from_array(rng.choice([-1, 1], 14))
        e1, e2 = energy(g, s, 0.07), energy_via_boundary(g, s, 0.07)
        if abs(e1 - e2) > 1e-12 * max(1.0, abs(e1)):
            failures.append("energy identity")
            break
        v = int(rng.integers(14))
        if delta_energy_flip(g, s, v, 0.07) != -delta_energy_flip(g, s.flipped(v), v, 0.07):
            failures.append("flip antisymmetry")
            break

    # incremental rates against recomputation
    g = generate_er(80, 0.5, 4)
    st = dynamics.SimState(g, ModelParams(0.5, 3.0, 0.05, n=80), SpinConfig.random_with_volume(80, 20, rng), rng)
    for _ in range(20):
        for _ in range(500):
            st.step()
        if not st.check_consistency():
            failures.append("incremental rates")
            break

    # W1 bookkeeping in the coupled run
    params = ModelParams(0.6, 3.0, 0.08, n=60)
    g = generate_er(60, 0.6, 2)
    M = landscape.find_roots(params, 60).M_n
    cs = coupling.CoupledState(dynamics.SimState(g, params, SpinConfig.random_with_volume(60, M, rng), rng),
                               dynamics.SimState(g, params, SpinConfig.random_with_volume(60, M, rng), rng))
    for _ in range(10):
        res = cs.run(np.inf, 1000, trace_len=1000)
        if res["transitions"] and res["trace"][-1] != cs.w1_size():
            failures.append("W1 bookkeeping")
            break
        if cs.merged:
            break

    # configuration round trip
    raw = {"subcommand": "crossover", "params": {"p": 0.5, "beta": 3, "h": 0.05, "ns": [40, 48]},
           "seeds": {"base": 1, "replicas": 30, "graphs": [0, 1]}, "caps": {"step_cap": 1000}}
    cfg = config.from_dict(raw)
    if config.parse(config.serialize(cfg)) != cfg or json.loads(config.serialize(cfg))["params"]["ns"] != [40, 48]:
        failures.append("config round trip")

    ok = not failures
    report(10, ok, "detailed balance, energy identities, incremental rates, nu reversibility, W1 bookkeeping, "
                   f"config round trip: {len(failures)} failures {failures if failures else ''}".rstrip())
    assert ok
