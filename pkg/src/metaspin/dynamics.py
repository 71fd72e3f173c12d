"""Continuous-time Metropolis dynamics of the spin system on a graph.

Each vertex ``v`` flips at rate ``r(sigma, sigma^v) = exp(-beta [H(sigma^v) - H(sigma)]_+)``.
The simulator keeps, per replica, the spins, the number of ``+1``
neighbours of every vertex, the flip rates and a binary sum tree over the
rates; a jump costs ``O(deg + log n)``.  Waiting times are exponential with
the total rate and the flipped vertex is drawn proportionally to its rate.

Hitting times are always taken for volume level sets
``A_k = {sigma : |sigma| = k}``.  Replica ``i`` of a run with base seed
``seed`` uses the stream :func:`metaspin.rng.replica_rng` ``(seed, i)``.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from . import constants, landscape
from .errors import InsufficientDataError, ParameterError, RegimeError
from .rng import make_rng, replica_rng, replica_seed
from .spin import SpinConfig

log = logging.getLogger(__name__)

OUTCOMES = ("hit_target", "hit_alternative", "step_cap")


def _tree_size(n):
    size = 1
    while size < n:
        size <<= 1
    return size


class SimState:
    """Mutable state of one replica.

    Parameters
    ----------
    g : ErGraph
    params : ModelParams
        ``kind == "mean_field"`` requires ``g`` to be complete and uses the
        coupling ``p/n``; otherwise the coupling is ``1/n``.
    sigma : SpinConfig
        Initial configuration (copied).
    rng : numpy.random.Generator
    """

    def __init__(self, g, params, sigma, rng):
        if sigma.n != g.n:
            raise ParameterError("configuration and graph sizes differ")
        self.g = g
        self.params = params
        self.n = g.n
        if params.kind == "mean_field":
            if g.edge_count != g.n * (g.n - 1) // 2:
                raise ParameterError("mean-field kind needs the complete graph")
            self.cpl = float(params.p)
        else:
            self.cpl = 1.0
        self.beta = float(params.beta)
        self.h = float(params.h)
        self.indptr = np.ascontiguousarray(g.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(g.indices, dtype=np.int64)
        self.size = _tree_size(self.n)
        self.spins = sigma.to_array()
        self.nplus = np.zeros(self.n, dtype=np.int64)
        self.rates = np.zeros(self.n)
        self.tree = np.zeros(2 * self.size)
        K.init_state(self.spins, self.nplus, self.rates, self.tree, self.size, self.indptr, self.indices,
                     self.cpl, self.beta, self.h)
        self.volume = int(sigma.volume)
        self.time = 0.0
        self.jumps = 0
        self.rng = rng

    def _args(self):
        return (self.spins, self.nplus, self.rates, self.tree, self.size, self.indptr, self.indices,
                self.cpl, self.beta, self.h)

    @property
    def sigma(self) -> SpinConfig:
        return SpinConfig.from_support(self.spins > 0)

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def step(self):
        """One jump; returns ``(vertex, waiting_time)``."""
        v, wait, dv = K.step(*self._args(), self.rng)
        self.time += wait
        self.jumps += 1
        self.volume += dv
        return int(v), float(wait)

    def flip(self, v):
        """Flip ``v`` deterministically (no time advance)."""
        self.volume += K.apply_flip(v, *self._args())

    # consistency ---------------------------------------------------------
    def reference_rates(self):
        """Rates recomputed from scratch through the bitset adjacency."""
        support = self.spins > 0
        from . import bits

        words = bits.pack(support)
        e_plus = np.bitwise_count(self.g.adj_bits & words[None, :]).sum(axis=1).astype(np.int64)
        deg = self.g.degrees
        n = self.n
        d = np.where(support, 2.0 * self.cpl * (2 * e_plus - deg) / n + 2.0 * self.h,
                     2.0 * self.cpl * (deg - 2 * e_plus) / n - 2.0 * self.h)
        return e_plus, K.metropolis_rates(d, self.beta)

    def check_consistency(self):
        """Assert incremental bookkeeping equals full recomputation (exact)."""
        e_plus, rates = self.reference_rates()
        ok = (np.array_equal(e_plus, self.nplus) and np.array_equal(rates, self.rates)
              and self.volume == int((self.spins > 0).sum()))
        leaves = self.tree[self.size:self.size + self.n]
        ok = ok and np.array_equal(leaves, self.rates) and not np.any(self.tree[self.size + self.n:])
        inner = self.tree[1:self.size]
        kids = self.tree[2:2 * self.size:2] + self.tree[3:2 * self.size:2]
        return bool(ok and np.array_equal(inner, kids))

    def induced_volume_rates(self):
        """``(up, down)``: total rate of volume-increasing and volume-decreasing flips.

        Equal rates are grouped before summing (``count * rate``), so on the
        complete graph the result is exactly ``(n-k) r_up`` and ``k r_down``.
        """
        out = []
        for mask in (self.spins < 0, self.spins > 0):
            vals, counts = np.unique(self.rates[mask], return_counts=True)
            out.append(float(sum(int(c) * float(v) for v, c in zip(vals, counts))))
        return tuple(out)


def step(state, g=None, params=None):
    """Advance ``state`` by one jump; returns ``(vertex, waiting_time)``."""
    return state.step()


@dataclass
class HittingRecord:
    start_hash: str
    start_volume: int
    target_set: tuple
    elapsed_time: float
    jump_count: int
    returns_to_start_level: int
    outcome: str
    hit_level: Optional[int] = None
    max_volume: Optional[int] = None

    def __post_init__(self):
        assert self.elapsed_time >= 0.0
        assert self.outcome in OUTCOMES


def _level_mask(n, levels):
    mask = np.zeros(n + 1, dtype=np.bool_)
    for k in levels:
        if not 0 <= k <= n:
            raise ParameterError(f"level {k} outside 0..{n}")
        mask[k] = True
    return mask


def hit_volume_set(state, targets, step_cap=constants.DEFAULT_STEP_CAP, alternatives=(), start_level=None):
    """Run until ``|sigma|`` first enters one of ``targets`` (or ``alternatives``) after time 0.

    ``returns_to_start_level`` counts entries into ``start_level`` (default:
    the starting volume) up to and including the stopping jump, with the
    initial state counted as the zeroth entry when it lies on that level.
    """
    if step_cap < 1:
        raise ParameterError("step_cap must be >= 1")
    targets = tuple(sorted(set(int(k) for k in targets)))
    alternatives = tuple(sorted(set(int(k) for k in alternatives)))
    mask = _level_mask(state.n, targets + alternatives)
    start_volume = state.volume
    level = start_volume if start_level is None else int(start_level)
    start_hash = state.sigma.to_hex()
    out, dt, jumps, vol, entries, vmax = K.run_until(*state._args(), state.rng, state.volume, mask, level,
                                                     int(step_cap))
    state.time += dt
    state.jumps += int(jumps)
    state.volume = int(vol)
    if out == K.OUT_CAP:
        outcome = "step_cap"
        hit = None
    else:
        hit = int(vol)
        outcome = "hit_target" if hit in targets else "hit_alternative"
    returns = int(entries) + (1 if start_volume == level else 0)
    return HittingRecord(start_hash, start_volume, targets, float(dt), int(jumps), returns, outcome, hit, int(vmax))


# --------------------------------------------------------------------------
# replicas


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get("METASPIN_THREADS")
    try:
        threads = int(threads) if threads is not None else 1
    except ValueError as exc:
        raise ParameterError(f"invalid thread count {threads!r}") from exc
    return max(1, threads)


def map_replicas(fn, count, threads=None):
    """Run ``fn(i)`` for ``i < count``; results come back in index order."""
    threads = resolve_threads(threads)
    if threads == 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


@dataclass
class CrossoverEstimate:
    n: int
    mean: float
    stderr: float
    completed: int
    replicas: int
    step_cap: int
    levels: dict
    records: list = field(repr=False)

    @property
    def completion(self):
        return self.completed / self.replicas if self.replicas else 0.0

    def summary(self):
        d = asdict(self)
        d.pop("records")
        d["completion"] = self.completion
        return d


def _crossover_runs(g, params, start_fn, target_level, replicas, seed, step_cap, threads, start_level):
    def one(i):
        rng = replica_rng(seed, i)
        sigma0 = start_fn(rng)
        st = SimState(g, params, sigma0, rng)
        rec = hit_volume_set(st, [target_level], step_cap=step_cap, start_level=start_level)
        return {"replica": i, "seed": replica_seed(seed, i), "n": g.n, "p": params.p, "beta": params.beta,
                "h": params.h, "outcome": rec.outcome, "time": rec.elapsed_time, "jumps": rec.jump_count,
                "returns": rec.returns_to_start_level}

    return map_replicas(one, replicas, threads)


def _summarise(n, records, step_cap, levels):
    times = np.array([r["time"] for r in records if r["outcome"] == "hit_target"])
    done = times.size
    if done < len(records):
        log.warning("%d of %d replicas hit the step cap; the mean is over completed runs only and "
                    "is biased low", len(records) - done, len(records))
    mean = float(times.mean()) if done else math.nan
    se = float(times.std(ddof=1) / math.sqrt(done)) if done > 1 else math.nan
    return CrossoverEstimate(n, mean, se, done, len(records), int(step_cap), levels, records)


def estimate_crossover(g, params, replicas, seed, step_cap=constants.DEFAULT_STEP_CAP, threads=None):
    """Mean crossover time ``E[tau_{A_S}]`` from uniform starts in ``A_M`` (metastable regime)."""
    regime = landscape.classify_regime(params)
    if regime is not landscape.Regime.METASTABLE:
        raise RegimeError(f"crossover needs the metastable regime, got {regime.value}")
    roots = landscape.find_roots(params, g.n)
    M, S = roots.M_n, roots.S_n
    recs = _crossover_runs(g, params, lambda rng: SpinConfig.random_with_volume(g.n, M, rng), S,
                           replicas, seed, step_cap, threads, M)
    return _summarise(g.n, recs, step_cap, {"M": M, "T": roots.T_n, "S": S})


def drift_target_level(params, n):
    """First grid level with ``J_n <= 0``: the analogue of ``S_n`` when ``J`` has one zero.

    When the zero of ``J`` lies within one grid step of ``+1`` the drift is
    positive on the whole grid and the target is the full level ``n``.
    """
    regime = landscape.classify_regime(params)
    if regime is landscape.Regime.METASTABLE:
        raise RegimeError("drift target is defined outside the metastable regime")
    M, _, _ = landscape.grid_roots(params, n)
    return int(n) if M is None else M


def estimate_drift_crossover(g, params, replicas, seed, step_cap=constants.DEFAULT_STEP_CAP, threads=None):
    """Mean hitting time of the single well from the all-minus state (non-metastable regime)."""
    S = drift_target_level(params, g.n)
    n = g.n
    recs = _crossover_runs(g, params, lambda rng: SpinConfig.all_minus(n), S, replicas, seed, step_cap,
                           threads, 0)
    return _summarise(n, recs, step_cap, {"M": 0, "T": None, "S": S})


# --------------------------------------------------------------------------
# diagnostics


def _levels(params, n):
    roots = landscape.find_roots(params, n)
    return roots.M_n, roots.T_n, roots.S_n


def conditional_return_stats(g, params, xi0, trials, seed, step_cap=constants.DEFAULT_STEP_CAP):
    """Return times to ``A_M`` from ``xi0`` conditioned on not reaching ``A_T`` first.

    Returns a dict with the conditioning fraction, the conditional mean, the
    empirical survival function on a time grid and an exponential-tail fit:
    beyond the median ``t0`` the excess ``tau - t0`` is fitted by maximum
    likelihood, giving ``slope = -1/mean excess`` with a normal 95% interval.
    """
    if trials < 100:
        raise ParameterError("conditional_return_stats needs trials >= 100")
    M, T, _ = _levels(params, g.n)
    if xi0.volume != M:
        raise ParameterError("xi0 must lie in A_M")
    times, hits_t, capped = [], 0, 0
    for i in range(trials):
        st = SimState(g, params, xi0, replica_rng(seed, i))
        rec = hit_volume_set(st, [M], step_cap=step_cap, alternatives=[T])
        if rec.outcome == "hit_target":
            times.append(rec.elapsed_time)
        elif rec.outcome == "hit_alternative":
            hits_t += 1
        else:
            capped += 1
    times = np.sort(np.array(times))
    out = {"trials": trials, "returns": int(times.size), "t_hits": hits_t, "capped": capped,
           "fraction_conditioned": times.size / trials}
    if times.size < 10:
        out.update(mean=math.nan, slope=math.nan, slope_hi=math.nan, grid=[], survival=[])
        return out
    t0 = float(np.median(times))
    excess = times[times > t0] - t0
    rate = 1.0 / excess.mean()
    se = rate / math.sqrt(excess.size)
    grid = np.linspace(0.0, float(times[-1]), 21)
    surv = [(times >= x).mean() for x in grid]
    out.update(mean=float(times.mean()), t0=t0, slope=-rate, slope_hi=-rate + constants.Z_95 * se,
               grid=grid.tolist(), survival=surv)
    return out


def returns_before_crossover(g, params, xi0, seed, step_cap=constants.DEFAULT_STEP_CAP, levels=None):
    """``g_{xi0}(A_M, A_S)``: entries into ``A_M`` before the first entry into ``A_S``.

    The start counts as the zeroth entry when ``xi0`` lies in ``A_M``.
    ``levels`` may override ``(M, S)``.
    """
    if levels is None:
        M, _, S = _levels(params, g.n)
    else:
        M, S = levels
    st = SimState(g, params, xi0, make_rng(seed))
    rec = hit_volume_set(st, [S], step_cap=step_cap, start_level=M)
    return rec.returns_to_start_level, rec


def localisation_check(g, params, xi0, C1, trials=50, seed=0, window=None):
    """Fraction of jump windows from ``xi0`` that reach ``A_{M + ceil(C1 n^(5/6))}``.

    ``window`` defaults to ``n^2 log n`` jumps.
    """
    n = g.n
    M, _, _ = _levels(params, n)
    level = M + int(math.ceil(C1 * n ** (5.0 / 6.0)))
    window = constants.localisation_window(n) if window is None else int(window)
    if level > n:
        return {"level": level, "window": window, "fraction": 0.0, "trials": trials, "reached": 0}
    reached = 0
    for i in range(trials):
        st = SimState(g, params, xi0, replica_rng(seed, i))
        rec = hit_volume_set(st, range(level, n + 1), step_cap=window)
        reached += rec.outcome == "hit_target"
    return {"level": level, "window": window, "fraction": reached / trials, "trials": trials,
            "reached": reached}


def jumps_in_time(state, horizon):
    """Number of jumps in ``[0, horizon]`` (advances the state)."""
    first = np.full(state.n, np.inf)
    jumps, vol = K.run_time(*state._args(), state.rng, state.volume, float(horizon), first)
    state.volume = int(vol)
    state.jumps += int(jumps)
    state.time += float(horizon)
    return int(jumps)


def update_time(state, chunk=None):
    """Time until every vertex has flipped at least once (advances the state)."""
    first = np.full(state.n, np.inf)
    chunk = float(chunk if chunk is not None else max(1.0, math.log(state.n)))
    offset = 0.0
    while not np.all(np.isfinite(first)):
        local = np.full(state.n, np.inf)
        jumps, vol = K.run_time(*state._args(), state.rng, state.volume, chunk, local)
        state.volume = int(vol)
        state.jumps += int(jumps)
        newly = np.isfinite(local) & ~np.isfinite(first)
        first[newly] = local[newly] + offset
        offset += chunk
    state.time += offset
    return float(first.max())


def update_time_bound(params, n, y):
    """``exp(-lam y + log n) / (1 - exp(-lam y))`` with ``lam = exp(-beta (2p + h))``."""
    lam = math.exp(-params.beta * (2 * params.p + params.h))
    y = np.asarray(y, dtype=float)
    return np.exp(-lam * y + math.log(n)) / -np.expm1(-lam * y)


def boundary_histogram_sample(g, k, samples, rng):
    """Deviations ``|boundary(sigma)| - p k (n-k)`` for uniform ``sigma`` in ``A_k``.

    Also evaluates the one-sided tail against ``exp(-2 i^2 / (k (n-k)))`` at
    ``i = c sqrt(k (n-k))`` for ``c in {0.5, 1, 1.5, 2}``.
    """
    from . import bits

    n = g.n
    if not 0 <= k <= n:
        raise ParameterError("k out of range")
    dev = np.empty(samples)
    deg = g.degrees
    for s in range(samples):
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:k]] = True
        if k == 0 or k == n:
            bnd = 0
        else:
            words = bits.pack(mask)
            inside = np.bitwise_count(g.adj_bits[mask] & words[None, :]).sum()
            bnd = int(deg[mask].sum() - inside)
        dev[s] = bnd - g.p * k * (n - k)
    var = k * (n - k)
    tails = []
    if var > 0:
        for c in (0.5, 1.0, 1.5, 2.0):
            i = c * math.sqrt(var)
            bound = constants.BOUNDARY_TAIL_SLACK * math.exp(-2.0 * i * i / var)
            freq = float((dev >= i).mean())
            allowance = constants.BOUNDARY_TAIL_SIGMAS * math.sqrt(max(bound * (1 - bound), 1e-12) / samples)
            tails.append({"i": i, "freq": freq, "bound": bound, "ok": freq <= bound + allowance})
    return {"deviations": dev, "tails": tails, "all_ok": all(t["ok"] for t in tails)}


def rate_sandwich(state):
    """Forward-rate bounds at the current state, or ``None`` outside ``2n^(1/3) <= k <= n - 2n^(1/3)``.

    Checks ``(n-k-2n^(2/3)) e^{-2 beta [vt_k + 3n^(-1/3)]_+} <= up
    <= (n-k-2n^(2/3)) e^{-2 beta [vt_k - 3n^(-1/3)]_+} + 2n^(2/3)`` with
    ``vt_k = p (1 - 2k/n) - h``.
    """
    n, k = state.n, state.volume
    lo_k = 2 * n ** (1 / 3)
    if not lo_k <= k <= n - lo_k:
        return None
    p, beta, h = state.params.p, state.params.beta, state.params.h
    vt = landscape.vartheta_k(state.params, k, n)
    base = n - k - 2 * n ** (2 / 3)
    lower = base * math.exp(-2 * beta * max(vt + 3 * n ** (-1 / 3), 0.0))
    upper = base * math.exp(-2 * beta * max(vt - 3 * n ** (-1 / 3), 0.0)) + 2 * n ** (2 / 3)
    up = float(state.rates[state.spins < 0].sum())
    return {"k": k, "up": up, "lower": lower, "upper": upper, "ok": lower <= up <= upper}


def rate_sandwich_monitor(g, params, seed, samples=200, spacing=None, start_volume=None):
    """Sample states along a trajectory and evaluate :func:`rate_sandwich` on each.

    Never silent: returns every evaluation plus the failure fraction.
    """
    n = g.n
    rng = make_rng(seed)
    k0 = start_volume if start_volume is not None else n // 2
    st = SimState(g, params, SpinConfig.random_with_volume(n, k0, rng), rng)
    spacing = spacing or n
    evals = []
    for _ in range(samples):
        for _ in range(spacing):
            st.step()
        r = rate_sandwich(st)
        if r is not None:
            evals.append(r)
    fails = sum(not e["ok"] for e in evals)
    return {"evaluations": evals, "checked": len(evals), "failures": fails,
            "failure_fraction": fails / len(evals) if evals else 0.0}


def attraction_count(state):
    """``#{v in sigma : r(sigma, sigma^v) < 1}``."""
    return int(((state.spins > 0) & (state.rates < 1.0)).sum())


def attraction_monitor(g, params, seed, samples=50):
    """Evaluate the attraction count on uniform configurations of ``A_{M_n}``."""
    n = g.n
    M, _, _ = _levels(params, n)
    rng = make_rng(seed)
    counts = []
    for _ in range(samples):
        st = SimState(g, params, SpinConfig.random_with_volume(n, M, rng), rng)
        counts.append(attraction_count(st))
    bound = constants.ATTRACTION_C * n ** (2 / 3)
    return {"counts": counts, "bound": bound, "max": max(counts), "ok": max(counts) <= bound}


def fit_log_slope(ns, means):
    """Least-squares slope and intercept of ``log mean`` against ``n``."""
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(means, dtype=float))
    A = np.vstack([ns, np.ones_like(ns)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ np.array([slope, intercept])
    ss_res = float(((y - yhat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def require_completed(estimates, min_points=constants.FIT_MIN_POINTS, min_reps=constants.FIT_MIN_REPLICAS):
    counts = {e.n: e.completed for e in estimates}
    if len(counts) < min_points or min(counts.values()) < min_reps:
        raise InsufficientDataError(
            f"need >= {min_points} sizes with >= {min_reps} completed replicas each", counts)
    return counts
