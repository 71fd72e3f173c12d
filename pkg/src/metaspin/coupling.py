"""Two-replica coupling of the Metropolis dynamics on a common graph.

Every vertex carries one exponential clock per replica with that replica's
flip rate.  After each transition of the joint process all clock pairs are
drawn afresh: vertices where the replicas agree get maximally coupled clocks
(:func:`couple_exponentials`), vertices where they disagree get independent
ones.  The earliest of the ``2n`` clocks fires; a shared clock flips the
vertex in both replicas.  By memorylessness each replica is marginally the
ordinary dynamics.  ``W1`` is the set of vertices where the replicas disagree.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import constants, landscape
from .dynamics import SimState, hit_volume_set
from .errors import ParameterError
from .rng import replica_rng
from .spin import SpinConfig


def couple_exponentials(l1, l2, rng, size=None):
    """Maximal coupling of ``Exp(l1)`` and ``Exp(l2)``.

    The two densities overlap in mass ``omega``; with probability ``omega``
    both variates equal one draw from the normalised overlap, otherwise they
    are drawn from the two normalised excess parts.  Exactly two uniforms are
    used per pair: the first selects the part and is rescaled into a
    variate, the second drives the second excess variate.

    Returns
    -------
    x1, x2 : float or ndarray
    same : bool or ndarray
    """
    if not (l1 > 0 and l2 > 0):
        raise ParameterError("rates must be positive")
    if size is None:
        u1, u2 = rng.random(), rng.random()
        return K.couple_exp(float(l1), float(l2), u1, u2)
    u1, u2 = rng.random(size), rng.random(size)
    l1a = np.full(size, float(l1))
    l2a = np.full(size, float(l2))
    x1, x2 = np.empty(size), np.empty(size)
    same = np.empty(size, dtype=np.bool_)
    K.couple_exp_many(l1a, l2a, u1, u2, x1, x2, same)
    return x1, x2, same


def overlap(l1, l2):
    """Overlap mass ``omega`` of the two exponential densities (``1 - d_TV``)."""
    if l1 == l2:
        return 1.0
    lo, hi = min(l1, l2), max(l1, l2)
    xs = math.log(hi / lo) / (hi - lo)
    return -math.expm1(-lo * xs) + math.exp(-hi * xs)


def tv_bound(l1, l2):
    """``2 delta / (lambda + delta)`` with ``lambda = min``, ``delta = |l1 - l2|``."""
    lam, delta = min(l1, l2), abs(l1 - l2)
    return 2 * delta / (lam + delta)


@dataclass
class CoupledState:
    first: SimState
    second: SimState
    time: float = 0.0
    jumps: int = 0
    merged: bool = False
    merge_history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.first.g is not self.second.g:
            raise ParameterError("both replicas must live on the same graph")
        self.merged = self.w1_size() == 0

    def w1(self):
        return np.flatnonzero(self.first.spins != self.second.spins)

    def w1_size(self):
        return int((self.first.spins != self.second.spins).sum())

    def run(self, horizon, max_transitions, trace_len=0):
        """Advance the coupled pair; see :func:`metaspin._kernels.coupled_run`."""
        a, b = self.first, self.second
        trace = np.zeros(trace_len, dtype=np.int64)
        out = K.coupled_run(a.spins, a.nplus, a.rates, a.tree, b.spins, b.nplus, b.rates, b.tree, a.size,
                            a.indptr, a.indices, a.cpl, a.beta, a.h, a.rng, float(horizon),
                            int(max_transitions), trace)
        merged, t, k = bool(out[0]), float(out[1]), int(out[2])
        was = self.merged
        self.time += t
        self.jumps += k
        a.time += t
        b.time += t
        a.volume = int((a.spins > 0).sum())
        b.volume = int((b.spins > 0).sum())
        self.merged = self.w1_size() == 0
        assert not (was and not self.merged), "merge must be absorbing"
        self.merge_history.append(self.merged)
        return {"merged": merged, "time": t, "transitions": k, "w1_initial": int(out[3]), "w1_max": int(out[4]),
                "w1_decreases": int(out[5]), "small_changes": int(out[6]), "small_decreases": int(out[7]),
                "trace": trace[:min(k, trace_len)]}


def coupled_first_jump(g, params, sigma, sigma_tilde, rng):
    """Run the coupled pair until the first replica jumps; returns ``(vertex, time)`` of that jump.

    Used to check that the coupling leaves each marginal untouched.
    """
    a = SimState(g, params, sigma, rng)
    b = SimState(g, params, sigma_tilde, rng)
    t = 0.0
    trace = np.zeros(0, dtype=np.int64)
    while True:
        before = a.spins.copy()
        out = K.coupled_run(a.spins, a.nplus, a.rates, a.tree, b.spins, b.nplus, b.rates, b.tree, a.size,
                            a.indptr, a.indices, a.cpl, a.beta, a.h, rng, np.inf, 1, trace)
        t += float(out[1])
        changed = np.flatnonzero(a.spins != before)
        if changed.size:
            return int(changed[0]), t
        if out[0]:
            # merged by a flip of the second replica; from now on the clocks are shared
            st = SimState(g, params, SpinConfig.from_support(a.spins > 0), rng)
            v, w = st.step()
            return v, t + w


def run_short_coupling(g, params, sigma0, sigma_tilde0, rng, horizon=None, max_transitions=None, trace_len=None):
    """Short-term coupling from two configurations for time ``horizon`` (default ``2n``).

    Stops at the merge, at the horizon, or after ``max_transitions``
    transitions (default ``n log n``).
    """
    n = g.n
    horizon = constants.SHORT_COUPLING_HORIZON_FACTOR * n if horizon is None else horizon
    max_transitions = constants.short_coupling_transitions(n) if max_transitions is None else max_transitions
    trace_len = max_transitions if trace_len is None else trace_len
    cs = CoupledState(SimState(g, params, sigma0, rng), SimState(g, params, sigma_tilde0, rng))
    if cs.merged:
        return {"merged_by_horizon": True, "merge_time": 0.0, "transitions": 0, "w1_initial": 0, "w1_max": 0,
                "w1_trace": np.zeros(0, dtype=np.int64), "state": cs, "small_changes": 0,
                "small_decreases": 0}
    res = cs.run(horizon, max_transitions, trace_len)
    return {"merged_by_horizon": res["merged"], "merge_time": res["time"] if res["merged"] else None,
            "transitions": res["transitions"], "w1_initial": res["w1_initial"], "w1_max": res["w1_max"],
            "w1_trace": res["trace"], "state": cs, "small_changes": res["small_changes"],
            "small_decreases": res["small_decreases"]}


def run_long_coupling(g, params, sigma0, sigma_tilde0, rng, budget=20, horizon=None, max_transitions=None,
                      step_cap=constants.DEFAULT_STEP_CAP):
    """Repeated short couplings aligned at the replicas' successive entries into ``A_M``.

    Attempt ``i`` starts from the two replicas' states at their ``i``-th
    entry into ``A_M`` (the start is entry 0), each replica having run on its
    own clock in between, so the two coupling windows start at different
    times ``(t, t~)``.  On success the processes are glued.

    Returns
    -------
    dict
        ``merged``, ``attempts``, ``times`` (the window start times ``(t, t~)``
        of the successful or last attempt) and the coupled state.
    """
    n = g.n
    M = landscape.find_roots(params, n).M_n
    if sigma0.volume != M or sigma_tilde0.volume != M:
        raise ParameterError("both starts must lie in A_M")
    a, b = sigma0, sigma_tilde0
    t_a = t_b = 0.0
    for attempt in range(1, budget + 1):
        res = run_short_coupling(g, params, a, b, rng, horizon, max_transitions, trace_len=0)
        if res["merged_by_horizon"]:
            return {"merged": True, "attempts": attempt, "times": (t_a, t_b), "state": res["state"]}
        # each replica continues on its own clock from the end of the window
        # until its next entry into A_M
        ends = []
        for st in (res["state"].first, res["state"].second):
            rec = hit_volume_set(st, [M], step_cap=step_cap)
            if rec.outcome != "hit_target":
                return {"merged": False, "attempts": attempt, "times": (t_a, t_b), "state": None}
            ends.append(st)
        t_a += ends[0].time
        t_b += ends[1].time
        a, b = ends[0].sigma, ends[1].sigma
    return {"merged": False, "attempts": budget, "times": (t_a, t_b), "state": None}


def short_coupling_trials(g, params, trials, seed, horizon=None, max_transitions=None):
    """Independent short couplings from pairs of uniform configurations in ``A_M``."""
    n = g.n
    M = landscape.find_roots(params, n).M_n
    out = []
    for i in range(trials):
        rng = replica_rng(seed, i)
        s0 = SpinConfig.random_with_volume(n, M, rng)
        s1 = SpinConfig.random_with_volume(n, M, rng)
        res = run_short_coupling(g, params, s0, s1, rng, horizon, max_transitions, trace_len=0)
        out.append({"trial": i, "merged": bool(res["merged_by_horizon"]), "merge_time": res["merge_time"],
                    "max_W1": res["w1_max"], "w1_initial": res["w1_initial"], "transitions": res["transitions"],
                    "small_changes": res["small_changes"], "small_decreases": res["small_decreases"]})
    return out


def long_coupling_trials(g, params, trials, seed, budget=20, horizon=None, max_transitions=None,
                         step_cap=constants.DEFAULT_STEP_CAP):
    """Independent long couplings from pairs of uniform configurations in ``A_M``."""
    n = g.n
    M = landscape.find_roots(params, n).M_n
    out = []
    for i in range(trials):
        rng = replica_rng(seed, i)
        s0 = SpinConfig.random_with_volume(n, M, rng)
        s1 = SpinConfig.random_with_volume(n, M, rng)
        res = run_long_coupling(g, params, s0, s1, rng, budget, horizon, max_transitions, step_cap)
        st = res["state"]
        out.append({"trial": i, "merged": res["merged"], "attempts": res["attempts"],
                    "times": list(res["times"]), "merge_time": st.time if res["merged"] else None})
    return out
