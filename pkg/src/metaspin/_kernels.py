"""Numba kernels for the continuous-time Metropolis dynamics.

State layout (one set of arrays per replica):

``spins``   int8[n], values -1/+1
``nplus``   int64[n], number of +1 neighbours of each vertex
``rates``   float64[n], ``exp(-beta [dH(v)]_+)``
``tree``    float64[2*size], binary sum tree over ``rates`` (leaves at ``size + v``)

The energy change of flipping ``v`` uses the coupling ``cpl / n`` (``cpl = 1``
for the graph Hamiltonian, ``cpl = p`` for the complete graph with coupling
``p/n``): an up-flip costs ``2 cpl (deg v - 2 nplus v) / n - 2h`` and a
down-flip ``2 cpl (2 nplus v - deg v) / n + 2h``.  The operation order
matches the birth-death rates of :mod:`metaspin.cw_chain` so that the
complete-graph rates agree bit for bit.  Random numbers come from the
replica's ``numpy.random.Generator``; numba advances its bit generator in
place, so Python and compiled code share one stream.
"""

import math

import numpy as np
from numba import njit

OUT_TARGET = 0
OUT_CAP = 1


@njit(cache=True, nogil=True)
def delta_energy(v, spins, nplus, indptr, cpl, h):
    deg = indptr[v + 1] - indptr[v]
    n = spins.size
    if spins[v] < 0:
        return 2.0 * cpl * (deg - 2 * nplus[v]) / n - 2.0 * h
    return 2.0 * cpl * (2 * nplus[v] - deg) / n + 2.0 * h


@njit(cache=True, nogil=True)
def flip_rate(v, spins, nplus, indptr, cpl, beta, h):
    d = delta_energy(v, spins, nplus, indptr, cpl, h)
    if d <= 0.0:
        return 1.0
    return math.exp(-beta * d)


@njit(cache=True, nogil=True)
def metropolis_rates(d, beta):
    """``exp(-beta [d]_+)`` elementwise with the same libm ``exp`` as the kernels."""
    out = np.empty(d.size)
    for i in range(d.size):
        out[i] = 1.0 if d[i] <= 0.0 else math.exp(-beta * d[i])
    return out


@njit(cache=True, nogil=True)
def tree_set(tree, size, v, value):
    i = size + v
    tree[i] = value
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


@njit(cache=True, nogil=True)
def tree_build(tree, size, rates):
    tree[:] = 0.0
    for v in range(rates.size):
        tree[size + v] = rates[v]
    for i in range(size - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True, nogil=True)
def tree_sample(tree, size, u):
    """Leaf index chosen with probability proportional to its weight; ``u`` in [0, 1)."""
    x = u * tree[1]
    i = 1
    while i < size:
        left = tree[2 * i]
        right = tree[2 * i + 1]
        if (x < left and left > 0.0) or right <= 0.0:
            i = 2 * i
        else:
            x -= left
            i = 2 * i + 1
    return i - size


@njit(cache=True, nogil=True)
def init_state(spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h):
    n = spins.size
    for v in range(n):
        c = 0
        for j in range(indptr[v], indptr[v + 1]):
            if spins[indices[j]] > 0:
                c += 1
        nplus[v] = c
    for v in range(n):
        rates[v] = flip_rate(v, spins, nplus, indptr, cpl, beta, h)
    tree_build(tree, size, rates)


@njit(cache=True, nogil=True)
def apply_flip(v, spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h):
    """Flip ``v`` and refresh the rates of ``v`` and its neighbours.  Returns the volume change."""
    spins[v] = -spins[v]
    s = spins[v]
    for j in range(indptr[v], indptr[v + 1]):
        w = indices[j]
        nplus[w] += 1 if s > 0 else -1
        r = flip_rate(w, spins, nplus, indptr, cpl, beta, h)
        rates[w] = r
        tree_set(tree, size, w, r)
    r = flip_rate(v, spins, nplus, indptr, cpl, beta, h)
    rates[v] = r
    tree_set(tree, size, v, r)
    return 1 if s > 0 else -1


@njit(cache=True, nogil=True)
def step(spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h, rng):
    """One jump: returns (vertex, waiting time, volume change)."""
    total = tree[1]
    wait = rng.standard_exponential() / total
    v = tree_sample(tree, size, rng.random())
    dv = apply_flip(v, spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h)
    return v, wait, dv


@njit(cache=True, nogil=True)
def run_until(spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h, rng,
              volume, target, start_level, max_jumps):
    """Jump until the volume enters a level with ``target[level]`` or ``max_jumps`` jumps occur.

    Returns ``(outcome, elapsed, jumps, volume, entries, max_volume)`` where
    ``entries`` counts jumps that enter ``start_level`` (the initial state is
    not counted here) and ``max_volume`` is the largest volume visited.
    """
    elapsed = 0.0
    jumps = 0
    entries = 0
    vmax = volume
    while jumps < max_jumps:
        total = tree[1]
        elapsed += rng.standard_exponential() / total
        v = tree_sample(tree, size, rng.random())
        volume += apply_flip(v, spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h)
        jumps += 1
        if volume > vmax:
            vmax = volume
        if volume == start_level:
            entries += 1
        if target[volume]:
            return OUT_TARGET, elapsed, jumps, volume, entries, vmax
    return OUT_CAP, elapsed, jumps, volume, entries, vmax


@njit(cache=True, nogil=True)
def run_time(spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h, rng, volume, horizon,
             first_flip):
    """Run for continuous time ``horizon``; ``first_flip[v]`` receives the first flip time of ``v``.

    Returns ``(jumps, volume)``.  Entries of ``first_flip`` that are already
    finite are left untouched.
    """
    t = 0.0
    jumps = 0
    while True:
        t += rng.standard_exponential() / tree[1]
        if t > horizon:
            return jumps, volume
        v = tree_sample(tree, size, rng.random())
        volume += apply_flip(v, spins, nplus, rates, tree, size, indptr, indices, cpl, beta, h)
        jumps += 1
        if not math.isfinite(first_flip[v]):
            first_flip[v] = t


# --------------------------------------------------------------------------
# maximal coupling of exponential clocks


@njit(cache=True, nogil=True)
def _invert_increasing(F, target, lo, hi, a, b, kind):
    # bisection on [lo, hi] of F(x) = target; F is monotone increasing
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kind == 0:
            val = math.exp(-a * mid) - math.exp(-b * mid)
        else:
            val = F - (math.exp(-a * mid) - math.exp(-b * mid))
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@njit(cache=True, nogil=True)
def couple_exp(l1, l2, u1, u2):
    """Maximal coupling of Exp(l1) and Exp(l2) from two uniforms.

    Returns ``(x1, x2, same)``.  ``u1`` picks the overlap or the excess part
    and is rescaled into the variate; ``u2`` drives the second excess variate.
    """
    if l1 == l2:
        x = -math.log1p(-u1) / l1
        return x, x, True
    lo = min(l1, l2)
    hi = max(l1, l2)
    xs = math.log(hi / lo) / (hi - lo)
    a = -math.expm1(-lo * xs)          # shared mass on [0, x*]
    tail = math.exp(-hi * xs)          # shared mass on [x*, inf)
    omega = a + tail
    if u1 < omega:
        v = u1  # uniform on [0, omega)
        if v < a:
            x = -math.log1p(-v) / lo
        else:
            x = -math.log(omega - v) / hi
        return x, x, True
    # excess parts, each of mass 1 - omega
    ex = 1.0 - omega
    w1 = (u1 - omega) / ex  # uniform on [0, 1)
    # excess of the fast clock on [0, x*]: CDF e^{-lo x} - e^{-hi x}
    x_hi = _invert_increasing(0.0, w1 * ex, 0.0, xs, lo, hi, 0)
    # excess of the slow clock on [x*, inf): CDF (e^{-lo x*} - e^{-lo x}) - (e^{-hi x*} - e^{-hi x})
    elo = math.exp(-lo * xs)
    target = u2 * ex
    # F(x) = (elo - tail) - (e^{-lo x} - e^{-hi x}); bracket the upper end
    upper = xs + 1.0 / lo
    while (elo - tail) - (math.exp(-lo * upper) - math.exp(-hi * upper)) < target:
        upper = xs + 2.0 * (upper - xs)
    x_lo = _invert_increasing(elo - tail, target, xs, upper, lo, hi, 1)
    if l1 == hi:
        return x_hi, x_lo, False
    return x_lo, x_hi, False


@njit(cache=True, nogil=True)
def couple_exp_many(l1, l2, u1, u2, x1, x2, same):
    for i in range(l1.size):
        a, b, s = couple_exp(l1[i], l2[i], u1[i], u2[i])
        x1[i] = a
        x2[i] = b
        same[i] = s


@njit(cache=True, nogil=True)
def coupled_run(sp1, np1, r1, t1, sp2, np2, r2, t2, size, indptr, indices, cpl, beta, h, rng,
                horizon, max_transitions, w1_trace):
    """Renewal coupling of two replicas on the same graph.

    After every transition all ``n`` clock pairs are drawn afresh: matched
    vertices get maximally coupled clocks, mismatched vertices independent
    ones.  The earliest of the ``2n`` clocks fires (a shared clock flips the
    vertex in both replicas).  Stops when the replicas agree, when time
    exceeds ``horizon`` or after ``max_transitions`` transitions.

    ``w1_trace[i]`` receives ``|W1|`` after transition ``i``.  Returns
    ``(merged, time, transitions, w1_initial, w1_max, n_decrease, n_change_small, n_dec_small)``
    where the last two count transitions that changed ``|W1|`` while
    ``|W1|`` was below ``n^(6/7)`` and how many of those decreased it.
    """
    n = sp1.size
    w1 = 0
    for v in range(n):
        if sp1[v] != sp2[v]:
            w1 += 1
    w1_init = w1
    w1_max = w1
    small = n ** (6.0 / 7.0)
    n_dec = 0
    n_small = 0
    n_small_dec = 0
    t = 0.0
    k = 0
    if w1 == 0:
        return True, 0.0, 0, w1_init, w1_max, n_dec, n_small, n_small_dec
    while k < max_transitions:
        best = np.inf
        who = -1
        which = 0  # 0 shared, 1 first only, 2 second only
        for v in range(n):
            u1 = rng.random()
            if sp1[v] == sp2[v]:
                u2 = rng.random()
                x1, x2, same = couple_exp(r1[v], r2[v], u1, u2)
                if same:
                    if x1 < best:
                        best = x1
                        who = v
                        which = 0
                    continue
            else:
                x1 = -math.log1p(-u1) / r1[v]
                x2 = -math.log1p(-rng.random()) / r2[v]
            if x1 < best:
                best = x1
                who = v
                which = 1
            if x2 < best:
                best = x2
                who = v
                which = 2
        t += best
        if t > horizon:
            return False, horizon, k, w1_init, w1_max, n_dec, n_small, n_small_dec
        before = w1
        if which == 0 or which == 1:
            apply_flip(who, sp1, np1, r1, t1, size, indptr, indices, cpl, beta, h)
        if which == 0 or which == 2:
            apply_flip(who, sp2, np2, r2, t2, size, indptr, indices, cpl, beta, h)
        if which != 0:
            w1 += -1 if sp1[who] == sp2[who] else 1
        if k < w1_trace.size:
            w1_trace[k] = w1
        k += 1
        if w1 > w1_max:
            w1_max = w1
        if w1 < before:
            n_dec += 1
        if w1 != before and before <= small:
            n_small += 1
            if w1 < before:
                n_small_dec += 1
        if w1 == 0:
            return True, t, k, w1_init, w1_max, n_dec, n_small, n_small_dec
    return False, t, k, w1_init, w1_max, n_dec, n_small, n_small_dec
