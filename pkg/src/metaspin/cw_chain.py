"""Birth-death chains for the (perturbed) Curie-Weiss magnetization process.

The magnetization of Glauber dynamics on the complete graph with coupling
``p/n`` and field ``h`` is itself a continuous-time birth-death chain on
``Gamma_n``; indexing by volume ``k = n(1+a)/2`` the rates are::

    up(k)   = (n - k) exp(-beta [ (2p/n)(n - 2k - 1) - 2h ]_+)
    down(k) = k       exp(-beta [ (2p/n)(2k - n - 1) + 2h ]_+)

which is reversible with respect to
``nu(a) ~ exp(beta n (p a^2 / 2 + h a)) C(n, k)``.  The down-rate exponent is
the energy change of flipping one of the ``k`` plus spins, i.e. minus the
up-flip change at ``k - 1``.

First-passage quantities of the embedded jump chain (harmonic function,
conditional mean hitting time) follow the classical closed forms for
nearest-neighbour walks.  Every product of ratios ``p(x,x-1)/p(x,x+1)`` is
kept as a logarithm because it spans ``exp(+-Theta(n))`` in the metastable
regime.
"""

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import landscape
from ._kernels import metropolis_rates
from .errors import ParameterError, RegimeError

_LOG_SPAN = 0.9 * math.log(np.finfo(float).max) * 2  # difference of two finite logs

FieldParams = namedtuple("FieldParams", "p beta h")
FieldParams.__doc__ = "Minimal (p, beta, h) triple; unlike ModelParams it admits h < 0."


@dataclass(frozen=True)
class PerturbedField:
    """``h +- (1 + eps) log(n^(11/6)) / n`` (``direction`` is ``"upper"`` or ``"lower"``)."""

    h: float
    direction: str
    n: int
    eps: float = 0.01

    def __post_init__(self):
        if self.direction not in ("upper", "lower"):
            raise ParameterError("direction must be 'upper' or 'lower'")
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        if self.n < 2:
            raise ParameterError("n must be >= 2")

    @property
    def shift(self) -> float:
        return (1.0 + self.eps) * (11.0 / 6.0) * math.log(self.n) / self.n

    @property
    def value(self) -> float:
        return self.h + self.shift if self.direction == "upper" else self.h - self.shift


@dataclass(frozen=True, eq=False)
class BirthDeathChain:
    """Continuous-time nearest-neighbour chain on ``{0, ..., N}``.

    Parameters
    ----------
    up, down : ndarray, shape (N+1,)
        Jump rates ``x -> x+1`` and ``x -> x-1``.  ``up[N]`` and ``down[0]``
        are ignored by the solvers (they are zero for chains built from a model).
    n, p, beta, h : optional
        Model data when the chain was built by :func:`build_cw_chain`; state
        ``x`` then corresponds to magnetization ``-1 + 2x/n``.
    """

    up: np.ndarray
    down: np.ndarray
    n: Optional[int] = None
    p: Optional[float] = None
    beta: Optional[float] = None
    h: Optional[float] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        up = np.asarray(self.up, dtype=float)
        down = np.asarray(self.down, dtype=float)
        if up.ndim != 1 or up.shape != down.shape or up.size < 2:
            raise ParameterError("up/down must be 1-d arrays of equal length >= 2")
        if np.any(up < 0) or np.any(down < 0) or not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
            raise ParameterError("rates must be finite and non-negative")
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "down", down)

    @property
    def N(self) -> int:
        return self.up.size - 1

    @property
    def total(self):
        return self.up + self.down

    @property
    def p_up(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total > 0, self.up / self.total, 0.0)

    @property
    def p_down(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total > 0, self.down / self.total, 0.0)

    def magnetization(self, x):
        if self.n is None:
            raise ParameterError("chain carries no model size")
        return 2.0 * np.asarray(x) / self.n - 1.0

    def sub(self, lo, hi):
        """Chain restricted to states ``lo..hi`` (renumbered from 0)."""
        if not 0 <= lo < hi <= self.N:
            raise ParameterError(f"bad sub-range [{lo}, {hi}] for N={self.N}")
        return BirthDeathChain(self.up[lo:hi + 1].copy(), self.down[lo:hi + 1].copy())

    def check_interior(self):
        if np.any(self.up[1:-1] <= 0) or np.any(self.down[1:-1] <= 0):
            raise ParameterError("interior rates must be strictly positive")


# --------------------------------------------------------------------------
# construction and stationary measure


def _field_value(params, fld):
    if fld is None:
        return float(params.h)
    if isinstance(fld, PerturbedField):
        return fld.value
    return float(fld)


def cw_rates(n, p, beta, h):
    """Volume-indexed up and down rates (arrays of length ``n + 1``)."""
    k = np.arange(n + 1, dtype=np.int64)
    d_up = 2.0 * p * (n - 2 * k - 1) / n - 2.0 * h
    d_down = 2.0 * p * (2 * k - n - 1) / n + 2.0 * h
    # libm exp (as in the simulation kernels) rather than numpy's vectorised
    # exp, so that complete-graph simulator rates match these bit for bit
    up = (n - k) * metropolis_rates(d_up, float(beta))
    down = k * metropolis_rates(d_down, float(beta))
    return up, down


def build_cw_chain(params, fld=None, n=None) -> BirthDeathChain:
    """Magnetization chain of the Curie-Weiss dynamics with coupling ``p/n``.

    Parameters
    ----------
    params : ModelParams
        Supplies ``p``, ``beta`` and (unless ``fld`` is given) ``h`` and ``n``.
    fld : float or PerturbedField, optional
        Field to use instead of ``params.h``; may be negative.
    n : int, optional
        Overrides ``params.n``.
    """
    n = int(n if n is not None else params.n)
    if n < 2:
        raise ParameterError("build_cw_chain needs n >= 2")
    h = _field_value(params, fld)
    up, down = cw_rates(n, params.p, params.beta, h)
    return BirthDeathChain(up, down, n=n, p=float(params.p), beta=float(params.beta), h=h)


def log_reversible_measure(chain):
    """Unnormalised ``log nu`` from the rates via ``nu(x+1)/nu(x) = up(x)/down(x+1)``."""
    chain.check_interior()
    if chain.up[0] <= 0 or chain.down[-1] <= 0:
        raise ParameterError("boundary rates into the interior must be positive")
    steps = np.log(chain.up[:-1]) - np.log(chain.down[1:])
    return np.concatenate([[0.0], np.cumsum(steps)])


def log_gibbs_nu(n, p, beta, h):
    """Unnormalised ``log nu(a) = beta n (p a^2/2 + h a) + log C(n, k)``."""
    k = np.arange(n + 1)
    a = 2.0 * k / n - 1.0
    return beta * n * (0.5 * p * a * a + h * a) + landscape.log_binom(n, k)


def stationary_nu(chain, params=None):
    """Normalised stationary law of a model chain (closed Gibbs form).

    With ``params`` given, ``p`` and ``beta`` are taken from it; the field is
    always the one the chain was built with.  Chains not built from a model
    fall back to the rate products.
    """
    if chain.n is None:
        lnu = log_reversible_measure(chain)
    else:
        p = chain.p if params is None else params.p
        beta = chain.beta if params is None else params.beta
        lnu = log_gibbs_nu(chain.n, p, beta, chain.h)
    return np.exp(lnu - logsumexp(lnu))


def log_nu_ratio(a, n, p, beta, h):
    """``log nu(a + 2/n) - log nu(a) = 2 beta (p (a + 1/n) + h) + log((1-a)/(1+a+2/n))``."""
    a = np.asarray(a, dtype=float)
    return 2.0 * beta * (p * (a + 1.0 / n) + h) + np.log1p(-a) - np.log1p(a + 2.0 / n)


# --------------------------------------------------------------------------
# Closed forms for the embedded jump chain


def _log_Q(chain):
    """``log Q(x) = log p(x, x-1) - log p(x, x+1)`` for interior ``x`` (index 0 unused)."""
    chain.check_interior()
    lq = np.full(chain.N + 1, np.nan)
    lq[1:-1] = np.log(chain.down[1:-1]) - np.log(chain.up[1:-1])
    return lq


def _log_pi_prefix(chain):
    """``L[z] = log pi[1, z] = sum_{w=1}^{z} log Q(w)`` for ``z = 0..N-1`` (``L[0] = 0``)."""
    lq = _log_Q(chain)
    L = np.zeros(chain.N)
    if chain.N > 1:
        L[1:] = np.cumsum(lq[1:chain.N])
    return L


def _cum_logsumexp(v):
    out = np.empty_like(v)
    acc = -np.inf
    for i, x in enumerate(v):
        acc = np.logaddexp(acc, x)
        out[i] = acc
    return out


def log_R(chain):
    """``log R(x)``, ``R(x) = sum_{z<x} pi[1, z]`` for ``x = 0..N`` (``R(0) = 0``)."""
    L = _log_pi_prefix(chain)
    lr = np.empty(chain.N + 1)
    lr[0] = -np.inf
    lr[1:] = _cum_logsumexp(L)
    if np.ptp(lr[1:]) > _LOG_SPAN:
        raise OverflowError("range of log pi exceeds the representable span")
    return lr


def harmonic(chain):
    """``h_N(x) = P_x[tau_N < tau_0] = R(x)/R(N)`` for ``x = 0..N``."""
    lr = log_R(chain)
    return np.exp(lr - lr[-1])


def conditional_mean_hits(chain):
    """``e_N(x) = E_x[tau_N | tau_N < tau_0]`` in jump-chain steps, for ``x = 1..N``.

    Conditioning on ``tau_N < tau_0`` is the Doob transform with the harmonic
    function ``h_N``: ``p^(x, x+-1) = p(x, x+-1) h_N(x+-1) / h_N(x)``.  The
    transformed chain never steps from 1 to 0, so it is a walk on ``1..N``
    reflected at 1, reversible with respect to ``w(x) h_N(x)^2`` where ``w``
    is the reversible weight of the jump chain.  Hence

    ``e_N(x) = sum_{y=x}^{N-1} sum_{z=1}^{y} w(z) h(z)^2 / (w(y) p(y, y+1) h(y) h(y+1))``,

    a sum of positive terms evaluated in log space (no cancellation).

    Returns
    -------
    ndarray, shape (N,)
        ``e_N(1), ..., e_N(N)``.
    """
    N = chain.N
    if N == 1:
        return np.zeros(1)
    lh = log_R(chain)
    lh = lh - lh[-1]
    lpu = np.log(chain.p_up[1:N])
    lpd = np.log(chain.p_down[2:N])
    # log w on 1..N-1, w(1) = 1
    lw = np.concatenate([[0.0], np.cumsum(lpu[:-1] - lpd)])
    y = np.arange(1, N)
    num = _cum_logsumexp(lw + 2 * lh[y])
    terms = num - lw - lpu - lh[y] - lh[y + 1]
    # e(x) = sum_{y >= x} exp(terms[y]); reverse cumulative log-sum-exp
    tail = _cum_logsumexp(terms[::-1])[::-1]
    return np.concatenate([np.exp(tail), [0.0]])


def conditional_mean_hits_kappa(chain):
    """Same quantity through ``e_N(x) = U(N) - U(x)``, ``U = (T - kappa)/R``.

    ``T(x) = sum_{z<x} sum_{y=2}^{z} pi(y, z] R(y) / p(y, y+1)`` and
    ``kappa = R(1)R(2)/(R(2) - R(1)) = 1 + 1/Q(1)``.  The constant enforces
    ``e_N(1) = 1 + e_N(2)`` (from state 1 the conditioned chain must step up)
    and equals 2 for the simple random walk.  The final subtraction loses a
    few digits on strongly drifting chains; :func:`conditional_mean_hits` is
    the accurate evaluation.
    """
    N = chain.N
    if N == 1:
        return np.zeros(1)
    lr = log_R(chain)
    L = _log_pi_prefix(chain)
    lq1 = _log_Q(chain)[1]
    # inner[z] = log sum_{y=2}^{z} exp(-L[y]) R(y) / p_up(y), for z = 0..N-1
    inner = np.full(N, -np.inf)
    if N > 2:
        ys = np.arange(2, N)
        inner[2:] = _cum_logsumexp(-L[ys] + lr[ys] - np.log(chain.p_up[ys]))
    lt = np.full(N + 1, -np.inf)
    lt[1:] = _cum_logsumexp(L + inner)
    x = np.arange(1, N + 1)
    kappa = math.exp(np.logaddexp(0.0, -lq1))
    U = np.exp(lt[x] - lr[x]) - kappa * np.exp(-lr[x])
    e = U[-1] - U
    e[-1] = 0.0
    return e


def unconditional_exit_time(chain):
    """``E_x[tau_{0} wedge tau_N]`` in jump-chain steps by a tridiagonal solve (``x = 0..N``)."""
    from scipy.linalg import solve_banded

    N = chain.N
    out = np.zeros(N + 1)
    if N < 2:
        return out
    m = N - 1
    ab = np.zeros((3, m))
    ab[1, :] = 1.0
    pu, pd = chain.p_up[1:N], chain.p_down[1:N]
    ab[0, 1:] = -pu[:-1]
    ab[2, :-1] = -pd[1:]
    out[1:N] = solve_banded((1, 1), ab, np.ones(m))
    return out


# --------------------------------------------------------------------------
# continuous-time hitting times and capacities


def log_mean_hitting_time_ct(chain, start, target):
    """``log E_start[tau_target]`` for ``start < target`` in continuous time.

    ``E = sum_{y=start}^{target-1} (1/(up(y) nu(y))) sum_{z<=y} nu(z)``, with
    ``nu`` the reversible measure of the chain (states below ``start`` are
    visited with reflection at 0).
    """
    start, target = int(start), int(target)
    if not 0 <= start < target <= chain.N:
        raise ParameterError(f"need 0 <= start < target <= N, got {start}, {target}")
    lnu = log_reversible_measure(chain.sub(0, target))
    cum = _cum_logsumexp(lnu[:target])
    ys = np.arange(start, target)
    return float(logsumexp(cum[ys] - lnu[ys] - np.log(chain.up[ys])))


def mean_hitting_time_ct(chain, start, target):
    return math.exp(log_mean_hitting_time_ct(chain, start, target))


def escape_probability(chain, a, b):
    """``P_a[tau_b < tau_a^+]`` for the jump chain (first step away from ``a`` included)."""
    a, b = int(a), int(b)
    if a == b:
        raise ParameterError("a and b must differ")
    if a < b:
        hb = harmonic(chain.sub(a, b))
        return float(chain.p_up[a] * hb[1])
    hb = harmonic(chain.sub(b, a))
    return float(chain.p_down[a] * (1.0 - hb[-2]))


def capacity_1d(chain, a, b, nu=None):
    """``cap(a, b) = [sum_{x=a}^{b-1} 1/(nu(x) up(x))]^{-1}`` (series resistances), ``a < b``.

    ``nu`` defaults to the normalised reversible measure of the chain.
    """
    a, b = int(a), int(b)
    if not a < b:
        raise ParameterError("capacity_1d needs a < b")
    if nu is None:
        lnu = log_reversible_measure(chain)
        lnu = lnu - logsumexp(lnu)
    else:
        lnu = np.log(nu)
    xs = np.arange(a, b)
    return float(np.exp(-logsumexp(-lnu[xs] - np.log(chain.up[xs]))))


def capacity_via_escape(chain, a, b, nu=None):
    """``nu(a) (up(a) + down(a)) P_a[tau_b < tau_a]``; equals :func:`capacity_1d`."""
    if nu is None:
        lnu = log_reversible_measure(chain)
        nu = np.exp(lnu - logsumexp(lnu))
    return float(nu[a] * chain.total[a] * escape_probability(chain, a, b))


def capacity_1d_bounds(chain, a, b, t_level):
    """Envelopes for ``cap(a, b)`` on a model chain, ``a < b`` given as volumes.

    Returns a dict with ``C_star`` and two pairs of bounds on ``cap / C_star``:
    ``stated`` (the inequality as usually quoted,
    ``(1-b+2/n)/(2n(b-a)^2) <= cap/C* <= n(1-b)/2``) and ``proof`` (the
    same with the ``exp(-+2 beta (p + h + p/n))`` factors and constants that
    the argument actually produces).  Magnetizations here are ``-1 + 2x/n``.
    """
    n, p, beta, h = chain.n, chain.p, chain.beta, chain.h
    if n is None:
        raise ParameterError("capacity_1d_bounds needs a model chain")
    am, bm = chain.magnetization(a), chain.magnetization(b)
    bstar = chain.magnetization(min(b, t_level))
    lnu = log_gibbs_nu(n, p, beta, h)
    log_z = logsumexp(lnu)
    kstar = int(round(n * (1 + bstar) / 2))
    log_c = lnu[kstar] - log_z
    cap = capacity_1d(chain, a, b, nu=np.exp(lnu - log_z))
    d = bm - am
    return {
        "cap": cap,
        "C_star": math.exp(log_c),
        "ratio": math.exp(math.log(cap) - log_c),
        "stated": ((1 - bm + 2.0 / n) / (2 * n * d * d), n * (1 - bm) / 2),
        "proof": (2 * (1 - bm + 2.0 / n) * math.exp(-2 * beta * (p + abs(h) + p / n)) / (n * d * d),
                  n * (1 - bm) * math.exp(2 * beta * (p + abs(h))) / 2),
    }


# --------------------------------------------------------------------------
# Kramers asymptotics


def kramers_prefactor(params):
    """Prefactor ``pi/(1+t) sqrt((1-t^2)/(1-m^2)) / (beta sqrt(R''(m) (-R''(t))))``."""
    r = landscape.find_roots(params)
    m, t = r.m, r.t
    r2m = landscape.free_energy_R2(m, params)
    r2t = landscape.free_energy_R2(t, params)
    if not (r2m > 0 and r2t < 0):
        raise RegimeError("curvature signs at m and t are inconsistent with a double well")
    return math.pi / (1 + t) * math.sqrt((1 - t * t) / (1 - m * m)) / (params.beta * math.sqrt(r2m * -r2t))


def log_kramers_time(params, n=None):
    n = int(n if n is not None else params.n)
    return math.log(kramers_prefactor(params)) + params.beta * n * landscape.barrier(params)


def kramers_time(params, n=None):
    """Asymptotic mean crossover time on the complete graph with coupling ``p/n``."""
    return math.exp(log_kramers_time(params, n))


def exact_crossover(params, n=None):
    """Exact mean crossover ``E_{M_n}[tau_{S_n}]`` of the unperturbed chain with its grid levels."""
    n = int(n if n is not None else params.n)
    roots = landscape.find_roots(params, n)
    chain = build_cw_chain(params, n=n)
    log_mean = log_mean_hitting_time_ct(chain, roots.M_n, roots.S_n)
    return {"n": n, "M": roots.M_n, "T": roots.T_n, "S": roots.S_n, "log_mean": log_mean,
            "mean": math.exp(log_mean), "roots": roots}


def perturbed_levels(params, fld, n):
    """Grid levels ``(M, T, S)`` for the chain with field ``fld`` (which may be negative)."""
    h = _field_value(params, fld)
    return landscape.grid_roots(FieldParams(params.p, params.beta, h), n)
