"""Exact potential theory on the full configuration space for small ``n``.

States are the integers ``0 .. 2^n - 1``; bit ``v`` set means vertex ``v``
carries a plus spin.  The Gibbs weight ``mu(sigma) = exp(-beta H(sigma)) / Z``
and the Metropolis rates are kept as logarithms, and the conductance of an
edge of the hypercube is ``mu(sigma) r(sigma, sigma') = exp(-beta max(H, H')) / Z``,
which is symmetric by construction.

The equilibrium potential ``h_{A,B}`` solves the Dirichlet problem on the
complement of ``A u B``.  After grounding the boundary values the system is
symmetric positive definite, so it is solved by conjugate gradients with a
Jacobi preconditioner; a sparse direct solve takes over if CG stalls.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, spsolve
from scipy.special import logsumexp

from . import cw_chain, landscape
from .errors import ParameterError, RegimeError
from .graph import generate_er

MAX_N = 16
CG_RTOL = 1e-12


class FullChain:
    """Metropolis dynamics on all ``2^n`` configurations of a small graph.

    Parameters
    ----------
    g : ErGraph
        Graph with ``n <= 16`` vertices.
    params : ModelParams
        ``kind="mean_field"`` scales the pair interaction by ``p`` (for use
        with the complete graph).

    Attributes
    ----------
    H : ndarray
        Energy of every state.
    log_mu : ndarray
        Normalised log Gibbs weights.
    log_cond : ndarray, shape (2^n, n)
        ``log(mu(sigma) r(sigma, sigma^v))``.
    rates : ndarray, shape (2^n, n)
        ``r(sigma, sigma^v)``.
    volume : ndarray
        Number of plus spins of every state.
    """

    def __init__(self, g, params):
        n = g.n
        if not 1 <= n <= MAX_N:
            raise ParameterError(f"FullChain needs 1 <= n <= {MAX_N}, got {n}")
        self.g, self.params, self.n = g, params, n
        cpl = params.p if params.kind == "mean_field" else 1.0
        self.size = 1 << n
        states = np.arange(self.size, dtype=np.int64)
        plus = ((states[:, None] >> np.arange(n)) & 1).astype(np.int8)
        spins = (2 * plus - 1).astype(np.int64)
        self.volume = plus.sum(axis=1).astype(np.int64)
        e = g.edges()
        pair = (spins[:, e[:, 0]] * spins[:, e[:, 1]]).sum(axis=1) if len(e) else np.zeros(self.size, np.int64)
        self.H = -cpl * pair / n - params.h * spins.sum(axis=1)
        beta = params.beta
        self.log_Z = float(logsumexp(-beta * self.H))
        self.log_mu = -beta * self.H - self.log_Z
        self.neighbors = states[:, None] ^ (np.int64(1) << np.arange(n))
        Hn = self.H[self.neighbors]
        self.log_cond = -beta * np.maximum(self.H[:, None], Hn) - self.log_Z
        self.rates = np.exp(-beta * np.maximum(Hn - self.H[:, None], 0.0))
        self._plus = plus

    def level(self, k):
        """Indices of the states with volume ``k`` (the set ``A_k``)."""
        return np.flatnonzero(self.volume == k)

    def levels(self, ks):
        return np.flatnonzero(np.isin(self.volume, np.asarray(ks)))

    def spins(self, state):
        return 2 * self._plus[state].astype(np.int8) - 1

    def mask(self, A):
        """Boolean mask of a state set given as indices or a mask."""
        A = np.asarray(A)
        if A.dtype == bool:
            if A.shape != (self.size,):
                raise ParameterError("mask has the wrong length")
            return A.copy()
        m = np.zeros(self.size, dtype=bool)
        m[A.astype(np.int64)] = True
        return m

    def dirichlet_form(self, f):
        """``E(f, f) = 1/2 sum mu(s) r(s, s') (f(s) - f(s'))^2`` with a max shift."""
        f = np.asarray(f, dtype=float)
        d = (f[:, None] - f[self.neighbors]) ** 2
        shift = float(self.log_cond.max())
        return 0.5 * float(np.sum(np.exp(self.log_cond - shift) * d)) * math.exp(shift)

    def reversibility_defect(self):
        """Max of ``|log(mu r)(s, s') - log(mu r)(s', s)|``; zero by construction."""
        back = self.log_cond[self.neighbors, np.arange(self.n)[None, :]]
        return float(np.max(np.abs(self.log_cond - back)))


@dataclass
class Potential:
    """Equilibrium potential with solver diagnostics.

    ``isolated`` flags states in components that reach neither boundary set;
    their value is set to 0 by convention.
    """

    f: np.ndarray
    method: str
    residual: float
    isolated: np.ndarray = field(repr=False)


def equilibrium_potential(chain, A, B, method="cg"):
    """``h_{A,B}``: 1 on ``A``, 0 on ``B`` and harmonic elsewhere.

    Parameters
    ----------
    chain : FullChain
    A, B : array_like
        Disjoint non-empty state sets (indices or boolean masks).
    method : {"cg", "direct"}
        CG with Jacobi preconditioning (falls back to the direct solver if
        the relative residual does not reach ``1e-12``) or sparse LU.

    Returns
    -------
    Potential
    """
    a, b = chain.mask(A), chain.mask(B)
    if not a.any() or not b.any():
        raise ParameterError("A and B must be non-empty")
    if (a & b).any():
        raise ParameterError("A and B must be disjoint")
    size, n = chain.size, chain.n
    shift = float(chain.log_cond.max())
    c = np.exp(chain.log_cond - shift)
    rows = np.repeat(np.arange(size), n)
    cols = chain.neighbors.ravel()
    vals = c.ravel()
    pos = vals > 0
    adj = sp.csr_matrix((vals[pos], (rows[pos], cols[pos])), shape=(size, size))
    ncomp, lab = connected_components(adj, directed=False)
    reach = np.zeros(ncomp, dtype=bool)
    reach[np.unique(lab[a | b])] = True
    isolated = ~reach[lab]
    interior = ~(a | b) & ~isolated
    f = np.zeros(size)
    f[a] = 1.0
    idx = np.flatnonzero(interior)
    if idx.size == 0:
        return Potential(f, "none", 0.0, isolated)
    pos_i = np.full(size, -1, dtype=np.int64)
    pos_i[idx] = np.arange(idx.size)
    ci = c[idx]
    nb = chain.neighbors[idx]
    diag = ci.sum(axis=1)
    rhs = (ci * a[nb]).sum(axis=1)
    inner = interior[nb]
    r = np.repeat(np.arange(idx.size), n).reshape(idx.size, n)[inner]
    L = sp.csr_matrix((-ci[inner], (r, pos_i[nb[inner]])), shape=(idx.size, idx.size))
    L = (L + sp.diags(diag)).tocsr()
    used = method
    x = None
    if method == "cg":
        x, info = cg(L, rhs, rtol=CG_RTOL, atol=0.0, maxiter=20 * idx.size, M=sp.diags(1.0 / diag))
        res = np.linalg.norm(L @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if info != 0 or not res <= 10 * CG_RTOL:
            x, used = None, "direct"
    elif method != "direct":
        raise ParameterError(f"unknown method {method!r}")
    if x is None:
        x = spsolve(L.tocsc(), rhs, permc_spec="MMD_AT_PLUS_A")
    res = float(np.linalg.norm(L @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    f[idx] = x
    return Potential(f, used, res, isolated)


def _volume_range(chain, S):
    v = np.unique(chain.volume[chain.mask(S)])
    return int(v.min()), int(v.max())


def capacity_of(chain, A, B, method="cg"):
    """``cap(A, B)`` by the Dirichlet form, by the boundary flux and by indicator cuts.

    The flux form is ``sum_{s in A} sum_{s'} mu(s) r(s, s') P_{s'}[tau_B < tau_A]``
    with the escape probabilities taken from ``h_{B,A}`` directly, so that
    they keep their relative precision when they are tiny.

    Returns
    -------
    dict
        ``dirichlet``, ``flux``, ``indicator`` (``E(1_A, 1_A)``, always an
        upper bound) and, when ``A`` lies below ``B`` in volume, ``cut`` (the
        indicator of the volumes below ``k_m``) and ``best_cut`` (the smallest
        single-level cut).
    """
    a, b = chain.mask(A), chain.mask(B)
    pot = equilibrium_potential(chain, B, A, method=method)
    g = pot.f
    dirichlet = chain.dirichlet_form(g)
    shift = float(chain.log_cond.max())
    flux = float(np.sum(np.exp(chain.log_cond[a] - shift) * g[chain.neighbors[a]])) * math.exp(shift)
    out = {"dirichlet": dirichlet, "flux": flux, "indicator": chain.dirichlet_form(a.astype(float)),
           "method": pot.method, "residual": pot.residual}
    lo_b = _volume_range(chain, b)[0]
    hi_a = _volume_range(chain, a)[1]
    if hi_a < lo_b:
        # 1 on all volumes below j, 0 from j on: admissible for every hi_a < j <= lo_b
        cuts = {j: level_cut(chain, j) for j in range(hi_a + 1, lo_b + 1)}
        km = k_m(chain.params, hi_a, lo_b, chain.n)
        out["k_m"] = km
        out["cut"] = cuts[max(km, hi_a + 1)]
        out["best_cut"] = min(cuts.values())
    return out


def level_cut(chain, j):
    """``sum_{s in A_{j-1}} sum_{s' in A_j, s' ~ s} mu(s) r(s, s')``, the energy of ``1{volume < j}``."""
    rows = chain.level(j - 1)
    up = (chain.neighbors[rows] > rows[:, None])
    lc = chain.log_cond[rows][up]
    return float(np.exp(logsumexp(lc))) if lc.size else 0.0


def _log_level_weight(params, j, n):
    j = np.asarray(j)
    return landscape.log_binom(n, j) - 2.0 * params.beta * j * landscape.theta_k(params, j, n)


def k_m(params, k, k2, n):
    """``argmin_{k <= j <= k2} C(n, j) exp(-2 beta j theta_j)``; ties go to the smallest ``j``."""
    js = np.arange(k, k2 + 1)
    return int(js[np.argmin(_log_level_weight(params, js, n))])


def capacity_envelopes(chain, k, k2, rho=None):
    """Lower and upper capacity envelopes for ``cap(A_k, A_k2)`` with unit constants.

    ``upper = mu(all minus) rho n^(11/6) C(n, k_m) exp(-2 beta k_m theta_{k_m})`` and
    ``lower = mu(all minus) n^-1 exp(-(beta + 1/sqrt 3) sqrt(log n)) C(n, k_m) exp(-2 beta k_m theta_{k_m})``,
    with ``rho = log n`` by default.  The order-of-magnitude constants are set
    to 1, so at small ``n`` these are indicative only.
    """
    n, params = chain.n, chain.params
    rho = math.log(n) if rho is None else rho
    km = k_m(params, k, k2, n)
    base = chain.log_mu[0] + float(_log_level_weight(params, km, n))
    log_up = base + math.log(rho) + (11.0 / 6.0) * math.log(n)
    log_lo = base - math.log(n) - (params.beta + 1.0 / math.sqrt(3.0)) * math.sqrt(math.log(n))
    return {"k_m": km, "lower": math.exp(log_lo), "upper": math.exp(log_up)}


def escape_from(chain, A, B, method="cg"):
    """``P_{mu_A}[tau_B < tau_A]`` for the jump chain started from ``mu`` conditioned on ``A``.

    Returns ``(P, per_state)`` where ``per_state`` holds ``P_s[tau_B < tau_A]``
    for the states of ``A`` in index order.
    """
    a = chain.mask(A)
    g = equilibrium_potential(chain, B, a, method=method).f
    rows = np.flatnonzero(a)
    r = chain.rates[rows]
    per = (r * g[chain.neighbors[rows]]).sum(axis=1) / r.sum(axis=1)
    lw = chain.log_mu[rows]
    w = np.exp(lw - logsumexp(lw))
    return float(np.dot(w, per)), per


@dataclass
class SandwichRecord:
    n: int
    p: float
    seed: int
    cap: float
    lower_env: float
    upper_env: float
    P: float
    Pl: float
    Pu: float

    @property
    def ordered(self) -> bool:
        return self.Pl <= self.P <= self.Pu

    def to_dict(self):
        return {"n": self.n, "p": self.p, "seed": self.seed, "cap": self.cap, "lower_env": self.lower_env,
                "upper_env": self.upper_env, "P": self.P, "Pl": self.Pl, "Pu": self.Pu, "ordered": self.ordered}


@dataclass
class SandwichReport:
    records: list
    levels: str

    @property
    def fraction(self) -> float:
        return sum(r.ordered for r in self.records) / len(self.records)


def _perturbed_escape(params, n, direction, eps, levels, M, S):
    fld = cw_chain.PerturbedField(params.h, direction, n, eps)
    chain = cw_chain.build_cw_chain(params, fld=fld, n=n)
    if levels == "perturbed":
        Mx, _, Sx = cw_chain.perturbed_levels(params, fld, n)
        if Mx is None or Sx is None:
            raise RegimeError(f"{direction} perturbed chain has no grid levels M, S at n={n}")
        M, S = Mx, Sx
    return cw_chain.escape_probability(chain, M, S)


def sandwich_check(n, params, seeds, eps=0.01, levels="shared", method="cg"):
    """Compare ``P_{mu_{A_M}}[tau_S < tau_M]`` on ER graphs with the perturbed mean-field chains.

    Parameters
    ----------
    n : int
        At most 14.
    params : ModelParams
    seeds : iterable of int
        Graph seeds.
    eps : float
        Slack of the perturbed fields.
    levels : {"shared", "perturbed"}
        ``"shared"`` evaluates ``P^l`` and ``P^u`` between the unperturbed
        grid levels ``M_n`` and ``S_n``; ``"perturbed"`` uses each perturbed
        chain's own grid levels and raises :class:`RegimeError` when they do
        not exist (typical for small ``n``, where the field shift is large).

    Returns
    -------
    SandwichReport
    """
    if n > 14:
        raise ParameterError("sandwich_check is limited to n <= 14")
    if levels not in ("shared", "perturbed"):
        raise ParameterError("levels must be 'shared' or 'perturbed'")
    roots = landscape.find_roots(params, n)
    M, S = roots.M_n, roots.S_n
    Pl = _perturbed_escape(params, n, "lower", eps, levels, M, S)
    Pu = _perturbed_escape(params, n, "upper", eps, levels, M, S)
    out = []
    for seed in seeds:
        g = generate_er(n, params.p, seed)
        fc = FullChain(g, params)
        A, B = fc.level(M), fc.level(S)
        cap = capacity_of(fc, A, B, method=method)["dirichlet"]
        env = capacity_envelopes(fc, M, S)
        P, _ = escape_from(fc, A, B, method=method)
        out.append(SandwichRecord(n, float(params.p), int(seed), cap, env["lower"], env["upper"], P, Pl, Pu))
    return SandwichReport(out, levels)
