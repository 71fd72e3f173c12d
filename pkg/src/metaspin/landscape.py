"""Free-energy landscape of the mean-field comparison model.

Continuum objects (``a`` in ``[-1, 1]``)::

    I(a) = (1-a)/2 log((1-a)/2) + (1+a)/2 log((1+a)/2)
    J(a) = 2 beta (p a + h) + log((1-a)/(1+a))
    R(a) = -(p/2) a^2 - h a + I(a)/beta,        R' = -J/(2 beta)

and their finite-``n`` versions on the grid ``Gamma_n = {-1, -1+2/n, ..., 1}``::

    I_n(a) = -(1/n) log C(n, k),   k = n(1+a)/2
    J_n(a) = 2 beta (p a + h) - 2 I_n'(a)
    R_n(a) = -(p/2) a^2 - h a + I_n(a)/beta

``I_n`` is extended off the grid through the Gamma function, so ``I_n'`` is a
difference of digammas and ``R_n' = -J_n/(2 beta)`` holds exactly.  Expanding
the digammas recovers ``log((1-a+1/n)/(1+a+1/n)) + O(n^-2)``.

The metastable regime is ``lambda = beta p > 1`` and ``0 < h < p chi(lambda)``,
where ``J`` has three zeros ``m < t < s``: a local minimum ``m`` (metastable
well), a saddle ``t`` and the global minimum ``s`` of ``R``.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln, xlogy

from .errors import ParameterError, RegimeError

ROOT_XTOL = 1e-13


class Regime(str, enum.Enum):
    METASTABLE = "metastable"
    SUBCRITICAL = "non_metastable_subcritical"
    STRONG_FIELD = "non_metastable_strong_field"
    #: ``beta p > 1`` and ``h = 0``: symmetric double well, no metastable/stable
    #: distinction.  Only reachable in diagnostics since physical fields are > 0.
    ZERO_FIELD = "zero_field"


# --------------------------------------------------------------------------
# entropy, drift, free energy


def entropy_I(a):
    """Continuum entropy ``I(a)`` with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) > 1.0):
        raise ParameterError("entropy_I requires a in [-1, 1]")
    lo, hi = (1.0 - a) / 2.0, (1.0 + a) / 2.0
    out = xlogy(lo, lo) + xlogy(hi, hi)
    return out if out.ndim else float(out)


def _grid_index(a, n):
    a = np.asarray(a, dtype=float)
    k = n * (1.0 + a) / 2.0
    kr = np.rint(k)
    if np.any(np.abs(k - kr) > 1e-9 * max(1, n)) or np.any(kr < 0) or np.any(kr > n):
        raise ParameterError(f"a is not on the grid Gamma_{n}")
    return kr


def log_binom(n, k):
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def entropy_In(a, n):
    """``I_n(a) = -(1/n) log C(n, n(1+a)/2)`` for ``a`` on ``Gamma_n``."""
    k = _grid_index(a, n)
    out = -log_binom(n, k) / n
    return out if np.ndim(out) else float(out)


def _params3(params):
    return float(params.p), float(params.beta), float(params.h)


def drift_J(a, params):
    """``J(a) = 2 beta (p a + h) + log((1-a)/(1+a))``; ``+inf`` at -1 and ``-inf`` at +1."""
    p, beta, h = _params3(params)
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) > 1.0):
        raise ParameterError("drift_J requires a in [-1, 1]")
    with np.errstate(divide="ignore"):
        out = 2.0 * beta * (p * a + h) + np.log1p(-a) - np.log1p(a)
    return out if out.ndim else float(out)


def drift_J_prime(a, params):
    """``J'(a) = 2 (lambda - 1/(1-a^2))``."""
    a = np.asarray(a, dtype=float)
    out = 2.0 * (params.beta * params.p - 1.0 / (1.0 - a * a))
    return out if out.ndim else float(out)


def drift_Jn(a, params, n):
    """Finite-``n`` drift ``J_n(a) = 2 beta (p a + h) + psi(n-k+1) - psi(k+1)``."""
    p, beta, h = _params3(params)
    k = _grid_index(a, n)
    a = np.asarray(a, dtype=float)
    out = 2.0 * beta * (p * a + h) + digamma(n - k + 1.0) - digamma(k + 1.0)
    return out if np.ndim(out) else float(out)


def drift_Jn_star(a, params, n):
    """The shifted drift ``2 beta (p (a + 2/n) + h) + log((1-a)/(1+a+2/n))``.

    Kept as written for comparison only; nothing downstream uses it.  At
    ``a = 1`` it is ``-inf``.
    """
    p, beta, h = _params3(params)
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        out = 2.0 * beta * (p * (a + 2.0 / n) + h) + np.log1p(-a) - np.log1p(a + 2.0 / n)
    return out if out.ndim else float(out)


def free_energy_R(a, params):
    """``R(a) = -(p/2) a^2 - h a + I(a)/beta``."""
    p, beta, h = _params3(params)
    a = np.asarray(a, dtype=float)
    out = -0.5 * p * a * a - h * a + entropy_I(a) / beta
    return out if np.ndim(out) else float(out)


def free_energy_R2(a, params):
    """``R''(a) = -J'(a)/(2 beta)``."""
    return -drift_J_prime(a, params) / (2.0 * params.beta)


def free_energy_Rn(a, params, n):
    p, beta, h = _params3(params)
    a = np.asarray(a, dtype=float)
    out = -0.5 * p * a * a - h * a + entropy_In(a, n) / beta
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# threshold and regimes


def chi_threshold(lam):
    """``chi(lambda) = sqrt(1 - 1/lambda) - (1/(2 lambda)) log[lambda (1 + sqrt(1 - 1/lambda))^2]``."""
    lam = float(lam)
    if not lam >= 1.0:
        raise ParameterError(f"chi is defined for lambda >= 1, got {lam}")
    r = math.sqrt(1.0 - 1.0 / lam)
    return r - (math.log(lam) + 2.0 * math.log1p(r)) / (2.0 * lam)


def classify_regime(params) -> Regime:
    lam = params.beta * params.p
    if lam <= 1.0:
        return Regime.SUBCRITICAL
    if params.h == 0.0:
        return Regime.ZERO_FIELD
    if params.h < params.p * chi_threshold(lam):
        return Regime.METASTABLE
    return Regime.STRONG_FIELD


def a_lambda(params) -> float:
    """Location ``-sqrt(1 - 1/lambda)`` of the local minimum of ``J`` (needs ``lambda > 1``)."""
    lam = params.beta * params.p
    if lam <= 1.0:
        raise RegimeError("a_lambda needs beta * p > 1")
    return -math.sqrt(1.0 - 1.0 / lam)


# --------------------------------------------------------------------------
# roots


def _J_of_u(u, p, beta, h):
    # J in the coordinate a = tanh(u): log((1-a)/(1+a)) = -2u.
    return 2.0 * beta * (p * math.tanh(u) + h) - 2.0 * u


def continuum_roots(params):
    """All zeros of ``J`` on ``(-1, 1)`` in increasing order (one or three).

    Bisection (Brent) is done in the coordinate ``u = artanh(a)``, in which
    ``J`` is finite everywhere and the outer brackets are explicit.
    """
    p, beta, h = _params3(params)
    f = lambda u: _J_of_u(u, p, beta, h)  # noqa: E731
    u_lo = -beta * (p + h) - 1.0
    u_hi = beta * (p + h) + 1.0
    regime = classify_regime(params)
    if regime in (Regime.METASTABLE, Regime.ZERO_FIELD):
        ua = math.atanh(a_lambda(params))
        brackets = [(u_lo, ua), (ua, -ua), (-ua, u_hi)]
    else:
        brackets = [(u_lo, u_hi)]
    roots = []
    for lo, hi in brackets:
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            u = lo
        elif fhi == 0.0:
            u = hi
        else:
            u = brentq(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
        roots.append(math.tanh(u))
    return tuple(roots)


def unique_root(params) -> float:
    """The single zero of ``J`` outside the double-well regime."""
    if classify_regime(params) in (Regime.METASTABLE, Regime.ZERO_FIELD):
        raise RegimeError("J has three zeros in this regime")
    return continuum_roots(params)[0]


def grid_roots(params, n):
    """Grid roots ``(m_n, t_n, s_n)`` as volumes ``(M_n, T_n, S_n)`` by a literal scan.

    ``M_n`` is the first ``k`` with ``J_n <= 0``, ``T_n`` the first ``k > M_n``
    with ``J_n >= 0`` and ``S_n`` the first ``k > T_n`` with ``J_n <= 0``.
    Missing levels are returned as ``None``.
    """
    n = int(n)
    k = np.arange(n + 1)
    a = 2.0 * k / n - 1.0
    jn = drift_Jn(a, params, n)
    found = []
    start = 0
    for want_nonpos in (True, False, True):
        cand = np.flatnonzero((jn[start:] <= 0.0) if want_nonpos else (jn[start:] >= 0.0))
        if cand.size == 0:
            found.extend([None] * (3 - len(found)))
            break
        idx = start + int(cand[0])
        found.append(idx)
        start = idx + 1
    return tuple(found)


@dataclass(frozen=True)
class Roots:
    m: float
    t: float
    s: float
    n: Optional[int] = None
    m_n: Optional[float] = None
    t_n: Optional[float] = None
    s_n: Optional[float] = None
    M_n: Optional[int] = None
    T_n: Optional[int] = None
    S_n: Optional[int] = None


def find_roots(params, n=None) -> Roots:
    """Continuum roots ``m < t < s`` and, if ``n`` is given, the grid roots and volumes."""
    regime = classify_regime(params)
    if regime is not Regime.METASTABLE:
        raise RegimeError(f"roots m, t, s need the metastable regime, got {regime.value}")
    m, t, s = continuum_roots(params)
    if n is None:
        return Roots(m, t, s)
    n = int(n)
    M, T, S = grid_roots(params, n)
    if S is None:
        raise RegimeError(f"grid roots are not all defined at n={n}")
    return Roots(m, t, s, n, 2.0 * M / n - 1, 2.0 * T / n - 1, 2.0 * S / n - 1, M, T, S)


def barrier(params) -> float:
    """``Gamma* = R(t) - R(m)``."""
    r = find_roots(params)
    return free_energy_R(r.t, params) - free_energy_R(r.m, params)


def field_for_barrier(p, beta, target):
    """Field ``h`` in ``(0, p chi(beta p))`` with ``barrier = target``.

    The barrier decreases in ``h`` and vanishes at ``p chi``; solved by Brent's
    method on the open interval.
    """
    from .spin import ModelParams

    hmax = p * chi_threshold(beta * p)
    lo, hi = hmax * 1e-9, hmax * (1.0 - 1e-9)
    g = lambda h: barrier(ModelParams(p, beta, h)) - target  # noqa: E731
    if not (g(lo) > 0.0 > g(hi)):
        raise ParameterError(f"target barrier {target} is not attainable for p={p}, beta={beta}")
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-14)


# --------------------------------------------------------------------------
# tables and auxiliary sequences


@dataclass(frozen=True)
class LandscapeTables:
    n: int
    grid: np.ndarray
    I_n: np.ndarray
    J_n: np.ndarray
    R_n: np.ndarray
    I: np.ndarray
    J: np.ndarray
    R: np.ndarray
    regime: Regime
    roots: Optional[Roots]
    barrier: Optional[float]


def build_tables(params, n) -> LandscapeTables:
    n = int(n)
    if n < 1:
        raise ParameterError("n must be >= 1")
    grid = -1.0 + 2.0 * np.arange(n + 1) / n
    grid[-1] = 1.0
    regime = classify_regime(params)
    roots, gam = None, None
    if regime is Regime.METASTABLE:
        try:
            roots = find_roots(params, n)
        except RegimeError:
            roots = find_roots(params)
        gam = free_energy_R(roots.t, params) - free_energy_R(roots.m, params)
    arrays = dict(
        I_n=entropy_In(grid, n), J_n=drift_Jn(grid, params, n), R_n=free_energy_Rn(grid, params, n),
        I=entropy_I(grid), J=drift_J(grid, params), R=free_energy_R(grid, params),
    )
    for arr in list(arrays.values()) + [grid]:
        arr.flags.writeable = False
    return LandscapeTables(n=n, grid=grid, regime=regime, roots=roots, barrier=gam, **arrays)


def vartheta_k(params, k, n):
    """``vartheta_k = p (1 - 2k/n) - h`` (forward-rate exponent)."""
    return params.p * (1.0 - 2.0 * np.asarray(k) / n) - params.h


def theta_k(params, k, n):
    """``theta_k = p (1 - k/n) - h``; ``2 k theta_k`` is the mean of ``H - H(all minus)`` over ``A_k``."""
    return params.p * (1.0 - np.asarray(k) / n) - params.h
