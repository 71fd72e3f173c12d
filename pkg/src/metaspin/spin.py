"""Spin configurations, model parameters and the Hamiltonian.

A configuration ``sigma`` is stored as its *support* ``{v : sigma(v) = +1}``,
packed into little-endian ``uint64`` words, with the volume ``|sigma|``
cached.  Two equivalent forms of the Hamiltonian are provided,

.. math::

    H(\\sigma) = -\\frac1n \\sum_{(v,w) \\in E} \\sigma(v)\\sigma(w) - h \\sum_v \\sigma(v)
              = H(\\boxminus) + \\frac2n |\\partial_E \\sigma| - 2h|\\sigma|,

with :math:`H(\\boxminus) = -|E|/n + hn`.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bits
from .errors import ParameterError

KINDS = ("er_graph", "mean_field")


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters ``(p, beta, h, n)`` and the model kind.

    ``n`` may be left as ``None`` for size-free (continuum) landscape queries.
    ``h = 0`` is accepted for diagnostics; negative fields are rejected.
    """

    p: float
    beta: float
    h: float
    n: Optional[int] = None
    kind: str = "er_graph"

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ParameterError(f"p must lie in (0, 1], got {self.p}")
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ParameterError(f"beta must be positive and finite, got {self.beta}")
        if not (self.h >= 0.0 and np.isfinite(self.h)):
            raise ParameterError(f"h must be finite and >= 0, got {self.h}")
        if self.n is not None and int(self.n) < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def lam(self) -> float:
        """``lambda = beta * p``."""
        return self.beta * self.p

    def with_n(self, n):
        return ModelParams(self.p, self.beta, self.h, int(n), self.kind)

    def with_h(self, h):
        return ModelParams(self.p, self.beta, h, self.n, self.kind)


class SpinConfig:
    """Mutable spin configuration with cached volume.

    Parameters
    ----------
    words : ndarray of uint64
        Packed support bitset (bit ``v`` set iff ``sigma(v) = +1``).
    n : int
        Number of vertices.
    """

    __slots__ = ("words", "n", "volume")

    def __init__(self, words, n):
        self.n = int(n)
        words = np.array(words, dtype=np.uint64)
        if words.shape != (bits.n_words(self.n),):
            raise ParameterError("word array does not match n")
        tail = self.n % 64
        if tail and int(words[-1]) >> tail:
            raise ParameterError("bits set beyond vertex n-1")
        self.words = words
        self.volume = bits.popcount(words)

    # constructors -------------------------------------------------------
    @classmethod
    def all_minus(cls, n):
        return cls(np.zeros(bits.n_words(n), dtype=np.uint64), n)

    @classmethod
    def all_plus(cls, n):
        return cls.from_support(np.ones(n, dtype=bool))

    @classmethod
    def from_support(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(bits.pack(mask), mask.size)

    @classmethod
    def from_array(cls, spins):
        """From a ``+-1`` vector."""
        spins = np.asarray(spins)
        if not np.all((spins == 1) | (spins == -1)):
            raise ParameterError("spins must be +1 or -1")
        return cls.from_support(spins == 1)

    @classmethod
    def from_vertices(cls, n, plus):
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(list(plus), dtype=np.int64)] = True
        return cls.from_support(mask)

    @classmethod
    def random_with_volume(cls, n, k, rng):
        """Uniform configuration in ``A_k``: a uniformly random ``k``-subset of vertices."""
        if not 0 <= k <= n:
            raise ParameterError(f"volume {k} out of range for n={n}")
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:k]] = True
        return cls.from_support(mask)

    @classmethod
    def from_hex(cls, text, n):
        value = int(text, 16)
        if value >> n:
            raise ParameterError("hex string has bits beyond vertex n-1")
        words = [(value >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(bits.n_words(n))]
        return cls(np.array(words, dtype=np.uint64), n)

    # queries ------------------------------------------------------------
    def __getitem__(self, v):
        return 1 if (int(self.words[v >> 6]) >> (v & 63)) & 1 else -1

    def __eq__(self, other):
        return isinstance(other, SpinConfig) and self.n == other.n and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.n, self.words.tobytes()))

    def __repr__(self):
        return f"SpinConfig(n={self.n}, volume={self.volume})"

    def support(self):
        return bits.unpack(self.words, self.n)

    def to_array(self):
        """``int8`` vector of spins in ``{-1, +1}``."""
        return np.where(self.support(), 1, -1).astype(np.int8)

    def to_hex(self):
        """Hex of the bitset, most-significant vertex first (no ``0x`` prefix)."""
        value = 0
        for i, w in enumerate(self.words.tolist()):
            value |= int(w) << (64 * i)
        width = max(1, (self.n + 3) // 4)
        return format(value, f"0{width}x")

    def copy(self):
        out = SpinConfig.__new__(SpinConfig)
        out.words = self.words.copy()
        out.n = self.n
        out.volume = self.volume
        return out

    # mutation -----------------------------------------------------------
    def flip(self, v):
        """Flip spin ``v`` in place (``sigma -> sigma^v``)."""
        bit = np.uint64(1) << np.uint64(v & 63)
        was_plus = bool(self.words[v >> 6] & bit)
        self.words[v >> 6] ^= bit
        self.volume += -1 if was_plus else 1
        return self

    def flipped(self, v):
        return self.copy().flip(v)


def _check_sizes(g, sigma):
    if g.n != sigma.n:
        raise ParameterError(f"graph has {g.n} vertices but configuration has {sigma.n}")


def volume(sigma) -> int:
    return sigma.volume


def magnetization(sigma) -> float:
    """``m(sigma) = 2|sigma|/n - 1``."""
    return 2.0 * sigma.volume / sigma.n - 1.0


def energy_minus(g, h) -> float:
    """``H(all minus) = -|E|/n + h n``."""
    return -g.edge_count / g.n + h * g.n


def energy(g, sigma, h) -> float:
    """Hamiltonian evaluated edge by edge."""
    _check_sizes(g, sigma)
    s = sigma.to_array().astype(np.int64)
    e = g.edges()
    pair_sum = int(np.sum(s[e[:, 0]] * s[e[:, 1]])) if len(e) else 0
    return -pair_sum / g.n - h * int(s.sum())


def boundary_size(g, sigma) -> int:
    """``|partial_E sigma|``, the number of edges between ``sigma`` and its complement."""
    _check_sizes(g, sigma)
    inside = np.bitwise_count(g.adj_bits & sigma.words[None, :]).sum(axis=1)
    plus = sigma.support()
    return int((g.degrees[plus] - inside[plus]).sum())


def energy_via_boundary(g, sigma, h) -> float:
    """Hamiltonian via ``H(all minus) + (2/n)|boundary| - 2h|sigma|``."""
    return energy_minus(g, h) + 2.0 * boundary_size(g, sigma) / g.n - 2.0 * h * sigma.volume


def delta_energy_flip(g, sigma, v, h) -> float:
    """``H(sigma^v) - H(sigma)`` from a single popcount.

    Up-flip (``sigma(v) = -1``): ``(2/n)(deg v - 2|E(v, sigma)|) - 2h``.
    Down-flip (``sigma(v) = +1``): ``(2/n)(2|E(v, sigma minus v)| - deg v) + 2h``.
    There are no self-loops, so ``|E(v, sigma minus v)| = |E(v, sigma)|``.
    """
    _check_sizes(g, sigma)
    if not 0 <= v < g.n:
        raise ParameterError(f"vertex {v} out of range")
    e_v = int(np.bitwise_count(g.adj_bits[v] & sigma.words).sum())
    deg = int(g.degrees[v])
    if sigma[v] < 0:
        return 2.0 * (deg - 2 * e_v) / g.n - 2.0 * h
    return 2.0 * (2 * e_v - deg) / g.n + 2.0 * h


def mean_field_energy(params, k) -> float:
    """Mean-field energy ``n[-(p/2)m^2 - h m]`` at volume ``k``.

    This is the complete-graph Hamiltonian with coupling ``p/n`` up to the
    constant ``p/2`` coming from the diagonal of ``(sum sigma)^2``.
    """
    n = params.n
    m = 2.0 * k / n - 1.0
    return n * (-0.5 * params.p * m * m - params.h * m)


def mean_field_delta_up(params, k) -> float:
    """Energy change of one up-flip at volume ``k``: ``(2p/n)(n - 2k - 1) - 2h``."""
    n = params.n
    return 2.0 * params.p * (n - 2 * k - 1) / n - 2.0 * params.h


def mean_field_delta_down(params, k) -> float:
    """Energy change of one down-flip at volume ``k`` (inverse of the up-flip at ``k-1``)."""
    return -mean_field_delta_up(params, k - 1)
