"""Erdős–Rényi and complete graphs with bitset adjacency.

Generation order is fixed: pairs ``(v, w)`` with ``v < w`` are visited in
lexicographic order and each consumes exactly one uniform draw from
``make_rng(seed)`` (Philox4x64-10); the edge is kept iff the draw is ``< p``.
A ``(n, p, seed)`` triple therefore reproduces the same graph bit for bit.
``p == 1`` short-circuits to the complete graph without drawing.
"""

import math

import numpy as np

from . import bits
from .errors import ParameterError
from .rng import make_rng


class ErGraph:
    """Immutable simple undirected graph.

    ``adj_bits[v]`` is the neighbour bitset of ``v``.  The CSR view
    (``indptr``/``indices``) used by the simulation kernels is built on first
    access.
    """

    def __init__(self, n, p, seed, adj_bits, degrees):
        self.n = int(n)
        self.p = float(p)
        self.seed = int(seed)
        self.adj_bits = adj_bits
        self.degrees = degrees
        self.edge_count = int(degrees.sum() // 2)
        self._csr = None

    def __repr__(self):
        return f"ErGraph(n={self.n}, p={self.p}, seed={self.seed}, edges={self.edge_count})"

    def _build_csr(self):
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.degrees, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        for v in range(self.n):
            indices[indptr[v]:indptr[v + 1]] = np.flatnonzero(bits.unpack(self.adj_bits[v], self.n))
        for a in (indptr, indices):
            a.flags.writeable = False
        self._csr = (indptr, indices)

    @property
    def indptr(self):
        if self._csr is None:
            self._build_csr()
        return self._csr[0]

    @property
    def indices(self):
        if self._csr is None:
            self._build_csr()
        return self._csr[1]

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v):
        return int(self.degrees[v])

    def edges(self):
        """Sorted ``(m, 2)`` array of edges ``(v, w)`` with ``v < w``."""
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]]).astype(np.int64)

    def to_mask(self):
        return bits.unpack(self.adj_bits, self.n)


def _from_mask(mask, p, seed):
    """``mask`` must already be symmetric with an empty diagonal."""
    n = mask.shape[0]
    degrees = mask.sum(axis=1).astype(np.int64)
    adj_bits = bits.pack(mask, n)
    for a in (adj_bits, degrees):
        a.flags.writeable = False
    return ErGraph(n, p, seed, adj_bits, degrees)


def generate_er(n, p, seed=0) -> ErGraph:
    """Sample ER_n(p).  ``p = 1`` yields K_n exactly."""
    n = int(n)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not (0.0 < p <= 1.0):
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        mask = np.ones((n, n), dtype=bool)
    else:
        mask = np.zeros((n, n), dtype=bool)
        rng = make_rng(seed)
        for v in range(n - 1):
            row = rng.random(n - v - 1) < p
            mask[v, v + 1:] = row
            mask[v + 1:, v] = row
    np.fill_diagonal(mask, False)
    return _from_mask(mask, p, seed)


def complete_graph(n) -> ErGraph:
    return generate_er(n, 1.0, 0)


def from_edges(n, edges, p=1.0, seed=0) -> ErGraph:
    mask = np.zeros((n, n), dtype=bool)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n or np.any(edges[:, 0] == edges[:, 1])):
        raise ParameterError("edge list has out-of-range vertices or self-loops")
    mask[edges[:, 0], edges[:, 1]] = True
    mask |= mask.T
    return _from_mask(mask, p, seed)


def edges_to_support(g, v, sigma) -> int:
    """``|E(v, sigma)|``: number of neighbours of ``v`` carrying spin +1."""
    return int(np.bitwise_count(g.adj_bits[v] & sigma.words).sum())


def degree_concentration_report(g, eps=0.1):
    """Check all degrees against ``pn ± (1+eps) sqrt(n log n)`` (strict)."""
    n = g.n
    if n < 2:
        raise ParameterError("degree concentration needs n >= 2")
    half_width = (1.0 + eps) * math.sqrt(n * math.log(n))
    centre = g.p * n
    dmin, dmax = int(g.degrees.min()), int(g.degrees.max())
    within = bool(centre - half_width < dmin and dmax < centre + half_width)
    return {"min_deg": dmin, "max_deg": dmax, "all_within_bound": within,
            "centre": centre, "half_width": half_width}


def dump_graph(g, path):
    """Text fixture: ``n p seed`` header, then one ``v w`` line per edge (v < w, sorted)."""
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.p!r} {g.seed}\n")
        for v, w in g.edges():
            fh.write(f"{v} {w}\n")


def load_graph(path) -> ErGraph:
    with open(path) as fh:
        header = fh.readline().split()
        n, p, seed = int(header[0]), float(header[1]), int(header[2])
        edges = [tuple(map(int, line.split())) for line in fh if line.strip()]
    return from_edges(n, edges, p=p, seed=seed)
