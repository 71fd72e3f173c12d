import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metaspin import bits
from metaspin.errors import ParameterError
from metaspin.graph import (complete_graph, degree_concentration_report, dump_graph, edges_to_support, from_edges,
                            generate_er, load_graph)
from metaspin.rng import make_rng
from metaspin.spin import SpinConfig


def _check_structure(g):
    mask = g.to_mask()
    assert np.array_equal(mask, mask.T)
    assert not mask.diagonal().any()
    assert g.edge_count * 2 == int(g.degrees.sum())
    assert np.array_equal(mask.sum(axis=1), g.degrees)
    for v in range(g.n):
        assert np.array_equal(np.sort(g.neighbors(v)), np.flatnonzero(mask[v]))


def test_complete_graph_k5():
    g = generate_er(5, 1.0, seed=123)
    assert g.edge_count == 10
    assert np.all(g.degrees == 4)
    _check_structure(g)


def test_single_vertex_has_no_edges():
    g = generate_er(1, 0.5, seed=3)
    assert g.edge_count == 0
    assert len(g.edges()) == 0


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_invalid_p(p):
    with pytest.raises(ParameterError):
        generate_er(10, p, 0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 90), p=st.floats(0.05, 1.0), seed=st.integers(0, 2**32))
def test_structure_invariants(n, p, seed):
    _check_structure(generate_er(n, p, seed))


def test_reproducible_and_documented_draw_order():
    g1, g2 = generate_er(40, 0.3, 77), generate_er(40, 0.3, 77)
    assert np.array_equal(g1.adj_bits, g2.adj_bits)
    # one uniform per pair (v, w), v < w, in lexicographic order
    rng = make_rng(77)
    u = rng.random(40 * 39 // 2)
    pairs = [(v, w) for v in range(40) for w in range(v + 1, 40)]
    expected = [pr for pr, x in zip(pairs, u) if x < 0.3]
    assert [tuple(e) for e in g1.edges()] == expected
    assert not np.array_equal(generate_er(40, 0.3, 78).adj_bits, g1.adj_bits)


def test_edge_density_over_seeds():
    n, p = 200, 0.37
    pairs = n * (n - 1) // 2
    counts = np.array([generate_er(n, p, s).edge_count for s in range(100)])
    dens = counts.sum() / (100 * pairs)
    sd = np.sqrt(p * (1 - p) / (100 * pairs))
    assert abs(dens - p) < 3 * sd


def test_edges_to_support_trivial_cases():
    g = complete_graph(5)
    for v in range(5):
        assert edges_to_support(g, v, SpinConfig.all_minus(5)) == 0
        assert edges_to_support(g, v, SpinConfig.all_plus(5)) == 4


def test_edges_to_support_naive_recount():
    rng = make_rng(5)
    for t in range(1000):
        n = int(rng.integers(2, 70))
        g = generate_er(n, float(rng.uniform(0.1, 0.9)), t)
        sigma = SpinConfig.from_array(rng.choice([-1, 1], n))
        v = int(rng.integers(n))
        naive = sum(1 for w in g.neighbors(v) if sigma[int(w)] > 0)
        got = edges_to_support(g, v, sigma)
        assert got == naive
        assert 0 <= got <= min(g.degree(v), sigma.volume)


def test_edges_to_support_er12():
    g = generate_er(12, 0.5, 9)
    sigma = SpinConfig.from_vertices(12, [0, 2, 3, 7, 8, 11])
    mask = g.to_mask()
    for v in range(12):
        assert edges_to_support(g, v, sigma) == sum(mask[v, w] for w in range(12) if sigma[w] > 0)


def test_degree_report_complete_and_tiny():
    rep = degree_concentration_report(complete_graph(100), 0.1)
    assert rep["min_deg"] == rep["max_deg"] == 99 and rep["all_within_bound"]
    rep = degree_concentration_report(generate_er(2, 0.5, 0), 0.1)
    assert set(rep) >= {"min_deg", "max_deg", "all_within_bound"}


@pytest.mark.slow
def test_degree_concentration_large():
    ok = [degree_concentration_report(generate_er(10_000, 0.3, s), 0.1)["all_within_bound"] for s in range(20)]
    assert sum(ok) >= 19


def test_dump_load_roundtrip(tmp_path):
    g = generate_er(30, 0.4, 11)
    path = tmp_path / "g.txt"
    dump_graph(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "30 0.4 11"
    edges = [tuple(map(int, ln.split())) for ln in lines[1:]]
    assert edges == sorted(edges) and all(v < w for v, w in edges)
    h = load_graph(path)
    assert (h.n, h.p, h.seed) == (30, 0.4, 11)
    assert np.array_equal(h.adj_bits, g.adj_bits)


def test_from_edges_rejects_loops():
    with pytest.raises(ParameterError):
        from_edges(3, [(1, 1)])


def test_bits_roundtrip():
    rng = make_rng(1)
    for n in (1, 63, 64, 65, 200):
        m = rng.random(n) < 0.5
        w = bits.pack(m)
        assert w.size == bits.n_words(n)
        assert np.array_equal(bits.unpack(w, n), m)
        assert bits.popcount(w) == int(m.sum())
