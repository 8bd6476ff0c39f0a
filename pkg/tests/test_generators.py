from math import comb

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, strategies as st

from hyperips.errors import EmptyGraph, InfeasibleRegular, MalformedRule, ParameterDomain
from hyperips.generators import (
    Adjacency,
    chung_lu,
    chung_lu_probability,
    erdos_renyi,
    named_graph,
    normalize_rates,
    random_regular,
    triangle_hyperedges,
)


def edge_set(g):
    return {tuple(e) for e in g.edges.tolist()}


# ---------------------------------------------------------------------------
# Erdos-Renyi


def test_erdos_renyi_complete_when_probability_clamps():
    g = erdos_renyi(8, 8.0, seed=1)
    assert g.n_edges == 8 * 7


def test_erdos_renyi_empty_for_zero_lambda():
    assert erdos_renyi(50, 0.0, seed=3).n_edges == 0


def test_erdos_renyi_edge_count_binomial_interval():
    n, lam = 10_000, 4.0
    g = erdos_renyi(n, lam, seed=2024)
    pairs = comb(n, 2)
    # two-sided binomial interval with failure probability 1e-6
    lo, hi = scipy.stats.binom.interval(1 - 1e-6, pairs, lam / n)
    assert lo <= g.n_edges // 2 <= hi
    assert abs(g.in_degrees().mean() - lam) < 0.1


def test_erdos_renyi_pairs_uniform():
    # every unordered pair should appear with frequency p
    n, lam, reps = 6, 2.0, 4000
    counts = np.zeros((n, n))
    for s in range(reps):
        counts += erdos_renyi(n, lam, seed=s).matrix().toarray()
    p = lam / n
    iu = np.triu_indices(n, 1)
    freq = counts[iu] / reps
    se = np.sqrt(p * (1 - p) / reps)
    assert np.all(np.abs(freq - p) < 5 * se)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 60), st.floats(0.0, 10.0))
def test_generators_deterministic_in_seed(seed, n, lam):
    a, b = erdos_renyi(n, lam, seed), erdos_renyi(n, lam, seed)
    assert a.to_text() == b.to_text()


def test_undirected_graphs_store_both_orientations():
    g = erdos_renyi(40, 5.0, seed=0)
    A = g.matrix().toarray()
    np.testing.assert_array_equal(A, A.T)
    assert not np.diag(A).any()


# ---------------------------------------------------------------------------
# Chung-Lu


@pytest.mark.parametrize("alpha, gamma", [(0.5, 0.0), (0.5, 0.34), (0.1, 0.2), (0.7, 0.2)])
def test_chung_lu_parameter_domain(alpha, gamma):
    with pytest.raises(ParameterDomain):
        chung_lu(100, alpha, gamma, seed=0)


def test_chung_lu_probability_formula():
    n, a, g = 50, 0.5, 0.2
    norm = sum((n / k) ** g for k in range(1, n + 1))
    expected = n ** a * (n / 1) ** g * (n / 2) ** g / norm
    assert chung_lu_probability(n, a, g, 1, 2) == pytest.approx(expected, rel=1e-14)


def test_chung_lu_probability_clamped():
    # small n makes the raw formula exceed one for the hubs
    assert chung_lu_probability(4, 0.5, 0.3, 1, 2) <= 1.0


def test_chung_lu_edge_frequencies():
    n, a, g, reps = 12, 0.5, 0.2, 3000
    counts = np.zeros((n, n))
    for s in range(reps):
        counts += chung_lu(n, a, g, seed=s).matrix().toarray()
    i, j = 0, 5
    p = chung_lu_probability(n, a, g, i + 1, j + 1)
    assert abs(counts[i, j] / reps - p) < 5 * np.sqrt(p * (1 - p) / reps)


def test_chung_lu_hub_degree_larger():
    g = chung_lu(2000, 0.5, 0.2, seed=1)
    deg = g.in_degrees()
    assert deg[:20].mean() > deg[-200:].mean()


# ---------------------------------------------------------------------------
# named graphs


def test_directed_star_out():
    g = named_graph("directed_star_out", 4)
    assert edge_set(g) == {(0, 1), (0, 2), (0, 3)}
    assert g.directed


def test_complete_three():
    assert len(edge_set(named_graph("complete", 3))) == 6


def test_path():
    assert edge_set(named_graph("path", 3)) == {(0, 1), (1, 0), (1, 2), (2, 1)}


def test_random_regular_parity():
    with pytest.raises(InfeasibleRegular):
        random_regular(7, 3, seed=0)


@pytest.mark.parametrize("n, d", [(10, 3), (50, 4), (500, 32), (20, 19)])
def test_random_regular_degrees(n, d):
    g = random_regular(n, d, seed=5)
    np.testing.assert_array_equal(g.in_degrees(), d)
    A = g.matrix().toarray()
    np.testing.assert_array_equal(A, A.T)
    assert not np.diag(A).any()


def test_random_regular_deterministic():
    assert random_regular(30, 4, seed=9).to_text() == random_regular(30, 4, seed=9).to_text()
    assert random_regular(30, 4, seed=9).to_text() != random_regular(30, 4, seed=10).to_text()


def test_unknown_named_graph():
    with pytest.raises(ValueError):
        named_graph("wheel", 5)


# ---------------------------------------------------------------------------
# adjacency validation and text format


def test_adjacency_rejects_self_loop():
    with pytest.raises(MalformedRule):
        Adjacency(3, True, np.array([[1, 1]]))


def test_adjacency_rejects_one_sided_undirected():
    with pytest.raises(MalformedRule):
        Adjacency(3, False, np.array([[0, 1]]))


def test_adjacency_text_round_trip():
    g = triangle_hyperedges(erdos_renyi(15, 6.0, seed=4))
    back = Adjacency.from_text(g.to_text())
    assert back.to_text() == g.to_text()
    assert back.orders() == g.orders()


def test_triangle_hyperedges_on_triangle():
    g = triangle_hyperedges(named_graph("complete", 3))
    bases, targets = g.hyperedges[2]
    got = sorted((tuple(b), int(t)) for b, t in zip(bases.tolist(), targets))
    assert got == [((0, 1), 2), ((0, 2), 1), ((1, 2), 0)]


def test_triangle_hyperedges_count_k4():
    bases, _ = triangle_hyperedges(named_graph("complete", 4)).hyperedges[2]
    # four triangles, three targets each
    assert bases.shape[0] == 12


# ---------------------------------------------------------------------------
# normalization


def test_normalize_complete_graph():
    N = 7
    w = normalize_rates(named_graph("complete", N))
    np.testing.assert_allclose(w.weights[1][2], 1 / (N - 1))


def test_normalize_single_directed_edge():
    N = 5
    w = normalize_rates(Adjacency(N, True, np.array([[0, 3]])))
    assert w.mean_in_degree[1] == pytest.approx(1 / N)
    np.testing.assert_allclose(w.weights[1][2], N)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 6.0))
def test_normalize_preserves_sparsity(seed, lam):
    g = erdos_renyi(30, lam, seed)
    if g.n_edges == 0:
        return
    W = normalize_rates(g).matrix(1).toarray()
    np.testing.assert_array_equal(W > 0, g.matrix().toarray() == 1)


def test_normalize_qbar_and_inverse_n():
    g = erdos_renyi(100, 4.0, seed=1)
    w = normalize_rates(g, {1: 2.0}, scaling="inverse_n")
    np.testing.assert_allclose(w.rates(1)[2], 2.0 / 100)


def test_upper_regularity_path():
    g = named_graph("path", 5)
    w = normalize_rates(g)
    # in-degrees 1,2,2,2,1: dbar = 8/5, max 2
    assert w.upper_regularity() == pytest.approx(2 / (8 / 5))


def test_normalize_empty_graph():
    with pytest.raises(EmptyGraph):
        normalize_rates(Adjacency(4, False, np.zeros((0, 2), dtype=int)))


def test_normalize_hypergraph_orders_separately():
    g = triangle_hyperedges(named_graph("complete", 4))
    w = normalize_rates(g)
    assert w.mean_in_degree[1] == 3
    # each vertex is the target of the three triangles containing it
    assert w.mean_in_degree[2] == 3
    np.testing.assert_allclose(w.weights[2][2], 1 / 3)
