import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_symmetric
from hyperips.bounds import concentration_upper
from hyperips.errors import EmptySubset, MotifTooLarge
from hyperips.forward import (
    TRIANGLE,
    edge_graph,
    estimate_marginals,
    estimate_subpop_variance,
    homomorphism_density,
    run_replicas,
    sample_subpop_fraction,
    sample_triangle_density,
    simulate_forward,
    variance_with_jackknife,
)
from hyperips.generators import erdos_renyi, named_graph, normalize_rates
from hyperips.models import (
    FLIP_STATES,
    InitialLaw,
    SAIS_STATES,
    SI_STATES,
    build_sais,
    build_sis,
    build_triangle_flip,
)
from hyperips.oracle import exact_marginals, solve_master
from hyperips.rates import InteractionRule, StateSpace, build_rate_system, pair_rate_matrix, spectral_norm


def within(est, se, exact, k=4.0, floor=1e-12):
    return np.all(np.abs(est - exact) <= k * se + floor)


# ---------------------------------------------------------------------------
# single trajectories


def test_no_rules_keeps_initial_configuration():
    sys = build_rate_system(SI_STATES, 3, [])
    law = InitialLaw.point(SI_STATES, ["I", "S", "I"])
    tr = simulate_forward(sys, law, 5.0, seed=1)
    assert tr.times.size == 0
    np.testing.assert_array_equal(tr.state_at(5.0), [1, 0, 1])


def test_trajectory_deterministic_in_seed(sis_triangle, half_law):
    a = simulate_forward(sis_triangle, half_law(3), 4.0, seed=42, keep_phantoms=True)
    b = simulate_forward(sis_triangle, half_law(3), 4.0, seed=42, keep_phantoms=True)
    assert a.events() == b.events()
    np.testing.assert_array_equal(a.initial, b.initial)


def test_trajectory_times_increasing_and_flags_consistent(sis_triangle, half_law):
    tr = simulate_forward(sis_triangle, half_law(3), 10.0, seed=3, keep_phantoms=True)
    assert np.all(np.diff(tr.times) > 0)
    sys = sis_triangle
    sigma = tr.initial.copy()
    for t, r, applied in tr.events():
        ok = sigma[sys.target[r]] == sys.from_state[r] and all(
            sigma[sys.base[r, l]] == sys.base_states[r, l] for l in range(sys.order[r]))
        assert ok == applied
        if applied:
            sigma[sys.target[r]] = sys.to_state[r]
    np.testing.assert_array_equal(sigma, tr.state_at(10.0))


def test_phantoms_dropped_by_default(sis_triangle, half_law):
    tr = simulate_forward(sis_triangle, half_law(3), 10.0, seed=3)
    assert tr.applied.all()
    full = simulate_forward(sis_triangle, half_law(3), 10.0, seed=3, keep_phantoms=True)
    np.testing.assert_array_equal(tr.state_at(7.5), full.state_at(7.5))


@pytest.mark.parametrize("seed", range(5))
def test_si_infected_set_monotone(seed):
    R = random_symmetric(np.random.default_rng(seed), 8)
    sys = build_sis(R, 0.0)
    tr = simulate_forward(sys, InitialLaw.bernoulli(SI_STATES, 8, 0.3), 3.0, seed)
    sigma = tr.initial.copy()
    for _, r, applied in tr.events():
        if applied:
            assert sys.from_state[r] == 0 and sys.to_state[r] == 1
            sigma[sys.target[r]] = sys.to_state[r]
    prev = tr.initial
    for t in np.linspace(0, 3, 13):
        cur = tr.state_at(t)
        assert np.all(cur >= prev)
        prev = cur


def test_state_at_rejects_outside_horizon(si_pair, half_law):
    tr = simulate_forward(si_pair, half_law(2), 1.0, seed=0)
    with pytest.raises(ValueError):
        tr.state_at(1.5)


# ---------------------------------------------------------------------------
# marginals


T = np.array([0.0, 0.5, 1.0, 2.0])


@pytest.mark.parametrize("gamma", [0.5, 1.5])
def test_single_vertex_recovery(gamma):
    sys = build_sis(np.zeros((1, 1)), gamma)
    est = estimate_marginals(sys, InitialLaw.point(SI_STATES, ["I"]), T, 100_000, seed=2)
    assert within(est.value[:, 0, 1], est.std_error[:, 0, 1], np.exp(-gamma * T))


def test_two_vertex_single_clock():
    beta = 0.8
    sys = build_sis(np.array([[0, beta], [beta, 0]]), 0.0)
    est = estimate_marginals(sys, InitialLaw.point(SI_STATES, ["I", "S"]), T, 100_000, seed=5)
    assert within(est.value[:, 1, 1], est.std_error[:, 1, 1], 1 - np.exp(-beta * T))


def test_marginals_at_time_zero_match_initial_law():
    law = InitialLaw(SAIS_STATES, np.array([[0.2, 0.3, 0.5], [0.6, 0.0, 0.4]]))
    R = np.array([[0, 1.0], [1.0, 0]])
    sys = build_sais(R, R, 1.0, 0.5, 0.7, 0.2)
    est = estimate_marginals(sys, law, [0.0], 50_000, seed=1)
    assert within(est.value[0], np.maximum(est.std_error[0], 1e-3), law.probs)


def test_complete_graph_sis_matches_oracle():
    R = normalize_rates(named_graph("complete", 3)).matrix(1) * 1.2
    sys = build_sis(R, 0.6)
    law = InitialLaw.bernoulli(SI_STATES, 3, [0.9, 0.2, 0.4])
    est = estimate_marginals(sys, law, [1.0], 100_000, seed=9)
    y = exact_marginals(sys, law, [1.0])
    assert within(est.value[0, :, :], est.std_error[0, :, :], y[0])


def test_absorbing_start_is_exact(si_pair):
    est = estimate_marginals(si_pair, InitialLaw.point(SI_STATES, ["I", "I"]), T, 200, seed=0)
    assert np.all(est.value[:, :, 1] == 1.0)
    assert np.all(est.std_error == 0.0)


def test_joint_law_matches_oracle_in_total_variation(sis_triangle):
    law = InitialLaw.bernoulli(SI_STATES, 3, [0.3, 0.6, 0.5])
    replicas = 1_000_000
    weights = 2 ** np.arange(3)

    def observe(states):
        return np.bincount((states[0].astype(np.int64) * weights).sum(axis=1), minlength=8)

    counts = sum(run_replicas(sis_triangle, law, [1.0], replicas, 31, observe))
    p = solve_master(sis_triangle, law, [1.0]).p[0]
    # both use vertex 0 as the least significant digit
    tv = 0.5 * np.abs(counts / replicas - p).sum()
    assert tv <= 4 * np.sqrt(8 / replicas)


def test_results_independent_of_worker_count(sis_triangle, half_law):
    a = estimate_marginals(sis_triangle, half_law(3), T, 5000, seed=11, workers=1)
    b = estimate_marginals(sis_triangle, half_law(3), T, 5000, seed=11, workers=3)
    np.testing.assert_array_equal(a.value, b.value)


def test_block_partial_replica_counts(sis_triangle, half_law):
    # a replica count that does not fill the last block still yields exact totals
    x = sample_subpop_fraction(sis_triangle, half_law(3), [0, 1, 2], "I", [0.0], 2500, seed=4)
    assert x.shape == (1, 2500)


def test_marginal_rows_layout(si_pair, half_law):
    est = estimate_marginals(si_pair, half_law(2), [0.0, 1.0], 100, seed=0)
    rows = list(est.rows())
    assert len(rows) == 2 * 2 * 2
    assert rows[0][:3] == (0, "S", 0.0)
    assert rows[0][5:] == (100, 0)
    assert est.report(1, 1, "I").value == est.value[1, 1, 1]


# ---------------------------------------------------------------------------
# subpopulation averages


def test_variance_at_zero_iid_half():
    N, m = 400, 100
    sys = build_sis(normalize_rates(erdos_renyi(N, 4.0, seed=1)).matrix(1), 0.0)
    rep = estimate_subpop_variance(sys, InitialLaw.bernoulli(SI_STATES, N, 0.5), np.arange(m), "I", 0.0, 20_000, seed=3)
    assert abs(rep.value - 1 / (4 * m)) <= 4 * rep.std_error


def test_variance_zero_for_deterministic_start(si_pair):
    rep = estimate_subpop_variance(si_pair, InitialLaw.point(SI_STATES, ["I", "S"]), [0, 1], "I", 0.0, 100, seed=0)
    assert rep.value == 0.0


def test_directed_star_does_not_concentrate():
    vals = []
    for N in (50, 200):
        R = named_graph("directed_star_out", N).matrix()
        sys = build_sis(R, 0.0)
        rep = estimate_subpop_variance(sys, InitialLaw.bernoulli(SI_STATES, N, 0.5), np.arange(1, N), "I", 1.0,
                                       4000, seed=N)
        vals.append(rep.value)
    # the leaves follow the center: variance stays near (1-e^-1)^2 / 16
    target = (1 - np.exp(-1)) ** 2 / 16
    assert all(v > 0.5 * target for v in vals)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_variance_below_concentration_bound(seed):
    rng = np.random.default_rng(seed)
    N = 30
    R = random_symmetric(rng, N, density=0.2, scale=0.5)
    sys = build_sis(R, 0.3)
    norm = spectral_norm(pair_rate_matrix(sys).entries).value
    subset = np.arange(10)
    for t in (0.0, 0.5, 1.0):
        rep = estimate_subpop_variance(sys, InitialLaw.bernoulli(SI_STATES, N, 0.5), subset, "I", t, 4000, seed)
        assert rep.value <= concentration_upper(norm, t, subset.size) + 4 * rep.std_error


def test_empty_subset_rejected(si_pair, half_law):
    with pytest.raises(EmptySubset):
        sample_subpop_fraction(si_pair, half_law(2), [], "I", [0.0], 10, seed=0)


def test_jackknife_matches_normal_theory():
    x = np.random.default_rng(0).normal(size=20_000)
    var, se = variance_with_jackknife(x)
    assert var == pytest.approx(1.0, abs=0.05)
    # for normal data SE(var) is about sqrt(2 / n)
    assert se == pytest.approx(np.sqrt(2 / x.size), rel=0.1)


# ---------------------------------------------------------------------------
# homomorphism densities


def test_edge_density_of_complete_graph():
    N = 6
    G = np.ones((N, N)) - np.eye(N)
    hd = homomorphism_density(G, [(0, 1)])
    assert hd.exact and hd.value == pytest.approx(N * (N - 1) / N ** 2)


def test_empty_graph_density_zero():
    assert homomorphism_density(np.zeros((5, 5)), TRIANGLE).value == 0.0


def test_triangle_density_k4_brute_force():
    G = np.ones((4, 4)) - np.eye(4)
    count = sum(G[a, b] * G[b, c] * G[c, a] for a in range(4) for b in range(4) for c in range(4))
    assert count == 24
    assert homomorphism_density(G, TRIANGLE).value == pytest.approx(24 / 64)


def test_sampled_density_for_larger_motifs():
    rng = np.random.default_rng(1)
    G = (rng.random((12, 12)) < 0.6).astype(float)
    G = np.triu(G, 1)
    G = G + G.T
    path4 = [(0, 1), (1, 2), (2, 3)]
    # exact value from the walk count 1^T G^3 1
    exact = np.ones(12) @ np.linalg.matrix_power(G, 3) @ np.ones(12) / 12 ** 4
    hd = homomorphism_density(G, path4, samples=200_000, seed=2)
    assert not hd.exact
    assert abs(hd.value - exact) <= 4 * hd.std_error


def test_motif_cap():
    with pytest.raises(MotifTooLarge):
        homomorphism_density(np.ones((3, 3)), [(0, 9)])


def test_flip_edge_graph_and_density():
    sys = build_triangle_flip(5)
    law = InitialLaw.point(FLIP_STATES, ["1"] * sys.n_vertices)
    G = edge_graph(sys, law.sample(np.random.default_rng(0), 1)[0])
    np.testing.assert_array_equal(G, np.ones((5, 5)) - np.eye(5))
    x = sample_triangle_density(sys, law, [0.0, 1.0], 64, seed=0)
    assert np.allclose(x[0], 60 / 125)
    assert np.all(x[1] <= x[0])


@settings(max_examples=15)
@given(st.integers(0, 2 ** 16))
def test_estimates_reproducible(seed):
    sys = build_sis(np.array([[0, 1.0], [1.0, 0]]), 0.5)
    law = InitialLaw.bernoulli(SI_STATES, 2, 0.5)
    a = estimate_marginals(sys, law, [0.5], 300, seed)
    b = estimate_marginals(sys, law, [0.5], 300, seed)
    np.testing.assert_array_equal(a.value, b.value)


def test_self_interaction_three_state_space():
    ss = StateSpace(("a", "b", "c"))
    sys = build_rate_system(ss, 1, [InteractionRule(0, (), 0, (), "a", "b", 1.0),
                                    InteractionRule(0, (), 0, (), "b", "c", 2.0)])
    est = estimate_marginals(sys, InitialLaw.point(ss, ["a"]), [1.0], 100_000, seed=8)
    # a -> b at rate 1, b -> c at rate 2: P(b at t) = (e^-t - e^-2t) / (2 - 1)
    pb = np.exp(-1.0) - np.exp(-2.0)
    assert abs(est.value[0, 0, 1] - pb) <= 4 * est.std_error[0, 0, 1]
