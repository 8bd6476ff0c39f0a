import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_system
from hyperips.errors import StateSpaceTooLarge
from hyperips.forward import run_replicas
from hyperips.models import InitialLaw, SI_STATES, build_linf_counterexample, build_sis
from hyperips.oracle import (
    build_generator,
    digits,
    encode,
    exact_covariance,
    exact_marginals,
    initial_distribution,
    solve_master,
)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(2, 3))
def test_digits_encode_round_trip(seed, n, S):
    rng = np.random.default_rng(seed)
    system = random_system(rng, max(n, 2), max_order=1, n_states=S)
    dig = digits(system)
    codes = [encode(system, row) for row in dig]
    assert codes == list(range(dig.shape[0]))


def test_vertex_zero_least_significant(si_pair):
    assert encode(si_pair, [1, 0]) == 1
    assert encode(si_pair, [0, 1]) == 2


def test_single_vertex_generator():
    Q = build_generator(build_sis(np.zeros((1, 1)), 0.7)).toarray()
    np.testing.assert_allclose(Q, [[0.0, 0.0], [0.7, -0.7]])


def test_two_vertex_si_generator_hand_enumeration(si_pair):
    Q = build_generator(si_pair).toarray()
    # codes: 0=(S,S) 1=(I,S) 2=(S,I) 3=(I,I)
    expected = np.zeros((4, 4))
    expected[1, 3] = expected[2, 3] = 1.0
    expected[1, 1] = expected[2, 2] = -1.0
    np.testing.assert_array_equal(Q, expected)


@given(st.integers(0, 2 ** 32 - 1))
def test_generator_rows_sum_to_zero(seed):
    rng = np.random.default_rng(seed)
    Q = build_generator(random_system(rng, 4, max_order=2, n_states=3))
    np.testing.assert_allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    off = Q - np.diag(Q.diagonal())
    assert off.min() >= 0


def test_unmatched_rule_still_present():
    # base state I never occurs when nobody can become infected, yet the entry exists
    Q = build_generator(build_sis(np.array([[0.0, 2.0], [0.0, 0.0]]), 0.0))
    assert Q[1, 3] == 2.0


def test_cap_exceeded(si_pair):
    with pytest.raises(StateSpaceTooLarge):
        build_generator(si_pair, cap=3)
    with pytest.raises(StateSpaceTooLarge):
        exact_marginals(si_pair, InitialLaw.bernoulli(SI_STATES, 2, 0.5), [0.0, 1.0], cap=2)


def test_initial_distribution_product():
    law = InitialLaw(SI_STATES, np.array([[0.2, 0.8], [0.6, 0.4]]))
    np.testing.assert_allclose(initial_distribution(law), [0.2 * 0.6, 0.8 * 0.6, 0.2 * 0.4, 0.8 * 0.4])


@given(st.integers(0, 2 ** 32 - 1))
def test_probability_conserved(seed):
    rng = np.random.default_rng(seed)
    system = random_system(rng, 4, max_order=2, n_states=3)
    law = InitialLaw(system.state_space, rng.dirichlet(np.ones(3), size=4))
    sol = solve_master(system, law, np.linspace(0, 3, 7))
    np.testing.assert_allclose(sol.p.sum(axis=1), 1.0, atol=1e-10)
    assert sol.p.min() >= -1e-12


def test_marginals_at_zero_equal_initial_law(sis_triangle):
    law = InitialLaw.bernoulli(SI_STATES, 3, [0.1, 0.5, 0.7])
    y = exact_marginals(sis_triangle, law, [0.0])
    np.testing.assert_allclose(y[0], law.probs, atol=1e-15)


@pytest.mark.parametrize("p, beta", [(0.2, 1.0), (0.5, 0.5), (0.9, 3.0)])
def test_two_vertex_si_closed_form(p, beta):
    system = build_sis(np.array([[0.0, beta], [beta, 0.0]]), 0.0)
    t = np.linspace(0, 2, 9)
    y = exact_marginals(system, InitialLaw.bernoulli(SI_STATES, 2, p), t)
    np.testing.assert_allclose(y[:, 0, 1], p + (1 - p) * p * (1 - np.exp(-beta * t)), atol=1e-8)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_counterexample_exact_value(r):
    R = np.array([[0.0, r, 0.0], [0.0, 0.0, 0.0], [0.3, 0.0, 0.0]])
    system, law, (_j, i) = build_linf_counterexample({1: R})
    t = np.array([0.0, 0.5, 1.0, 2.0])
    y = exact_marginals(system, law, t)
    S = system.state_space.index("S")
    np.testing.assert_allclose(y[:, i, S], 0.5 * np.exp(-r * t) + 0.5, atol=1e-8)


def test_covariance_independent_start(sis_triangle):
    law = InitialLaw.bernoulli(SI_STATES, 3, [0.1, 0.5, 0.7])
    assert abs(exact_covariance(sis_triangle, law, 0, 2, "I", "I", 0.0)) < 1e-12


def test_covariance_diagonal_is_bernoulli_variance(sis_triangle):
    law = InitialLaw.bernoulli(SI_STATES, 3, 0.4)
    y = exact_marginals(sis_triangle, law, [0.0, 1.3])[1, 1, 1]
    assert exact_covariance(sis_triangle, law, 1, 1, "I", "I", 1.3) == pytest.approx(y * (1 - y), abs=1e-10)


def test_pair_law_symmetric_orientation(sis_triangle):
    sol = solve_master(sis_triangle, InitialLaw.bernoulli(SI_STATES, 3, [0.1, 0.5, 0.7]), [0.0, 1.0])
    np.testing.assert_allclose(sol.pair(1, 0, 2), sol.pair(1, 2, 0).T)
    np.testing.assert_allclose(sol.pair(1, 0, 2).sum(axis=1), sol.marginals()[1, 0], atol=1e-14)


def test_covariance_matches_forward_simulation(si_pair, half_law):
    law = half_law(2, 0.3)
    exact = exact_covariance(si_pair, law, 0, 1, "I", "I", 1.0)

    def cells(states):
        x = (states[0] == 1).astype(np.int64)
        return np.bincount(x[:, 0] + 2 * x[:, 1], minlength=4)

    counts = sum(run_replicas(si_pair, law, [1.0], 10 ** 6, seed=11, observe=cells))
    n = counts.sum()
    f = counts / n
    a, b = np.array([0, 1, 0, 1]), np.array([0, 0, 1, 1])
    ma, mb = f @ a, f @ b
    est = f @ (a * b) - ma * mb
    # influence function of the covariance is (a - ma)(b - mb) - cov
    se = np.sqrt((f @ ((a - ma) * (b - mb)) ** 2 - est ** 2) / n)
    assert abs(est - exact) < 4 * se
