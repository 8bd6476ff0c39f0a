import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, strategies as st

from hyperips.errors import StepUnderflow
from hyperips.ode import integrate
from hyperips.rng import REPLICA_BLOCK, UniformBuffer, blocks, split_seed, stream


# ---------------------------------------------------------------------------
# random streams


def test_stream_reproducible():
    np.testing.assert_array_equal(stream(7, 3).random(5), stream(7, 3).random(5))


def test_streams_differ_by_key():
    a, b = stream(7, 3).random(5), stream(7, 4).random(5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(stream(8, 3).random(5), a)


def test_split_seed_deterministic_and_distinct():
    assert split_seed(1, 0) == split_seed(1, 0)
    assert len({split_seed(1, k) for k in range(100)}) == 100


@given(st.integers(0, 10 ** 6), st.integers(1, 3000))
def test_blocks_partition(replicas, size):
    parts = list(blocks(replicas, size))
    assert sum(s for _, s in parts) == replicas
    assert [b for b, _ in parts] == list(range(len(parts)))
    assert all(s == size for _, s in parts[:-1])


def test_default_block_size():
    assert [s for _, s in blocks(2500)] == [REPLICA_BLOCK, REPLICA_BLOCK, 2500 - 2 * REPLICA_BLOCK]


def test_uniform_buffer_matches_generator_and_open_interval():
    buf = UniformBuffer(stream(3), chunk=16)
    got = np.array([buf() for _ in range(40)])
    ref = stream(3)
    expected = np.concatenate([ref.random(16) for _ in range(3)])[:40]
    np.testing.assert_array_equal(got, expected)
    assert got.min() > 0 and got.max() < 1


# ---------------------------------------------------------------------------
# Dormand-Prince integrator


def test_exponential_decay():
    t = np.linspace(0, 5, 11)
    y = integrate(lambda _t, y: -0.7 * y, [2.0], t, rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(y[:, 0], 2 * np.exp(-0.7 * t), rtol=1e-9)


def test_harmonic_oscillator_against_scipy():
    def f(_t, y):
        return np.array([y[1], -4.0 * y[0]])

    t = np.linspace(0, 6, 25)
    y = integrate(f, [1.0, 0.0], t, rtol=1e-10, atol=1e-12)
    ref = scipy.integrate.solve_ivp(f, (0, 6), [1.0, 0.0], t_eval=t, rtol=1e-12, atol=1e-14, method="DOP853")
    np.testing.assert_allclose(y, ref.y.T, atol=1e-8)
    np.testing.assert_allclose(y[:, 0], np.cos(2 * t), atol=1e-8)


def test_time_dependent_rhs_and_t0():
    # y' = 2t  =>  y = t^2 - 1 from y(1) = 0
    t = np.array([1.0, 1.5, 3.0])
    y = integrate(lambda s, y: np.array([2 * s]), [0.0], t, t0=1.0)
    np.testing.assert_allclose(y[:, 0], t ** 2 - 1, atol=1e-10)


def test_repeated_grid_times_and_matrix_state():
    y0 = np.eye(2)
    y = integrate(lambda _t, y: -y, y0, [0.0, 1.0, 1.0])
    assert y.shape == (3, 2, 2)
    np.testing.assert_array_equal(y[1], y[2])
    np.testing.assert_allclose(y[1], np.exp(-1) * np.eye(2), rtol=1e-8)


def test_post_step_applied():
    calls = []

    def clamp(y):
        calls.append(1)
        return np.minimum(y, 1.0)

    y = integrate(lambda _t, y: np.ones_like(y), [0.0], [0.0, 3.0], post_step=clamp)
    assert y[-1, 0] == 1.0
    assert calls


def test_step_underflow_on_blowup():
    # y' = y^2 from y(0) = 1 blows up at t = 1
    with pytest.raises(StepUnderflow), np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda _t, y: y * y, [1.0], [2.0])


@pytest.mark.parametrize("grid", [[1.0, 0.5], [-0.1, 1.0]])
def test_bad_grid(grid):
    with pytest.raises(ValueError):
        integrate(lambda _t, y: -y, [1.0], grid)
