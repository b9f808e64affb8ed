"""Model truncation, test signals, simulation, and input disturbance."""

import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from regkit.errors import InvalidModelError
from regkit.lti import (
    SignalSpec,
    TransferFunction,
    disturb,
    generate_signal,
    impulse_response,
    simulate,
)

BENCH2 = TransferFunction((0.02008, 0.04017, 0.02008), (1.0, -1.561, 0.6414))


def lfilter_impulse(tf, n_g):
    # Independent oracle: feed a unit impulse through the difference
    # equation as scipy implements it.
    e = np.zeros(n_g)
    e[0] = 1.0
    return scipy.signal.lfilter(tf.num, tf.den, e)


class TestImpulseResponse:
    def test_geometric_series(self):
        g = impulse_response(TransferFunction((1.0,), (1.0, -0.5)), 8)
        np.testing.assert_allclose(g, 0.5 ** np.arange(8), rtol=0, atol=1e-15)

    def test_pure_delay(self):
        g = impulse_response(TransferFunction((0.0, 1.0), (1.0,)), 5)
        np.testing.assert_array_equal(g, [0.0, 1.0, 0.0, 0.0, 0.0])

    def test_fir_numerator_copied(self):
        g = impulse_response(TransferFunction((3.0, -2.0, 1.0), (1.0,)), 6)
        np.testing.assert_array_equal(g, [3.0, -2.0, 1.0, 0.0, 0.0, 0.0])

    def test_matches_lfilter_on_benchmark(self):
        g = impulse_response(BENCH2, 120)
        np.testing.assert_allclose(g, lfilter_impulse(BENCH2, 120), rtol=0, atol=1e-14)

    def test_matches_lfilter_random_stable(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            # Random stable denominator from poles inside the unit circle.
            p = rng.uniform(-0.9, 0.9, size=2)
            den = tuple(np.poly(p))
            num = tuple(rng.standard_normal(3))
            tf = TransferFunction(num, den)
            np.testing.assert_allclose(
                impulse_response(tf, 40), lfilter_impulse(tf, 40), rtol=0, atol=1e-12
            )

    def test_denominator_scaling_invariance(self):
        g1 = impulse_response(TransferFunction((1.0, 0.3), (1.0, -0.4)), 10)
        g2 = impulse_response(TransferFunction((2.0, 0.6), (2.0, -0.8)), 10)
        np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-15)

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError):
            impulse_response(BENCH2, 0)

    def test_rejects_bad_models(self):
        with pytest.raises(InvalidModelError):
            TransferFunction((1.0,), ())
        with pytest.raises(InvalidModelError):
            TransferFunction((1.0,), (0.0, 1.0))
        with pytest.raises(InvalidModelError):
            TransferFunction((np.nan,), (1.0,))


class TestPrbs:
    def test_values_are_plus_minus_scale(self):
        u = generate_signal(SignalSpec("prbs", 500, 2.5, seed=4))
        assert set(np.unique(u)) == {-2.5, 2.5}

    def test_period_127(self):
        u = generate_signal(SignalSpec("prbs", 381, 1.0, seed=11))
        np.testing.assert_array_equal(u[:127], u[127:254])
        np.testing.assert_array_equal(u[:127], u[254:381])

    def test_maximal_length_autocorrelation(self):
        # A maximal-length +-1 sequence has circular autocorrelation
        # exactly -1 at every nonzero lag and 127 at lag zero.
        u = generate_signal(SignalSpec("prbs", 127, 1.0, seed=0))
        b = u.astype(int)
        assert np.array_equal(np.unique(b), [-1, 1])
        for lag in range(127):
            corr = int(np.sum(b * np.roll(b, lag)))
            assert corr == (127 if lag == 0 else -1), lag

    def test_deterministic_and_seed_sensitive(self):
        a = generate_signal(SignalSpec("prbs", 64, 1.0, seed=7))
        b = generate_signal(SignalSpec("prbs", 64, 1.0, seed=7))
        np.testing.assert_array_equal(a, b)
        starts = {tuple(generate_signal(SignalSpec("prbs", 16, 1.0, seed=s))) for s in range(10)}
        assert len(starts) > 1

    def test_zero_length(self):
        assert generate_signal(SignalSpec("prbs", 0, 1.0, seed=0)).size == 0


class TestGaussian:
    def test_moments(self):
        u = generate_signal(SignalSpec("gaussian", 20000, 3.0, seed=2))
        assert abs(u.mean()) < 4 * 3.0 / np.sqrt(20000)
        assert 2.9 < u.std() < 3.1

    def test_deterministic_per_seed(self):
        a = generate_signal(SignalSpec("gaussian", 50, 1.0, seed=9))
        b = generate_signal(SignalSpec("gaussian", 50, 1.0, seed=9))
        c = generate_signal(SignalSpec("gaussian", 50, 1.0, seed=10))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SignalSpec("uniform", 10)
        with pytest.raises(ValueError):
            SignalSpec("prbs", -1)
        with pytest.raises(ValueError):
            SignalSpec("prbs", 10, scale=0.0)


def conv_oracle(g, u):
    # Direct double loop of y_t = sum_k g_k u_{t-k} with u at rest.
    y = np.zeros(len(u))
    for t in range(len(u)):
        for k in range(len(g)):
            if 0 <= t - k:
                y[t] += g[k] * u[t - k]
    return y


class TestSimulate:
    def test_against_double_loop(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            g = rng.standard_normal(rng.integers(1, 9))
            u = rng.standard_normal(rng.integers(1, 30))
            np.testing.assert_allclose(simulate(g, u), conv_oracle(g, u), rtol=0, atol=1e-12)

    def test_output_length_matches_input(self):
        y = simulate(np.ones(10), np.ones(4))
        assert y.shape == (4,)
        np.testing.assert_array_equal(y, [1.0, 2.0, 3.0, 4.0])

    def test_at_rest_start(self):
        g = np.array([2.0, 5.0])
        u = np.array([3.0, 0.0, 0.0])
        # y_0 sees only u_0; nothing before time zero leaks in.
        np.testing.assert_array_equal(simulate(g, u), [6.0, 15.0, 0.0])

    def test_empty_input(self):
        assert simulate(np.array([1.0, 2.0]), np.array([])).size == 0

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=20),
        st.floats(min_value=-3, max_value=3, allow_nan=False),
        st.floats(min_value=-3, max_value=3, allow_nan=False),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_linearity(self, n_g, n, a, b, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(n_g)
        u1 = rng.standard_normal(n)
        u2 = rng.standard_normal(n)
        lhs = simulate(g, a * u1 + b * u2)
        rhs = a * simulate(g, u1) + b * simulate(g, u2)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + np.abs(rhs).max()))


class TestDisturb:
    def test_returns_signal_and_disturbance(self):
        u = np.ones(127)
        v, d = disturb(u, 0.1, seed=3)
        np.testing.assert_array_equal(v, u + d)
        # Sample standard deviation lands in a generous chi band.
        assert 0.07 < d.std() < 0.13

    def test_zero_sigma(self):
        u = np.arange(5.0)
        v, d = disturb(u, 0.0, seed=1)
        np.testing.assert_array_equal(v, u)
        np.testing.assert_array_equal(d, np.zeros(5))

    def test_deterministic(self):
        u = np.zeros(20)
        _, d1 = disturb(u, 1.0, seed=5)
        _, d2 = disturb(u, 1.0, seed=5)
        _, d3 = disturb(u, 1.0, seed=6)
        np.testing.assert_array_equal(d1, d2)
        assert not np.array_equal(d1, d3)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            disturb(np.ones(3), -0.1, seed=0)
