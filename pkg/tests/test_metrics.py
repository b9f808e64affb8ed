"""Fit percentages and the error decomposition."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regkit.metrics import bias_var_mse, fit_w, r_squared


class TestFitW:
    def test_perfect_estimate_scores_100(self):
        g = np.array([1.0, -2.0, 0.5])
        assert fit_w(g, g) == pytest.approx(100.0)
        assert r_squared(g, g) == pytest.approx(100.0)

    def test_mean_predictor_scores_zero(self):
        g = np.array([1.0, 2.0, 6.0])
        flat = np.full(3, g.mean())
        assert fit_w(g, flat) == pytest.approx(0.0, abs=1e-12)
        assert r_squared(g, flat) == pytest.approx(0.0, abs=1e-12)

    def test_hand_rolled_value(self):
        g = np.array([0.0, 2.0])
        ghat = np.array([1.0, 2.0])
        # Error norm 1, spread norm sqrt(2): W = 100 (1 - 1/sqrt(2)).
        expect = 100.0 * (1.0 - 1.0 / np.sqrt(2.0))
        assert fit_w(g, ghat) == pytest.approx(expect, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=2, max_value=30), st.integers(min_value=0, max_value=2**31 - 1))
    def test_both_formulas_agree(self, n, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(n)
        if np.ptp(g) == 0.0:
            return
        ghat = g + rng.standard_normal(n)
        assert fit_w(g, ghat) == pytest.approx(r_squared(g, ghat), rel=1e-10, abs=1e-10)

    def test_worse_estimates_score_lower(self):
        rng = np.random.default_rng(1)
        g = rng.standard_normal(10)
        near = g + 0.01 * rng.standard_normal(10)
        far = g + 1.0 * rng.standard_normal(10)
        assert fit_w(g, near) > fit_w(g, far)

    def test_constant_truth_rejected(self):
        with pytest.raises(ZeroDivisionError):
            fit_w(np.ones(4), np.ones(4))
        with pytest.raises(ZeroDivisionError):
            r_squared(np.zeros(3), np.ones(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fit_w(np.ones(3), np.ones(4))


class TestBiasVarMse:
    def test_single_perfect_estimate(self):
        g = np.array([1.0, 2.0])
        bias2, var, mse = bias_var_mse(g, [g])
        assert bias2 == var == mse == 0.0

    def test_symmetric_pair(self):
        # Estimates g +- eps e1: zero bias, variance eps^2 / n_g.
        g = np.array([1.0, 2.0, 3.0, 4.0])
        eps = 0.5
        e1 = np.zeros(4)
        e1[0] = eps
        bias2, var, mse = bias_var_mse(g, [g + e1, g - e1])
        assert bias2 == pytest.approx(0.0, abs=1e-15)
        assert var == pytest.approx(eps**2 / 4, rel=1e-12)
        assert mse == pytest.approx(eps**2 / 4, rel=1e-12)

    def test_pure_bias(self):
        g = np.zeros(3)
        shift = np.array([1.0, 1.0, 1.0])
        bias2, var, mse = bias_var_mse(g, [shift, shift, shift])
        assert bias2 == pytest.approx(1.0)
        assert var == pytest.approx(0.0, abs=1e-15)
        assert mse == pytest.approx(1.0)

    def test_decomposition_identity_exact(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal(6)
        ests = [g + rng.standard_normal(6) for _ in range(25)]
        bias2, var, mse = bias_var_mse(g, ests)
        # Var is defined as the exact remainder.
        assert bias2 + var == mse

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal(5)
        ests = [g + 0.3 * rng.standard_normal(5) for _ in range(40)]
        bias2, var, mse = bias_var_mse(g, ests)
        stack = np.stack(ests)
        mse_oracle = np.mean([np.sum((e - g) ** 2) for e in ests]) / 5
        bias_oracle = np.sum((stack.mean(axis=0) - g) ** 2) / 5
        var_oracle = np.mean(np.sum((stack - stack.mean(axis=0)) ** 2, axis=1)) / 5
        assert mse == pytest.approx(mse_oracle, rel=1e-12)
        assert bias2 == pytest.approx(bias_oracle, rel=1e-12)
        assert var == pytest.approx(var_oracle, rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            bias_var_mse(np.ones(3), [])
        with pytest.raises(ValueError):
            bias_var_mse(np.ones(3), [np.ones(4)])
