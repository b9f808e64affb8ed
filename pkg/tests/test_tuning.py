"""Marginal-likelihood machinery, hyperparameter tuning, and model selection."""

import numpy as np
import pytest
import scipy.linalg

from regkit.errors import InsufficientDataError
from regkit.estimators import regls
from regkit.kernels import KernelMatrix, assemble_S_eta, build_grid, sample_prior, tc_kernel
from regkit.lti import SignalSpec, generate_signal, simulate
from regkit.regression import Dataset, build_phi, ls_estimate
from regkit.tuning import (
    MarginalModel,
    TuneConfig,
    cross_validate,
    eb_solve,
    estimate_noise_var,
    posterior_mean,
    reb_solve,
    tune_tc_kernel,
)


def make_model(seed, n_d=50, n_g=14, angles=4, radii=3, sigma2=0.02):
    rng = np.random.default_rng(seed)
    grid = build_grid(angles, radii, 0.5, 0.9, n_g=n_g)
    u = rng.standard_normal(n_d)
    Phi = build_phi(u, n_g)
    eta_true = np.zeros(grid.n_eta)
    eta_true[rng.choice(grid.n_eta, 2, replace=False)] = [1.0, 0.4]
    g = sample_prior(assemble_S_eta(grid, eta_true), seed=seed)
    y = Phi @ g + np.sqrt(sigma2) * rng.standard_normal(n_d)
    return MarginalModel(Phi, grid, sigma2, y), Phi, y, grid, sigma2


def dense_objective(Phi, grid, sigma2, y, eta, lam):
    # Assemble the covariance the slow way, straight from the tied prior.
    S = assemble_S_eta(grid, eta).K
    Sigma = sigma2 * np.eye(y.size) + Phi @ S @ Phi.T
    sign, logdet = np.linalg.slogdet(Sigma)
    assert sign > 0
    return 0.5 * float(y @ np.linalg.solve(Sigma, y)) + 0.5 * logdet + lam * eta.sum()


class TestMarginalModel:
    def test_objective_matches_dense_assembly(self):
        model, Phi, y, grid, sigma2 = make_model(0)
        rng = np.random.default_rng(1)
        for lam in (0.0, 0.7):
            for _ in range(5):
                eta = rng.uniform(0, 2, model.n_eta)
                dense = dense_objective(Phi, grid, sigma2, y, eta, lam)
                assert model.map_objective(eta, lam) == pytest.approx(dense, rel=1e-9)

    def test_objective_splits_into_parts(self):
        model, *_ = make_model(2)
        rng = np.random.default_rng(3)
        eta = rng.uniform(0, 1, model.n_eta)
        lam = 0.4
        assert model.map_objective(eta, lam) == pytest.approx(
            model.convex_part(eta, lam) - model.concave_part(eta), rel=1e-12
        )

    def test_gradients_against_central_differences(self):
        model, *_ = make_model(4, n_d=35, n_g=10)
        rng = np.random.default_rng(5)
        scale = max(float(model.default_eta().mean()), 1e-6)
        lam = 0.7
        for _ in range(5):
            eta = scale * rng.uniform(0.2, 2.0, model.n_eta)
            for grad_fn, val_fn in (
                (lambda e: model.grad_convex(e, lam), lambda e: model.convex_part(e, lam)),
                (model.grad_concave, model.concave_part),
            ):
                analytic = grad_fn(eta)
                fd = np.empty_like(analytic)
                for i in range(eta.size):
                    h = 1e-4 * max(abs(eta[i]), scale)
                    up, dn = eta.copy(), eta.copy()
                    up[i] += h
                    dn[i] -= h
                    fd[i] = (val_fn(up) - val_fn(dn)) / (2 * h)
                denom = max(np.linalg.norm(analytic), np.linalg.norm(fd))
                assert np.linalg.norm(analytic - fd) <= 1e-5 * denom

    def test_surrogate_majorizes_and_is_tight(self):
        model, *_ = make_model(6)
        rng = np.random.default_rng(7)
        lam = 0.3
        for _ in range(20):
            eta = rng.uniform(0, 1.5, model.n_eta)
            gamma = rng.uniform(0, 1.5, model.n_eta)
            J = model.surrogate(eta, gamma, lam)
            obj = model.map_objective(eta, lam)
            assert J >= obj - 1e-9 * max(1.0, abs(obj))
            tight = model.surrogate(eta, eta, lam)
            assert tight == pytest.approx(model.map_objective(eta, lam), rel=1e-10)

    def test_input_validation(self):
        model, Phi, y, grid, sigma2 = make_model(8)
        with pytest.raises(ValueError):
            model.convex_part(-np.ones(model.n_eta), 0.0)
        with pytest.raises(ValueError):
            model.concave_part(np.ones(model.n_eta + 1))
        with pytest.raises(ValueError):
            MarginalModel(Phi, grid, 0.0, y)


class TestRebSolve:
    def test_trace_never_increases(self):
        model, Phi, y, grid, sigma2 = make_model(9)
        for lam in (0.0, 1.0, 10.0):
            out = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=lam, mm_iters=6))
            trace = np.array(out.trace)
            assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, np.abs(trace[:-1])))
            assert out.objective == pytest.approx(trace[-1])
            assert np.all(out.eta >= 0)

    def test_eb_is_zero_weight_case(self):
        model, Phi, y, grid, sigma2 = make_model(10)
        cfg = TuneConfig(lam=3.0, mm_iters=4)
        a = eb_solve(Phi, y, grid, sigma2, cfg)
        b = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=0.0, mm_iters=4))
        np.testing.assert_array_equal(a.eta, b.eta)

    def test_sparsity_pressure_from_weight(self):
        # Aggregate effect across seeds: heavier l1 weight cannot make the
        # support larger on average.
        counts = {0.0: 0, 1.0: 0, 10.0: 0}
        for seed in range(8):
            model, Phi, y, grid, sigma2 = make_model(100 + seed, n_d=40, n_g=10)
            for lam in counts:
                out = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=lam, mm_iters=5))
                thresh = 1e-6 * max(float(out.eta.max()), 1e-300)
                counts[lam] += int(np.sum(out.eta > thresh))
        assert counts[10.0] <= counts[1.0] <= counts[0.0]

    def test_single_atom_recovery(self):
        # Clean data from one atom: its weight dominates the tuned prior.
        grid = build_grid(4, 2, 0.5, 0.9, n_g=20)
        rng = np.random.default_rng(11)
        u = rng.standard_normal(300)
        Phi = build_phi(u, 20)
        true_idx = 2
        eta_true = np.zeros(grid.n_eta)
        eta_true[true_idx] = 1.0
        g = sample_prior(assemble_S_eta(grid, eta_true), seed=5)
        y = Phi @ g + 0.01 * rng.standard_normal(300)
        out = eb_solve(Phi, y, grid, 1e-4, TuneConfig(mm_iters=10))
        assert int(np.argmax(out.eta)) == true_idx

    def test_custom_start_and_validation(self):
        model, Phi, y, grid, sigma2 = make_model(12)
        eta0 = np.full(model.n_eta, 0.5)
        out = reb_solve(Phi, y, grid, sigma2, TuneConfig(eta0=eta0, mm_iters=2))
        assert out.iterations <= 2
        with pytest.raises(ValueError):
            reb_solve(Phi, y, grid, sigma2, TuneConfig(eta0=np.ones(3)))


class TestNoiseVariance:
    def test_unbiased_band(self):
        rng = np.random.default_rng(13)
        sigma2 = 0.01
        u = rng.standard_normal(150)
        Phi = build_phi(u, 50)
        g = rng.standard_normal(50) * 0.6 ** np.arange(50)
        y = Phi @ g + np.sqrt(sigma2) * rng.standard_normal(150)
        est = estimate_noise_var(Phi, y)
        assert 0.005 < est < 0.02

    def test_requires_tall_regressor(self):
        rng = np.random.default_rng(14)
        Phi = rng.standard_normal((5, 5))
        with pytest.raises(InsufficientDataError):
            estimate_noise_var(Phi, np.ones(5))


class TestPosteriorMean:
    def test_equals_regularized_estimate(self):
        # Dual and primal forms of the same estimator.
        rng = np.random.default_rng(15)
        u = rng.standard_normal(40)
        Phi = build_phi(u, 8)
        y = rng.standard_normal(40)
        S = tc_kernel(1.0, 0.85, 8)
        sigma2 = 0.3
        g_dual = posterior_mean(Phi, y, S, sigma2)
        g_primal = regls(Phi, y, S, sigma2).g
        np.testing.assert_allclose(g_dual, g_primal, rtol=0, atol=1e-8)

    def test_woodbury_identity_psd_kernel(self):
        rng = np.random.default_rng(16)
        Phi = build_phi(rng.standard_normal(30), 6)
        y = rng.standard_normal(30)
        A = rng.standard_normal((6, 2))
        S = KernelMatrix(A @ A.T)
        sigma2 = 0.5
        g = posterior_mean(Phi, y, S, sigma2)
        # Dense oracle straight from the definition.
        Sigma = Phi @ S.K @ Phi.T + sigma2 * np.eye(30)
        oracle = S.K @ Phi.T @ np.linalg.solve(Sigma, y)
        np.testing.assert_allclose(g, oracle, rtol=0, atol=1e-10)

    def test_sigma2_validation(self):
        with pytest.raises(ValueError):
            posterior_mean(np.eye(3), np.ones(3), tc_kernel(1.0, 0.5, 3), 0.0)


def ridge_fitter(P, yy, c):
    n = P.shape[1]
    return np.linalg.solve(P.T @ P + c * np.eye(n), P.T @ yy)


class TestCrossValidate:
    def make_dataset(self, seed, n_d=60, n_g=5, noise=0.5):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(n_d)
        g = rng.standard_normal(n_g)
        y = simulate(g, u) + noise * rng.standard_normal(n_d)
        return Dataset(u, y, n_g)

    def test_chronological_split(self):
        ds = self.make_dataset(17)
        out = cross_validate(ds, [1.0], ridge_fitter)
        assert out.split == int(0.7 * 60)
        assert out.best == 1.0
        assert out.scores.shape == (1,)

    def test_scores_are_holdout_residuals(self):
        ds = self.make_dataset(18)
        out = cross_validate(ds, [0.1, 10.0], ridge_fitter)
        Phi = build_phi(ds.u, ds.n_g)
        split = out.split
        for i, cand in enumerate([0.1, 10.0]):
            g = ridge_fitter(Phi[:split], ds.y[:split], cand)
            r = ds.y[split:] - Phi[split:] @ g
            assert out.scores[i] == pytest.approx(float(r @ r), rel=1e-12)

    def test_tie_breaks_to_smaller(self):
        ds = self.make_dataset(19)
        # Same fit for both candidates forces a tie.
        out = cross_validate(ds, [5.0, 2.0], lambda P, yy, c: ls_estimate(P, yy))
        assert out.best == 2.0

    def test_picks_genuinely_better_candidate(self):
        # Pure noise: heavy shrinkage wins against no shrinkage.
        rng = np.random.default_rng(20)
        ds = Dataset(rng.standard_normal(80), rng.standard_normal(80), 8)
        out = cross_validate(ds, [1e-8, 1e6], ridge_fitter)
        assert out.best == 1e6

    def test_too_small_to_split(self):
        ds = Dataset(np.ones(1), np.ones(1), 1)
        with pytest.raises(InsufficientDataError):
            cross_validate(ds, [1.0], ridge_fitter)

    def test_empty_candidates(self):
        ds = self.make_dataset(21)
        with pytest.raises(ValueError):
            cross_validate(ds, [], ridge_fitter)


class TestTuneTcKernel:
    def test_selection_minimizes_grid_objective(self):
        rng = np.random.default_rng(22)
        u = generate_signal(SignalSpec("prbs", 80, 1.0, seed=3))
        Phi = build_phi(u, 12)
        g = 0.7 ** np.arange(12)
        y = Phi @ g + 0.1 * rng.standard_normal(80)
        sigma2 = 0.01
        sel = tune_tc_kernel(Phi, y, sigma2)
        assert 1e-2 <= sel.c <= 1e2
        assert 0.5 <= sel.alpha <= 0.99
        # The reported objective is the marginal cost of the chosen pair.
        K = tc_kernel(sel.c, sel.alpha, 12)
        Sigma = Phi @ K.K @ Phi.T + sigma2 * np.eye(80)
        L = np.linalg.cholesky(Sigma)
        v = scipy.linalg.solve_triangular(L, y, lower=True)
        expect = 0.5 * float(v @ v) + float(np.sum(np.log(np.diag(L))))
        assert sel.objective == pytest.approx(expect, rel=1e-9)

    def test_respects_custom_grids(self):
        rng = np.random.default_rng(23)
        Phi = build_phi(rng.standard_normal(40), 6)
        y = rng.standard_normal(40)
        sel = tune_tc_kernel(Phi, y, 0.1, c_grid=np.array([2.0]), alpha_grid=np.array([0.6]))
        assert sel.c == 2.0 and sel.alpha == 0.6
