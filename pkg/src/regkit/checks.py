"""Numerical verification checks behind the `verify` subcommand.

Every check returns (ok, message) where the message carries the
measured worst deviation and the pinned tolerance.  `perturb` inflates
the measured deviation before comparison; the CLI uses it to prove the
failure path works.  `quick` shrinks sampling-heavy checks.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .estimators import (
    krls,
    krregls,
    regls,
    rho_from_lambda,
    rls,
    rregls,
    srls,
    srregls,
    structured_inner_ascent,
    structured_inner_max,
    worst_case_delta,
    worst_case_value,
)
from .kernels import assemble_S_eta, build_grid, sample_prior, tc_kernel
from .kernels import decompose_sample
from .lti import SignalSpec, generate_signal, impulse_response, simulate
from .regression import build_phi, ls_estimate
from .tuning import MarginalModel, TuneConfig, eb_solve, posterior_mean, reb_solve

CheckFn = Callable[..., Tuple[bool, str]]


def check_theorem1(
    trials: Optional[int] = None, seed: int = 1001, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Kernel-robust radius from rho_from_lambda reproduces the regularized fit."""
    n = trials if trials is not None else (10 if quick else 50)
    rng = np.random.default_rng(seed)
    K = tc_kernel(1.0, 0.9, 10)
    lams = (0.1, 1.0, 10.0)
    worst = 0.0
    for t in range(n):
        Phi = rng.standard_normal((30, 10))
        y = rng.standard_normal(30)
        lam = lams[t % 3]
        g_reg = regls(Phi, y, K, lam).g
        rho = rho_from_lambda(g_reg, Phi, y, K, lam)
        g_rob = krls(Phi, y, K, rho).g
        dev = np.linalg.norm(g_rob - g_reg) / np.linalg.norm(g_reg)
        worst = max(worst, float(dev))
    worst += perturb
    return worst <= 1e-6, f"max relative gap {worst:.3e} over {n} instances (tol 1e-06)"


def check_worst_case_oracle(
    trials: Optional[int] = None, seed: int = 1002, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Closed-form maximizer attains the closed-form value; samples never beat it."""
    n = trials if trials is not None else (20 if quick else 100)
    n_samples = 1000 if quick else 10_000
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    worst_excess = -np.inf
    for t in range(n):
        m = int(rng.integers(2, 7))
        k = int(rng.integers(2, 7))
        a = rng.standard_normal(k)
        b = rng.standard_normal(m)
        if t == 0:
            b = np.zeros(m)
        if t == 1:
            a = np.zeros(k)
        U, _, Vt = np.linalg.svd(rng.standard_normal((k, k)))
        R = U @ np.diag(rng.uniform(0.5, 2.0, size=k)) @ Vt
        rho = float(rng.uniform(0.1, 2.0))
        value = worst_case_value(a, b, R, rho)
        wc = worst_case_delta(a, b, R, rho)
        achieved = float(np.linalg.norm(wc.delta @ a + b))
        if not wc.degenerate:
            worst_gap = max(worst_gap, abs(achieved - value))
        G = rng.standard_normal((n_samples, m, k))
        fro = np.sqrt(np.einsum("sij,sij->s", G @ R, G @ R))
        scaled = (rho / fro)[:, None, None] * G
        vals = np.linalg.norm(scaled @ a + b[None, :], axis=1)
        worst_excess = max(worst_excess, float(vals.max() - value))
    worst_gap += perturb
    ok = worst_gap <= 1e-9 and worst_excess <= 1e-9
    return ok, (
        f"attainment gap {worst_gap:.3e}, sample excess {worst_excess:.3e} "
        f"over {n} instances (tol 1e-09)"
    )


def check_covariance_design(
    trials: Optional[int] = None, seed: int = 1003, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Sparse eta gives rank <= active poles; samples decompose back exactly."""
    draws = trials if trials is not None else (5 if quick else 20)
    rng = np.random.default_rng(seed)
    # Six angles, one radius: two real poles and four conjugate pairs.
    grid = build_grid(6, 1, 0.6, 0.9, n_g=24)
    worst_resid = 0.0
    worst_imag = 0.0
    worst_pair = 0.0
    rank_ok = True
    for i in range(draws):
        eta = np.zeros(grid.n_eta)
        k_active = int(rng.integers(1, 4))
        idx = rng.choice(grid.n_eta, size=k_active, replace=False)
        eta[idx] = rng.uniform(0.5, 2.0, size=k_active)
        full = grid.tie_full(eta)
        S = assemble_S_eta(grid, eta)
        active = int(np.count_nonzero(full))
        svals = np.linalg.svd(S.K, compute_uv=False)
        rank = int(np.sum(svals > 1e-8 * max(svals[0], 1e-300)))
        rank_ok = rank_ok and rank <= active
        g = sample_prior(S, seed=seed + 17 * i)
        dec = decompose_sample(g, grid, eta)
        scale = max(float(np.linalg.norm(g)), 1e-300)
        worst_resid = max(worst_resid, dec.residual / scale)
        recon = grid.atoms[:, dec.active] @ dec.coeffs
        worst_imag = max(worst_imag, float(np.abs(recon.imag).max()))
        pos = {int(j): k for k, j in enumerate(dec.active)}
        for k, j in enumerate(dec.active):
            mate = int(grid.pair_map[j])
            if mate in pos and pos[mate] != k:
                worst_pair = max(
                    worst_pair,
                    float(abs(dec.coeffs[k] - np.conj(dec.coeffs[pos[mate]]))),
                )
    worst_resid += perturb
    ok = rank_ok and worst_resid <= 1e-8 and worst_imag < 1e-9 and worst_pair < 1e-9
    return ok, (
        f"rank bound {'held' if rank_ok else 'VIOLATED'}, relative residual "
        f"{worst_resid:.3e} (tol 1e-08), imaginary part {worst_imag:.3e}, "
        f"pair asymmetry {worst_pair:.3e} over {draws} draws"
    )


def _mm_instance(seed: int, n_d: int = 100, n_g: int = 30, angles: int = 8, radii: int = 5):
    rng = np.random.default_rng(seed)
    u = generate_signal(SignalSpec("gaussian", n_d, 1.0, int(rng.integers(2**31))))
    from .experiments import BENCHMARKS

    g_true = impulse_response(BENCHMARKS["bench4"], n_g)
    y = simulate(g_true, u) + 0.1 * rng.standard_normal(n_d)
    Phi = build_phi(u, n_g)
    grid = build_grid(angles, radii, 0.8, 1.0, n_g=n_g)
    sigma2 = max(float(np.sum((y - Phi @ ls_estimate(Phi, y)) ** 2)) / (n_d - n_g), 1e-6)
    return Phi, y, grid, sigma2


def check_mm_monotonicity(
    trials: Optional[int] = None, seed: int = 1004, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Objective trace never increases; the surrogate majorizes and is tight."""
    pairs = trials if trials is not None else (20 if quick else 100)
    Phi, y, grid, sigma2 = _mm_instance(seed)
    worst_rise = -np.inf
    for lam in (0.0, 1.0, 10.0):
        res = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=lam, mm_iters=5))
        trace = np.asarray(res.trace)
        worst_rise = max(worst_rise, float(np.max(np.diff(trace))) if trace.size > 1 else 0.0)
    model = MarginalModel(Phi, grid, sigma2, y)
    rng = np.random.default_rng(seed + 1)
    base = model.default_eta()
    scale = float(base.mean()) if base.size else 1.0
    lam = 1.0
    worst_major = -np.inf
    worst_tight = 0.0
    for _ in range(pairs):
        eta = scale * rng.uniform(0.0, 2.0, size=model.n_eta)
        gamma = scale * rng.uniform(1e-3, 2.0, size=model.n_eta)
        obj_eta = model.convex_part(eta, lam) - model.concave_part(eta)
        j_cross = model.surrogate(eta, gamma, lam)
        j_self = model.surrogate(eta, eta, lam)
        worst_major = max(worst_major, float(obj_eta - j_cross))
        worst_tight = max(worst_tight, float(abs(j_self - obj_eta)))
    worst_rise += perturb
    ok = worst_rise <= 1e-9 and worst_major <= 1e-9 and worst_tight <= 1e-9
    return ok, (
        f"max objective rise {worst_rise:.3e}, majorization slack {worst_major:.3e}, "
        f"tightness gap {worst_tight:.3e} over {pairs} pairs (tol 1e-09)"
    )


def check_gradients(
    trials: Optional[int] = None, seed: int = 1005, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Analytic gradients of both objective halves against central differences."""
    points = trials if trials is not None else (5 if quick else 20)
    Phi, y, grid, sigma2 = _mm_instance(seed, n_d=40, n_g=12, angles=4, radii=3)
    model = MarginalModel(Phi, grid, sigma2, y)
    rng = np.random.default_rng(seed + 2)
    base = model.default_eta()
    scale = max(float(base.mean()), 1e-6)
    lam = 0.7
    worst = 0.0
    for _ in range(points):
        eta = scale * rng.uniform(0.2, 2.0, size=model.n_eta)
        for grad_fn, val_fn in (
            (lambda e: model.grad_convex(e, lam), lambda e: model.convex_part(e, lam)),
            (model.grad_concave, model.concave_part),
        ):
            analytic = grad_fn(eta)
            fd = np.empty_like(analytic)
            for i in range(eta.size):
                # Step balances truncation against roundoff in the half-
                # log-det evaluations; 1e-5 relative steps sit on the noisy
                # side of the central-difference V-curve here.
                h = 1e-4 * max(abs(eta[i]), scale)
                up = eta.copy()
                dn = eta.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (val_fn(up) - val_fn(dn)) / (2.0 * h)
            denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-300)
            worst = max(worst, float(np.linalg.norm(analytic - fd) / denom))
    worst += perturb
    return worst <= 1e-5, f"max relative gradient error {worst:.3e} at {points} points (tol 1e-05)"


def check_reductions(
    trials: Optional[int] = None, seed: int = 1006, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Zero-radius robust fits match their nominal counterparts; EB identities hold."""
    rng = np.random.default_rng(seed)
    n_d, n_g = 25, 8
    Phi = rng.standard_normal((n_d, n_g))
    y = rng.standard_normal(n_d)
    K = tc_kernel(1.0, 0.85, n_g)
    lam = 0.5
    g_ls = ls_estimate(Phi, y)
    g_reg = regls(Phi, y, K, lam).g
    devs = {}
    devs["rls"] = np.linalg.norm(rls(Phi, y, 0.0).g - g_ls) / np.linalg.norm(g_ls)
    devs["krls"] = np.linalg.norm(krls(Phi, y, K, 0.0).g - g_ls) / np.linalg.norm(g_ls)
    devs["srls"] = np.linalg.norm(srls(Phi, y, 0.0).g - g_ls) / np.linalg.norm(g_ls)
    devs["rregls"] = np.linalg.norm(rregls(Phi, y, K, 0.0, lam).g - g_reg) / np.linalg.norm(g_reg)
    devs["krregls"] = np.linalg.norm(krregls(Phi, y, K, 0.0, lam).g - g_reg) / np.linalg.norm(
        g_reg
    )
    devs["srregls"] = np.linalg.norm(srregls(Phi, y, K, 0.0, lam).g - g_reg) / np.linalg.norm(
        g_reg
    )

    Phi_m, y_m, grid, sigma2 = _mm_instance(seed + 3, n_d=40, n_g=12, angles=4, radii=3)
    res_reb = reb_solve(Phi_m, y_m, grid, sigma2, TuneConfig(lam=0.0, mm_iters=3))
    res_eb = eb_solve(Phi_m, y_m, grid, sigma2, TuneConfig(mm_iters=3))
    devs["reb_eb"] = float(
        np.linalg.norm(res_reb.eta - res_eb.eta) / max(np.linalg.norm(res_eb.eta), 1e-300)
    )

    A = rng.standard_normal((n_g, n_g))
    from .kernels import KernelMatrix

    S = KernelMatrix(A @ A.T + 0.5 * np.eye(n_g))
    sigma2_p = 0.3
    g_post = posterior_mean(Phi, y, S, sigma2_p)
    g_reg_s = regls(Phi, y, S, sigma2_p).g
    devs["posterior"] = np.linalg.norm(g_post - g_reg_s) / np.linalg.norm(g_reg_s)

    worst = max(float(v) for v in devs.values()) + perturb
    detail = ", ".join(f"{k}={float(v):.2e}" for k, v in devs.items())
    return worst <= 1e-8, f"max relative gap {worst:.3e} (tol 1e-08): {detail}"


def check_structured_inner(
    trials: Optional[int] = None, seed: int = 1007, perturb: float = 0.0, quick: bool = False
) -> Tuple[bool, str]:
    """Secular-equation value against boundary sampling plus ascent polish."""
    instances = trials if trials is not None else (5 if quick else 20)
    n_samples = 10_000 if quick else 1_000_000
    rng = np.random.default_rng(seed)
    n_g, n_d = 3, 5
    worst_rel = 0.0
    worst_below = -np.inf
    for t in range(instances):
        g = rng.standard_normal(n_g)
        Psi = rng.standard_normal((n_d, n_g))
        y = rng.standard_normal(n_d)
        if t == 0:
            y = Psi @ g  # zero nominal residual
        rho = float(rng.uniform(0.3, 2.0))
        secular = structured_inner_max(g, Psi, y, rho).value
        r = y - Psi @ g
        col = np.zeros(n_d)
        col[: min(n_g, n_d)] = g[: min(n_g, n_d)]
        import scipy.linalg

        M = scipy.linalg.toeplitz(col, np.r_[col[0], np.zeros(n_d - 1)])
        Z = rng.standard_normal((n_samples, n_d))
        Z *= rho / np.linalg.norm(Z, axis=1)[:, None]
        vals = np.sum((r[None, :] + Z @ M.T) ** 2, axis=1)
        oracle = float(vals.max())
        oracle = max(oracle, structured_inner_ascent(g, Psi, y, rho, seed=seed + t).value)
        scale = max(oracle, 1e-300)
        worst_rel = max(worst_rel, abs(secular - oracle) / scale)
        worst_below = max(worst_below, (oracle - secular) / max(1.0, oracle))
    worst_rel += perturb
    ok = worst_rel <= 1e-3 and worst_below <= 1e-6
    return ok, (
        f"max relative gap {worst_rel:.3e} (tol 1e-03), max shortfall "
        f"{worst_below:.3e} (tol 1e-06) over {instances} instances"
    )


CHECKS: Dict[str, CheckFn] = {
    "theorem1": check_theorem1,
    "worstcase": check_worst_case_oracle,
    "covariance": check_covariance_design,
    "mm": check_mm_monotonicity,
    "gradients": check_gradients,
    "reductions": check_reductions,
    "structured": check_structured_inner,
}
