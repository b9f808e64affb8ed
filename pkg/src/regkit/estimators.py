"""Least-squares, regularized, and robust FIR estimators.

The robust estimators minimize worst-case residuals over three
perturbation families of the regressor: Frobenius balls, kernel-weighted
balls (tr(Delta K Delta^T) <= rho^2), and structured Toeplitz balls
whose diagonals share one coefficient vector delta with ||delta|| <= rho.
Unstructured families reduce to a closed penalty form ||Psi g - y|| +
rho * ||W g|| and are solved on a one-dimensional path of ridge
solutions; the structured family needs an inner trust-region-style
maximization plus an outer subgradient loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .errors import InfiniteRhoError
from .kernels import AtomicDictionary, KernelMatrix
from .regression import build_phi, ls_estimate


@dataclass(frozen=True)
class UncertaintySpec:
    """Perturbation family: kind in {standard, structured, kernel_based}."""

    kind: str
    rho: float
    kernel: Optional[KernelMatrix] = None

    def __post_init__(self) -> None:
        if self.kind not in ("standard", "structured", "kernel_based"):
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.kind == "kernel_based":
            if self.kernel is None:
                raise ValueError("kernel_based uncertainty requires a kernel")
            if not self.kernel.is_pd:
                raise ValueError("kernel_based uncertainty requires a PD kernel")


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 500
    tol: float = 1e-10
    step_scale: float = 1.0
    warm_start: bool = True

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class EstimateResult:
    """Solver output: estimate, final objective, and diagnostics."""

    method: str
    g: np.ndarray
    objective: float
    iterations: int
    certificate: Optional[float] = None
    converged: bool = True

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "g": [float(v) for v in self.g],
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "certificate": None if self.certificate is None else float(self.certificate),
            "converged": bool(self.converged),
        }


# ---------------------------------------------------------------------------
# Closed forms


def regls(Phi: np.ndarray, y: np.ndarray, K: KernelMatrix, lam: float) -> EstimateResult:
    """Regularized LS: g = (Phi^T Phi + lam * K^-1)^-1 Phi^T y.

    Minimizes ||y - Phi g||^2 + lam * g^T K^-1 g through one symmetric
    positive-definite solve.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    A = Phi.T @ Phi + lam * K.inv_matrix()
    cho = scipy.linalg.cho_factor(A)
    g = scipy.linalg.cho_solve(cho, Phi.T @ y)
    resid = y - Phi @ g
    obj = float(resid @ resid + lam * K.inv_quad(g))
    return EstimateResult(method="regls", g=g, objective=obj, iterations=1)


def worst_case_value(a: np.ndarray, b: np.ndarray, R: np.ndarray, rho: float) -> float:
    """max ||Delta a + b|| over ||Delta R||_F <= rho equals ||b|| + rho ||R^-1 a||."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    Ra = np.linalg.solve(np.asarray(R, dtype=float), a)
    return float(np.linalg.norm(b) + rho * np.linalg.norm(Ra))


class WorstCase(NamedTuple):
    delta: np.ndarray
    degenerate: bool


def worst_case_delta(a: np.ndarray, b: np.ndarray, R: np.ndarray, rho: float) -> WorstCase:
    """Maximizer of ||Delta a + b|| over the ball ||Delta R||_F <= rho.

    Delta* = rho * b (R^-1 a)^T R^-1 / (||b|| ||R^-1 a||); for b = 0 any
    unit direction works and the first basis vector is used.  For a = 0
    every feasible Delta is optimal; a zero matrix is returned with the
    degenerate flag set.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.linalg.norm(a) == 0.0:
        return WorstCase(np.zeros((b.size, a.size)), True)
    Rinv_a = np.linalg.solve(R, a)
    direction = b
    if np.linalg.norm(b) == 0.0:
        direction = np.zeros(b.size if b.size else 1)
        direction[0] = 1.0
    lhs = direction / np.linalg.norm(direction)
    rhs = scipy.linalg.solve(R.T, Rinv_a) / np.linalg.norm(Rinv_a)
    return WorstCase(rho * np.outer(lhs, rhs), False)


def rho_from_lambda(
    g_reg: np.ndarray, Phi: np.ndarray, y: np.ndarray, K: KernelMatrix, lam: float
) -> float:
    """Radius making the kernel-robust problem reproduce the regularized one.

    rho = lam * sqrt(g^T K^-1 g) / ||Phi g - y|| evaluated at g = g_reg.
    """
    g_reg = np.asarray(g_reg, dtype=float)
    resid = float(np.linalg.norm(np.asarray(Phi) @ g_reg - np.asarray(y)))
    if resid == 0.0:
        raise InfiniteRhoError("zero residual: equivalent radius is unbounded")
    return lam * np.sqrt(K.inv_quad(g_reg)) / resid


# ---------------------------------------------------------------------------
# Unstructured robust family: min ||Psi g - y|| + rho ||W g|| on the mu-path


class _RidgePath:
    """Ridge solutions h(mu) = (A + mu I)^-1 b for A = Psi^T Psi, b = Psi^T y.

    One eigendecomposition makes every mu-solve O(n); used by the
    fixed-point iteration on the optimality multiplier mu.
    """

    def __init__(self, Psi: np.ndarray, y: np.ndarray):
        A = Psi.T @ Psi
        d, V = np.linalg.eigh(A)
        self.d = np.clip(d, 0.0, None)
        self.V = V
        self.p = V.T @ (Psi.T @ y)
        self.y_norm2 = float(y @ y)

    def coeffs(self, mu: float) -> np.ndarray:
        denom = self.d + mu
        safe = denom > 1e-300
        out = np.zeros_like(self.p)
        out[safe] = self.p[safe] / denom[safe]
        return out

    def h(self, mu: float) -> np.ndarray:
        return self.V @ self.coeffs(mu)

    def h_norm(self, mu: float) -> float:
        return float(np.linalg.norm(self.coeffs(mu)))

    def resid_norm(self, mu: float) -> float:
        c = self.coeffs(mu)
        val = self.y_norm2 - 2.0 * float(self.p @ c) + float(self.d @ (c * c))
        return float(np.sqrt(max(val, 0.0)))


def _penalty_path_solve(
    Psi_t: np.ndarray, y: np.ndarray, rho: float, lam: float, opts: SolverOptions
) -> Tuple[np.ndarray, float, int, bool]:
    """min ( ||Psi_t h - y|| + rho ||h|| )^2 + lam ||h||^2 in whitened coordinates.

    Stationarity gives h = (Psi_t^T Psi_t + mu I)^-1 Psi_t^T y with
    mu = rho * s / n + lam * s / (s + rho * n), where s and n are the
    residual and solution norms at h(mu); solved by fixed point from
    mu_0 = rho with a bisection fallback on the scalar residual.
    With lam = 0 this is exactly min ||Psi_t h - y|| + rho ||h||.
    Returns (h, mu, iterations, converged).
    """
    y = np.asarray(y, dtype=float)
    n_g = Psi_t.shape[1]
    y_norm = float(np.linalg.norm(y))
    b_norm = float(np.linalg.norm(Psi_t.T @ y))
    if y_norm == 0.0:
        return np.zeros(n_g), 0.0, 0, True
    # Zero is optimal iff rho >= ||Psi_t^T y|| / ||y|| (subgradient at 0);
    # the lam term never moves the corner since its gradient vanishes there.
    if rho >= b_norm / y_norm and rho > 0:
        return np.zeros(n_g), float("inf"), 0, True

    path = _RidgePath(Psi_t, y)

    def mu_update(mu: float) -> Optional[float]:
        n = path.h_norm(mu)
        if n == 0.0:
            return None
        s = path.resid_norm(mu)
        nxt = rho * s / n
        if lam > 0:
            nxt += lam * s / (s + rho * n) if (s + rho * n) > 0 else lam
        return nxt

    mu = float(rho)
    converged = False
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        nxt = mu_update(mu)
        if nxt is None:
            return np.zeros(n_g), mu, iters, True
        if abs(nxt - mu) <= 1e-10 * (1.0 + mu):
            mu = nxt
            converged = True
            break
        mu = nxt

    if not converged:
        # Bisection fallback on the scalar optimality residual.
        def gap(m: float) -> float:
            upd = mu_update(m)
            return m - (upd if upd is not None else 0.0)

        hi = max(mu, rho, 1.0)
        for _ in range(200):
            if gap(hi) > 0:
                break
            hi *= 2.0
        lo = 0.0
        if gap(lo) < 0 < gap(hi):
            mu = float(brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15))
            converged = True
        else:
            mu = max(mu, 0.0)

    return path.h(mu), mu, iters, converged


def _penalty_objective(Psi: np.ndarray, y: np.ndarray, g: np.ndarray,
                       rho: float, wnorm: float) -> float:
    return float(np.linalg.norm(y - Psi @ g) + rho * wnorm)


def krls(
    Psi: np.ndarray,
    y: np.ndarray,
    K: KernelMatrix,
    rho: float,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Kernel-ball robust LS: min_g max over tr(Delta K Delta^T) <= rho^2.

    Equivalent penalty form min ||Psi g - y|| + rho ||R^-1 g|| with
    K = R R^T, solved on the whitened ridge path.  The certificate is the
    final multiplier mu.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    opts = opts or SolverOptions(max_iters=200)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)
    h, mu, iters, ok = _penalty_path_solve(Psi @ K.R, y, rho, 0.0, opts)
    g = K.R @ h
    obj = _penalty_objective(Psi, y, g, rho, float(np.linalg.norm(h)))
    return EstimateResult("krls", g, obj, iters, certificate=mu, converged=ok)


def rls(
    Psi: np.ndarray, y: np.ndarray, rho: float, opts: Optional[SolverOptions] = None
) -> EstimateResult:
    """Frobenius-ball robust LS: min ||Psi g - y|| + rho ||g||."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    opts = opts or SolverOptions(max_iters=200)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)
    g, mu, iters, ok = _penalty_path_solve(Psi, y, rho, 0.0, opts)
    obj = _penalty_objective(Psi, y, g, rho, float(np.linalg.norm(g)))
    return EstimateResult("rls", g, obj, iters, certificate=mu, converged=ok)


# ---------------------------------------------------------------------------
# Robust + regularized: (||Psi g - y|| + rho ||W g||)^2 + lam g^T K^-1 g


def _descent(
    obj_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    g0: np.ndarray,
    opts: SolverOptions,
    step0: float,
) -> Tuple[np.ndarray, float, int, bool]:
    """Accelerated gradient descent with Armijo backtracking and restart."""
    x = g0.copy()
    g_prev = g0.copy()
    f_x, grad = obj_grad(x)
    best_f, best_g = f_x, x.copy()
    step = step0
    stall = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        gnorm2 = float(grad @ grad)
        if gnorm2 <= (opts.tol * max(1.0, abs(f_x))) ** 2:
            return best_g, best_f, it, True
        # Armijo backtracking on the plain gradient step.
        while True:
            cand = x - step * grad
            f_cand, grad_cand = obj_grad(cand)
            if f_cand <= f_x - 0.5 * step * gnorm2 or step < 1e-18:
                break
            step *= 0.5
        # Nesterov extrapolation with function-value restart.
        momentum = (it - 1.0) / (it + 2.0)
        x_next = cand + momentum * (cand - g_prev)
        f_next, grad_next = obj_grad(x_next)
        if f_next <= f_cand:
            x, f_x, grad = x_next, f_next, grad_next
        else:
            x, f_x, grad = cand, f_cand, grad_cand
        g_prev = cand
        step *= 1.2
        if f_x < best_f - opts.tol * max(1.0, abs(best_f)):
            stall = 0
        else:
            stall += 1
        if f_x < best_f:
            best_f, best_g = f_x, x.copy()
        if stall >= 5:
            return best_g, best_f, it, True
    return best_g, best_f, it, False


def _robust_reg_solve(
    Psi: np.ndarray,
    y: np.ndarray,
    K: KernelMatrix,
    rho: float,
    lam: float,
    opts: Optional[SolverOptions],
    kernel_ball: bool,
    method: str,
) -> EstimateResult:
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    opts = opts or SolverOptions(max_iters=2000, tol=1e-12)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)

    def weighted(g: np.ndarray) -> Tuple[float, np.ndarray]:
        # Returns (||W g||, K^-1-ish gradient direction W^T W g).
        if kernel_ball:
            wg = K.solve_R(g)
            return float(np.linalg.norm(wg)), K.solve_inv(g)
        return float(np.linalg.norm(g)), g

    def obj_grad(g: np.ndarray) -> Tuple[float, np.ndarray]:
        resid = y - Psi @ g
        s = float(np.linalg.norm(resid))
        nw, wtw = weighted(g)
        f = (s + rho * nw) ** 2 + lam * K.inv_quad(g)
        grad = np.zeros_like(g)
        bracket = s + rho * nw
        if s > 0:
            grad += bracket * (Psi.T @ (Psi @ g - y)) / s
        if nw > 0:
            grad += bracket * rho * wtw / nw
        grad *= 2.0
        if lam > 0:
            grad += 2.0 * lam * K.solve_inv(g)
        return f, grad

    # Warm start at the rho = 0 solution of the same objective.
    if lam > 0:
        g0 = regls(Psi, y, K, lam).g
    else:
        g0 = ls_estimate(Psi, y)
    if rho == 0.0:
        f0, _ = obj_grad(g0)
        return EstimateResult(method, g0, f0, 1, converged=True)

    sigma_max = float(np.linalg.norm(Psi, 2))
    step0 = 1.0 / max(2.0 * sigma_max**2, 1e-12)
    g, f, iters, ok = _descent(obj_grad, g0, opts, step0)
    return EstimateResult(method, g, f, iters, converged=ok)


def rregls(
    Psi: np.ndarray,
    y: np.ndarray,
    K: KernelMatrix,
    rho: float,
    lam: float,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """min (||Psi g - y|| + rho ||g||)^2 + lam g^T K^-1 g."""
    return _robust_reg_solve(Psi, y, K, rho, lam, opts, kernel_ball=False, method="rregls")


def krregls(
    Psi: np.ndarray,
    y: np.ndarray,
    K: KernelMatrix,
    rho: float,
    lam: float,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """min (||Psi g - y|| + rho ||R^-1 g||)^2 + lam g^T K^-1 g, K = R R^T."""
    return _robust_reg_solve(Psi, y, K, rho, lam, opts, kernel_ball=True, method="krregls")


# ---------------------------------------------------------------------------
# Structured Toeplitz family


class InnerMax(NamedTuple):
    value: float
    delta: np.ndarray
    degenerate: bool


def _toeplitz_from(vec: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    col = np.zeros(n_rows)
    m = min(vec.size, n_rows)
    col[:m] = vec[:m]
    row = np.zeros(n_cols)
    row[0] = col[0]
    return scipy.linalg.toeplitz(col, row)


def structured_inner_max(
    g: np.ndarray, Psi: np.ndarray, y: np.ndarray, rho_s: float
) -> InnerMax:
    """max ||(y - Psi g) + M(g) delta||^2 over ||delta|| <= rho_s.

    M(g)[i, k] = g_{i-k} maps diagonal coefficients to perturbed outputs.
    The maximum sits on the boundary; the stationarity system
    (sigma I - M^T M) delta = M^T r with sigma > lambda_max(M^T M) is
    solved through one eigendecomposition and a secular root-find, with
    the orthogonal hard case (M^T r perpendicular to the top eigenspace)
    patched by a top-eigenvector component.
    """
    if rho_s < 0:
        raise ValueError(f"rho_s must be nonnegative, got {rho_s}")
    g = np.asarray(g, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n_d = y.size
    r = y - Psi @ g
    if rho_s == 0.0:
        return InnerMax(float(r @ r), np.zeros(n_d), False)
    if np.linalg.norm(g) == 0.0:
        # Objective is constant in delta.
        return InnerMax(float(r @ r), np.zeros(n_d), True)

    if not np.all(np.isfinite(g)):
        raise ValueError("g must be finite")
    M = _toeplitz_from(g, n_d, n_d)
    try:
        ev, Q = np.linalg.eigh(M.T @ M)
    except np.linalg.LinAlgError:
        return structured_inner_ascent(g, Psi, y, rho_s)
    ev = np.clip(ev, 0.0, None)
    lam_max = float(ev[-1])
    q = Q.T @ (M.T @ r)
    gaps = lam_max - ev
    top = gaps <= 1e-12 * max(lam_max, 1e-300)
    q_top = float(np.linalg.norm(q[top]))
    q_norm = float(np.linalg.norm(q))
    if not (np.isfinite(lam_max) and np.isfinite(q_norm)):
        return structured_inner_ascent(g, Psi, y, rho_s)

    def delta_norm2(tau: float) -> float:
        denom = tau + gaps
        mask = denom > 0
        return float(np.sum((q[mask] / denom[mask]) ** 2))

    if q_top > 1e-10 * max(q_norm, 1e-300) and q_norm > 0:
        # Easy case: ||delta(tau)|| sweeps (0, inf); bracket and root-find.
        tau_hi = q_norm / rho_s
        tau_lo = tau_hi
        for _ in range(2000):
            tau_lo *= 0.5
            if delta_norm2(tau_lo) > rho_s**2 or tau_lo < 1e-300:
                break
        if not delta_norm2(tau_lo) > rho_s**2:
            return structured_inner_ascent(g, Psi, y, rho_s)
        # Roots can sit ~1e-10 * tau_hi when the top component is barely
        # above the hard-case cut, so the absolute tolerance must scale
        # with the bracket rather than pin machine-zero width.
        tau = brentq(
            lambda t: delta_norm2(t) - rho_s**2,
            tau_lo,
            tau_hi,
            xtol=max(1e-280, 1e-20 * tau_hi),
            rtol=1e-15,
            maxiter=500,
        )
        coeff = np.where(tau + gaps > 0, q / (tau + gaps), 0.0)
        delta = Q @ coeff
    else:
        # Hard case: solve on the orthogonal complement, then fill radius
        # along the top eigenvector.
        coeff = np.zeros_like(q)
        nz = ~top & (gaps > 0)
        coeff[nz] = q[nz] / gaps[nz]
        norm_perp2 = float(coeff @ coeff)
        if norm_perp2 > rho_s**2:
            hi = max(q_norm / rho_s, 1.0)
            tau = brentq(
                lambda t: delta_norm2(t) - rho_s**2,
                0.0,
                hi,
                xtol=max(1e-280, 1e-20 * hi),
                rtol=1e-15,
                maxiter=500,
            )
            coeff = np.where(tau + gaps > 0, q / (tau + gaps), 0.0)
            delta = Q @ coeff
        else:
            fill = np.sqrt(max(rho_s**2 - norm_perp2, 0.0))
            delta = Q @ coeff + fill * Q[:, -1]

    perturbed = r + M @ delta
    return InnerMax(float(perturbed @ perturbed), delta, False)


def structured_inner_ascent(
    g: np.ndarray,
    Psi: np.ndarray,
    y: np.ndarray,
    rho_s: float,
    n_starts: int = 8,
    iters: int = 300,
    seed: int = 0,
) -> InnerMax:
    """Multi-start conditional-gradient oracle for the structured inner max.

    Each sweep iterates delta <- rho_s * normalize(M^T (r + M delta)),
    the unit-step Frank-Wolfe update, which never decreases a convex
    objective over the ball.  Slower and only locally certain, so it
    serves as an independent cross-check and as the fallback when the
    eigendecomposition behind the secular solve fails.
    """
    if rho_s < 0:
        raise ValueError(f"rho_s must be nonnegative, got {rho_s}")
    g = np.asarray(g, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n_d = y.size
    r = y - Psi @ g
    if rho_s == 0.0:
        return InnerMax(float(r @ r), np.zeros(n_d), False)
    if np.linalg.norm(g) == 0.0:
        return InnerMax(float(r @ r), np.zeros(n_d), True)
    M = _toeplitz_from(g, n_d, n_d)
    rng = np.random.default_rng(seed)
    starts = [M.T @ r] + [rng.standard_normal(n_d) for _ in range(n_starts - 1)]
    best_val = -np.inf
    best_delta = np.zeros(n_d)
    for start in starts:
        norm = np.linalg.norm(start)
        if norm == 0.0:
            continue
        delta = rho_s * start / norm
        for _ in range(iters):
            grad = M.T @ (r + M @ delta)
            gn = np.linalg.norm(grad)
            if gn == 0.0:
                break
            nxt = rho_s * grad / gn
            if np.linalg.norm(nxt - delta) <= 1e-15 * rho_s:
                delta = nxt
                break
            delta = nxt
        val = r + M @ delta
        val = float(val @ val)
        if val > best_val:
            best_val, best_delta = val, delta
    if not np.isfinite(best_val):
        return InnerMax(float(r @ r), np.zeros(n_d), False)
    return InnerMax(best_val, best_delta, False)


def _structured_outer(
    Psi: np.ndarray,
    y: np.ndarray,
    rho_s: float,
    K: Optional[KernelMatrix],
    lam: float,
    opts: Optional[SolverOptions],
    method: str,
) -> EstimateResult:
    opts = opts or SolverOptions(max_iters=500)
    Psi = np.asarray(Psi, dtype=float)
    y = np.asarray(y, dtype=float)
    n_g = Psi.shape[1]
    n_d = y.size

    if lam > 0:
        assert K is not None
        base = regls(Psi, y, K, lam)
        g0 = base.g
    else:
        g0 = ls_estimate(Psi, y)
    if rho_s == 0.0:
        # The inner max degenerates to the plain residual.
        if lam > 0:
            return EstimateResult(method, g0, base.objective, 1, converged=True)
        r0 = y - Psi @ g0
        return EstimateResult(method, g0, float(r0 @ r0), 1, converged=True)

    def phi_and_subgrad(g: np.ndarray) -> Tuple[float, np.ndarray]:
        inner = structured_inner_max(g, Psi, y, rho_s)
        val = inner.value
        if inner.degenerate:
            sg = -2.0 * (Psi.T @ (y - Psi @ g))
        else:
            Psi_w = Psi - _toeplitz_from(inner.delta, n_d, n_g)
            sg = -2.0 * (Psi_w.T @ (y - Psi_w @ g))
        if lam > 0:
            val += lam * K.inv_quad(g)
            sg += 2.0 * lam * K.solve_inv(g)
        return float(val), sg

    f0, sg0 = phi_and_subgrad(g0)
    best_f, best_g = f0, g0.copy()
    sg_scale = float(np.linalg.norm(sg0))
    # Natural gradient magnitude of the data term, for stationarity tests.
    grad_ref = max(2.0 * float(np.linalg.norm(Psi.T @ y)), 1.0)
    if sg_scale <= 1e-10 * grad_ref:
        return EstimateResult(method, best_g, best_f, 1, converged=True)

    # Normalized diminishing steps: the objective grows quadratically in g,
    # so raw subgradient steps can feed back and blow up.  Unit-direction
    # steps of length c/sqrt(t) bound total travel by 2c*sqrt(T) around the
    # warm start, which already sits near the minimizer.
    c = 0.1 * opts.step_scale * max(float(np.linalg.norm(g0)), 1e-8)
    g = g0.copy()
    sg = sg0
    last_improve = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = g - (c / np.sqrt(it)) * sg / max(float(np.linalg.norm(sg)), 1e-300)
        f, sg = phi_and_subgrad(g)
        if f < best_f - 1e-12 * max(1.0, abs(best_f)):
            best_f, best_g = f, g.copy()
            last_improve = it
        if np.linalg.norm(sg) <= 1e-10 * grad_ref:
            if f < best_f:
                best_f, best_g = f, g.copy()
            return EstimateResult(method, best_g, best_f, it, converged=True)
    converged = (opts.max_iters - last_improve) >= min(100, opts.max_iters // 2)
    return EstimateResult(method, best_g, best_f, it, converged=converged)


def srls(
    Psi: np.ndarray, y: np.ndarray, rho_s: float, opts: Optional[SolverOptions] = None
) -> EstimateResult:
    """Structured robust LS: min_g max over structured Toeplitz perturbations."""
    if rho_s < 0:
        raise ValueError(f"rho_s must be nonnegative, got {rho_s}")
    return _structured_outer(Psi, y, rho_s, None, 0.0, opts, "srls")


def srregls(
    Psi: np.ndarray,
    y: np.ndarray,
    K: KernelMatrix,
    rho_s: float,
    lam: float,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Structured robust LS plus the kernel penalty lam g^T K^-1 g."""
    if rho_s < 0:
        raise ValueError(f"rho_s must be nonnegative, got {rho_s}")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    return _structured_outer(Psi, y, rho_s, K, lam, opts, "srregls")


# ---------------------------------------------------------------------------
# Atomic-norm baseline


def realify_atoms(dictionary: AtomicDictionary) -> np.ndarray:
    """Real atom basis: real poles keep their atom; each conjugate pair
    (w, w*) contributes 2 Re g^w and -2 Im g^w so that real coefficient
    pairs reproduce c g^w + conj(c) g^{w*}."""
    cols = []
    for i in dictionary.independent_set:
        atom = dictionary.atoms[:, i]
        if dictionary.poles[i].imag == 0.0:
            cols.append(atom.real)
        else:
            cols.append(2.0 * atom.real)
            cols.append(-2.0 * atom.imag)
    return np.column_stack(cols)


def atom_estimate(
    Phi: np.ndarray,
    y: np.ndarray,
    dictionary: AtomicDictionary,
    weight: float,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """l1-penalized fit on the atom span.

    min_c ||y - Phi A c||^2 + weight ||c||_1 over the realified atom
    matrix A, solved by FISTA with backtracking; returns g = A c.
    """
    if weight <= 0:
        raise ValueError(f"weight must be positive, got {weight}")
    opts = opts or SolverOptions(max_iters=2000, tol=1e-12)
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    A = realify_atoms(dictionary)
    B = Phi @ A

    def f_smooth(c: np.ndarray) -> float:
        r = y - B @ c
        return float(r @ r)

    def objective(c: np.ndarray) -> float:
        return f_smooth(c) + weight * float(np.abs(c).sum())

    L = 2.0 * float(np.linalg.norm(B, 2)) ** 2
    L = max(L, 1e-12)
    c = np.zeros(B.shape[1])
    z = c.copy()
    t_acc = 1.0
    f_prev = objective(c)
    stall = 0
    it = 0
    converged = False
    for it in range(1, opts.max_iters + 1):
        grad = 2.0 * (B.T @ (B @ z - y))
        while True:
            step = 1.0 / L
            cand = z - step * grad
            cand = np.sign(cand) * np.maximum(np.abs(cand) - step * weight, 0.0)
            diff = cand - z
            if f_smooth(cand) <= f_smooth(z) + float(grad @ diff) + 0.5 * L * float(
                diff @ diff
            ) or L > 1e18:
                break
            L *= 2.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc**2))
        z = cand + ((t_acc - 1.0) / t_next) * (cand - c)
        c = cand
        t_acc = t_next
        f_cur = objective(c)
        if abs(f_prev - f_cur) <= opts.tol * max(1.0, abs(f_cur)):
            stall += 1
            if stall >= 3:
                converged = True
                break
        else:
            stall = 0
        f_prev = f_cur
    return EstimateResult(
        "atom", A @ c, objective(c), it, converged=converged or it < opts.max_iters
    )


# ---------------------------------------------------------------------------
# Family dispatch


def robust_estimate(
    Psi: np.ndarray,
    y: np.ndarray,
    spec: UncertaintySpec,
    lam: float = 0.0,
    K: Optional[KernelMatrix] = None,
    opts: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Route an uncertainty description to the matching estimator.

    lam = 0 selects the purely robust member of the family; lam > 0 the
    robust regularized one (penalty kernel K, defaulting to spec.kernel).
    """
    K_pen = K if K is not None else spec.kernel
    if spec.kind == "standard":
        if lam == 0.0:
            return rls(Psi, y, spec.rho, opts)
        if K_pen is None:
            raise ValueError("regularized estimator needs a penalty kernel")
        return rregls(Psi, y, K_pen, spec.rho, lam, opts)
    if spec.kind == "kernel_based":
        if lam == 0.0:
            return krls(Psi, y, spec.kernel, spec.rho, opts)
        return krregls(Psi, y, spec.kernel, spec.rho, lam, opts)
    if lam == 0.0:
        return srls(Psi, y, spec.rho, opts)
    if K_pen is None:
        raise ValueError("regularized estimator needs a penalty kernel")
    return srregls(Psi, y, K_pen, spec.rho, lam, opts)
