"""Fit percentages and the bias/variance/MSE decomposition."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np


def _checked(g_true: np.ndarray, g_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    g_true = np.asarray(g_true, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    if g_true.shape != g_hat.shape:
        raise ValueError(f"shape mismatch: {g_true.shape} vs {g_hat.shape}")
    if float(np.ptp(g_true)) == 0.0:
        raise ZeroDivisionError("g_true is constant; fit metrics are undefined")
    return g_true, g_hat


def fit_w(g_true: np.ndarray, g_hat: np.ndarray) -> float:
    """W = 100 * (1 - sqrt(sum (g - ghat)^2 / sum (g - mean(g))^2))."""
    g_true, g_hat = _checked(g_true, g_hat)
    num = float(np.sum((g_true - g_hat) ** 2))
    den = float(np.sum((g_true - g_true.mean()) ** 2))
    return 100.0 * (1.0 - np.sqrt(num / den))


def r_squared(g_true: np.ndarray, g_hat: np.ndarray) -> float:
    """100 * (1 - ||ghat - g|| / ||g - mean(g)||), norms unsquared."""
    g_true, g_hat = _checked(g_true, g_hat)
    num = float(np.linalg.norm(g_hat - g_true))
    den = float(np.linalg.norm(g_true - g_true.mean()))
    return 100.0 * (1.0 - num / den)


def bias_var_mse(
    g_true: np.ndarray, estimates: Sequence[np.ndarray]
) -> Tuple[float, float, float]:
    """Per-coefficient decomposition over a set of estimate vectors.

    Bias^2 = ||mean(ghat) - g||^2 / n_g, MSE = mean ||ghat - g||^2 / n_g,
    Var = MSE - Bias^2 so the identity holds exactly.
    """
    g_true = np.asarray(g_true, dtype=float)
    if len(estimates) < 1:
        raise ValueError("need at least one estimate")
    stack = np.stack([np.asarray(e, dtype=float) for e in estimates])
    if stack.shape[1:] != g_true.shape:
        raise ValueError("estimate length mismatch")
    n_g = g_true.size
    mean_est = stack.mean(axis=0)
    bias2 = float(np.sum((mean_est - g_true) ** 2)) / n_g
    mse = float(np.mean(np.sum((stack - g_true) ** 2, axis=1))) / n_g
    return bias2, mse - bias2, mse
