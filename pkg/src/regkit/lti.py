"""Discrete-time LTI models, FIR truncation, test signals, and simulation.

Transfer functions are rational in the delay operator: coefficient
sequences are ascending powers of q^-1, so ``num=[b0, b1]`` and
``den=[a0, a1]`` mean (b0 + b1 q^-1) / (a0 + a1 q^-1).  Systems are at
rest: u_t = 0 for t < 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidModelError

# An impulse response is a plain 1-D float vector g of length n_g.
ImpulseResponse = np.ndarray


@dataclass(frozen=True)
class TransferFunction:
    """Rational discrete-time model num(q^-1)/den(q^-1)."""

    num: Tuple[float, ...]
    den: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "num", tuple(float(b) for b in self.num))
        object.__setattr__(self, "den", tuple(float(a) for a in self.den))
        if len(self.den) == 0:
            raise InvalidModelError("denominator must be nonempty")
        if self.den[0] == 0.0:
            raise InvalidModelError("leading denominator coefficient must be nonzero")
        if not all(np.isfinite(self.num)) or not all(np.isfinite(self.den)):
            raise InvalidModelError("coefficients must be finite")


@dataclass(frozen=True)
class SignalSpec:
    """Input-signal description: kind in {'prbs', 'gaussian'}, length, scale, seed."""

    kind: str
    length: int
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("prbs", "gaussian"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.length < 0:
            raise ValueError(f"length must be nonnegative, got {self.length}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def impulse_response(tf: TransferFunction, n_g: int) -> ImpulseResponse:
    """First n_g coefficients of the power-series expansion of num/den.

    Uses the standard difference recursion
    g_k = (b_k - sum_{j=1..k} a_j g_{k-j}) / a_0.
    """
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    b = np.asarray(tf.num, dtype=float)
    a = np.asarray(tf.den, dtype=float)
    g = np.zeros(n_g)
    for k in range(n_g):
        acc = b[k] if k < b.size else 0.0
        j_max = min(k, a.size - 1)
        for j in range(1, j_max + 1):
            acc -= a[j] * g[k - j]
        g[k] = acc / a[0]
    return g


# Maximal-length Fibonacci LFSR, right-shift form of x^7 + x + 1,
# period 2^7 - 1 = 127 from every nonzero state.
_PRBS_ORDER = 7
_PRBS_TAPS = (7, 1)


def _prbs_bits(length: int, seed: int) -> np.ndarray:
    # Seed-derived nonzero initial register state.
    rng = np.random.default_rng(np.random.SeedSequence([0x5259, seed & 0xFFFFFFFFFFFFFFFF]))
    state = int(rng.integers(1, 2**_PRBS_ORDER))
    bits = np.empty(length, dtype=np.int8)
    for t in range(length):
        bits[t] = state & 1
        fb = 0
        for tap in _PRBS_TAPS:
            fb ^= (state >> (tap - 1)) & 1
        state = (state >> 1) | (fb << (_PRBS_ORDER - 1))
    return bits


def generate_signal(spec: SignalSpec) -> np.ndarray:
    """Generate the input signal described by ``spec``.

    prbs: +-scale values from the order-7 maximal-length LFSR (period 127).
    gaussian: i.i.d. N(0, scale^2).  Deterministic per seed.
    """
    if spec.kind == "prbs":
        bits = _prbs_bits(spec.length, spec.seed)
        return spec.scale * (2.0 * bits - 1.0)
    rng = np.random.default_rng(np.random.SeedSequence([0x6741, spec.seed & 0xFFFFFFFFFFFFFFFF]))
    return spec.scale * rng.standard_normal(spec.length)


def simulate(g: ImpulseResponse, u: np.ndarray) -> np.ndarray:
    """Noiseless output y_t = sum_{k=0}^{n_g-1} g_k u_{t-k}, system at rest."""
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        return np.zeros(0)
    return np.convolve(u, g)[: u.size]


def disturb(
    u: np.ndarray, sigma_d: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Measured input v = u + d with d ~ i.i.d. N(0, sigma_d^2).

    Returns (v, d); the true disturbance is needed downstream to
    calibrate uncertainty radii.
    """
    if sigma_d < 0:
        raise ValueError(f"sigma_d must be nonnegative, got {sigma_d}")
    u = np.asarray(u, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([0xD157, seed & 0xFFFFFFFFFFFFFFFF]))
    d = sigma_d * rng.standard_normal(u.size)
    return u + d, d
