"""Kernel matrices and the atomic pole dictionary.

Two kernel families live here: the TC kernel K_ij = c * alpha^max(i,j),
and the multi-atom covariance S_eta = sum_i eta_i g^{w_i} (g^{w_i})^H
built from first-order atoms g^w = (1 - |w|^2) [1, w, ..., w^{n_g-1}]^T
on a conjugate-closed pole grid.  Weights eta are tied across conjugate
pairs so S_eta stays real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import ConjugateClosureError, GridError, NotInSpanError, SingularFactorError, UnstablePoleError

# Nonnegative weights over the independent (Im >= 0) pole set.
HyperParams = np.ndarray

# Radii are clamped this far inside the unit circle.
_RADIUS_CLAMP = 1.0 - 1e-9


class KernelMatrix:
    """Symmetric PSD kernel with a square-root factor R, K = R R^T.

    Positive-definite kernels factor by Cholesky and jitter stays 0.
    PSD-only kernels factor through an eigendecomposition with negative
    eigenvalues clamped, and inverse solves go through K + jitter*I with
    jitter = 1e-8 * trace(K) / n.
    """

    def __init__(self, K: np.ndarray):
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"kernel must be square, got shape {K.shape}")
        scale = np.abs(K).max() if K.size else 0.0
        if scale > 0 and np.abs(K - K.T).max() > 1e-12 * scale:
            raise ValueError("kernel must be symmetric")
        K = 0.5 * (K + K.T)
        self.K = K
        self.n = K.shape[0]
        self._eigvals: Optional[np.ndarray] = None
        self._eigvecs: Optional[np.ndarray] = None
        self._cho: Optional[np.ndarray] = None
        try:
            chol = np.linalg.cholesky(K)
            self.R = chol
            self.jitter = 0.0
            self._pd = True
            self._cho = chol
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(K)
            if scale > 0 and vals.min() < -1e-10 * scale:
                raise ValueError(
                    f"kernel is not PSD (min eigenvalue {vals.min():.3e})"
                )
            vals = np.clip(vals, 0.0, None)
            self._eigvals, self._eigvecs = vals, vecs
            # Symmetric square root: R R^T reproduces K exactly.
            self.R = vecs * np.sqrt(vals)
            self.jitter = 1e-8 * np.trace(K) / self.n if self.n else 0.0
            self._pd = False

    @property
    def is_pd(self) -> bool:
        return self._pd

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigendecomposition of K with negative eigenvalues clamped to 0."""
        if self._eigvals is None:
            vals, vecs = np.linalg.eigh(self.K)
            self._eigvals = np.clip(vals, 0.0, None)
            self._eigvecs = vecs
        return self._eigvals, self._eigvecs

    def _chol_jittered(self) -> np.ndarray:
        if self._cho is None:
            try:
                self._cho = np.linalg.cholesky(self.K + self.jitter * np.eye(self.n))
            except np.linalg.LinAlgError:
                raise SingularFactorError(
                    "kernel is singular even after jitter; inverse unavailable"
                )
        return self._cho

    def solve_inv(self, B: np.ndarray) -> np.ndarray:
        """(K + jitter*I)^-1 B via the cached Cholesky factor."""
        return scipy.linalg.cho_solve((self._chol_jittered(), True), np.asarray(B, dtype=float))

    def inv_matrix(self) -> np.ndarray:
        """Dense (K + jitter*I)^-1."""
        return self.solve_inv(np.eye(self.n))

    def inv_quad(self, g: np.ndarray) -> float:
        """g^T (K + jitter*I)^-1 g, always >= 0."""
        g = np.asarray(g, dtype=float)
        w = scipy.linalg.solve_triangular(self._chol_jittered(), g, lower=True)
        return float(w @ w)

    def solve_R(self, x: np.ndarray) -> np.ndarray:
        """R^-1 x; only valid for positive-definite kernels."""
        if not self._pd:
            raise SingularFactorError("square-root factor is singular (kernel is PSD only)")
        return scipy.linalg.solve_triangular(self._cho, np.asarray(x, dtype=float), lower=True)


def tc_kernel(c: float, alpha: float, n_g: int) -> KernelMatrix:
    """TC kernel K_ij = c * alpha^max(i,j) (0-based), positive definite."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    idx = np.arange(n_g)
    K = c * alpha ** np.maximum.outer(idx, idx)
    return KernelMatrix(K)


def atomic_response(w: complex, n_g: int) -> np.ndarray:
    """Atom g^w = (1 - |w|^2) [1, w, w^2, ..., w^{n_g-1}]^T."""
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    if abs(w) >= 1:
        raise UnstablePoleError(f"pole magnitude must be < 1, got |w| = {abs(w)}")
    return (1.0 - abs(w) ** 2) * np.asarray(w, dtype=complex) ** np.arange(n_g)


@dataclass(frozen=True)
class AtomicDictionary:
    """Conjugate-closed pole set with its atom matrix.

    poles: all poles, independent (Im >= 0) block first, conjugates after.
    atoms: n_g x len(poles) complex matrix, column i = g^{poles[i]}.
    pair_map: involution sending each pole index to its conjugate's index.
    independent_set: indices of the Im >= 0 block.
    """

    poles: np.ndarray
    atoms: np.ndarray
    pair_map: np.ndarray
    independent_set: np.ndarray

    @property
    def n_g(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_eta(self) -> int:
        """Number of independent weights."""
        return self.independent_set.size

    def tie_full(self, eta: HyperParams) -> np.ndarray:
        """Expand independent weights to the full pole set with conjugate ties."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.n_eta,):
            raise ValueError(
                f"eta must have length {self.n_eta}, got shape {eta.shape}"
            )
        if eta.size and eta.min() < 0:
            raise ValueError("eta must be nonnegative")
        full = np.empty(self.poles.size)
        full[self.independent_set] = eta
        full[self.pair_map[self.independent_set]] = eta
        return full


def scaled_ladder_base(n_radii: int) -> float:
    """Logspace base preserving the rung ratio of the 15-rung ladder.

    The default radius ladder spans six decades over 15 rungs.  Changing
    the rung count with the base held fixed squeezes every rung against
    r_max and strands the low radii; scaling the decade count with the
    rung count keeps consecutive-rung ratios unchanged, so a shorter
    ladder is a prefix of the default one.  15 rungs give back 1e6.
    """
    if n_radii < 2:
        return 1e6
    return float(10.0 ** (6.0 * (n_radii - 1) / 14.0))


def build_grid(
    n_angles: int,
    n_radii: int,
    r_min: float,
    r_max: float,
    logspace_base: float = 1e6,
    n_g: int = 50,
) -> AtomicDictionary:
    """Pole grid w = r * exp(i*phi) covering the closed upper half disc.

    Angles are uniform, phi_k = k*pi/(n_angles-1).  Radii follow a
    logspace map that is denser near r_max: with t_m = base^(-m/(n_radii-1)),
    r_m = r_min + (r_max - r_min) * (1 - t_m) / (1 - 1/base), so r_0 = r_min
    and r_{n_radii-1} = r_max exactly.  Radii at the unit circle are clamped
    to 1 - 1e-9.  Conjugates of strictly complex poles are appended so the
    dictionary is conjugate closed.
    """
    if n_angles < 2 or n_radii < 1:
        raise GridError(
            f"grid needs n_angles >= 2 and n_radii >= 1, got {n_angles} x {n_radii}"
        )
    if not 0 < r_min < r_max <= 1:
        raise GridError(f"need 0 < r_min < r_max <= 1, got [{r_min}, {r_max}]")
    if logspace_base <= 1:
        raise GridError(f"logspace base must exceed 1, got {logspace_base}")

    if n_radii == 1:
        radii = np.array([r_min])
    else:
        t = logspace_base ** (-np.arange(n_radii) / (n_radii - 1))
        radii = r_min + (r_max - r_min) * (1.0 - t) / (1.0 - 1.0 / logspace_base)
    radii = np.minimum(radii, _RADIUS_CLAMP)

    independent = []
    for k in range(n_angles):
        phi = np.pi * k / (n_angles - 1)
        # Endpoint angles give real poles; force Im = 0 exactly.
        re, im = np.cos(phi), np.sin(phi)
        if k == 0 or k == n_angles - 1:
            im = 0.0
            re = 1.0 if k == 0 else -1.0
        for r in radii:
            independent.append(complex(r * re, r * im))

    poles = list(independent)
    pair = list(range(len(independent)))
    for i, w in enumerate(independent):
        if w.imag != 0.0:
            pair[i] = len(poles)
            pair.append(i)
            poles.append(w.conjugate())

    poles_arr = np.asarray(poles, dtype=complex)
    atoms = np.column_stack([atomic_response(w, n_g) for w in poles_arr])
    return AtomicDictionary(
        poles=poles_arr,
        atoms=atoms,
        pair_map=np.asarray(pair, dtype=int),
        independent_set=np.arange(len(independent)),
    )


def assemble_S_eta(dictionary: AtomicDictionary, eta: HyperParams) -> KernelMatrix:
    """S_eta = sum_i eta_i g^{w_i} (g^{w_i})^H over the conjugate-closed set.

    Raises ConjugateClosureError if the imaginary residue survives the
    cancellation across conjugate pairs.
    """
    full = dictionary.tie_full(eta)
    A = dictionary.atoms
    S = (A * full) @ A.conj().T
    imag_resid = np.abs(S.imag).max() if S.size else 0.0
    if imag_resid > 1e-10 * max(1.0, np.abs(S.real).max()):
        raise ConjugateClosureError(
            f"imaginary residue {imag_resid:.3e} exceeds tolerance; "
            "pole set is not conjugate closed"
        )
    return KernelMatrix(S.real)


def sample_prior(S: KernelMatrix, seed: int) -> np.ndarray:
    """One draw g ~ N(0, S) through the clamped eigendecomposition of S."""
    vals, vecs = S.eig()
    # Spurious eigenvalues of order eps * lambda_max leak sqrt(eps)-sized
    # components outside range(S); cut them so draws from a low-rank prior
    # decompose back onto the active atoms.
    vals = np.where(vals > 1e-12 * max(vals.max(initial=0.0), 0.0), vals, 0.0)
    rng = np.random.default_rng(np.random.SeedSequence([0x5A3F, seed & 0xFFFFFFFFFFFFFFFF]))
    z = rng.standard_normal(S.n)
    return vecs @ (np.sqrt(vals) * z)


class Decomposition(NamedTuple):
    """Atom coefficients for a sampled impulse response."""

    coeffs: np.ndarray
    active: np.ndarray
    residual: float
    pair_asymmetry: float


def decompose_sample(
    g: np.ndarray, dictionary: AtomicDictionary, eta: HyperParams
) -> Decomposition:
    """Least-squares coefficients of g on the active atoms {g^w : eta_w != 0}.

    Conjugate symmetry c_i = conj(c_j) is enforced by averaging over each
    pair; the largest deviation removed this way is reported.  Raises
    NotInSpanError when the reconstruction residual exceeds 1e-6 * ||g||.
    """
    g = np.asarray(g, dtype=float)
    full = dictionary.tie_full(eta)
    active = np.flatnonzero(full != 0.0)
    if active.size == 0:
        resid = float(np.linalg.norm(g))
        if resid > 0:
            raise NotInSpanError("no active atoms but nonzero sample")
        return Decomposition(np.zeros(0, dtype=complex), active, 0.0, 0.0)

    A = dictionary.atoms[:, active]
    c, *_ = np.linalg.lstsq(A, g.astype(complex), rcond=None)

    pos = {int(j): k for k, j in enumerate(active)}
    asym = 0.0
    for k, j in enumerate(active):
        mate = int(dictionary.pair_map[j])
        if mate in pos and pos[mate] >= k:
            km = pos[mate]
            dev = abs(c[k] - np.conj(c[km]))
            asym = max(asym, dev)
            avg = 0.5 * (c[k] + np.conj(c[km]))
            c[k] = avg
            c[km] = np.conj(avg)

    residual = float(np.linalg.norm(A @ c - g))
    scale = float(np.linalg.norm(g))
    if residual > 1e-6 * max(scale, 1e-300):
        raise NotInSpanError(
            f"residual {residual:.3e} exceeds 1e-6 * ||g|| = {1e-6 * scale:.3e}"
        )
    return Decomposition(c, active, residual, asym)
