"""Dataset container, Toeplitz regressor construction, and plain least squares."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import SingularRegressorError

# The regressor is a plain n_D x n_g float matrix with Toeplitz structure.
RegressorMatrix = np.ndarray

# Reciprocal condition number below this means rank deficient.
_RCOND_TOL = 1e-12


@dataclass
class Dataset:
    """Input/output record of length n_D with target model order n_g."""

    u: np.ndarray
    y: np.ndarray
    n_g: int

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.u.size != self.y.size:
            raise ValueError(
                f"u and y must have equal length, got {self.u.size} and {self.y.size}"
            )
        if self.u.size < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.n_g < 1:
            raise ValueError(f"n_g must be >= 1, got {self.n_g}")

    @property
    def n_d(self) -> int:
        return self.u.size

    def to_csv(self, path: str) -> None:
        """Write the record as CSV with header t,u,y."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u", "y"])
            for t in range(self.n_d):
                writer.writerow([t, "%.17g" % self.u[t], "%.17g" % self.y[t]])

    @classmethod
    def from_csv(cls, path: str, n_g: int) -> "Dataset":
        """Read a t,u,y CSV.

        Files with a t,u,v,y header (simulated records carrying both the
        true and the measured input) are accepted too; the measured input
        v is then used as the regression input.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row]
        cols = {name: idx for idx, name in enumerate(header)}
        if "u" not in cols or "y" not in cols:
            raise ValueError(f"CSV header must contain u and y, got {header}")
        u_col = cols["v"] if "v" in cols else cols["u"]
        u = np.array([float(row[u_col]) for row in rows])
        y = np.array([float(row[cols["y"]]) for row in rows])
        return cls(u=u, y=y, n_g=n_g)


def build_phi(u: np.ndarray, n_g: int) -> RegressorMatrix:
    """Toeplitz regressor Phi[i][j] = u_{i-j} with u_t = 0 for t < 0."""
    u = np.asarray(u, dtype=float)
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    if u.size < 1:
        raise ValueError("input signal must be nonempty")
    first_row = np.zeros(n_g)
    first_row[0] = u[0]
    return scipy.linalg.toeplitz(u, first_row)


def ls_estimate(Phi: RegressorMatrix, y: np.ndarray) -> np.ndarray:
    """argmin_g ||y - Phi g||^2 via QR (not the normal equations).

    Raises SingularRegressorError when Phi is numerically rank deficient
    (reciprocal condition below 1e-12); no silent pseudo-inverse.
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] != y.size:
        raise ValueError(
            f"shape mismatch: Phi is {Phi.shape}, y has length {y.size}"
        )
    Q, R = np.linalg.qr(Phi)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= _RCOND_TOL * diag.max() or diag.min() == 0.0:
        raise SingularRegressorError(
            f"regressor is numerically rank deficient (rcond ~ "
            f"{0.0 if diag.max() == 0 else diag.min() / diag.max():.2e})"
        )
    return scipy.linalg.solve_triangular(R, Q.T @ y)
