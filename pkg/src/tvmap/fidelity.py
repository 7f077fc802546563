"""Data-fidelity terms: weighted Gaussian least squares and Poisson KL.

Both operations take a per-pixel weight map so the scalar-parameter and
map-weighted problems share one code path; a scalar weight is just a
constant map. The Gaussian term carries no 1/sigma^2 factor: the noise
variance is absorbed into the weights.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import ArgumentError, DomainError

__all__ = ["FidelityKind", "gaussian_value_grad", "poisson_value_grad"]


class FidelityKind(enum.Enum):
    """Which noise statistics the data term models (delta flag: 1 Gaussian, 0 Poisson)."""

    GAUSSIAN = 1
    POISSON = 0

    @property
    def delta(self) -> int:
        return self.value


def _check_shapes(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> None:
    if x.shape != y.shape or x.shape != w.shape:
        raise ArgumentError(f"shape mismatch: x {x.shape}, y {y.shape}, weights {w.shape}")
    if np.any(w <= 0):
        raise ArgumentError("fidelity weights must be strictly positive")


def gaussian_value_grad(x, y, w) -> tuple[float, np.ndarray]:
    """Weighted least squares: value sum_i w_i/2 (x_i-y_i)^2 and its gradient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_shapes(x, y, w)
    r = x - y
    grad = w * r
    value = 0.5 * float(np.sum(grad * r))
    return value, grad


def poisson_value_grad(x, y, w, eta: float) -> tuple[float, np.ndarray]:
    """Weighted Poisson KL divergence with stabiliser ``eta``.

    value = sum_i w_i [ y_i log(y_i/(x_i+eta)) + x_i - y_i ] using the
    convention 0*log(0/.) = 0; grad_i = w_i (1 - y_i/(x_i+eta)).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_shapes(x, y, w)
    if eta <= 0:
        raise ArgumentError(f"eta must be positive, got {eta}")
    if np.any(x < 0):
        raise DomainError("Poisson fidelity requires x >= 0")
    if np.any(y < 0):
        raise DomainError("Poisson fidelity requires y >= 0")
    shifted = x + eta
    log_term = np.zeros_like(x)
    positive = y > 0
    log_term[positive] = y[positive] * np.log(y[positive] / shifted[positive])
    value = float(np.sum(w * (log_term + x - y)))
    grad = w * (1.0 - y / shifted)
    return value, grad
