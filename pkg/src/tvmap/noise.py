"""Reproducible Gaussian and Poisson corruption of clean images.

All randomness comes from numpy's Philox counter-based bit generator keyed
by the caller's 64-bit seed, so (input, seed) pins the output bit-for-bit
on a given numpy version. Gaussian output is intentionally not clipped to
[0, 1]; the fidelity terms handle out-of-range values. Poisson counts are
rescaled by 1/alpha so observed data lives on the same unit scale as the
clean image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError
from .fidelity import FidelityKind
from .image import as_image

__all__ = ["NoiseModel", "add_gaussian", "add_poisson"]

DEFAULT_ETA = 0.01


@dataclass(frozen=True)
class NoiseModel:
    """Tagged description of a corruption process.

    Gaussian uses ``sigma2`` (variance in intensity^2 units); Poisson uses
    the photon scale ``alpha`` and stabiliser ``eta``.
    """

    kind: FidelityKind
    sigma2: float | None = None
    alpha: float | None = None
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.kind is FidelityKind.GAUSSIAN:
            if self.sigma2 is None or self.sigma2 <= 0:
                raise ArgumentError(f"Gaussian noise needs sigma2 > 0, got {self.sigma2}")
        else:
            if self.alpha is None or self.alpha <= 0:
                raise ArgumentError(f"Poisson noise needs alpha > 0, got {self.alpha}")
            if self.eta <= 0:
                raise ArgumentError(f"Poisson noise needs eta > 0, got {self.eta}")

    @classmethod
    def gaussian(cls, sigma2: float) -> "NoiseModel":
        return cls(kind=FidelityKind.GAUSSIAN, sigma2=sigma2)

    @classmethod
    def poisson(cls, alpha: float, eta: float = DEFAULT_ETA) -> "NoiseModel":
        return cls(kind=FidelityKind.POISSON, alpha=alpha, eta=eta)

    @property
    def param(self) -> float:
        """The single intensity parameter: sigma2 for Gaussian, alpha for Poisson."""
        return self.sigma2 if self.kind is FidelityKind.GAUSSIAN else self.alpha

    def apply(self, img, seed: int) -> np.ndarray:
        if self.kind is FidelityKind.GAUSSIAN:
            return add_gaussian(img, self.sigma2, seed)
        return add_poisson(img, self.alpha, self.eta, seed)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def add_gaussian(img, sigma2: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of variance ``sigma2``."""
    arr = as_image(img)
    if sigma2 < 0:
        raise ArgumentError(f"sigma2 must be non-negative, got {sigma2}")
    return arr + _rng(seed).normal(0.0, np.sqrt(sigma2), size=arr.shape)


def add_poisson(img, alpha: float, eta: float, seed: int) -> np.ndarray:
    """Draw z ~ Poisson(alpha*x + eta) per pixel and return z / alpha."""
    arr = as_image(img)
    if alpha <= 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    if eta <= 0:
        raise ArgumentError(f"eta must be positive, got {eta}")
    if np.any(arr < 0):
        raise DomainError("Poisson noise requires non-negative input intensities")
    counts = _rng(seed).poisson(alpha * arr + eta)
    return counts.astype(np.float64) / alpha
