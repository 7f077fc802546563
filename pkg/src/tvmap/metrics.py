"""Image quality metrics: SSIM, PSNR, R^2 and classification accuracy.

SSIM uses the canonical constants (11x11 Gaussian window with std 1.5,
k1 = 0.01, k2 = 0.03, unit data range) and averages over window positions
fully inside the image, with weighted (not sample-corrected) moments. The
label oracle and all evaluation share this exact configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ArgumentError
from .image import as_image

__all__ = ["SsimConfig", "ssim", "psnr", "r2_score", "accuracy"]


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def kernel(self) -> np.ndarray:
        """1-D Gaussian taps normalised so the separable window sums to 1."""
        half = (self.window - 1) / 2.0
        offsets = np.arange(self.window) - half
        taps = np.exp(-(offsets ** 2) / (2.0 * self.sigma ** 2))
        return taps / taps.sum()


DEFAULT_SSIM = SsimConfig()


def _windowed_mean(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable weighted window sums, cropped to fully interior positions."""
    half = len(taps) // 2
    smoothed = correlate1d(correlate1d(img, taps, axis=0, mode="constant"), taps, axis=1, mode="constant")
    return smoothed[half:-half, half:-half]


def ssim(a, b, cfg: SsimConfig = DEFAULT_SSIM) -> float:
    """Mean structural similarity between two images of identical shape."""
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < cfg.window:
        raise ArgumentError(f"images must be at least {cfg.window} pixels per side, got {a.shape}")
    taps = cfg.kernel()
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mu_a = _windowed_mean(a, taps)
    mu_b = _windowed_mean(b, taps)
    var_a = _windowed_mean(a * a, taps) - mu_a * mu_a
    var_b = _windowed_mean(b * b, taps) - mu_b * mu_b
    cov = _windowed_mean(a * b, taps) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit data range.

    Identical images have no finite PSNR; the +inf sentinel is returned
    instead of raising so callers can report it distinctly.
    """
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def r2_score(labels, preds) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot against the label mean."""
    labels = np.asarray(labels, dtype=np.float64).ravel()
    preds = np.asarray(preds, dtype=np.float64).ravel()
    if labels.size == 0 or labels.size != preds.size:
        raise ArgumentError(f"labels and predictions must have equal non-zero length, got {labels.size} and {preds.size}")
    total = float(np.sum((labels - labels.mean()) ** 2))
    if total == 0.0:
        raise ArgumentError("R^2 is undefined for zero-variance labels")
    residual = float(np.sum((labels - preds) ** 2))
    return 1.0 - residual / total


def accuracy(correct: int, total: int) -> float:
    """Fraction of correctly classified samples."""
    if total <= 0:
        raise ArgumentError(f"total must be positive, got {total}")
    if not 0 <= correct <= total:
        raise ArgumentError(f"correct must lie in [0, {total}], got {correct}")
    return correct / total
