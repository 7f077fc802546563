"""Shared oracles and generators for the test suite.

Everything here is deliberately independent of the library's internals:
finite differences for gradients, a direct per-window SSIM, and plain
gradient-descent reference solvers. Tests compare library output against
these, never the other way round.
"""

from __future__ import annotations

import numpy as np

from tvmap.fidelity import FidelityKind


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an image."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-300))


def ssim_reference(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
                   k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Textbook SSIM: explicit loop over fully interior window positions."""
    half = (window - 1) / 2.0
    offsets = np.arange(window) - half
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    taps /= taps.sum()
    weights = np.outer(taps, taps)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    height, width = a.shape
    values = []
    for i in range(height - window + 1):
        for j in range(width - window + 1):
            wa = a[i : i + window, j : j + window]
            wb = b[i : i + window, j : j + window]
            mu_a = float(np.sum(weights * wa))
            mu_b = float(np.sum(weights * wb))
            var_a = float(np.sum(weights * wa * wa)) - mu_a * mu_a
            var_b = float(np.sum(weights * wb * wb)) - mu_b * mu_b
            cov = float(np.sum(weights * wa * wb)) - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def objective_value(x, y, mu, kind, eps, eta):
    """Weighted fidelity + smoothed TV, written out independently."""
    dh = np.zeros_like(x)
    dv = np.zeros_like(x)
    dh[:, :-1] = x[:, 1:] - x[:, :-1]
    dv[:-1, :] = x[1:, :] - x[:-1, :]
    tv = float(np.sum(np.sqrt(dh ** 2 + dv ** 2 + eps ** 2)))
    if kind is FidelityKind.GAUSSIAN:
        fid = 0.5 * float(np.sum(mu * (x - y) ** 2))
    else:
        term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / (x + eta)), 0.0)
        fid = float(np.sum(mu * (term + x - y)))
    return fid + tv


def objective_grad(x, y, mu, kind, eps, eta):
    """Analytic gradient of ``objective_value`` via its own difference code."""
    dh = np.zeros_like(x)
    dv = np.zeros_like(x)
    dh[:, :-1] = x[:, 1:] - x[:, :-1]
    dv[:-1, :] = x[1:, :] - x[:-1, :]
    mag = np.sqrt(dh ** 2 + dv ** 2 + eps ** 2)
    ph = dh / mag
    pv = dv / mag
    g = np.zeros_like(x)
    g[:, :-1] -= ph[:, :-1]
    g[:, 1:] += ph[:, :-1]
    g[:-1, :] -= pv[:-1, :]
    g[1:, :] += pv[:-1, :]
    if kind is FidelityKind.GAUSSIAN:
        g += mu * (x - y)
    else:
        g += mu * (1.0 - y / (x + eta))
    return g


def gradient_descent_oracle(y, mu, eps, iters):
    """Plain fixed-step gradient descent on the Gaussian objective."""
    x = y.copy()
    step = 1.0 / (float(np.max(mu)) + 8.0 / eps)
    for _ in range(iters):
        x = x - step * objective_grad(x, y, mu, FidelityKind.GAUSSIAN, eps, 0.0)
    return x


def projected_gd_oracle(y, mu, eps, eta, step, iters):
    """Fixed-step projected gradient descent on the Poisson objective."""
    x = np.clip(y, 0.0, 1.0)
    for _ in range(iters):
        g = objective_grad(x, y, mu, FidelityKind.POISSON, eps, eta)
        x = np.clip(x - step * g, 0.0, 1.0)
    return x


def smooth_image(rng: np.random.Generator, shape, roughness: int = 4) -> np.ndarray:
    """Random low-frequency image in [0, 1] (bilinear upsampled noise)."""
    coarse = rng.random((roughness, roughness))
    rows = np.linspace(0, roughness - 1, shape[0])
    cols = np.linspace(0, roughness - 1, shape[1])
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, roughness - 1)
    c1 = np.minimum(c0 + 1, roughness - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = coarse[np.ix_(r0, c0)] * (1 - fc) + coarse[np.ix_(r0, c1)] * fc
    bottom = coarse[np.ix_(r1, c0)] * (1 - fc) + coarse[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bottom * fr


def textured_image(rng: np.random.Generator, shape) -> np.ndarray:
    """Half geometric (flat disk on gradient), half sinusoidal texture."""
    height, width = shape
    rows, cols = np.mgrid[0:height, 0:width]
    img = 0.25 + 0.5 * cols / max(width - 1, 1)
    disk = (rows - height / 3) ** 2 + (cols - width / 4) ** 2 < (min(height, width) / 5) ** 2
    img[disk] = 0.85
    texture = 0.5 + 0.22 * np.sin(rows * 0.9) * np.cos(cols * 1.1) + 0.1 * rng.random(shape)
    right = cols >= width // 2
    img[right] = texture[right]
    return np.clip(img, 0.0, 1.0)


def mixed_scene(index: int, shape) -> np.ndarray:
    """Deterministic texture/geometry mixes for map-vs-scalar comparisons."""
    height, width = shape
    rows, cols = np.mgrid[0:height, 0:width]
    rng = np.random.default_rng(7000 + index)
    if index % 5 == 0:
        return textured_image(rng, shape)
    if index % 5 == 1:
        img = np.full(shape, 0.35)
        img[rows < height // 2] = 0.7
        fine = 0.5 + 0.3 * np.sign(np.sin(rows * 2.4) + np.cos(cols * 2.1)) * rng.random(shape)
        mask = cols >= width // 2
        img[mask] = fine[mask]
        return np.clip(img, 0.0, 1.0)
    if index % 5 == 2:
        img = 0.2 + 0.6 * ((cols // 6) % 2)  # vertical stripes
        img[rows >= height // 2] = 0.45  # flat lower half
        img = img + 0.25 * np.sin(rows * 1.7) * (rows < height // 2) * (cols >= width // 2)
        return np.clip(img, 0.0, 1.0)
    if index % 5 == 3:
        img = smooth_image(rng, shape, roughness=3)
        corner = (rows >= height // 2) & (cols >= width // 2)
        img[corner] = 0.5 + 0.3 * np.sin(rows[corner] * 2.2) * np.sin(cols[corner] * 2.0)
        return np.clip(img, 0.0, 1.0)
    img = 0.15 + 0.7 * rows / max(height - 1, 1)
    band = (cols >= width // 3) & (cols < 2 * width // 3)
    img[band] = 0.5 + 0.35 * ((rows[band] // 3 + cols[band] // 3) % 2)
    return np.clip(img, 0.0, 1.0)
