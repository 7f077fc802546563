"""Reference regularisation parameters by golden-section SSIM maximisation.

For a clean/noisy patch pair the label is the mu in [0.01, 240] whose
denoised output maximises SSIM against the clean patch. SSIM(mu) is
treated as unimodal; golden-section search brackets the maximum, stopping
once the bracket is narrower than 0.5 or after 30 objective evaluations,
and the best evaluated point is returned (not the bracket midpoint).
Every evaluation is an independent cold-start solve so labels are
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError, StepFailureError
from .fidelity import FidelityKind
from .image import Patch, as_image
from .metrics import DEFAULT_SSIM, SsimConfig, ssim
from .solver import MU_MAX, MU_MIN, SolverConfig, solve

__all__ = ["GoldenResult", "LabelResult", "golden_section_max", "optimal_mu", "oracle_mu_map"]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_BRACKET_TOL = 0.5
DEFAULT_EVAL_BUDGET = 30


@dataclass
class GoldenResult:
    """Outcome of a golden-section maximisation.

    ``evaluations`` lists every (x, f(x)) probe in evaluation order;
    ``brackets`` the (lo, hi) interval after each probe, so the golden
    shrink factor is checkable from the trace.
    """

    x: float
    fx: float
    evaluations: list[tuple[float, float]]
    brackets: list[tuple[float, float]]


def golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    bracket_tol: float = DEFAULT_BRACKET_TOL,
    max_evals: int = DEFAULT_EVAL_BUDGET,
) -> GoldenResult:
    """Maximise a unimodal scalar function on [lo, hi].

    Ties between probes move the bracket toward smaller x, so the
    returned maximiser is the smallest among equally good probes.
    """
    if not lo < hi:
        raise ArgumentError(f"need lo < hi, got [{lo}, {hi}]")
    if max_evals < 2:
        raise ArgumentError(f"max_evals must be at least 2, got {max_evals}")
    evaluations: list[tuple[float, float]] = []

    def probe(x: float) -> float:
        fx = f(x)
        evaluations.append((x, fx))
        return fx

    a, b = lo, hi
    brackets = [(a, b)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = probe(c)
    fd = probe(d)
    while b - a >= bracket_tol and len(evaluations) < max_evals:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            brackets.append((a, b))
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            brackets.append((a, b))
            fd = probe(d)

    best_x, best_fx = evaluations[0]
    for x, fx in evaluations[1:]:
        if fx > best_fx or (fx == best_fx and x < best_x):
            best_x, best_fx = x, fx
    return GoldenResult(x=best_x, fx=best_fx, evaluations=evaluations, brackets=brackets)


@dataclass
class LabelResult:
    """Optimal parameter for one patch pair and the SSIM it achieves."""

    mu: float
    ssim_at_mu: float
    solver_calls: int


def _patch_data(patch) -> np.ndarray:
    if isinstance(patch, Patch):
        return patch.data
    return as_image(patch, "patch")


def optimal_mu(
    clean,
    noisy,
    kind: FidelityKind,
    cfg: SolverConfig = SolverConfig(),
    *,
    mu_min: float = MU_MIN,
    mu_max: float = MU_MAX,
    bracket_tol: float = DEFAULT_BRACKET_TOL,
    max_evals: int = DEFAULT_EVAL_BUDGET,
    ssim_cfg: SsimConfig = DEFAULT_SSIM,
) -> LabelResult:
    """Golden-section search for the SSIM-optimal mu of one patch pair.

    Both interval endpoints are probed as well (golden section never
    visits them), so the result is never worse than either extreme; total
    solver calls stay within 2 + the evaluation budget.
    """
    clean_data = _patch_data(clean)
    noisy_data = _patch_data(noisy)
    if clean_data.shape != noisy_data.shape:
        raise ArgumentError(f"patch shape mismatch: {clean_data.shape} vs {noisy_data.shape}")

    calls = 0

    def objective(mu: float) -> float:
        nonlocal calls
        calls += 1
        try:
            restored, _ = solve(noisy_data, mu, kind, cfg)
        except StepFailureError as err:
            err.mu = mu
            raise
        return ssim(clean_data, restored, ssim_cfg)

    result = golden_section_max(objective, mu_min, mu_max, bracket_tol=bracket_tol, max_evals=max_evals)
    best_mu, best_ssim = result.x, result.fx
    for endpoint in (mu_min, mu_max):
        value = objective(endpoint)
        if value > best_ssim or (value == best_ssim and endpoint < best_mu):
            best_mu, best_ssim = endpoint, value
    return LabelResult(mu=best_mu, ssim_at_mu=best_ssim, solver_calls=calls)


def oracle_mu_map(
    clean,
    noisy,
    kind: FidelityKind,
    cfg: SolverConfig = SolverConfig(),
    *,
    window: int = 32,
    bracket_tol: float = DEFAULT_BRACKET_TOL,
    max_evals: int = DEFAULT_EVAL_BUDGET,
) -> np.ndarray:
    """Per-pixel golden-section labels computed against a clean reference.

    Mirrors sliding-window inference: both images are reflection padded by
    (window/2, window/2 - 1) and each pixel's label comes from the window
    centred on it. Ground-truth stand-in for a trained parameter map; cost
    grows with pixels times solver calls, so keep inputs desk-sized.
    """
    clean_data = _patch_data(clean)
    noisy_data = _patch_data(noisy)
    if clean_data.shape != noisy_data.shape:
        raise ArgumentError(f"image shape mismatch: {clean_data.shape} vs {noisy_data.shape}")
    before = window // 2
    after = window - before - 1
    pad = ((before, after), (before, after))
    clean_pad = np.pad(clean_data, pad, mode="reflect")
    noisy_pad = np.pad(noisy_data, pad, mode="reflect")
    height, width = clean_data.shape
    mu_map = np.empty((height, width), dtype=np.float64)
    for row in range(height):
        for col in range(width):
            label = optimal_mu(
                clean_pad[row : row + window, col : col + window],
                noisy_pad[row : row + window, col : col + window],
                kind,
                cfg,
                bracket_tol=bracket_tol,
                max_evals=max_evals,
            )
            mu_map[row, col] = label.mu
    return mu_map
