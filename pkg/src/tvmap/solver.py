"""Minimise weighted fidelity + smoothed TV.

Gaussian data uses Nesterov-accelerated gradient descent with the fixed
step 1/L, L = max_i mu_i + 8/eps. Poisson data uses projected accelerated
gradient onto [0, 1] with a non-monotone backtracking line search: a trial
step is accepted when the new objective sufficiently decreases the maximum
of the last ``memory`` accepted objectives. Fixed steps are impractical
there because the KL gradient's Lipschitz constant blows up near zero
intensities.

A scalar regularisation parameter is just a constant weight map; both
problems run through the same weighted code path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, StepFailureError
from .fidelity import FidelityKind, gaussian_value_grad, poisson_value_grad
from .image import as_image
from .noise import DEFAULT_ETA
from .tv import DEFAULT_EPS, GRAD_OPERATOR_NORM_SQ, tv_value, tv_value_grad

__all__ = [
    "MU_MIN",
    "MU_MAX",
    "Backtracking",
    "SolverConfig",
    "SolveReport",
    "as_mu_map",
    "solve_gaussian",
    "solve_poisson",
    "solve",
]

# Regularisation parameter range the label search and the network operate on.
MU_MIN = 0.01
MU_MAX = 240.0

_NORM_FLOOR = 1e-12

# Shrinks tolerated from an extrapolated point before the momentum is
# dropped and the line search restarts from the last accepted iterate.
_STALL_SHRINKS = 8


@dataclass(frozen=True)
class Backtracking:
    """Non-monotone line-search policy (max-of-last-``memory`` Armijo rule)."""

    memory: int = 3
    shrink: float = 0.5
    grow: float = 1.05
    sufficient_decrease: float = 1e-4
    max_shrinks: int = 60

    def __post_init__(self):
        if self.memory < 1:
            raise ArgumentError(f"backtracking memory must be >= 1, got {self.memory}")
        if not 0 < self.shrink < 1:
            raise ArgumentError(f"shrink factor must lie in (0, 1), got {self.shrink}")
        if self.grow <= 1:
            raise ArgumentError(f"grow factor must exceed 1, got {self.grow}")
        if self.sufficient_decrease <= 0:
            raise ArgumentError("sufficient-decrease constant must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Smoothing, stopping and stepping policy for one variational solve."""

    eps: float = DEFAULT_EPS
    max_iters: int = 500
    rel_tol: float = 1e-5
    eta: float = DEFAULT_ETA
    initial_step: float = 1.0
    backtrack: Backtracking = field(default_factory=Backtracking)

    def __post_init__(self):
        if self.eps <= 0:
            raise ArgumentError(f"eps must be positive, got {self.eps}")
        if self.max_iters < 1:
            raise ArgumentError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise ArgumentError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.eta <= 0:
            raise ArgumentError(f"eta must be positive, got {self.eta}")
        if self.initial_step <= 0:
            raise ArgumentError(f"initial_step must be positive, got {self.initial_step}")


@dataclass
class SolveReport:
    """Per-solve diagnostics.

    ``objective_trace[k]`` is the objective at iterate k (index 0 is the
    starting point). For the Poisson path, ``step_sizes[k]`` and
    ``move_sq[k]`` record the accepted step and ||x_new - xbar||^2 of
    iteration k, which lets tests replay the non-monotone acceptance rule.
    ``residual_norm`` is the first-order optimality residual at the final
    iterate: the plain gradient norm for the unconstrained Gaussian problem,
    the projected-gradient norm (unit step) for the box-constrained Poisson
    one.
    """

    iterations: int
    final_objective: float
    objective_trace: list[float]
    elapsed: float
    residual_norm: float
    grad_evals: int
    func_evals: int
    restarts: int = 0
    step_sizes: list[float] = field(default_factory=list)
    move_sq: list[float] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)


def as_mu_map(mu, shape) -> np.ndarray:
    """Broadcast a scalar or validate an array of per-pixel weights."""
    if np.isscalar(mu):
        mu_map = np.full(shape, float(mu), dtype=np.float64)
    else:
        mu_map = np.asarray(mu, dtype=np.float64)
    if mu_map.shape != tuple(shape):
        raise ArgumentError(f"mu map shape {mu_map.shape} does not match image shape {tuple(shape)}")
    if not np.all(np.isfinite(mu_map)) or np.any(mu_map <= 0):
        raise ArgumentError("mu must be finite and strictly positive everywhere")
    return mu_map


def _relative_change(x_new: np.ndarray, x_old: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(x_old)), _NORM_FLOOR)
    return float(np.linalg.norm(x_new - x_old)) / denom


def solve_gaussian(y, mu, cfg: SolverConfig = SolverConfig(), *, accelerate: bool = True):
    """Minimise sum_i mu_i/2 (x_i - y_i)^2 + TV_eps(x) starting from x_0 = y.

    ``accelerate=False`` runs plain gradient descent with the same fixed
    step; its objective trace is monotone, which tests rely on.
    """
    y = as_image(y, "observed image")
    mu_map = as_mu_map(mu, y.shape)
    step = 1.0 / (float(mu_map.max()) + GRAD_OPERATOR_NORM_SQ / cfg.eps)

    def value_at(x):
        return 0.5 * float(np.sum(mu_map * (x - y) ** 2)) + tv_value(x, cfg.eps)

    def grad_at(x):
        tv_g = tv_value_grad(x, cfg.eps)[1]
        return mu_map * (x - y) + tv_g

    start = time.perf_counter()
    x = y.copy()
    xbar = x
    t = 1.0
    trace = [value_at(x)]
    grad_evals, func_evals, restarts = 0, 1, 0
    iterations = 0
    for _ in range(cfg.max_iters):
        x_new = xbar - step * grad_at(xbar)
        grad_evals += 1
        value_new = value_at(x_new)
        func_evals += 1
        if accelerate:
            if value_new > 10.0 * trace[-1]:
                # Nesterov spike: drop the momentum and restart from x_new.
                t_new = 1.0
                xbar = x_new
                restarts += 1
            else:
                t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                xbar = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        else:
            xbar = x_new
        trace.append(value_new)
        iterations += 1
        converged = _relative_change(x_new, x) < cfg.rel_tol
        x = x_new
        if converged:
            break

    report = SolveReport(
        iterations=iterations,
        final_objective=trace[-1],
        objective_trace=trace,
        elapsed=time.perf_counter() - start,
        residual_norm=float(np.linalg.norm(grad_at(x))),
        grad_evals=grad_evals + 1,
        func_evals=func_evals,
        restarts=restarts,
    )
    return x, report


def solve_poisson(y, mu, cfg: SolverConfig = SolverConfig(), *, keep_iterates: bool = False):
    """Minimise sum_i mu_i d_KL(x_i; y_i) + TV_eps(x) over x in [0, 1]^n.

    Projected accelerated gradient from x_0 = clamp(y, 0, 1) with the
    non-monotone backtracking rule described in the module docstring. The
    extrapolated point is projected back into [0, 1] so the KL term stays
    defined at every gradient evaluation. ``keep_iterates`` stores a copy
    of every accepted iterate on the report for diagnostics.
    """
    y = as_image(y, "observed image")
    if np.any(y < 0):
        raise ArgumentError("Poisson solve requires non-negative observations")
    mu_map = as_mu_map(mu, y.shape)
    bt = cfg.backtrack

    def value_at(x):
        fid_v, _ = poisson_value_grad(x, y, mu_map, cfg.eta)
        return fid_v + tv_value(x, cfg.eps)

    def grad_at(x):
        fid_g = mu_map * (1.0 - y / (x + cfg.eta))
        tv_g = tv_value_grad(x, cfg.eps)[1]
        return fid_g + tv_g

    start = time.perf_counter()
    x = np.clip(y, 0.0, 1.0)
    xbar = x
    t = 1.0
    alpha = cfg.initial_step
    momentum_active = False
    trace = [value_at(x)]
    recent = [trace[0]]  # objectives of the last ``memory`` accepted iterates
    step_sizes: list[float] = []
    move_sq: list[float] = []
    iterates: list[np.ndarray] = []
    grad_evals, func_evals, restarts = 0, 1, 0
    iterations = 0
    for _ in range(cfg.max_iters):
        grad = grad_at(xbar)
        grad_evals += 1
        reference = max(recent)
        alpha_entry = alpha
        shrinks = 0
        while True:
            x_trial = np.clip(xbar - alpha * grad, 0.0, 1.0)
            value_trial = value_at(x_trial)
            func_evals += 1
            moved = float(np.sum((x_trial - xbar) ** 2))
            if value_trial <= reference - (bt.sufficient_decrease / (2.0 * alpha)) * moved:
                break
            if momentum_active and shrinks >= _STALL_SHRINKS:
                # The extrapolated point sits above the non-monotone
                # reference, so no step from it can be accepted. Drop the
                # momentum and restart the search from the last iterate.
                xbar = x
                grad = grad_at(x)
                grad_evals += 1
                t = 1.0
                restarts += 1
                alpha = alpha_entry
                shrinks = 0
                momentum_active = False
                continue
            if shrinks >= bt.max_shrinks:
                raise StepFailureError(
                    f"backtracking failed after {shrinks} shrinks "
                    f"(iteration {iterations}, step {alpha:.3e})",
                    iterate=x,
                )
            alpha *= bt.shrink
            shrinks += 1

        x_new = x_trial
        if value_trial > 10.0 * trace[-1]:
            t_new = 1.0
            xbar = x_new
            momentum_active = False
            restarts += 1
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            xbar = np.clip(x_new + ((t - 1.0) / t_new) * (x_new - x), 0.0, 1.0)
            momentum_active = True
        t = t_new
        trace.append(value_trial)
        recent.append(value_trial)
        if len(recent) > bt.memory:
            recent.pop(0)
        step_sizes.append(alpha)
        move_sq.append(moved)
        if keep_iterates:
            iterates.append(x_new.copy())
        iterations += 1
        converged = _relative_change(x_new, x) < cfg.rel_tol
        x = x_new
        if converged:
            break
        alpha *= bt.grow

    projected_residual = x - np.clip(x - grad_at(x), 0.0, 1.0)
    report = SolveReport(
        iterations=iterations,
        final_objective=trace[-1],
        objective_trace=trace,
        elapsed=time.perf_counter() - start,
        residual_norm=float(np.linalg.norm(projected_residual)),
        grad_evals=grad_evals + 1,
        func_evals=func_evals,
        restarts=restarts,
        step_sizes=step_sizes,
        move_sq=move_sq,
        iterates=iterates,
    )
    return x, report


def solve(y, mu, kind: FidelityKind, cfg: SolverConfig = SolverConfig()):
    """Dispatch to the Gaussian or Poisson solver on ``kind``."""
    if kind is FidelityKind.GAUSSIAN:
        return solve_gaussian(y, mu, cfg)
    if kind is FidelityKind.POISSON:
        return solve_poisson(y, mu, cfg)
    raise ArgumentError(f"unknown fidelity kind {kind!r}")
