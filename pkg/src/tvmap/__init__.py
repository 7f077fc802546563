"""Blind TV denoising with spatially adaptive regularisation parameter maps."""

from .errors import ArgumentError, DomainError, FormatError, StepFailureError, TvmapError
from .fidelity import FidelityKind
from .image import Patch, extract_patches, load_pgm, reflect_pad, save_pgm
from .labels import LabelResult, golden_section_max, optimal_mu, oracle_mu_map
from .metrics import SsimConfig, accuracy, psnr, r2_score, ssim
from .noise import NoiseModel, add_gaussian, add_poisson
from .solver import (
    MU_MAX,
    MU_MIN,
    Backtracking,
    SolveReport,
    SolverConfig,
    solve,
    solve_gaussian,
    solve_poisson,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "DomainError",
    "FormatError",
    "StepFailureError",
    "TvmapError",
    "FidelityKind",
    "Patch",
    "extract_patches",
    "load_pgm",
    "reflect_pad",
    "save_pgm",
    "LabelResult",
    "golden_section_max",
    "optimal_mu",
    "oracle_mu_map",
    "SsimConfig",
    "accuracy",
    "psnr",
    "r2_score",
    "ssim",
    "NoiseModel",
    "add_gaussian",
    "add_poisson",
    "MU_MAX",
    "MU_MIN",
    "Backtracking",
    "SolveReport",
    "SolverConfig",
    "solve",
    "solve_gaussian",
    "solve_poisson",
    "__version__",
]
