"""Command-line pipeline: inject, build-dataset, gen-labels, denoise, classify, evaluate.

Every command that writes files also writes ``<first-output>.manifest.json``
recording the resolved flags, seed, tool version and SHA-256 hashes of all
inputs and outputs, so any artefact can be reproduced from its manifest.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
failure.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, dataset as ds
from .errors import ArgumentError, DomainError, FormatError, StepFailureError
from .fidelity import FidelityKind
from .image import load_pgm, pgm_info, save_pgm
from .labels import DEFAULT_BRACKET_TOL, DEFAULT_EVAL_BUDGET
from .metrics import psnr, ssim
from .nn import CLASSIFIER_TAG, REGRESSOR_TAG, classify_image, load_weights, predict_mu_map
from .noise import DEFAULT_ETA, NoiseModel
from .solver import MU_MAX, MU_MIN, SolverConfig, as_mu_map, solve

EXIT_DATA = 3
EXIT_NUMERICAL = 4

_EVAL_ROLES = ("noisy", "scalar", "map")


def handle_errors(stage):
    """Map library exceptions onto the documented exit codes."""

    def decorate(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except StepFailureError as err:
                click.echo(f"{stage}: solver: {err}", err=True)
                sys.exit(EXIT_NUMERICAL)
            except (FormatError, ArgumentError, DomainError, OSError) as err:
                click.echo(f"{stage}: {err}", err=True)
                sys.exit(EXIT_DATA)

        return wrapper

    return decorate


def _sha256(path) -> str:
    digest = hashlib.sha256()
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for file in files:
        digest.update(file.name.encode())
        with open(file, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, arguments: dict, inputs: list, outputs: list, seed=None):
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in sorted(arguments.items()) if v is not None},
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _noise_from_flags(noise: str, sigma2, alpha, eta) -> NoiseModel:
    if noise == "gaussian":
        if sigma2 is None:
            raise click.UsageError("gaussian noise requires --sigma2")
        if alpha is not None:
            raise click.UsageError("--alpha conflicts with --noise gaussian")
        if sigma2 <= 0:
            raise click.UsageError(f"--sigma2 must be positive, got {sigma2}")
        return NoiseModel.gaussian(sigma2)
    if alpha is None:
        raise click.UsageError("poisson noise requires --alpha")
    if sigma2 is not None:
        raise click.UsageError("--sigma2 conflicts with --noise poisson")
    if alpha <= 0:
        raise click.UsageError(f"--alpha must be positive, got {alpha}")
    return NoiseModel.poisson(alpha, eta)


def _solver_options(func):
    for option in reversed(
        [
            click.option("--eps", default=1e-3, show_default=True, help="TV smoothing parameter."),
            click.option("--max-iters", default=500, show_default=True),
            click.option("--rel-tol", default=1e-5, show_default=True),
            click.option("--eta", default=DEFAULT_ETA, show_default=True, help="Poisson KL stabiliser."),
        ]
    ):
        func = option(func)
    return func


def _threads_option(func):
    return click.option(
        "--threads",
        default=lambda: int(os.environ.get("TVMAP_THREADS", "1")),
        type=int,
        help="Worker cap for parallel sections (env TVMAP_THREADS).",
    )(func)


@click.group()
@click.version_option(version=__version__)
def main():
    """Blind TV denoising with spatially adaptive parameter maps."""


@main.command()
@click.option("--noise", type=click.Choice(["gaussian", "poisson"]), required=True)
@click.option("--sigma2", type=float, default=None, help="Gaussian variance.")
@click.option("--alpha", type=float, default=None, help="Poisson photon scale.")
@click.option("--eta", type=float, default=DEFAULT_ETA, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--maxval", type=click.Choice(["255", "65535"]), default="255", show_default=True)
@click.argument("input_image", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_image", type=click.Path(dir_okay=False))
@handle_errors("inject")
def inject(noise, sigma2, alpha, eta, seed, maxval, input_image, output_image):
    """Corrupt a clean PGM with Gaussian or Poisson noise."""
    model = _noise_from_flags(noise, sigma2, alpha, eta)
    img = load_pgm(input_image)
    noisy = model.apply(img, seed)
    save_pgm(noisy, output_image, int(maxval))
    _write_manifest(
        "inject",
        {"noise": noise, "sigma2": sigma2, "alpha": alpha, "eta": eta, "maxval": maxval},
        [input_image],
        [output_image],
        seed=seed,
    )


def _save_mu_map(mu_map: np.ndarray, path) -> None:
    scaled = (mu_map - MU_MIN) / (MU_MAX - MU_MIN)
    save_pgm(scaled, path, 65535)
    Path(str(path) + ".range.txt").write_text(f"{MU_MIN} {MU_MAX}\n")


def _load_mu_map(path) -> np.ndarray:
    scaled = load_pgm(path)
    sidecar = Path(str(path) + ".range.txt")
    lo, hi = MU_MIN, MU_MAX
    if sidecar.exists():
        lo, hi = (float(tok) for tok in sidecar.read_text().split())
    else:
        click.echo(f"denoise: no sidecar {sidecar}, assuming range [{lo}, {hi}]", err=True)
    return lo + scaled * (hi - lo)


@main.command()
@click.option("--fidelity", type=click.Choice(["gaussian", "poisson"]), default=None,
              help="Data term; defaults to the classifier's vote when --mu auto.")
@click.option("--mu", default=None, help="Scalar value or 'auto' for the learned map.")
@click.option("--mu-map", "mu_map_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="16-bit PGM parameter map (with .range.txt sidecar).")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Regressor TVMW bundle (required for --mu auto).")
@click.option("--classifier-weights", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Classifier TVMW bundle (enables noise auto-detection).")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Clean image; adds a metrics CSV next to the output.")
@_solver_options
@click.argument("input_image", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_image", type=click.Path(dir_okay=False))
@handle_errors("denoise")
def denoise(fidelity, mu, mu_map_file, weights, classifier_weights, reference,
            eps, max_iters, rel_tol, eta, input_image, output_image):
    """Restore a noisy PGM with weighted TV denoising."""
    if (mu is None) == (mu_map_file is None):
        raise click.UsageError("give exactly one of --mu or --mu-map")
    img = load_pgm(input_image)
    cfg = SolverConfig(eps=eps, max_iters=max_iters, rel_tol=rel_tol, eta=eta)

    if fidelity is not None:
        kind = FidelityKind.GAUSSIAN if fidelity == "gaussian" else FidelityKind.POISSON
    elif mu == "auto":
        if classifier_weights is None:
            raise click.UsageError("--mu auto needs --fidelity or --classifier-weights")
        delta, confidence = classify_image(img, load_weights(classifier_weights, expect_tag=CLASSIFIER_TAG))
        kind = FidelityKind.GAUSSIAN if delta == 1 else FidelityKind.POISSON
        click.echo(f"classified as {kind.name.lower()} (confidence {confidence:.3f})")
    else:
        kind = FidelityKind.GAUSSIAN

    if mu == "auto":
        if weights is None:
            raise click.UsageError("--mu auto requires --weights")
        bundle = load_weights(weights, expect_tag=REGRESSOR_TAG)
        mu_map = predict_mu_map(img, bundle)
    elif mu is not None:
        try:
            mu_value = float(mu)
        except ValueError:
            raise click.UsageError(f"--mu must be a number or 'auto', got {mu!r}") from None
        mu_map = as_mu_map(mu_value, img.shape)
    else:
        mu_map = _load_mu_map(mu_map_file)
        if mu_map.shape != img.shape:
            raise ArgumentError(
                f"mu map shape {mu_map.shape} does not match image shape {img.shape}"
            )

    restored, report = solve(img, mu_map, kind, cfg)
    save_pgm(restored, output_image, pgm_info(input_image)[2])  # keep the input's bit depth
    map_path = Path(str(output_image) + ".mu.pgm")
    _save_mu_map(mu_map, map_path)
    outputs = [output_image, map_path]
    click.echo(
        f"{kind.name.lower()} solve: {report.iterations} iterations, "
        f"objective {report.final_objective:.6g}, residual {report.residual_norm:.3g}"
    )

    if reference is not None:
        clean = load_pgm(reference)
        rows = [
            ("noisy", ssim(clean, img), psnr(clean, img)),
            ("restored", ssim(clean, restored), psnr(clean, restored)),
        ]
        csv_path = Path(str(output_image) + ".metrics.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image", "ssim", "psnr"])
            for name, s_value, p_value in rows:
                writer.writerow([name, f"{s_value:.6f}", f"{p_value:.4f}"])
        outputs.append(csv_path)

    inputs = [p for p in (input_image, weights, classifier_weights, reference, mu_map_file) if p]
    _write_manifest(
        "denoise",
        {
            "fidelity": fidelity,
            "mu": mu,
            "mu_map": mu_map_file,
            "eps": eps,
            "max_iters": max_iters,
            "rel_tol": rel_tol,
            "eta": eta,
        },
        inputs,
        outputs,
    )


@main.command("build-dataset")
@click.option("--noise", type=click.Choice(["gaussian", "poisson"]), required=True)
@click.option("--sigma2", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--realisations", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--patch-size", type=int, default=ds.PATCH_SIZE, show_default=True)
@click.option("--patch-stride", type=int, default=ds.PATCH_STRIDE, show_default=True)
@click.option("--skip-labels", is_flag=True, help="Write paired clean/noisy files without labels.")
@click.option("--iqr-filter/--no-iqr-filter", "apply_iqr", default=False, show_default=True)
@click.option("--budget", type=int, default=DEFAULT_EVAL_BUDGET, show_default=True)
@click.option("--bracket-tol", type=float, default=DEFAULT_BRACKET_TOL, show_default=True)
@_solver_options
@_threads_option
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("output_file", type=click.Path(dir_okay=False))
@handle_errors("build-dataset")
def build_dataset_cmd(noise, sigma2, alpha, realisations, seed, patch_size, patch_stride,
                      skip_labels, apply_iqr, budget, bracket_tol, eps, max_iters, rel_tol,
                      eta, threads, corpus_dir, output_file):
    """Extract, corrupt and label patches from a PGM corpus.

    The --eta stabiliser is shared by the Poisson simulation and the KL
    fidelity so labels see the same model that generated the data.
    """
    model = _noise_from_flags(noise, sigma2, alpha, eta)
    cfg = SolverConfig(eps=eps, max_iters=max_iters, rel_tol=rel_tol, eta=eta)
    flags = {
        "noise": noise, "sigma2": sigma2, "alpha": alpha, "eta": eta,
        "realisations": realisations, "patch_size": patch_size, "patch_stride": patch_stride,
        "skip_labels": skip_labels, "iqr_filter": apply_iqr,
        "budget": budget, "bracket_tol": bracket_tol, "threads": threads,
    }
    if skip_labels:
        clean_records, noisy_records = ds.build_pairs(
            corpus_dir, model, realisations, seed,
            patch_size=patch_size, patch_stride=patch_stride,
        )
        clean_path = Path(str(output_file) + ".clean.tvds")
        noisy_path = Path(str(output_file) + ".noisy.tvds")
        ds.write_dataset(clean_path, clean_records, patch_size=patch_size, noise=model)
        ds.write_dataset(noisy_path, noisy_records, patch_size=patch_size, noise=model)
        click.echo(f"wrote {len(clean_records)} unlabelled pairs")
        _write_manifest("build-dataset", flags, [corpus_dir], [clean_path, noisy_path], seed=seed)
        return
    if patch_size != ds.PATCH_SIZE or patch_stride != ds.PATCH_STRIDE:
        clean_records, noisy_records = ds.build_pairs(
            corpus_dir, model, realisations, seed,
            patch_size=patch_size, patch_stride=patch_stride,
        )
        records = ds.gen_labels(clean_records, noisy_records, cfg,
                                budget=budget, bracket_tol=bracket_tol, threads=threads)
    else:
        records = ds.build_dataset(
            corpus_dir, model, realisations, seed, cfg,
            budget=budget, bracket_tol=bracket_tol, threads=threads,
        )
    total = len(records)
    if apply_iqr:
        records = ds.iqr_filter(records)
    ds.write_dataset(output_file, records, patch_size=patch_size, noise=model)
    click.echo(f"wrote {len(records)} records ({total} before filtering)")
    _write_manifest("build-dataset", flags, [corpus_dir], [output_file], seed=seed)


@main.command("gen-labels")
@click.option("--clean", "clean_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--noisy", "noisy_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--budget", type=int, default=DEFAULT_EVAL_BUDGET, show_default=True)
@click.option("--bracket-tol", type=float, default=DEFAULT_BRACKET_TOL, show_default=True)
@_solver_options
@_threads_option
@click.argument("output_file", type=click.Path(dir_okay=False))
@handle_errors("gen-labels")
def gen_labels_cmd(clean_file, noisy_file, budget, bracket_tol, eps, max_iters, rel_tol, eta,
                   threads, output_file):
    """Label paired clean/noisy TVDS files by golden-section search."""
    clean_records = ds.read_dataset(clean_file)
    noisy_records = ds.read_dataset(noisy_file)
    cfg = SolverConfig(eps=eps, max_iters=max_iters, rel_tol=rel_tol, eta=eta)
    records = ds.gen_labels(
        clean_records, noisy_records, cfg, budget=budget, bracket_tol=bracket_tol, threads=threads
    )
    ds.write_dataset(output_file, records)
    click.echo(f"labelled {len(records)} records")
    _write_manifest(
        "gen-labels",
        {"clean": clean_file, "noisy": noisy_file, "budget": budget, "bracket_tol": bracket_tol},
        [clean_file, noisy_file],
        [output_file],
    )


@main.command()
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.argument("input_image", type=click.Path(exists=True, dir_okay=False))
@handle_errors("classify")
def classify(weights, input_image):
    """Vote Gaussian vs Poisson over 64x64 patches."""
    img = load_pgm(input_image)
    bundle = load_weights(weights, expect_tag=CLASSIFIER_TAG)
    delta, confidence = classify_image(img, bundle)
    kind = "gaussian" if delta == 1 else "poisson"
    click.echo(f"{kind} delta={delta} confidence={confidence:.4f}")


@main.command()
@click.option("--reference", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--id", "image_id", default=None, help="Row identifier (default: reference stem).")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None,
              help="Write the CSV here instead of stdout.")
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@handle_errors("evaluate")
def evaluate(reference, image_id, out_file, images):
    """SSIM/PSNR of images against a clean reference, one CSV row.

    With three images the columns follow the noisy/scalar/map convention.
    """
    clean = load_pgm(reference)
    names = [_EVAL_ROLES[i] if i < len(_EVAL_ROLES) else f"img{i}" for i in range(len(images))]
    header = ["image-id"]
    header += [f"ssim_{name}" for name in names]
    header += [f"psnr_{name}" for name in names]
    row = [image_id or Path(reference).stem]
    metrics = [(ssim(clean, load_pgm(path)), psnr(clean, load_pgm(path))) for path in images]
    row += [f"{s:.6f}" for s, _ in metrics]
    row += [f"{p:.4f}" for _, p in metrics]
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerow(row)
    if out_file is None:
        click.echo(buffer.getvalue(), nl=False)
    else:
        Path(out_file).write_text(buffer.getvalue())
        _write_manifest("evaluate", {"reference": reference, "id": image_id},
                        [reference, *images], [out_file])


if __name__ == "__main__":
    main()
