"""Supervised patch dataset: extraction, corruption, labels, TVDS files.

Building walks a corpus of PGM images in sorted filename order, extracts
32x32 patches at stride 16, corrupts each patch with the requested number
of independent noise realisations, and labels every noisy patch with its
golden-section optimal mu. Record order and per-record noise seeds are
fully determined by (corpus, noise model, realisations, seed), so the
resulting file is byte-reproducible.

TVDS file layout (little-endian):
  header: magic "TVDS", u32 version = 1, u32 patch_size, u8 noise_kind
          (1 Gaussian, 0 Poisson), f32 noise_param, u64 record count
  record: u32 source_id, u32 row, u32 col, f32 label,
          f32[patch_size^2] pixels row-major
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError
from .fidelity import FidelityKind
from .image import extract_patches, load_pgm
from .labels import DEFAULT_BRACKET_TOL, DEFAULT_EVAL_BUDGET, optimal_mu
from .noise import NoiseModel
from .solver import SolverConfig

__all__ = [
    "DatasetRecord",
    "PATCH_SIZE",
    "PATCH_STRIDE",
    "build_dataset",
    "build_pairs",
    "gen_labels",
    "iqr_filter",
    "read_dataset",
    "write_dataset",
]

logger = logging.getLogger(__name__)

PATCH_SIZE = 32
PATCH_STRIDE = 16

_MAGIC = b"TVDS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIBfQ")
_RECORD_FIXED = struct.Struct("<IIIf")


@dataclass
class DatasetRecord:
    """One noisy training patch with its reference label."""

    patch: np.ndarray  # (size, size) float32
    label: float
    noise_kind: FidelityKind
    noise_param: float
    source_id: int
    origin: tuple[int, int]


def _record_seed(base_seed: int, image_idx: int, patch_idx: int, realisation: int) -> int:
    seq = np.random.SeedSequence([int(base_seed), image_idx, patch_idx, realisation])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _corpus_images(corpus_dir) -> list[Path]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise ArgumentError(f"corpus directory {root} does not exist")
    paths = sorted(root.glob("*.pgm"))
    if not paths:
        raise ArgumentError(f"corpus directory {root} contains no .pgm images")
    return paths


def build_pairs(
    corpus_dir,
    noise: NoiseModel,
    realisations: int,
    seed: int,
    *,
    patch_size: int = PATCH_SIZE,
    patch_stride: int = PATCH_STRIDE,
) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Extract patches and corrupt them; labels stay zero.

    Returns (clean, noisy) record lists in matching deterministic order.
    The clean list repeats each source patch once per realisation so the
    two lists pair element-wise. The regression dataset uses the default
    32/16 geometry; classifier data is built at 64/32.
    """
    if realisations < 1:
        raise ArgumentError(f"realisations must be >= 1, got {realisations}")
    paths = _corpus_images(corpus_dir)
    clean_records: list[DatasetRecord] = []
    noisy_records: list[DatasetRecord] = []
    failures = []
    for image_idx, path in enumerate(paths):
        try:
            img = load_pgm(path)
            patches = extract_patches(img, patch_size, patch_stride)
        except (FormatError, ArgumentError, OSError) as err:
            failures.append(f"{path}: {err}")
            continue
        for patch_idx, patch in enumerate(patches):
            for realisation in range(realisations):
                noisy = noise.apply(patch.data, _record_seed(seed, image_idx, patch_idx, realisation))
                common = dict(
                    noise_kind=noise.kind,
                    noise_param=noise.param,
                    source_id=image_idx,
                    origin=patch.origin,
                )
                clean_records.append(
                    DatasetRecord(patch=patch.data.astype(np.float32), label=0.0, **common)
                )
                noisy_records.append(
                    DatasetRecord(patch=noisy.astype(np.float32), label=0.0, **common)
                )
    if failures:
        raise ArgumentError("corpus ingestion failed for: " + "; ".join(failures))
    return clean_records, noisy_records


def _label_task(task) -> float:
    clean_patch, noisy_patch, kind, cfg, budget, bracket_tol = task
    return optimal_mu(
        clean_patch.astype(np.float64),
        noisy_patch.astype(np.float64),
        kind,
        cfg,
        bracket_tol=bracket_tol,
        max_evals=budget,
    ).mu


def gen_labels(
    clean_records: list[DatasetRecord],
    noisy_records: list[DatasetRecord],
    cfg: SolverConfig = SolverConfig(),
    *,
    budget: int = DEFAULT_EVAL_BUDGET,
    bracket_tol: float = DEFAULT_BRACKET_TOL,
    threads: int = 1,
) -> list[DatasetRecord]:
    """Label each noisy record by golden-section search against its clean twin.

    Searches are independent, so ``threads`` > 1 labels record chunks in
    worker processes; results keep the input order either way.
    """
    if len(clean_records) != len(noisy_records):
        raise ArgumentError(
            f"clean/noisy record counts differ: {len(clean_records)} vs {len(noisy_records)}"
        )
    tasks = [
        (clean.patch, noisy.patch, noisy.noise_kind, cfg, budget, bracket_tol)
        for clean, noisy in zip(clean_records, noisy_records)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            mus = list(pool.map(_label_task, tasks, chunksize=16))
    else:
        mus = [_label_task(task) for task in tasks]
    return [
        DatasetRecord(
            patch=noisy.patch,
            label=mu,
            noise_kind=noisy.noise_kind,
            noise_param=noisy.noise_param,
            source_id=noisy.source_id,
            origin=noisy.origin,
        )
        for noisy, mu in zip(noisy_records, mus)
    ]


def build_dataset(
    corpus_dir,
    noise: NoiseModel,
    realisations: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    out_path=None,
    *,
    budget: int = DEFAULT_EVAL_BUDGET,
    bracket_tol: float = DEFAULT_BRACKET_TOL,
    threads: int = 1,
) -> list[DatasetRecord]:
    """Full pipeline: extract, corrupt, label; optionally write a TVDS file.

    No outlier filtering happens here; apply ``iqr_filter`` separately.
    """
    clean_records, noisy_records = build_pairs(corpus_dir, noise, realisations, seed)
    records = gen_labels(
        clean_records, noisy_records, cfg, budget=budget, bracket_tol=bracket_tol, threads=threads
    )
    if out_path is not None:
        write_dataset(out_path, records, patch_size=PATCH_SIZE, noise=noise)
    return records


def iqr_filter(records: list[DatasetRecord], *, conventional: bool = False) -> list[DatasetRecord]:
    """Drop label outliers, preserving record order.

    The default keeps labels in (0, 1.5*IQR], the literal rule the
    training data uses. ``conventional=True`` switches to the usual upper
    Tukey fence Q3 + 1.5*IQR instead.
    """
    if len(records) < 4:
        raise ArgumentError(f"IQR filtering needs at least 4 records, got {len(records)}")
    labels = np.array([r.label for r in records], dtype=np.float64)
    q1, q3 = np.percentile(labels, [25.0, 75.0])  # linear-interpolation quantiles
    iqr = q3 - q1
    cutoff = q3 + 1.5 * iqr if conventional else 1.5 * iqr
    kept = [r for r in records if 0.0 < r.label <= cutoff]
    if not kept:
        logger.warning("IQR filter removed every record (cutoff %.6g)", cutoff)
    return kept


def write_dataset(path, records: list[DatasetRecord], *, patch_size: int = PATCH_SIZE,
                  noise: NoiseModel | None = None) -> None:
    """Serialise records to a TVDS file.

    Header noise fields come from ``noise`` when given, else from the
    first record; an empty record list with no noise model writes a
    Gaussian/0 placeholder header.
    """
    if noise is not None:
        kind, param = noise.kind, noise.param
    elif records:
        kind, param = records[0].noise_kind, records[0].noise_param
    else:
        kind, param = FidelityKind.GAUSSIAN, 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, patch_size, kind.delta, param, len(records)))
        for record in records:
            if record.patch.shape != (patch_size, patch_size):
                raise ArgumentError(
                    f"record patch shape {record.patch.shape} does not match "
                    f"dataset patch size {patch_size}"
                )
            fh.write(
                _RECORD_FIXED.pack(
                    record.source_id, record.origin[0], record.origin[1], record.label
                )
            )
            fh.write(record.patch.astype("<f4").tobytes())


def read_dataset(path) -> list[DatasetRecord]:
    """Read a TVDS file back into records (inverse of ``write_dataset``)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for a TVDS header", offset=len(buf))
    magic, version, patch_size, kind_delta, param, count = _HEADER.unpack_from(buf, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad TVDS magic {magic!r}", offset=0)
    if version != _VERSION:
        raise FormatError(f"unsupported TVDS version {version}", offset=4)
    if kind_delta not in (0, 1):
        raise FormatError(f"invalid noise kind byte {kind_delta}", offset=12)
    kind = FidelityKind.GAUSSIAN if kind_delta == 1 else FidelityKind.POISSON
    record_size = _RECORD_FIXED.size + 4 * patch_size * patch_size
    expected = _HEADER.size + count * record_size
    if len(buf) != expected:
        raise FormatError(
            f"TVDS payload size mismatch: expected {expected} bytes, found {len(buf)}",
            offset=min(expected, len(buf)),
        )
    records = []
    offset = _HEADER.size
    for _ in range(count):
        source_id, row, col, label = _RECORD_FIXED.unpack_from(buf, offset)
        offset += _RECORD_FIXED.size
        pixels = np.frombuffer(buf, dtype="<f4", count=patch_size * patch_size, offset=offset)
        offset += 4 * patch_size * patch_size
        records.append(
            DatasetRecord(
                patch=pixels.reshape(patch_size, patch_size).copy(),
                label=float(label),
                noise_kind=kind,
                noise_param=float(param),
                source_id=source_id,
                origin=(row, col),
            )
        )
    return records
