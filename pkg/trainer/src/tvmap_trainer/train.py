"""Training loops for the parameter regressor and the noise classifier.

Defaults follow the reference recipe: Adam with initial learning rate
1e-5, per-epoch exponential decay 0.8, weight decay 1e-4, 30 epochs,
batch size 256, MSE for regression and cross-entropy for classification.
Every field is overridable; desk-scale runs typically raise the learning
rate and cut epochs. Validation loss is monitored each epoch and the
exported bundle is the best-validation state, not the last one.
"""

from __future__ import annotations

import copy
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .models import MU_MAX, MU_MIN, MuRegressor, NoiseClassifier
from .tvds import PatchSet, read_tvds
from .tvmw import export_weights

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-5
    lr_decay: float = 0.8
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    val_fraction: float = 0.1


@dataclass
class TrainResult:
    best_epoch: int
    best_val_loss: float
    history: list[dict] = field(default_factory=list)
    r2: float | None = None
    test_accuracy: float | None = None
    log_lines: list[str] = field(default_factory=list)


def _split(count: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(count)
    val_count = max(1, int(round(count * val_fraction)))
    return order[val_count:], order[:val_count]


def _batches(count: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(count, generator=generator)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def _epoch_pass(model, xs, ys, loss_fn, optimizer, batch_size, generator, epoch):
    model.train()
    total = 0.0
    for batch_idx, batch in enumerate(_batches(len(xs), batch_size, generator)):
        optimizer.zero_grad()
        loss = loss_fn(model(xs[batch]), ys[batch])
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {batch_idx}")
        loss.backward()
        optimizer.step()
        total += float(loss) * len(batch)
    return total / len(xs)


def _eval_loss(model, xs, ys, loss_fn, batch_size=512) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(xs), batch_size):
            chunk = slice(start, start + batch_size)
            total += float(loss_fn(model(xs[chunk]), ys[chunk])) * (len(xs[chunk]))
    return total / len(xs)


def r2_score(labels: np.ndarray, preds: np.ndarray) -> float:
    total = float(np.sum((labels - labels.mean()) ** 2))
    if total == 0.0:
        raise ValueError("R^2 undefined for zero-variance labels")
    return 1.0 - float(np.sum((labels - preds) ** 2)) / total


def train_regressor(data: PatchSet, cfg: TrainConfig = TrainConfig()) -> tuple[MuRegressor, TrainResult]:
    """Fit the mu regressor on one labelled patch set; labels must lie in [0.01, 240]."""
    labels = data.labels.astype(np.float64)
    if labels.min() < MU_MIN or labels.max() > MU_MAX:
        raise ValueError(
            f"labels must lie in [{MU_MIN}, {MU_MAX}], found range "
            f"[{labels.min():.4g}, {labels.max():.4g}]"
        )
    torch.manual_seed(cfg.seed)
    model = MuRegressor()
    xs = torch.from_numpy(data.patches[:, None, :, :].copy())
    ys = torch.from_numpy(data.labels.copy())
    train_idx, val_idx = _split(len(data), cfg.val_fraction, cfg.seed)
    result = _fit(
        model, xs, ys, torch.nn.MSELoss(), train_idx, val_idx, cfg,
        metric_name="mse",
    )
    preds = model.predict(xs[val_idx]).numpy().astype(np.float64)
    result.r2 = r2_score(labels[val_idx], preds)
    result.log_lines.append(f"held-out R2 {result.r2:.4f} over {len(val_idx)} records")
    return model, result


def train_classifier(sets: list[PatchSet], cfg: TrainConfig = TrainConfig()) -> tuple[NoiseClassifier, TrainResult]:
    """Fit the Gaussian-vs-Poisson classifier on a mixture of patch sets.

    The class of each patch comes from its file's noise kind; both
    classes must be present.
    """
    kinds = {s.noise_kind for s in sets}
    if kinds != {0, 1}:
        raise ValueError(f"classifier training needs both classes, got kinds {sorted(kinds)}")
    patches = np.concatenate([s.patches for s in sets])
    classes = np.concatenate([np.full(len(s), s.noise_kind, dtype=np.int64) for s in sets])
    torch.manual_seed(cfg.seed)
    model = NoiseClassifier()
    xs = torch.from_numpy(patches[:, None, :, :].copy())
    ys = torch.from_numpy(classes)
    train_idx, val_idx = _split(len(classes), cfg.val_fraction, cfg.seed)
    result = _fit(
        model, xs, ys, torch.nn.CrossEntropyLoss(), train_idx, val_idx, cfg,
        metric_name="cross-entropy",
    )
    with torch.no_grad():
        predicted = model.predict_proba(xs[val_idx]).argmax(dim=1).numpy()
    result.test_accuracy = float(np.mean(predicted == classes[val_idx]))
    result.log_lines.append(
        f"held-out accuracy {result.test_accuracy:.4f} over {len(val_idx)} patches"
    )
    return model, result


def _fit(model, xs, ys, loss_fn, train_idx, val_idx, cfg: TrainConfig, metric_name: str) -> TrainResult:
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=cfg.lr_decay)
    generator = torch.Generator().manual_seed(cfg.seed)
    train_x, train_y = xs[train_idx], ys[train_idx]
    val_x, val_y = xs[val_idx], ys[val_idx]
    result = TrainResult(best_epoch=-1, best_val_loss=float("inf"))
    best_state = None
    for epoch in range(cfg.epochs):
        train_loss = _epoch_pass(model, train_x, train_y, loss_fn, optimizer, cfg.batch_size, generator, epoch)
        val_loss = _eval_loss(model, val_x, val_y, loss_fn)
        lr_now = optimizer.param_groups[0]["lr"]
        scheduler.step()
        result.history.append({"epoch": epoch, "train": train_loss, "val": val_loss, "lr": lr_now})
        line = f"epoch {epoch:3d}  train {metric_name} {train_loss:.6g}  val {metric_name} {val_loss:.6g}  lr {lr_now:.2e}"
        result.log_lines.append(line)
        logger.info(line)
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    result.log_lines.append(
        f"exported state is epoch {result.best_epoch} (best val {metric_name} {result.best_val_loss:.6g})"
    )
    model.eval()
    return result


def _finish(model, result: TrainResult, out_path, log_path) -> None:
    export_weights(model, out_path)
    digest = hashlib.sha256(open(out_path, "rb").read()).hexdigest()
    result.log_lines.append(f"wrote {out_path} sha256 {digest}")
    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write("\n".join(result.log_lines) + "\n")


def run_regressor_training(dataset_path, out_path, cfg: TrainConfig = TrainConfig(), log_path=None):
    """Read TVDS, train, export TVMW, write the log; returns (model, result)."""
    data = read_tvds(dataset_path)
    model, result = train_regressor(data, cfg)
    _finish(model, result, out_path, log_path)
    return model, result


def run_classifier_training(dataset_paths, out_path, cfg: TrainConfig = TrainConfig(), log_path=None):
    """Read several TVDS files (both classes), train, export, log."""
    sets = [read_tvds(path) for path in dataset_paths]
    model, result = train_classifier(sets, cfg)
    _finish(model, result, out_path, log_path)
    return model, result
