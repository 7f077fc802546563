"""TVMW weight bundle writer/reader (little-endian, version 1).

Writes trained torch models in the exact tensor order the inference
engine validates: per conv block weight, bias, then batch-norm gamma,
beta, running_mean, running_var, eps; then fully-connected weight/bias
pairs. Only the byte layout is shared with the inference side.
"""

from __future__ import annotations

import struct

import numpy as np
import torch

from .models import CLASSIFIER_TAG, REGRESSOR_TAG, MuRegressor, NoiseClassifier

_MAGIC = b"TVMW"
_VERSION = 1

_BLOCKS = {
    REGRESSOR_TAG: (["conv1", "conv2", "conv3", "conv4"], ["fc1", "fc2", "fc3"]),
    CLASSIFIER_TAG: (["conv1", "conv2", "conv3"], ["fc1", "fc2"]),
}


def _model_tag(model: torch.nn.Module) -> str:
    if isinstance(model, MuRegressor):
        return REGRESSOR_TAG
    if isinstance(model, NoiseClassifier):
        return CLASSIFIER_TAG
    raise ValueError(f"cannot export {type(model).__name__}: unsupported layer structure")


def export_tensors(model: torch.nn.Module) -> list[tuple[str, np.ndarray]]:
    """Ordered (name, float32 array) pairs for one model."""
    tag = _model_tag(model)
    conv_names, fc_names = _BLOCKS[tag]
    tensors: list[tuple[str, np.ndarray]] = []
    for conv_name in conv_names:
        conv = getattr(model, conv_name)
        bn = getattr(model, "bn" + conv_name.removeprefix("conv"))
        bn_name = "bn" + conv_name.removeprefix("conv")
        tensors.append((f"{conv_name}.weight", conv.weight.detach().numpy()))
        tensors.append((f"{conv_name}.bias", conv.bias.detach().numpy()))
        tensors.append((f"{bn_name}.gamma", bn.weight.detach().numpy()))
        tensors.append((f"{bn_name}.beta", bn.bias.detach().numpy()))
        tensors.append((f"{bn_name}.running_mean", bn.running_mean.numpy()))
        tensors.append((f"{bn_name}.running_var", bn.running_var.numpy()))
        tensors.append((f"{bn_name}.eps", np.array([bn.eps], dtype=np.float32)))
    for fc_name in fc_names:
        fc = getattr(model, fc_name)
        tensors.append((f"{fc_name}.weight", fc.weight.detach().numpy()))
        tensors.append((f"{fc_name}.bias", fc.bias.detach().numpy()))
    return [(name, np.ascontiguousarray(t, dtype=np.float32)) for name, t in tensors]


def export_weights(model: torch.nn.Module, path) -> None:
    """Serialise a trained model to a TVMW file."""
    tag = _model_tag(model)
    tensors = export_tensors(model)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        tag_bytes = tag.encode("utf-8")
        fh.write(struct.pack("<I", len(tag_bytes)))
        fh.write(tag_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(tensor.astype("<f4").tobytes())


def read_tvmw(path) -> tuple[str, dict[str, np.ndarray]]:
    """Parse a TVMW file back into (tag, tensors); used by round-trip tests."""
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(count):
        nonlocal pos
        if pos + count > len(buf):
            raise ValueError(f"{path}: truncated at byte {pos}")
        out = buf[pos : pos + count]
        pos += count
        return out

    if take(4) != _MAGIC:
        raise ValueError(f"{path}: bad TVMW magic")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    (tag_len,) = struct.unpack("<I", take(4))
    tag = take(tag_len).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).copy()
    return tag, tensors


def load_into_model(path, model: torch.nn.Module) -> torch.nn.Module:
    """Load TVMW tensors back into a torch model (inverse of export)."""
    tag, tensors = read_tvmw(path)
    if tag != _model_tag(model):
        raise ValueError(f"{path} holds {tag!r}, model is {_model_tag(model)!r}")
    conv_names, fc_names = _BLOCKS[tag]
    with torch.no_grad():
        for conv_name in conv_names:
            bn_name = "bn" + conv_name.removeprefix("conv")
            conv = getattr(model, conv_name)
            bn = getattr(model, bn_name)
            conv.weight.copy_(torch.from_numpy(tensors[f"{conv_name}.weight"]))
            conv.bias.copy_(torch.from_numpy(tensors[f"{conv_name}.bias"]))
            bn.weight.copy_(torch.from_numpy(tensors[f"{bn_name}.gamma"]))
            bn.bias.copy_(torch.from_numpy(tensors[f"{bn_name}.beta"]))
            bn.running_mean.copy_(torch.from_numpy(tensors[f"{bn_name}.running_mean"]))
            bn.running_var.copy_(torch.from_numpy(tensors[f"{bn_name}.running_var"]))
            bn.eps = float(tensors[f"{bn_name}.eps"][0])
        for fc_name in fc_names:
            fc = getattr(model, fc_name)
            fc.weight.copy_(torch.from_numpy(tensors[f"{fc_name}.weight"]))
            fc.bias.copy_(torch.from_numpy(tensors[f"{fc_name}.bias"]))
    return model
