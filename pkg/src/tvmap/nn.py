"""Forward-pass inference for the patch regressor and the noise classifier.

Two fixed architectures are supported. ``regressor_v1`` maps a 32x32
patch to a regularisation parameter in [0.01, 240] (2,798,721 trainable
parameters). ``classifier_v1`` maps a 64x64 patch to Gaussian/Poisson
class probabilities; its final layer emits (poisson, gaussian) logits in
that order, matching the delta convention (0 Poisson, 1 Gaussian).

All arithmetic is 32-bit floating point to match trainer-exported
weights. Convolutions use "same" zero padding; batch norm runs in
inference mode from stored running statistics; dropout is the identity.
Sliding-window map prediction evaluates the regressor once per pixel
through the exact single-patch path, so no batching scheme can change
values; full-resolution maps are correspondingly expensive.

TVMW weight file layout (little-endian): magic "TVMW", u32 version = 1,
u32 tag length + UTF-8 architecture tag, u32 tensor count; per tensor:
u32 name length + UTF-8 name, u8 ndim, ndim x u64 extents, f32 data
row-major. Every batch-norm layer stores gamma, beta, running_mean,
running_var and a one-element ``<layer>.eps`` tensor.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, FormatError
from .image import Patch, as_image, extract_patches
from .solver import MU_MAX, MU_MIN

__all__ = [
    "LayerSpec",
    "Architecture",
    "WeightBundle",
    "ARCHITECTURES",
    "REGRESSOR_TAG",
    "CLASSIFIER_TAG",
    "blank_bundle",
    "load_weights",
    "save_weights",
    "forward_regressor",
    "forward_classifier",
    "predict_mu_map",
    "classify_image",
]

logger = logging.getLogger(__name__)

REGRESSOR_TAG = "regressor_v1"
CLASSIFIER_TAG = "classifier_v1"

_MAGIC = b"TVMW"
_VERSION = 1
_BN_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    """One architecture layer; geometry fields are meaningful per kind."""

    kind: str  # conv | batchnorm | relu | maxpool | flatten | fullyconnected | dropout
    name: str = ""
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    pad: int = 0
    in_features: int = 0
    out_features: int = 0


@dataclass(frozen=True)
class Architecture:
    tag: str
    input_size: int
    layers: tuple[LayerSpec, ...]
    output: str  # "mu_clamp" | "softmax"

    def tensor_manifest(self) -> list[tuple[str, tuple[int, ...], bool]]:
        """Ordered (name, shape, trainable) triples the weight file must match."""
        manifest = []
        for layer in self.layers:
            if layer.kind == "conv":
                manifest.append((f"{layer.name}.weight", (layer.out_ch, layer.in_ch, layer.kernel, layer.kernel), True))
                manifest.append((f"{layer.name}.bias", (layer.out_ch,), True))
            elif layer.kind == "batchnorm":
                channels = (layer.out_ch,)
                manifest.append((f"{layer.name}.gamma", channels, True))
                manifest.append((f"{layer.name}.beta", channels, True))
                manifest.append((f"{layer.name}.running_mean", channels, False))
                manifest.append((f"{layer.name}.running_var", channels, False))
                manifest.append((f"{layer.name}.eps", (1,), False))
            elif layer.kind == "fullyconnected":
                manifest.append((f"{layer.name}.weight", (layer.out_features, layer.in_features), True))
                manifest.append((f"{layer.name}.bias", (layer.out_features,), True))
        return manifest

    def parameter_count(self) -> int:
        """Trainable parameters only (running statistics excluded)."""
        return sum(int(np.prod(shape)) for _, shape, trainable in self.tensor_manifest() if trainable)

    def shape_trace(self) -> list[tuple[int, ...]]:
        """Expected (channels, height, width) or (features,) after each layer."""
        shape: tuple[int, ...] = (1, self.input_size, self.input_size)
        trace = []
        for layer in self.layers:
            if layer.kind == "conv":
                shape = (layer.out_ch, shape[1], shape[2])
            elif layer.kind == "maxpool":
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "fullyconnected":
                shape = (layer.out_features,)
            trace.append(shape)
        return trace


def _conv_block(name: str, in_ch: int, out_ch: int, kernel: int) -> list[LayerSpec]:
    pad = kernel // 2  # "same" padding, forced by the fixed spatial sizes
    bn_name = "bn" + name.removeprefix("conv")
    return [
        LayerSpec(kind="conv", name=name, in_ch=in_ch, out_ch=out_ch, kernel=kernel, pad=pad),
        LayerSpec(kind="batchnorm", name=bn_name, out_ch=out_ch),
        LayerSpec(kind="relu"),
        LayerSpec(kind="maxpool"),
    ]


_REGRESSOR = Architecture(
    tag=REGRESSOR_TAG,
    input_size=32,
    layers=tuple(
        _conv_block("conv1", 1, 64, 5)
        + _conv_block("conv2", 64, 128, 5)
        + _conv_block("conv3", 128, 256, 3)
        + _conv_block("conv4", 256, 512, 3)
        + [
            LayerSpec(kind="flatten"),
            LayerSpec(kind="fullyconnected", name="fc1", in_features=2048, out_features=512),
            LayerSpec(kind="relu"),
            LayerSpec(kind="dropout"),
            LayerSpec(kind="fullyconnected", name="fc2", in_features=512, out_features=128),
            LayerSpec(kind="relu"),
            LayerSpec(kind="dropout"),
            LayerSpec(kind="fullyconnected", name="fc3", in_features=128, out_features=1),
        ]
    ),
    output="mu_clamp",
)

_CLASSIFIER = Architecture(
    tag=CLASSIFIER_TAG,
    input_size=64,
    layers=tuple(
        _conv_block("conv1", 1, 32, 5)
        + _conv_block("conv2", 32, 64, 5)
        + _conv_block("conv3", 64, 128, 3)
        + [
            LayerSpec(kind="flatten"),
            LayerSpec(kind="fullyconnected", name="fc1", in_features=8192, out_features=2048),
            LayerSpec(kind="relu"),
            LayerSpec(kind="fullyconnected", name="fc2", in_features=2048, out_features=2),
        ]
    ),
    output="softmax",
)

ARCHITECTURES: dict[str, Architecture] = {arch.tag: arch for arch in (_REGRESSOR, _CLASSIFIER)}


@dataclass
class WeightBundle:
    """Named float32 tensors for one architecture, in manifest order."""

    tag: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if self.tag not in ARCHITECTURES:
            raise FormatError(f"unknown architecture tag {self.tag!r}")
        manifest = ARCHITECTURES[self.tag].tensor_manifest()
        names = list(self.tensors)
        expected_names = [name for name, _, _ in manifest]
        if names != expected_names:
            missing = [n for n in expected_names if n not in names]
            extra = [n for n in names if n not in expected_names]
            if missing or extra:
                raise FormatError(
                    f"tensor names do not match {self.tag} manifest: missing {missing}, unexpected {extra}"
                )
            raise FormatError(f"tensor order does not match {self.tag} manifest")
        for name, shape, _ in manifest:
            tensor = self.tensors[name]
            if tensor.shape != shape:
                raise FormatError(
                    f"tensor {name!r} has shape {tensor.shape}, manifest requires {shape}"
                )
            if tensor.dtype != np.float32:
                raise FormatError(f"tensor {name!r} must be float32, got {tensor.dtype}")

    @property
    def parameter_count(self) -> int:
        return ARCHITECTURES[self.tag].parameter_count()


def blank_bundle(tag: str) -> WeightBundle:
    """All-zero weights with identity batch norm; handy for synthesising bundles."""
    if tag not in ARCHITECTURES:
        raise ArgumentError(f"unknown architecture tag {tag!r}")
    tensors: dict[str, np.ndarray] = {}
    for name, shape, _ in ARCHITECTURES[tag].tensor_manifest():
        if name.endswith(".gamma") or name.endswith(".running_var"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".eps"):
            tensors[name] = np.full(shape, _BN_EPS, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return WeightBundle(tag=tag, tensors=tensors)


def save_weights(bundle: WeightBundle, path) -> None:
    bundle.validate()
    tag_bytes = bundle.tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(tag_bytes)))
        fh.write(tag_bytes)
        fh.write(struct.pack("<I", len(bundle.tensors)))
        for name, tensor in bundle.tensors.items():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.buf):
            raise FormatError(f"truncated TVMW file while reading {what}", offset=self.pos)
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path, *, expect_tag: str | None = None) -> WeightBundle:
    """Read and validate a TVMW weight bundle against its architecture manifest."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if len(reader.buf) == 0:
        raise FormatError("empty TVMW file", offset=0)
    if reader.take(4, "magic") != _MAGIC:
        raise FormatError(f"bad TVMW magic {reader.buf[:4]!r}", offset=0)
    version = reader.u32("version")
    if version != _VERSION:
        raise FormatError(f"unsupported TVMW version {version}", offset=4)
    tag = reader.take(reader.u32("tag length"), "tag").decode("utf-8")
    if expect_tag is not None and tag != expect_tag:
        raise FormatError(f"weight file holds {tag!r}, expected {expect_tag!r}")
    count = reader.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take(reader.u32("name length"), "tensor name").decode("utf-8")
        ndim = struct.unpack("<B", reader.take(1, "ndim"))[0]
        shape = struct.unpack(f"<{ndim}Q", reader.take(8 * ndim, "extents"))
        size = int(np.prod(shape)) if ndim else 1
        raw = reader.take(4 * size, f"data of {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if reader.pos != len(reader.buf):
        raise FormatError("trailing bytes after last tensor", offset=reader.pos)
    bundle = WeightBundle(tag=tag, tensors=tensors)
    bundle.validate()
    return bundle


def _conv2d_same(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, pad: int) -> np.ndarray:
    batch, _, height, width = x.shape
    out_ch, in_ch, k, _ = weight.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    columns = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, in_ch * k * k)
    flat = columns.astype(np.float32, copy=False) @ weight.reshape(out_ch, in_ch * k * k).T
    flat += bias
    return flat.reshape(batch, height, width, out_ch).transpose(0, 3, 1, 2)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    batch, ch, height, width = x.shape
    return x.reshape(batch, ch, height // 2, 2, width // 2, 2).max(axis=(3, 5))


def _forward(x: np.ndarray, bundle: WeightBundle, arch: Architecture) -> np.ndarray:
    """Run a float32 batch (N, 1, S, S) through every layer; returns (N, out)."""
    trace = arch.shape_trace()
    tensors = bundle.tensors
    for layer, expected in zip(arch.layers, trace):
        if layer.kind == "conv":
            x = _conv2d_same(x, tensors[f"{layer.name}.weight"], tensors[f"{layer.name}.bias"], layer.pad)
        elif layer.kind == "batchnorm":
            eps = tensors[f"{layer.name}.eps"][0]
            scale = tensors[f"{layer.name}.gamma"] / np.sqrt(tensors[f"{layer.name}.running_var"] + eps)
            shift = tensors[f"{layer.name}.beta"] - tensors[f"{layer.name}.running_mean"] * scale
            x = x * scale[:, None, None] + shift[:, None, None]
        elif layer.kind == "relu":
            x = np.maximum(x, np.float32(0.0))
        elif layer.kind == "maxpool":
            x = _maxpool2(x)
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "fullyconnected":
            x = x @ tensors[f"{layer.name}.weight"].T + tensors[f"{layer.name}.bias"]
        elif layer.kind == "dropout":
            pass  # identity at inference
        assert x.shape[1:] == expected, f"{layer.kind} produced {x.shape[1:]}, manifest says {expected}"
        assert x.dtype == np.float32
    return x


def _patch_array(patch, size: int) -> np.ndarray:
    data = patch.data if isinstance(patch, Patch) else np.asarray(patch, dtype=np.float64)
    if data.shape != (size, size):
        raise ArgumentError(f"expected a {size}x{size} patch, got shape {data.shape}")
    return data.astype(np.float32)


def forward_regressor(patch, weights: WeightBundle) -> float:
    """Predict the regularisation parameter for one 32x32 patch."""
    if weights.tag != REGRESSOR_TAG:
        raise ArgumentError(f"regressor inference needs {REGRESSOR_TAG!r} weights, got {weights.tag!r}")
    arch = ARCHITECTURES[REGRESSOR_TAG]
    data = _patch_array(patch, arch.input_size)
    out = _forward(data[None, None], weights, arch)
    return min(max(float(out[0, 0]), MU_MIN), MU_MAX)


def forward_classifier(patch, weights: WeightBundle) -> tuple[float, float]:
    """Class probabilities (p_gaussian, p_poisson) for one 64x64 patch."""
    if weights.tag != CLASSIFIER_TAG:
        raise ArgumentError(f"classifier inference needs {CLASSIFIER_TAG!r} weights, got {weights.tag!r}")
    arch = ARCHITECTURES[CLASSIFIER_TAG]
    data = _patch_array(patch, arch.input_size)
    logits = _forward(data[None, None], weights, arch)[0].astype(np.float64)
    expd = np.exp(logits - logits.max())
    probs = expd / expd.sum()
    return float(probs[1]), float(probs[0])


def predict_mu_map(img, weights: WeightBundle) -> np.ndarray:
    """Sliding-window parameter map: one regressor call per pixel.

    The image is reflection padded by 16 top/left and 15 bottom/right so
    that element (16, 16) of each window sits on the pixel it predicts
    for. The output has the input's shape and values in [0.01, 240].
    """
    arr = as_image(img)
    size = ARCHITECTURES[REGRESSOR_TAG].input_size
    before = size // 2
    after = size - before - 1
    padded = np.pad(arr, ((before, after), (before, after)), mode="reflect")
    height, width = arr.shape
    mu_map = np.empty((height, width), dtype=np.float64)
    for row in range(height):
        for col in range(width):
            mu_map[row, col] = forward_regressor(padded[row : row + size, col : col + size], weights)
    return mu_map


def classify_image(img, weights: WeightBundle) -> tuple[int, float]:
    """Majority vote of the classifier over 64x64 patches at stride 32.

    Returns (delta, confidence): delta 1 for Gaussian, 0 for Poisson;
    confidence is the winning vote fraction. Ties go to Gaussian with
    confidence 0.5 and a logged warning.
    """
    arr = as_image(img)
    size = ARCHITECTURES[CLASSIFIER_TAG].input_size
    if min(arr.shape) < size:
        raise ArgumentError(f"classification needs at least {size}x{size} pixels, got {arr.shape}")
    patches = extract_patches(arr, size, 32)
    gaussian_votes = 0
    for patch in patches:
        p_gaussian, p_poisson = forward_classifier(patch, weights)
        gaussian_votes += p_gaussian >= p_poisson
    total = len(patches)
    if 2 * gaussian_votes == total:
        logger.warning("classifier vote tied %d-%d; defaulting to Gaussian", gaussian_votes, total - gaussian_votes)
        return 1, 0.5
    if 2 * gaussian_votes > total:
        return 1, gaussian_votes / total
    return 0, (total - gaussian_votes) / total
