"""Pretrained SNN model bundles: layer topology plus quantized integer weights.

A bundle is a directory holding ``model.desc`` (TOML) and one weight binary
per conv/linear layer (see :mod:`xbarsnn.tensorio`). Weights are stored as
signed bytes in N, M, d_row, d_col order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .tensorio import TensorFormatError, read_tensor, write_tensor

DESCRIPTOR = "model.desc"
FORMAT_NAME = "xbarsnn-model"
FORMAT_VERSION = 1

LAYER_KINDS = ("conv", "linear", "avgpool")
ACTIVATIONS = ("LIF", "IF", "none")


class ModelFormatError(ValueError):
    """Raised for malformed or inconsistent model bundles."""


def quantize_fixed(value: float, frac_bits: int) -> float:
    """Round ``value`` to the nearest multiple of 2**-frac_bits (ties to even)."""
    if math.isinf(value):
        return value
    scale = 1 << frac_bits
    return float(np.rint(value * scale)) / scale


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel_size: int = 1
    stride: int = 1
    padding: int = 0
    input_dim: int = 1
    threshold: float = 0.0
    leak: float = 1.0
    activation: str = "none"

    @property
    def has_weights(self) -> bool:
        return self.kind in ("conv", "linear")

    @property
    def output_dim(self) -> int:
        if self.kind == "linear":
            return 1
        return (self.input_dim + 2 * self.padding - self.kernel_size) // self.stride + 1

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        d = self.kernel_size
        return (self.out_channels, self.in_channels, d, d)

    @property
    def neuron_count(self) -> int:
        return self.out_channels * self.output_dim ** 2

    def validate(self, index: int) -> None:
        where = f"layer {index}"
        if self.kind not in LAYER_KINDS:
            raise ModelFormatError(f"unsupported layer kind {self.kind!r}, {where}")
        if self.activation not in ACTIVATIONS:
            raise ModelFormatError(f"unsupported activation {self.activation!r}, {where}")
        for name in ("in_channels", "out_channels", "kernel_size", "stride", "input_dim"):
            if getattr(self, name) < 1:
                raise ModelFormatError(f"{name} must be >= 1, {where}")
        if self.padding < 0:
            raise ModelFormatError(f"padding must be >= 0, {where}")
        if self.kind == "linear" and (self.kernel_size != 1 or self.input_dim != 1):
            raise ModelFormatError(f"linear layers need kernel_size=1 and input_dim=1, {where}")
        if self.kind == "avgpool":
            if self.in_channels != self.out_channels:
                raise ModelFormatError(f"pooling cannot change channel count, {where}")
            if self.input_dim % self.kernel_size or self.stride != self.kernel_size or self.padding:
                raise ModelFormatError(f"pooling window must tile the input exactly, {where}")
            if self.activation != "none":
                raise ModelFormatError(f"pooling layers take no activation, {where}")
        if self.output_dim < 1:
            raise ModelFormatError(f"non-positive output dimension, {where}")
        if self.activation == "IF" and self.leak != 1.0:
            raise ModelFormatError(f"IF neurons need leak == 1, {where}")
        if self.activation == "LIF" and not (0.0 < self.leak <= 1.0):
            raise ModelFormatError(f"LIF leak must lie in (0, 1], {where}")


@dataclass(frozen=True, eq=False)
class ModelBundle:
    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray | None, ...]
    weight_bits: int = 4
    membrane_bits: int = 8
    timesteps: int = 1
    encoding: str = "direct"
    name: str = "model"

    def __post_init__(self) -> None:
        for arr in self.weights:
            if arr is not None:
                arr.setflags(write=False)
        self.validate()

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return (first.in_channels, first.input_dim, first.input_dim)

    @property
    def weight_range(self) -> tuple[int, int]:
        k = self.weight_bits
        return -(1 << (k - 1)), (1 << (k - 1)) - 1

    def crossbar_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.has_weights]

    def validate(self) -> None:
        if not self.layers:
            raise ModelFormatError("model has no layers")
        if len(self.weights) != len(self.layers):
            raise ModelFormatError("one weight entry per layer is required")
        if not 1 <= self.weight_bits <= 8:
            raise ModelFormatError(f"weight_bits must be in 1..8, got {self.weight_bits}")
        if self.membrane_bits < 2:
            raise ModelFormatError("membrane_bits must be >= 2")
        if self.timesteps < 1:
            raise ModelFormatError("timesteps must be >= 1")
        if self.encoding != "direct":
            raise ModelFormatError(f"unsupported input encoding {self.encoding!r}")
        lo, hi = self.weight_range
        prev: LayerSpec | None = None
        for i, (layer, w) in enumerate(zip(self.layers, self.weights)):
            layer.validate(i)
            if prev is not None:
                _check_chain(prev, layer, i)
            if layer.has_weights:
                if w is None:
                    raise ModelFormatError(f"missing weights, layer {i}")
                if tuple(w.shape) != layer.weight_shape:
                    raise ModelFormatError(
                        f"weight shape {tuple(w.shape)} != expected {layer.weight_shape}, layer {i}"
                    )
                if w.size and (int(w.min()) < lo or int(w.max()) > hi):
                    raise ModelFormatError(f"weight out of range, layer {i}")
            elif w is not None:
                raise ModelFormatError(f"pooling layer carries weights, layer {i}")
            last = i == len(self.layers) - 1
            if layer.has_weights and not last and layer.activation == "none":
                raise ModelFormatError(f"hidden layers must be LIF or IF, layer {i}")
            if last and not layer.has_weights:
                raise ModelFormatError(f"the readout layer must be conv or linear, layer {i}")
            prev = layer

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.layers == other.layers
            and (self.weight_bits, self.membrane_bits, self.timesteps, self.encoding, self.name)
            == (other.weight_bits, other.membrane_bits, other.timesteps, other.encoding, other.name)
            and all(
                (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
                for a, b in zip(self.weights, other.weights)
            )
        )

    __hash__ = None


def _check_chain(prev: LayerSpec, layer: LayerSpec, index: int) -> None:
    if layer.kind == "linear":
        flat = prev.out_channels * prev.output_dim ** 2
        if layer.in_channels != flat:
            raise ModelFormatError(
                f"linear input {layer.in_channels} != flattened previous output {flat}, layer {index}"
            )
        return
    if prev.kind == "linear":
        raise ModelFormatError(f"spatial layer after linear layer, layer {index}")
    if layer.in_channels != prev.out_channels or layer.input_dim != prev.output_dim:
        raise ModelFormatError(
            f"input {layer.in_channels}x{layer.input_dim} does not match previous output "
            f"{prev.out_channels}x{prev.output_dim}, layer {index}"
        )


def normalize_layer(layer: LayerSpec, membrane_bits: int) -> LayerSpec:
    """Quantize threshold and leak to the neuronal-module fixed-point grid."""
    if layer.activation == "none":
        return replace(layer, threshold=0.0, leak=1.0)
    return replace(
        layer,
        threshold=quantize_fixed(layer.threshold, membrane_bits),
        leak=quantize_fixed(layer.leak, membrane_bits),
    )


def _layer_from_table(entry: dict, index: int) -> LayerSpec:
    try:
        return LayerSpec(
            kind=str(entry["kind"]),
            in_channels=int(entry["in_channels"]),
            out_channels=int(entry["out_channels"]),
            kernel_size=int(entry.get("kernel_size", 1)),
            stride=int(entry.get("stride", 1)),
            padding=int(entry.get("padding", 0)),
            input_dim=int(entry.get("input_dim", 1)),
            threshold=float(entry.get("threshold", 0.0)),
            leak=float(entry.get("leak", 1.0)),
            activation=str(entry.get("activation", "none")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed layer entry ({exc}), layer {index}") from exc


def load_model(path: str | Path) -> ModelBundle:
    root = Path(path)
    desc_path = root / DESCRIPTOR
    try:
        desc = tomllib.loads(desc_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ModelFormatError(f"no {DESCRIPTOR} in {root}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ModelFormatError(f"malformed header: {exc}") from exc
    if desc.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"malformed header: format is {desc.get('format')!r}")
    if desc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"malformed header: unsupported version {desc.get('version')!r}")
    try:
        k = int(desc["weight_bits"])
        k_mem = int(desc["membrane_bits"])
        timesteps = int(desc["timesteps"])
        encoding = str(desc.get("encoding", "direct"))
        entries = desc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed header: {exc}") from exc

    layers, weights = [], []
    for i, entry in enumerate(entries):
        layer = normalize_layer(_layer_from_table(entry, i), k_mem)
        layer.validate(i)
        w = None
        if layer.has_weights:
            if "weights" not in entry:
                raise ModelFormatError(f"no weight file named, layer {i}")
            try:
                w = read_tensor(root / entry["weights"], layer.weight_shape)
            except FileNotFoundError as exc:
                raise ModelFormatError(f"weight file missing, layer {i}") from exc
            except TensorFormatError as exc:
                raise ModelFormatError(f"{exc}, layer {i}") from exc
            if w.dtype != np.int8:
                raise ModelFormatError(f"weights must be int8, layer {i}")
        layers.append(layer)
        weights.append(w)
    return ModelBundle(
        layers=tuple(layers),
        weights=tuple(weights),
        weight_bits=k,
        membrane_bits=k_mem,
        timesteps=timesteps,
        encoding=encoding,
        name=str(desc.get("name", root.name)),
    )


def weight_filename(index: int) -> str:
    return f"layer{index:03d}.bin"


def save_model(model: ModelBundle, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (layer, w) in enumerate(zip(model.layers, model.weights)):
        entry = {
            "kind": layer.kind,
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel_size": layer.kernel_size,
            "stride": layer.stride,
            "padding": layer.padding,
            "input_dim": layer.input_dim,
            "threshold": float(layer.threshold),
            "leak": float(layer.leak),
            "activation": layer.activation,
        }
        if w is not None:
            entry["weights"] = weight_filename(i)
            write_tensor(root / entry["weights"], np.asarray(w, dtype=np.int8))
        entries.append(entry)
    desc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "name": model.name,
        "weight_bits": model.weight_bits,
        "membrane_bits": model.membrane_bits,
        "timesteps": model.timesteps,
        "encoding": model.encoding,
        "layers": entries,
    }
    (root / DESCRIPTOR).write_text(tomli_w.dumps(desc), encoding="utf-8")


def build_model(
    layers: list[LayerSpec],
    weights: list[np.ndarray | None],
    weight_bits: int = 4,
    membrane_bits: int = 8,
    timesteps: int = 1,
    name: str = "model",
) -> ModelBundle:
    """Assemble an in-memory bundle, applying the same normalization as loading."""
    norm = tuple(normalize_layer(layer, membrane_bits) for layer in layers)
    ws = tuple(None if w is None else np.asarray(w, dtype=np.int8) for w in weights)
    return ModelBundle(norm, ws, weight_bits, membrane_bits, timesteps, "direct", name)
