"""Synthetic models and datasets for desk-scale experiments.

* ``worked_example_model``: the three-layer 64/64, 64/128, 128/512 network
  used to illustrate mapping (random weights; only the shapes matter).
* ``toy_dataset`` / ``fit_toy_model``: a separable four-class task of
  oriented bars on 8x8 images and a small spiking network fitted to it.
  The convolution weights are random but fixed by the seed, firing
  thresholds are calibrated on training data, and the readout is a ridge
  regression on ideal spike counts quantized to k bits.
* ``parse_layers`` / ``random_model``: arbitrary topologies for the CLI.
* ``rescale_model``: topology variants for sweeps that reuse loaded weights.
"""

from __future__ import annotations

import re
from dataclasses import replace

import numpy as np

from .dataset import Dataset
from .model import LayerSpec, ModelBundle, build_model
from .snn import Simulator, ideal_mac

TOY_CLASSES = 4


def _random_weights(rng: np.random.Generator, shape, weight_bits: int) -> np.ndarray:
    lo, hi = -(1 << (weight_bits - 1)), (1 << (weight_bits - 1)) - 1
    return rng.integers(lo, hi + 1, size=shape, dtype=np.int64).astype(np.int8)


def worked_example_layers(input_dim: int = 32) -> list[LayerSpec]:
    return [
        LayerSpec("conv", 64, 64, 3, 1, 1, input_dim, 4.0, 1.0, "IF"),
        LayerSpec("conv", 64, 128, 3, 1, 1, input_dim, 4.0, 1.0, "IF"),
        LayerSpec("conv", 128, 512, 3, 1, 1, input_dim),
    ]


def worked_example_model(seed: int = 0, weight_bits: int = 4, timesteps: int = 1, input_dim: int = 32,
                         membrane_bits: int = 8) -> ModelBundle:
    layers = worked_example_layers(input_dim)
    rng = np.random.default_rng(seed)
    weights = [_random_weights(rng, layer.weight_shape, weight_bits) for layer in layers]
    return build_model(layers, weights, weight_bits, membrane_bits, timesteps, "worked-example")


_TOKEN = re.compile(r"^(conv|pool|fc):(\d+)(?::(\d+))?(?::(\d+))?(?::(\d+))?$")


def parse_layers(text: str, in_channels: int, input_dim: int, threshold: float = 4.0, leak: float = 1.0,
                 activation: str = "IF") -> list[LayerSpec]:
    """Parse ``conv:OUT:K[:STRIDE[:PAD]]``, ``pool:W`` and ``fc:OUT`` tokens.

    Conv padding defaults to K // 2. Hidden layers get the given activation;
    the last layer is the readout.
    """
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise ValueError("empty layer list")
    layers: list[LayerSpec] = []
    c, dim = in_channels, input_dim
    for n, tok in enumerate(tokens):
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"cannot parse layer token {tok!r}")
        kind, a, b, s, p = m.group(1), int(m.group(2)), m.group(3), m.group(4), m.group(5)
        last = n == len(tokens) - 1
        act = "none" if last else activation
        if kind == "conv":
            if b is None:
                raise ValueError(f"conv layer needs a kernel size: {tok!r}")
            k = int(b)
            stride = int(s) if s else 1
            pad = int(p) if p else k // 2
            layer = LayerSpec("conv", c, a, k, stride, pad, dim, threshold, leak, act)
            c, dim = a, layer.output_dim
        elif kind == "pool":
            layer = LayerSpec("avgpool", c, c, a, a, 0, dim)
            dim = layer.output_dim
        else:
            layer = LayerSpec("linear", c * dim * dim, a, 1, 1, 0, 1, threshold, leak, act)
            c, dim = a, 1
        layers.append(layer)
    return layers


def random_model(layers: list[LayerSpec], weight_bits: int = 4, membrane_bits: int = 8, timesteps: int = 1,
                 seed: int = 0, name: str = "random") -> ModelBundle:
    rng = np.random.default_rng(seed)
    weights = [_random_weights(rng, layer.weight_shape, weight_bits) if layer.has_weights else None
               for layer in layers]
    return build_model(layers, weights, weight_bits, membrane_bits, timesteps, name)


def toy_dataset(count: int, seed: int = 0, dim: int = 8, noise: float = 0.08) -> Dataset:
    """Oriented bars (horizontal, vertical, diagonal, anti-diagonal) on sparse noise.

    Pixels are 2-bit codes: bar pixels 2-3, noise pixels 1-3.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, TOY_CLASSES, size=count)
    images = np.zeros((count, 1, dim, dim), dtype=np.uint8)
    idx = np.arange(dim)
    for n, label in enumerate(labels):
        img = np.where(rng.random((dim, dim)) < noise, rng.integers(1, 4, size=(dim, dim)), 0)
        offset = int(rng.integers(1, dim - 1))
        if label == 0:
            rows, cols = np.full(dim, offset), idx
        elif label == 1:
            rows, cols = idx, np.full(dim, offset)
        else:
            shift = int(rng.integers(-2, 3))
            cols = idx + shift
            keep = (cols >= 0) & (cols < dim)
            rows, cols = idx[keep], cols[keep]
            if label == 3:
                cols = dim - 1 - cols
        img[rows, cols] = rng.integers(2, 4, size=len(rows))
        images[n, 0] = img
    return Dataset(images, labels.astype(np.int64), TOY_CLASSES)


def toy_layers(channels: tuple[int, int] = (8, 16), dim: int = 8, leak: float = 0.75) -> list[LayerSpec]:
    c1, c2 = channels
    return [
        LayerSpec("conv", 1, c1, 3, 1, 1, dim, 1.0, leak, "LIF"),
        LayerSpec("conv", c1, c2, 3, 1, 1, dim, 1.0, leak, "LIF"),
        LayerSpec("avgpool", c2, c2, 2, 2, 0, dim),
        LayerSpec("linear", c2 * (dim // 2) ** 2, TOY_CLASSES, 1, 1, 0, 1),
    ]


def _calibrate_threshold(mac: np.ndarray, rate: float, membrane_bits: int) -> float:
    """Threshold at the (1 - rate) quantile of positive MAC drive, kept within the register range."""
    hi = (1 << (membrane_bits - 1)) - 2
    positive = mac[mac > 0]
    if positive.size == 0:
        return 1.0
    return float(np.clip(np.floor(np.quantile(positive, 1.0 - rate)), 1, hi))


def fit_toy_model(train: Dataset, seed: int = 0, weight_bits: int = 4, membrane_bits: int = 8,
                  timesteps: int = 4, channels: tuple[int, int] = (8, 16), firing_rate: float = 0.3,
                  ridge: float = 1.0) -> ModelBundle:
    """Random conv features with calibrated thresholds plus a least-squares readout."""
    rng = np.random.default_rng(seed)
    dim = train.sample_shape[1]
    layers = toy_layers(channels, dim)
    weights: list[np.ndarray | None] = [None] * len(layers)
    weights[0] = _random_weights(rng, layers[0].weight_shape, weight_bits)
    weights[1] = _random_weights(rng, layers[1].weight_shape, weight_bits)

    # calibrate each spiking layer on a single-step pass of its actual input
    x = train.inputs.astype(np.int64)
    for i in (0, 1):
        mac = ideal_mac(x, layers[i], weights[i].astype(np.int64))
        layers[i] = replace(layers[i], threshold=_calibrate_threshold(mac, firing_rate, membrane_bits))
        x = (mac > layers[i].threshold).astype(np.int64)

    # readout: ridge regression from time-summed pooled spikes to one-hot targets
    readout = layers[-1]
    probe_w = list(weights)
    probe_w[-1] = np.zeros(readout.weight_shape, dtype=np.int8)
    probe = build_model(layers, probe_w, weight_bits, membrane_bits, timesteps, "toy")
    feats = _pooled_spike_counts(probe, train.inputs)
    onehot = np.eye(TOY_CLASSES)[train.labels] * 2.0 - 1.0
    A = feats - feats.mean(axis=0)
    W = np.linalg.solve(A.T @ A + ridge * np.eye(A.shape[1]), A.T @ onehot).T  # classes x features
    lo, hi = -(1 << (weight_bits - 1)), (1 << (weight_bits - 1)) - 1
    scale = hi / np.abs(W).max()
    wq = np.clip(np.rint(W * scale), lo, hi).astype(np.int8)
    weights[-1] = wq.reshape(readout.weight_shape)
    return build_model(layers, weights, weight_bits, membrane_bits, timesteps, "toy")


def _pooled_spike_counts(model: ModelBundle, inputs: np.ndarray) -> np.ndarray:
    """Time-summed inputs of the readout layer, one row per sample."""
    sim = Simulator(model, None, None, "ideal")
    readout = len(model.layers) - 1
    feats = np.zeros((len(inputs), model.layers[readout].in_channels))
    record: list = []
    sim.run_batch(inputs, record=record)
    for sm in record:
        if sm.layer == readout - 1:
            feats += sm.values.reshape(len(inputs), -1)
    return feats


def _cycle_take(arr: np.ndarray, axis: int, size: int) -> np.ndarray:
    return np.take(arr, np.arange(size) % arr.shape[axis], axis=axis)


def rescale_model(model: ModelBundle, conv1_channels: int | None = None, input_dim: int | None = None) -> ModelBundle:
    """Topology variant reusing existing weights.

    ``conv1_channels`` changes the first conv layer's output channels
    (weights are truncated or repeated cyclically, and the next weight layer's
    input channels follow). ``input_dim`` changes the input side length; the
    spatial dims propagate and a following linear layer's weights are
    resampled by nearest neighbour.
    """
    layers = list(model.layers)
    weights = [None if w is None else np.asarray(w) for w in model.weights]
    if conv1_channels is not None:
        first = next(i for i, l in enumerate(layers) if l.kind == "conv")
        old = layers[first].out_channels
        layers[first] = replace(layers[first], out_channels=conv1_channels)
        weights[first] = _cycle_take(weights[first], 0, conv1_channels)
        for j in range(first + 1, len(layers)):
            if layers[j].kind == "avgpool":
                layers[j] = replace(layers[j], in_channels=conv1_channels, out_channels=conv1_channels)
                continue
            if layers[j].kind == "conv":
                layers[j] = replace(layers[j], in_channels=conv1_channels)
                weights[j] = _cycle_take(weights[j], 1, conv1_channels)
            else:
                prev = layers[j - 1]
                dim = prev.output_dim
                w = weights[j].reshape(layers[j].out_channels, old, dim, dim)
                w = _cycle_take(w, 1, conv1_channels)
                layers[j] = replace(layers[j], in_channels=conv1_channels * dim * dim)
                weights[j] = w.reshape(layers[j].weight_shape)
            break
    if input_dim is not None:
        dim = input_dim
        for j, layer in enumerate(layers):
            if layer.kind == "linear":
                prev = layers[j - 1]
                c, new_dim = prev.out_channels, prev.output_dim
                old_dim = model.layers[j - 1].output_dim
                w = weights[j].reshape(layer.out_channels, c, old_dim, old_dim)
                pick = (np.arange(new_dim) * old_dim) // new_dim
                w = w[:, :, pick][:, :, :, pick]
                layers[j] = replace(layer, in_channels=c * new_dim * new_dim)
                weights[j] = w.reshape(layers[j].weight_shape)
                break
            layers[j] = replace(layer, input_dim=dim)
            dim = layers[j].output_dim
    return build_model(layers, weights, model.weight_bits, model.membrane_bits, model.timesteps, model.name)
