"""Time-stepped spiking inference on the mapped network.

Membrane potentials are integers held in signed ``membrane_bits`` registers
(saturating). The leak factor is a fixed-point fraction with
``membrane_bits`` fractional bits; the product is truncated toward zero.
A neuron fires when U > Th and is then reset to zero.

The readout layer does not fire: its MAC outputs are summed over all time
steps and the class with the largest score wins (first index on ties).

Inputs use direct encoding: the same integer input codes are presented at
every time step. In the hardware-realistic mode layer 0 is therefore computed
digitally unless ``layer0_crossbar`` asks for bit-serial crossbar evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import HardwareConfig
from .dataset import Dataset
from .mapper import MappedNetwork
from .model import LayerSpec, ModelBundle
from .nice.engine import crossbar_mac_batch, program_network

MODES = ("ideal", "nonideal")
BATCH = 64


class InferenceError(ValueError):
    pass


@dataclass
class NeuronState:
    U: np.ndarray  # int64 membrane values
    spiked: np.ndarray  # uint8, spikes emitted by the last update

    @classmethod
    def zeros(cls, shape) -> "NeuronState":
        return cls(np.zeros(shape, dtype=np.int64), np.zeros(shape, dtype=np.uint8))


@dataclass(frozen=True)
class SpikeMap:
    layer: int
    t: int
    values: np.ndarray


@dataclass
class LayerActivity:
    layer: int
    kind: str
    input_events: int = 0  # nonzero input elements, summed over samples and time steps
    output_spikes: int = 0  # spikes emitted (spiking and pooling layers)
    neurons: int = 0


@dataclass
class InferenceResult:
    mode: str
    samples: int
    timesteps: int
    accuracy: float
    predictions: np.ndarray
    scores: np.ndarray
    activity: list[LayerActivity]
    layer0_digital: bool
    sparsity: dict[int, float] = field(default_factory=dict)

    def per_sample_activity(self) -> dict[int, dict[str, float]]:
        n = max(self.samples, 1)
        return {a.layer: {"input_events": a.input_events / n, "output_spikes": a.output_spikes / n}
                for a in self.activity}


def _saturate(U: np.ndarray, bits: int) -> np.ndarray:
    hi = (1 << (bits - 1)) - 1
    return np.clip(U, -hi - 1, hi)


def leak_fixed(U: np.ndarray, leak: float, bits: int) -> np.ndarray:
    """lambda * U with lambda on a 2**-bits grid, truncated toward zero."""
    lam = int(round(leak * (1 << bits)))
    if lam == 1 << bits:
        return U
    prod = np.asarray(U, dtype=np.int64) * lam
    return np.sign(prod) * (np.abs(prod) >> bits)


def lif_update(state: NeuronState, mac_in, threshold: float, leak: float, mode: str = "LIF",
               membrane_bits: int = 8) -> tuple[NeuronState, np.ndarray]:
    """One integrate-fire-reset step; returns the new state and the binary spikes."""
    if mode not in ("LIF", "IF"):
        raise ValueError(f"unknown neuron mode {mode!r}")
    mac_in = np.asarray(mac_in, dtype=np.int64)
    if mac_in.shape != state.U.shape:
        raise ValueError(f"input shape {mac_in.shape} != state shape {state.U.shape}")
    carried = state.U if mode == "IF" else leak_fixed(state.U, leak, membrane_bits)
    U = _saturate(carried + mac_in, membrane_bits)
    spikes = (U > threshold).astype(np.uint8)
    U = np.where(spikes == 1, 0, U)
    return NeuronState(U, spikes), spikes


def pool(spikes: np.ndarray, window: int) -> np.ndarray:
    """Average-pool binary maps over the last two axes, then binarize at 0.5 (ties -> 1)."""
    *lead, H, W = spikes.shape
    if H % window or W % window:
        raise ValueError(f"spatial dims {H}x{W} not divisible by window {window}")
    blocks = spikes.reshape(*lead, H // window, window, W // window, window)
    counts = blocks.sum(axis=(-3, -1), dtype=np.int64)
    return (2 * counts >= window * window).astype(np.uint8)


def _windows(x: np.ndarray, layer: LayerSpec):
    """Yield ((dr, dc), window) with window shaped (B, M, Ho, Wo)."""
    p, s, d, Ho = layer.padding, layer.stride, layer.kernel_size, layer.output_dim
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    for dr in range(d):
        for dc in range(d):
            yield (dr, dc), xp[:, :, dr:dr + s * (Ho - 1) + 1:s, dc:dc + s * (Ho - 1) + 1:s]


def ideal_mac(x: np.ndarray, layer: LayerSpec, weights: np.ndarray) -> np.ndarray:
    """Exact integer conv/linear MAC for a batch: (B, M, H, W) or (B, M) -> (B, N, Ho, Wo) or (B, N)."""
    w = weights.astype(np.int64)
    if layer.kind == "linear":
        return x.reshape(len(x), -1).astype(np.int64) @ w[:, :, 0, 0].T
    B, Ho = len(x), layer.output_dim
    out = np.zeros((B, layer.out_channels, Ho, Ho), dtype=np.int64)
    for (dr, dc), win in _windows(x.astype(np.int64), layer):
        out += np.einsum("nm,bmhw->bnhw", w[:, :, dr, dc], win)
    return out


class _CrossbarLayer:
    """Hardware-realistic MAC for one mapped layer."""

    def __init__(self, mapped: MappedNetwork, index: int, hw: HardwareConfig):
        self.hw = hw
        self.p = mapped.layers[index].encoding.p
        self.by_pos: dict[tuple[int, int], list] = {}
        for sl in mapped.slices_for(index):
            self.by_pos.setdefault(sl.kernel_pos, []).append(sl)

    def binary_mac(self, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
        if layer.kind == "linear":
            B = len(x)
            flat = x.reshape(B, -1)
            out = np.zeros((B, layer.out_channels), dtype=np.int64)
            for sl in self.by_pos[(0, 0)]:
                rows, cols = sl.row_block, sl.col_block
                out[:, cols.start:cols.stop] += crossbar_mac_batch(sl, flat[:, rows.start:rows.stop], self.hw, self.p)
            return out
        B, Ho = len(x), layer.output_dim
        out = np.zeros((B, Ho, Ho, layer.out_channels), dtype=np.int64)
        for pos, win in _windows(x, layer):
            patches = win.transpose(0, 2, 3, 1).reshape(B * Ho * Ho, layer.in_channels)
            for sl in self.by_pos[pos]:
                rows, cols = sl.row_block, sl.col_block
                part = crossbar_mac_batch(sl, patches[:, rows.start:rows.stop], self.hw, self.p)
                out[..., cols.start:cols.stop] += part.reshape(B, Ho, Ho, -1)
        return out.transpose(0, 3, 1, 2)

    def mac(self, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
        if x.max(initial=0) <= 1 and x.min(initial=0) >= 0:
            return self.binary_mac(x, layer)
        if x.min() < 0:
            raise InferenceError("crossbar inputs must be non-negative")
        # bit-serial evaluation of multi-bit input codes, one binary plane per bit
        total = None
        for q in range(int(x.max()).bit_length()):
            plane = ((x >> q) & 1).astype(np.uint8)
            part = self.binary_mac(plane, layer) << q
            total = part if total is None else total + part
        return total


class Simulator:
    """Runs batches of samples through the network in either mode."""

    def __init__(self, model: ModelBundle, mapped: MappedNetwork | None, hw: HardwareConfig, mode: str = "ideal"):
        if mode not in MODES:
            raise InferenceError(f"mode must be one of {MODES}")
        self.model, self.hw, self.mode = model, hw, mode
        self.layer0_digital = mode == "ideal" or not hw.layer0_crossbar
        self.engines: dict[int, _CrossbarLayer] = {}
        if mode == "nonideal":
            if mapped is None or not mapped.materialized:
                raise InferenceError("hardware-realistic inference needs a materialized mapping")
            program_network(mapped, hw)
            for i in model.crossbar_layers():
                if i > 0 or not self.layer0_digital:
                    self.engines[i] = _CrossbarLayer(mapped, i, hw)

    def _mac(self, i: int, x: np.ndarray) -> np.ndarray:
        layer = self.model.layers[i]
        if i in self.engines:
            return self.engines[i].mac(x, layer)
        return ideal_mac(x, layer, self.model.weights[i])

    def run_batch(self, inputs: np.ndarray, activity: list[LayerActivity] | None = None,
                  record: list[SpikeMap] | None = None, record_u: list | None = None) -> np.ndarray:
        """Return accumulated readout scores for a batch, clearing all state first."""
        model = self.model
        inputs = np.asarray(inputs)
        if inputs.shape[1:] != model.input_shape:
            raise InferenceError(f"sample shape {inputs.shape[1:]} != model input {model.input_shape}")
        B = len(inputs)
        last = len(model.layers) - 1
        states: dict[int, NeuronState] = {}
        scores = None
        for t in range(model.timesteps):
            x = inputs.astype(np.int64)
            for i, layer in enumerate(model.layers):
                if activity is not None:
                    activity[i].input_events += int(np.count_nonzero(x))
                if layer.kind == "avgpool":
                    x = pool(x, layer.kernel_size)
                elif i == last:
                    mac = self._mac(i, x).reshape(B, -1)
                    scores = mac if scores is None else scores + mac
                    continue
                else:
                    mac = self._mac(i, x)
                    state = states.get(i) or NeuronState.zeros(mac.shape)
                    state, x = lif_update(state, mac, layer.threshold, layer.leak, layer.activation,
                                          model.membrane_bits)
                    states[i] = state
                    if record_u is not None:
                        record_u.append((i, t, state.U.copy()))
                if activity is not None:
                    activity[i].output_spikes += int(x.sum())
                if record is not None:
                    record.append(SpikeMap(i, t, x.copy()))
        return scores


def run_inference(model: ModelBundle, mapped: MappedNetwork | None, hw: HardwareConfig, dataset: Dataset,
                  mode: str = "ideal", batch_size: int = BATCH) -> InferenceResult:
    """Top-1 accuracy and per-layer spike sparsity over a dataset."""
    sim = Simulator(model, mapped, hw, mode)
    if dataset.sample_shape != model.input_shape:
        raise InferenceError(f"dataset samples {dataset.sample_shape} != model input {model.input_shape}")
    activity = [LayerActivity(i, layer.kind, neurons=layer.neuron_count) for i, layer in enumerate(model.layers)]
    chunks = [sim.run_batch(dataset.inputs[s:s + batch_size], activity) for s in range(0, len(dataset), batch_size)]
    scores = np.concatenate(chunks) if chunks else np.zeros((0, model.layers[-1].neuron_count), dtype=np.int64)
    predictions = scores.argmax(axis=1) if len(scores) else np.zeros(0, dtype=np.int64)
    accuracy = float(np.mean(predictions == dataset.labels)) if len(dataset) else 0.0
    sparsity = {}
    denom = len(dataset) * model.timesteps
    for i, layer in enumerate(model.layers[:-1]):
        if denom and (layer.activation != "none" or layer.kind == "avgpool"):
            sparsity[i] = 1.0 - activity[i].output_spikes / (layer.neuron_count * denom)
    return InferenceResult(mode, len(dataset), model.timesteps, accuracy, predictions, scores, activity,
                           sim.layer0_digital, sparsity)
