"""Partition layers onto crossbars, PEs and tiles.

Each conv/linear layer's weights are cut along the input-channel axis into
row blocks of X channels and along the (bit-sliced) output axis into column
blocks; every kernel position gets its own crossbar. The k/b bit slices of a
weight occupy adjacent columns, least significant first.

Crossbars are enumerated (row block, column block) outer and kernel position
inner and packed N_C at a time into PEs, so the d*d kernel positions of one
block share a PE group. Layers never share a tile; a layer whose PE set fits
in a tile is replicated Par_i = floor(N_PE / PE_i) times.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .config import HardwareConfig
from .model import LayerSpec, ModelBundle
from .nice.encoding import EncodingInfo, encode_layer


class MappingError(ValueError):
    pass


@dataclass
class CrossbarSlice:
    layer: int
    kernel_pos: tuple[int, int]
    row_block: range  # input channels
    col_block: range  # logical output channels
    slices_per_weight: int  # k / b adjacent columns per output channel
    coords: tuple[int, int, int]  # (tile, pe within tile, crossbar within pe)
    index: int  # crossbar index within its layer
    encoded_weights: np.ndarray | None = None  # X x X cell values in [0, 2^b - 1]
    sign_bits: np.ndarray | None = None  # X x X, 1 where the source weight is negative
    conductances: np.ndarray | None = None  # filled by nice.engine.program_slice
    effective_conductances: np.ndarray | None = field(default=None, repr=False)

    @property
    def valid_rows(self) -> int:
        return len(self.row_block)

    @property
    def valid_cols(self) -> int:
        return len(self.col_block) * self.slices_per_weight

    @property
    def bit_slice(self) -> np.ndarray:
        """Bit-slice index of each valid physical column."""
        return np.arange(self.valid_cols) % self.slices_per_weight

    def logical_signs(self) -> np.ndarray:
        """valid_rows x outputs sign matrix (one column per output channel)."""
        return self.sign_bits[: self.valid_rows, : self.valid_cols : self.slices_per_weight]


@dataclass(frozen=True)
class LayerMapping:
    layer: int
    kind: str
    crossbars: int
    pes: int
    par: int
    tiles: int
    first_tile: int
    row_blocks: int
    col_blocks: int
    outputs_per_crossbar: int
    encoding: EncodingInfo | None

    @property
    def physical_pes(self) -> int:
        return self.pes * self.par


@dataclass
class MappedNetwork:
    layers: list[LayerMapping]
    slices: list[CrossbarSlice]
    total_tiles: int
    xbar_size: int
    materialized: bool = True

    @property
    def pe_count_per_layer(self) -> dict[int, int]:
        return {m.layer: m.pes for m in self.layers if m.crossbars}

    @property
    def par_per_layer(self) -> dict[int, int]:
        return {m.layer: m.par for m in self.layers if m.crossbars}

    @property
    def tile_assignment(self) -> dict[tuple[int, int], tuple[int, int, int]]:
        """(layer, crossbar index) -> (tile, pe, crossbar)."""
        return {(s.layer, s.index): s.coords for s in self.slices}

    def layer(self, index: int) -> LayerMapping:
        return self.layers[index]

    def slices_for(self, layer: int) -> list[CrossbarSlice]:
        return [s for s in self.slices if s.layer == layer]


def ops_per_output_channel(layer: LayerSpec) -> int:
    """Output positions per channel for conv layers; 1 for linear layers."""
    if layer.kind == "linear":
        return 1
    if layer.kind != "conv":
        raise ValueError(f"{layer.kind} layers perform no crossbar operations")
    return layer.output_dim ** 2


def slices_per_weight(weight_bits: int, hw: HardwareConfig, layer: int) -> int:
    b = hw.bits_per_cell
    if weight_bits % b:
        raise MappingError(f"layer {layer}: bits per cell {b} does not divide weight bits {weight_bits}")
    s = weight_bits // b
    if hw.xbar_size % s:
        deficit = s - hw.xbar_size % s
        raise MappingError(
            f"layer {layer}: {s} bit-slice columns per weight do not tile a {hw.xbar_size}-column "
            f"crossbar ({deficit} columns short of a whole weight)"
        )
    return s


def _layer_geometry(layer: LayerSpec, s: int, hw: HardwareConfig) -> tuple[int, int, int, int]:
    X = hw.xbar_size
    outputs = X // s
    row_blocks = math.ceil(layer.in_channels / X)
    col_blocks = math.ceil(layer.out_channels / outputs)
    crossbars = row_blocks * col_blocks * layer.kernel_size ** 2
    return row_blocks, col_blocks, crossbars, outputs


def _slice_cells(w: np.ndarray, enc: np.ndarray, rows: range, cols: range, dr: int, dc: int,
                 s: int, b: int, X: int) -> tuple[np.ndarray, np.ndarray]:
    block = enc[cols.start:cols.stop, rows.start:rows.stop, dr, dc].T.astype(np.int64)  # rows x outs
    neg = (w[cols.start:cols.stop, rows.start:rows.stop, dr, dc].T < 0).astype(np.uint8)
    shifts = b * np.arange(s)
    cells = (block[:, :, None] >> shifts) & ((1 << b) - 1)  # rows x outs x s
    r, o = block.shape
    encoded = np.zeros((X, X), dtype=np.uint8)
    signs = np.zeros((X, X), dtype=np.uint8)
    encoded[:r, : o * s] = cells.reshape(r, o * s)
    signs[:r, : o * s] = np.repeat(neg, s, axis=1)
    return encoded, signs


def map_network(model: ModelBundle, hw: HardwareConfig, materialize: bool = True) -> MappedNetwork:
    """Place every crossbar layer; ``materialize=False`` skips cell matrices (cost-only runs)."""
    X = hw.xbar_size
    layers: list[LayerMapping] = []
    slices: list[CrossbarSlice] = []
    next_tile = 0
    for i, (spec, w) in enumerate(zip(model.layers, model.weights)):
        if not spec.has_weights:
            layers.append(LayerMapping(i, spec.kind, 0, 0, 0, 0, -1, 0, 0, 0, None))
            continue
        s = slices_per_weight(model.weight_bits, hw, i)
        row_blocks, col_blocks, crossbars, outputs = _layer_geometry(spec, s, hw)
        pes = math.ceil(crossbars / hw.crossbars_per_pe)
        par = hw.pes_per_tile // pes if pes <= hw.pes_per_tile else 1
        tiles = math.ceil(pes * par / hw.pes_per_tile)
        enc, _sign, info = encode_layer(w, model.weight_bits, hw.encoding)
        d = spec.kernel_size
        idx = 0
        for rb in range(row_blocks):
            rows = range(rb * X, min((rb + 1) * X, spec.in_channels))
            for cb in range(col_blocks):
                cols = range(cb * outputs, min((cb + 1) * outputs, spec.out_channels))
                for dr in range(d):
                    for dc in range(d):
                        pe, xb = divmod(idx, hw.crossbars_per_pe)
                        tile, pe_in_tile = divmod(pe, hw.pes_per_tile)
                        sl = CrossbarSlice(i, (dr, dc), rows, cols, s, (next_tile + tile, pe_in_tile, xb), idx)
                        if materialize:
                            sl.encoded_weights, sl.sign_bits = _slice_cells(
                                w, enc, rows, cols, dr, dc, s, hw.bits_per_cell, X)
                            sl.encoded_weights.setflags(write=False)
                            sl.sign_bits.setflags(write=False)
                        slices.append(sl)
                        idx += 1
        layers.append(LayerMapping(i, spec.kind, crossbars, pes, par, tiles, next_tile,
                                   row_blocks, col_blocks, outputs, info))
        next_tile += tiles
    return MappedNetwork(layers, slices, next_tile, X, materialize)


def reassemble_weights(mapped: MappedNetwork, model: ModelBundle, layer: int, p: int, bits_per_cell: int) -> np.ndarray:
    """Rebuild a layer's signed weight tensor from its slices (inverse of mapping)."""
    spec = model.layers[layer]
    out = np.zeros(spec.weight_shape, dtype=np.int64)
    for sl in mapped.slices_for(layer):
        r, c, s = sl.valid_rows, sl.valid_cols, sl.slices_per_weight
        cells = sl.encoded_weights[:r, :c].astype(np.int64).reshape(r, c // s, s)
        values = (cells << (bits_per_cell * np.arange(s))).sum(axis=-1)
        values -= sl.logical_signs().astype(np.int64) << p
        dr, dc = sl.kernel_pos
        out[sl.col_block.start:sl.col_block.stop, sl.row_block.start:sl.row_block.stop, dr, dc] = values.T
    return out


def mapping_report_csv(mapped: MappedNetwork) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer", "kind", "crossbars", "pes", "par", "tiles", "first_tile", "shift_exponent"])
    for m in mapped.layers:
        p = "" if m.encoding is None else m.encoding.p
        writer.writerow([m.layer, m.kind, m.crossbars, m.pes, m.par, m.tiles, m.first_tile, p])
    return buf.getvalue()
