"""Analytic 2-D mesh NoC: Manhattan hops, no contention.

Tiles are placed row-major in mapping order; one extra node after the last
tile hosts the global periphery (accumulator, neuronal module, pooling).
Layer i's packets travel from its first tile to the first tile of the next
crossbar layer, or to the global node for the last layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..config import HardwareConfig
from ..mapper import MappedNetwork
from ..model import ModelBundle


@dataclass(frozen=True)
class NocTransfer:
    layer: int
    activations: int
    packets: int
    hops: int
    cycles_per_step: int


def grid_columns(total_tiles: int, hw: HardwareConfig) -> int:
    if hw.noc_grid_cols:
        return hw.noc_grid_cols
    return max(1, math.ceil(math.sqrt(total_tiles + 1)))


def tile_coords(node: int, cols: int) -> tuple[int, int]:
    return divmod(node, cols)


def hop_distance(a: int, b: int, cols: int) -> int:
    (ra, ca), (rb, cb) = tile_coords(a, cols), tile_coords(b, cols)
    return abs(ra - rb) + abs(ca - cb)


def packet_count(activations: int, membrane_bits: int, noc_width: int) -> int:
    return math.ceil(activations * membrane_bits / noc_width)


def noc_transfers(model: ModelBundle, mapped: MappedNetwork, hw: HardwareConfig) -> list[NocTransfer]:
    cols = grid_columns(mapped.total_tiles, hw)
    global_node = mapped.total_tiles
    xbar = [m for m in mapped.layers if m.crossbars]
    out = []
    for pos, m in enumerate(xbar):
        dest = xbar[pos + 1].first_tile if pos + 1 < len(xbar) else global_node
        hops = hop_distance(m.first_tile, dest, cols)
        acts = model.layers[m.layer].neuron_count
        packets = packet_count(acts, model.membrane_bits, hw.noc_width)
        out.append(NocTransfer(m.layer, acts, packets, hops, packets * hops * hw.noc_hop_cycles))
    return out


def noc_latency(transfer: NocTransfer, hw: HardwareConfig, timesteps: int = 1) -> float:
    return transfer.cycles_per_step * timesteps * hw.clock_period
