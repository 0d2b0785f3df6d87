"""Energy, area, latency and EDP accounting.

Energy is a sum of event counts times unit energies; area is a sum of
instance counts times unit areas. Counts are per inference (one sample, all
T time steps):

* every operation reads every crossbar of the layer once per time step, so
  array, row-driver, ADC/mux/shift-add, DIFF and accumulator events do not
  depend on spike activity;
* PE and tile input-buffer traffic is spike-gated: one bit per nonzero input
  delivered to each crossbar group that consumes it;
* NoC traffic follows the packet count of the tile-to-tile transfer model
  (k_mem bits per activation), independent of activity;
* neuronal-module events are one per neuron per time step.

Without measured activity an analytic fallback assumes a fraction
``analytic_sparsity`` of silent inputs for every layer after the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from ..config import COMPONENTS, HardwareConfig
from ..mapper import MappedNetwork, ops_per_output_channel
from ..model import ModelBundle
from .latency import alpha_breakdown, layer_cycles
from .noc import noc_latency, noc_transfers
from .trace import ScheduleTrace

SCHEMA_VERSION = 1
OPS_PER_MAC = 2


class CostError(ValueError):
    pass


@dataclass
class LayerCost:
    layer: int
    kind: str
    n_ops: int
    par: int
    tile_cycles: int
    tile_latency: float
    noc_packets: int
    noc_hops: int
    noc_latency: float
    latency: float
    energy: float
    edp: float


@dataclass
class CostReport:
    layers: list[LayerCost]
    energy: dict[str, float]
    area: dict[str, float]
    total_energy: float
    total_area: float
    makespan_cycles: int
    total_latency: float
    edp: float
    ops: int
    throughput_density: float  # GOPS per square micrometre
    alpha: int
    steady_state_active: int
    vmem_bytes: int
    activity_source: str
    schema_version: int = SCHEMA_VERSION
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "ops_counting": "multiply and accumulate counted as 2 ops",
            "activity_source": self.activity_source,
            "alpha_cycles": self.alpha,
            "steady_state_active": self.steady_state_active,
            "vmem_bytes": self.vmem_bytes,
            "makespan_cycles": self.makespan_cycles,
            "total_latency_s": self.total_latency,
            "total_energy_J": self.total_energy,
            "total_area_m2": self.total_area,
            "edp_Js": self.edp,
            "ops": self.ops,
            "throughput_density_gops_per_um2": self.throughput_density,
            "energy_J": dict(self.energy),
            "area_m2": dict(self.area),
            "layers": [vars(lc).copy() for lc in self.layers],
            "notes": list(self.notes),
        }


def input_elements(model: ModelBundle, layer: int) -> int:
    spec = model.layers[layer]
    return spec.in_channels * spec.input_dim ** 2


def analytic_activity(model: ModelBundle, hw: HardwareConfig) -> dict[int, float]:
    """Nonzero inputs per inference assuming a fixed input sparsity after layer 0."""
    out = {}
    for i in range(len(model.layers)):
        dense = input_elements(model, i) * model.timesteps
        out[i] = float(dense) if i == 0 else dense * (1.0 - hw.analytic_sparsity)
    return out


def _distinct_outputs(groups: Mapping[object, list[range]]) -> int:
    return sum(len(set().union(*(set(r) for r in ranges))) for ranges in groups.values())


def event_counts(model: ModelBundle, mapped: MappedNetwork, hw: HardwareConfig,
                 input_events: Mapping[int, float]) -> dict[int, dict[str, float]]:
    """Per-layer, per-component event counts for one inference."""
    T = model.timesteps
    psum_bytes = math.ceil(model.membrane_bits / 8)
    transfers = {t.layer: t for t in noc_transfers(model, mapped, hw)}
    counts: dict[int, dict[str, float]] = {}
    for m in mapped.layers:
        spec = model.layers[m.layer]
        c = dict.fromkeys(COMPONENTS, 0.0)
        counts[m.layer] = c
        if spec.kind == "avgpool":
            c["pooling"] = float(spec.neuron_count * T)
            continue
        if m.layer not in input_events:
            raise CostError(f"missing activity counts, layer {m.layer}")
        slices = mapped.slices_for(m.layer)
        reads = ops_per_output_channel(spec) * T
        cells = sum(s.valid_rows * s.valid_cols for s in slices)
        rows = sum(s.valid_rows for s in slices)
        cols = sum(s.valid_cols for s in slices)
        logical = sum(len(s.col_block) for s in slices)
        per_pe: dict[tuple[int, int], list[range]] = {}
        per_tile: dict[int, list[range]] = {}
        for s in slices:
            per_pe.setdefault(s.coords[:2], []).append(s.col_block)
            per_tile.setdefault(s.coords[0], []).append(s.col_block)
        pe_outs, tile_outs = _distinct_outputs(per_pe), _distinct_outputs(per_tile)
        events = float(input_events[m.layer])
        neurons = spec.neuron_count * T
        c["crossbar_array"] = float(cells * reads)
        c["input_peripherals"] = float(rows * reads)
        c["mux"] = c["adc"] = c["shift_add"] = float(cols * reads)
        c["diff"] = float(logical * reads)
        c["pe_accumulator"] = float(logical * reads)
        c["pe_buffer"] = float(pe_outs * reads * psum_bytes)
        c["tile_accumulator"] = float(pe_outs * reads)
        c["tile_buffer"] = float(tile_outs * reads * psum_bytes)
        c["global_accumulator"] = float(tile_outs * reads)
        c["global_buffer"] = float(neurons * psum_bytes)
        c["pe_input_buffer"] = events * spec.kernel_size ** 2 * m.col_blocks / 8
        c["tile_input_buffer"] = events * m.tiles / 8
        c["neuron_adder"] = float(neurons)
        c["neuron_subtractor"] = float(neurons) if spec.activation == "LIF" else 0.0
        c["neuron_comparator"] = float(neurons) if spec.activation in ("LIF", "IF") else 0.0
        c["vmem_cache"] = float(2 * neurons * psum_bytes)
        t = transfers[m.layer]
        c["noc_router"] = float(t.packets * t.hops * T)
    return counts


def instance_counts(mapped: MappedNetwork, hw: HardwareConfig, trace: ScheduleTrace) -> dict[str, float]:
    """Physical instances (in each component's area unit) of the whole chip."""
    pes = sum(m.physical_pes for m in mapped.layers)
    crossbars = pes * hw.crossbars_per_pe
    groups = crossbars * hw.adc_groups
    tiles = mapped.total_tiles
    X = hw.xbar_size
    n = dict.fromkeys(COMPONENTS, 0.0)
    n["crossbar_array"] = float(crossbars * X * X)
    n["input_peripherals"] = float(crossbars * X)
    for name in ("mux", "adc", "shift_add", "diff"):
        n[name] = float(groups)
    n["pe_input_buffer"] = float(pes * hw.pe_input_buffer)
    n["pe_buffer"] = float(pes * hw.pe_buffer)
    n["pe_accumulator"] = float(pes)
    n["tile_input_buffer"] = float(tiles * hw.tile_input_buffer)
    n["tile_buffer"] = float(tiles * hw.tile_buffer)
    n["tile_accumulator"] = float(tiles)
    n["global_buffer"] = float(hw.global_buffer)
    n["global_accumulator"] = 1.0
    n["pooling"] = 1.0
    for name in ("neuron_adder", "neuron_subtractor", "neuron_comparator"):
        n[name] = float(hw.neuron_lanes)
    n["vmem_cache"] = float(trace.vmem_bytes)
    n["noc_router"] = float(tiles + 1)
    return n


def total_ops(model: ModelBundle) -> int:
    macs = 0
    for spec in model.layers:
        if spec.has_weights:
            macs += spec.neuron_count * spec.in_channels * spec.kernel_size ** 2
    return OPS_PER_MAC * macs * model.timesteps


def evaluate_costs(model: ModelBundle, mapped: MappedNetwork, hw: HardwareConfig, trace: ScheduleTrace,
                   activity: Mapping[int, float] | None = None) -> CostReport:
    """Full cost report; ``activity`` maps layer -> nonzero inputs per inference."""
    source = "measured" if activity is not None else "analytic"
    if activity is None:
        activity = analytic_activity(model, hw)
    costs = hw.cost_tables
    counts = event_counts(model, mapped, hw, activity)
    energy = {name: math.fsum(c[name] for c in counts.values()) * costs[name].energy for name in COMPONENTS}
    instances = instance_counts(mapped, hw, trace)
    area = {name: instances[name] * costs[name].area for name in COMPONENTS}

    alpha = alpha_breakdown(hw).total
    T = model.timesteps
    transfers = {t.layer: t for t in noc_transfers(model, mapped, hw)}
    layers = []
    for m in mapped.layers:
        if not m.crossbars:
            continue
        spec = model.layers[m.layer]
        n_ops = ops_per_output_channel(spec)
        cycles = layer_cycles(alpha, m.par, n_ops, T)
        tile_lat = cycles * hw.clock_period
        t = transfers[m.layer]
        noc_lat = noc_latency(t, hw, T)
        e = math.fsum(counts[m.layer][name] * costs[name].energy for name in COMPONENTS)
        lat = tile_lat + noc_lat
        layers.append(LayerCost(m.layer, spec.kind, n_ops, m.par, cycles, tile_lat, t.packets, t.hops,
                                noc_lat, lat, e, e * lat))

    total_energy = math.fsum(energy.values())
    total_area = math.fsum(area.values())
    total_latency = trace.makespan_cycles * hw.clock_period + math.fsum(lc.noc_latency for lc in layers)
    ops = total_ops(model)
    density = ops / total_latency / 1e9 / (total_area * 1e12) if total_latency > 0 and total_area > 0 else 0.0
    notes = ["unit costs are configuration inputs; defaults are illustrative"]
    return CostReport(layers, energy, area, total_energy, total_area, trace.makespan_cycles, total_latency,
                      total_energy * total_latency, ops, density, alpha, trace.steady_state_active,
                      trace.vmem_bytes, source, notes=notes)
