"""Tile-level cycle model.

One PE operation (a full read of every crossbar for one output position)
costs alpha cycles:

    alpha = input load + mux_size * ADC read + mux_size * (X / SU) DIFF
            + accumulate + store

The ADC groups of a crossbar are read sequentially through the mux, and each
group's DIFF correction takes X / SU cycles. ``alpha`` in the config
overrides the decomposition. A layer needs N_ops * T operations, spread over
Par replicas: cycles = ceil(alpha * N_ops * T / Par).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..config import HardwareConfig


@dataclass(frozen=True)
class AlphaBreakdown:
    input_load: int
    adc_read: int
    diff: int
    accumulate: int
    store: int
    override: int | None = None

    @property
    def total(self) -> int:
        if self.override is not None:
            return self.override
        return self.input_load + self.adc_read + self.diff + self.accumulate + self.store


def diff_cycles_per_group(hw: HardwareConfig) -> int:
    """Cycles the DIFF module needs per column group: X / SU."""
    return hw.xbar_size // hw.diff_speedup


def alpha_breakdown(hw: HardwareConfig) -> AlphaBreakdown:
    return AlphaBreakdown(
        input_load=hw.cycles_input_load,
        adc_read=hw.mux_size * hw.cycles_adc_read,
        diff=hw.mux_size * diff_cycles_per_group(hw),
        accumulate=hw.cycles_accumulate,
        store=hw.cycles_store,
        override=hw.alpha,
    )


def pe_latency_alpha(hw: HardwareConfig) -> int:
    return alpha_breakdown(hw).total


def op_period(alpha: int, par: int) -> Fraction:
    """Cycles per operation of a layer replicated ``par`` times."""
    return Fraction(alpha, par)


def layer_cycles(alpha: int, par: int, n_ops: int, timesteps: int = 1) -> int:
    return math.ceil(op_period(alpha, par) * n_ops * timesteps)


def layer_tile_latency(alpha: int, par: int, n_ops: int, hw: HardwareConfig, timesteps: int = 1) -> float:
    return layer_cycles(alpha, par, n_ops, timesteps) * hw.clock_period
