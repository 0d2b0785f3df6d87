"""Pipelined-execution trace generator.

Each crossbar layer issues operations back to back on a fixed slot grid of
alpha / Par_i cycles. Layer i+1 is released once layer i has completed
``factor_i`` of its N_ops * T operations; it begins at its next slot boundary
(a multiple of its own op period) at or after that moment. A factor of 1.0
degenerates to strictly sequential, layer-by-layer execution.

With ``aligned=False`` a released layer starts immediately. Only then does
raising a factor shift all later layers rigidly, which guarantees that the
peak number of active layers never grows; slot alignment can break that in
rare mixed-period cases, while makespan stays monotone either way.

The simulation advances op-completion events one at a time; the recorded
timeline keeps only the instants where the set of active layers changes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from ..config import HardwareConfig
from ..mapper import MappedNetwork, ops_per_output_channel
from ..model import ModelBundle
from .latency import op_period, pe_latency_alpha


@dataclass(frozen=True)
class LayerJob:
    layer: int
    total_ops: int
    period: Fraction  # cycles per op
    factor: float  # fraction of this layer's ops releasing the next layer
    vmem_bytes: int  # membrane storage while the layer is live


@dataclass(frozen=True)
class TraceEvent:
    time: Fraction
    active: tuple[int, ...]
    completed: tuple[int, ...]


@dataclass(frozen=True)
class ScheduleTrace:
    jobs: tuple[LayerJob, ...]
    timeline: tuple[TraceEvent, ...]
    layer_start: tuple[Fraction, ...]
    layer_end: tuple[Fraction, ...]
    release_ops: tuple[int, ...]  # ops of the previous layer done when each layer starts (0 for the first)
    steady_state_active: int
    steady_state_layers: tuple[int, ...]
    vmem_bytes: int

    @property
    def makespan(self) -> Fraction:
        return max(self.layer_end, default=Fraction(0))

    @property
    def makespan_cycles(self) -> int:
        return math.ceil(self.makespan)


def _next_slot(t: Fraction, period: Fraction) -> Fraction:
    return math.ceil(t / period) * period


def schedule(jobs: Sequence[LayerJob], aligned: bool = True) -> ScheduleTrace:
    n = len(jobs)
    if n == 0:
        return ScheduleTrace((), (), (), (), (), 0, (), 0)
    thresholds = [Fraction(str(j.factor)) * j.total_ops for j in jobs]
    start: list[Fraction | None] = [None] * n
    end: list[Fraction | None] = [None] * n
    done = [0] * n
    release_ops = [0] * n
    released = [True] + [False] * (n - 1)
    events: list[tuple[Fraction, int, int, int]] = []  # (time, order, kind, layer); kind 0 = start, 1 = op done
    seq = 0

    def push(t: Fraction, kind: int, layer: int) -> None:
        nonlocal seq
        heapq.heappush(events, (t, seq, kind, layer))
        seq += 1

    push(Fraction(0), 0, 0)
    timeline: list[TraceEvent] = []
    active: tuple[int, ...] = ()
    while events:
        now = events[0][0]
        while events and events[0][0] == now:
            _, _, kind, i = heapq.heappop(events)
            if kind == 0:
                start[i] = now
                if i > 0:
                    release_ops[i] = done[i - 1]
                push(now + jobs[i].period, 1, i)
                continue
            done[i] += 1
            if done[i] < jobs[i].total_ops:
                push(now + jobs[i].period, 1, i)
            else:
                end[i] = now
            nxt = i + 1
            if nxt < n and not released[nxt] and done[i] >= thresholds[i]:
                released[nxt] = True
                push(_next_slot(now, jobs[nxt].period) if aligned else now, 0, nxt)
        current = tuple(i for i in range(n) if start[i] is not None and end[i] is None)
        if current != active or not timeline:
            timeline.append(TraceEvent(now, current, tuple(done)))
            active = current

    steady = max(len(e.active) for e in timeline)
    peak = [e.active for e in timeline if len(e.active) == steady]
    best = max(peak, key=lambda act: (sum(jobs[i].vmem_bytes for i in act), [-i for i in act]))
    return ScheduleTrace(
        jobs=tuple(jobs),
        timeline=tuple(timeline),
        layer_start=tuple(start),
        layer_end=tuple(end),
        release_ops=tuple(release_ops),
        steady_state_active=steady,
        steady_state_layers=tuple(jobs[i].layer for i in best),
        vmem_bytes=sum(jobs[i].vmem_bytes for i in best),
    )


def layer_jobs(model: ModelBundle, mapped: MappedNetwork, hw: HardwareConfig) -> list[LayerJob]:
    alpha = pe_latency_alpha(hw)
    jobs = []
    for pos, m in enumerate(lm for lm in mapped.layers if lm.crossbars):
        spec = model.layers[m.layer]
        jobs.append(LayerJob(
            layer=m.layer,
            total_ops=ops_per_output_channel(spec) * model.timesteps,
            period=op_period(alpha, m.par),
            factor=hw.scheduling_factor(pos),
            vmem_bytes=math.ceil(spec.neuron_count * model.membrane_bits / 8),
        ))
    return jobs


def generate_trace(model: ModelBundle, mapped: MappedNetwork, hw: HardwareConfig) -> ScheduleTrace:
    return schedule(layer_jobs(model, mapped, hw), aligned=hw.slot_aligned_release)


def trace_csv_rows(trace: ScheduleTrace) -> list[list[str]]:
    layers = [j.layer for j in trace.jobs]
    header = ["time_cycles", "active_layers"] + [f"done_layer{i}" for i in layers]
    rows = [header]
    for e in trace.timeline:
        rows.append([str(e.time), " ".join(str(layers[i]) for i in e.active)] + [str(c) for c in e.completed])
    return rows
