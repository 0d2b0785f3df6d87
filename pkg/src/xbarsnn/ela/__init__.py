"""Energy, latency and area estimation."""

from .costs import CostError, CostReport, LayerCost, analytic_activity, evaluate_costs
from .latency import alpha_breakdown, diff_cycles_per_group, layer_cycles, layer_tile_latency, pe_latency_alpha
from .noc import hop_distance, noc_latency, noc_transfers, packet_count
from .trace import LayerJob, ScheduleTrace, generate_trace, layer_jobs, schedule

__all__ = [
    "CostError", "CostReport", "LayerCost", "analytic_activity", "evaluate_costs", "alpha_breakdown",
    "diff_cycles_per_group", "layer_cycles", "layer_tile_latency", "pe_latency_alpha", "hop_distance",
    "noc_latency", "noc_transfers", "packet_count", "LayerJob", "ScheduleTrace", "generate_trace",
    "layer_jobs", "schedule",
]
