"""Serialize cost reports and plot-ready tables."""

from __future__ import annotations

import csv
import io
import json

from .costs import CostReport


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cost_json(report: CostReport, extra: dict | None = None) -> str:
    data = report.to_dict()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def cost_csv(report: CostReport) -> str:
    """Long-format table: section, name, metric, value."""
    rows = [["section", "name", "metric", "value"]]
    for name, value in report.energy.items():
        rows.append(["component", name, "energy_J", repr(value)])
    for name, value in report.area.items():
        rows.append(["component", name, "area_m2", repr(value)])
    for lc in report.layers:
        for metric in ("tile_cycles", "tile_latency", "noc_packets", "noc_latency", "latency", "energy", "edp"):
            rows.append(["layer", str(lc.layer), metric, repr(getattr(lc, metric))])
    for metric, value in (("total_energy_J", report.total_energy), ("total_area_m2", report.total_area),
                          ("total_latency_s", report.total_latency), ("edp_Js", report.edp),
                          ("throughput_density_gops_per_um2", report.throughput_density)):
        rows.append(["total", "", metric, repr(value)])
    return _csv(rows)


def plot_tables(report: CostReport) -> dict[str, str]:
    """File name -> CSV text for per-layer EDP bars and component fractions."""
    edp = [["layer", "edp_Js"]] + [[str(lc.layer), repr(lc.edp)] for lc in report.layers]

    def fractions(parts: dict[str, float], total: float):
        return [["component", "fraction"]] + [[k, repr(v / total if total else 0.0)] for k, v in parts.items()]

    return {
        "plot_layer_edp.csv": _csv(edp),
        "plot_energy_fractions.csv": _csv(fractions(report.energy, report.total_energy)),
        "plot_area_fractions.csv": _csv(fractions(report.area, report.total_area)),
    }
