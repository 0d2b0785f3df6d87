"""Command-line front end: ``xbarsnn eval | sweep | gen | dump-slice``.

Every run writes its outputs into a fresh directory that appears atomically
(built under a temporary name, then renamed), together with a
``manifest.json`` that ``eval --manifest`` accepts for an exact re-run.
Reports carry a schema version and no timestamps or output paths, so equal
inputs give byte-identical files.

Sweep points run in parallel when ``XBARSNN_WORKERS`` is set above 1.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from .config import HardwareConfig, load_config
from .dataset import load_dataset, save_dataset
from .ela.costs import SCHEMA_VERSION, evaluate_costs
from .ela.report import cost_csv, cost_json, plot_tables
from .ela.trace import generate_trace, trace_csv_rows
from .mapper import map_network, mapping_report_csv
from .model import load_model, save_model
from .nice.engine import dump_slice_csv
from .snn import run_inference
from .synth import (fit_toy_model, parse_layers, random_model, rescale_model, toy_dataset,
                    worked_example_model)

WORKERS_ENV = "XBARSNN_WORKERS"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- helpers

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _factor_sets(text: str) -> list[tuple[float, ...]]:
    return [_floats(part) for part in text.split(";") if part.strip()]


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def write_atomic_dir(out: Path, files: dict[str, str]) -> None:
    """Materialize ``files`` under ``out`` so the directory appears in one rename."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text, encoding="utf-8")
        if out.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=out.parent))
            os.replace(out, old / "prev")
            os.replace(tmp, out)
            shutil.rmtree(old)
        else:
            os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _load_hw(path: str | None, seed: int | None, factors: tuple[float, ...] | None) -> HardwareConfig:
    hw = load_config(path) if path else HardwareConfig()
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if factors:
        changes["scheduling_factors"] = factors
    return hw.with_changes(**changes) if changes else hw


# --------------------------------------------------------------------------- pipeline

def evaluate(model, hw: HardwareConfig, dataset=None, mode: str = "nonideal", ela_only: bool = False) -> dict[str, str]:
    """Run map -> (inference) -> trace -> costs; return report files by name."""
    need_cells = not ela_only and mode == "nonideal"
    mapped = map_network(model, hw, materialize=need_cells)
    files: dict[str, str] = {"mapping.csv": mapping_report_csv(mapped)}
    activity = None
    if not ela_only:
        if dataset is None:
            raise UsageError("inference needs --dataset (or pass --ela-only)")
        result = run_inference(model, mapped, hw, dataset, mode)
        per_sample = result.per_sample_activity()
        activity = {i: a["input_events"] for i, a in per_sample.items()}
        files["accuracy.json"] = _json({
            "schema_version": SCHEMA_VERSION,
            "mode": mode,
            "samples": result.samples,
            "timesteps": result.timesteps,
            "accuracy": result.accuracy,
            "layer0_digital": result.layer0_digital,
            "sparsity": {str(k): v for k, v in result.sparsity.items()},
            "activity_per_sample": {str(k): v for k, v in per_sample.items()},
        })
    trace = generate_trace(model, mapped, hw)
    report = evaluate_costs(model, mapped, hw, trace, activity)
    files["cost_report.json"] = cost_json(report, {"hardware": hw.to_dict()})
    files["cost_report.csv"] = cost_csv(report)
    files["trace.csv"] = _csv_text(trace_csv_rows(trace))
    files.update(plot_tables(report))
    return files


def _manifest(args, command: str, extra: dict | None = None) -> dict:
    data = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "model": args.model,
        "hw": args.hw,
        "dataset": args.dataset,
        "mode": args.mode,
        "ela_only": bool(args.ela_only),
        "seed": args.seed,
        "sched_factors": list(_floats(args.sched_factors)) if getattr(args, "sched_factors", None) and command == "eval" else None,
    }
    if extra:
        data.update(extra)
    return data


def cmd_eval(args) -> int:
    if args.manifest:
        saved = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        if saved.get("command") != "eval":
            raise UsageError("manifest does not describe an eval run")
        for key in ("model", "hw", "dataset", "mode", "ela_only", "seed"):
            setattr(args, key, saved.get(key))
        factors = saved.get("sched_factors")
        args.sched_factors = ",".join(repr(f) for f in factors) if factors else None
    if not args.model:
        raise UsageError("--model is required")
    factors = _floats(args.sched_factors) if args.sched_factors else None
    hw = _load_hw(args.hw, args.seed, factors)
    model = load_model(args.model)
    dataset = load_dataset(args.dataset) if args.dataset and not args.ela_only else None
    files = evaluate(model, hw, dataset, args.mode, args.ela_only)
    files["manifest.json"] = _json(_manifest(args, "eval"))
    write_atomic_dir(Path(args.out), files)
    return 0


SWEEP_COLUMNS = ["point", "xbar_size", "conv1_channels", "input_dim", "sched_factors", "status", "accuracy",
                 "energy_J", "latency_s", "area_m2", "edp_Js", "tile_cycles", "makespan_cycles", "vmem_bytes",
                 "neuron_area_m2", "error"]
NEURON_PARTS = ("neuron_adder", "neuron_subtractor", "neuron_comparator", "vmem_cache")


def _sweep_point(job) -> list[str]:
    index, x, conv1, dim, factors, model, hw, dataset, mode, ela_only = job
    row = [str(index), str(x or ""), str(conv1 or ""), str(dim or ""),
           " ".join(repr(f) for f in factors) if factors else ""]
    try:
        changes = {"seed": int(np.random.SeedSequence([hw.seed, index]).generate_state(1)[0])}
        if x:
            changes["xbar_size"] = x
            changes["diff_speedup"] = max(1, hw.diff_speedup * x // hw.xbar_size)
        if factors:
            changes["scheduling_factors"] = factors
        point_hw = hw.with_changes(**changes)
        point_model = rescale_model(model, conv1, dim) if (conv1 or dim) else model
        run_inf = not ela_only and dataset is not None and dataset.sample_shape == point_model.input_shape
        mapped = map_network(point_model, point_hw, materialize=run_inf and mode == "nonideal")
        activity, accuracy = None, ""
        if run_inf:
            result = run_inference(point_model, mapped, point_hw, dataset, mode)
            activity = {i: a["input_events"] for i, a in result.per_sample_activity().items()}
            accuracy = repr(result.accuracy)
        trace = generate_trace(point_model, mapped, point_hw)
        rep = evaluate_costs(point_model, mapped, point_hw, trace, activity)
        neuron_area = sum(rep.area[p] for p in NEURON_PARTS)
        return row + ["ok", accuracy, repr(rep.total_energy), repr(rep.total_latency), repr(rep.total_area),
                      repr(rep.edp), str(sum(lc.tile_cycles for lc in rep.layers)), str(rep.makespan_cycles),
                      str(rep.vmem_bytes), repr(neuron_area), ""]
    except Exception as exc:  # a failing point is recorded, the sweep continues
        return row + ["error"] + [""] * 9 + [f"{type(exc).__name__}: {exc}"]


def cmd_sweep(args) -> int:
    xs = _ints(args.sweep_x) if args.sweep_x else []
    conv1s = _ints(args.sweep_conv1) if args.sweep_conv1 else []
    dims = _ints(args.sweep_input_dim) if args.sweep_input_dim else []
    factor_sets = _factor_sets(args.sched_factors) if args.sched_factors else []
    if not (xs or conv1s or dims or factor_sets):
        raise UsageError("nothing to sweep")
    hw = _load_hw(args.hw, args.seed, None)
    model = load_model(args.model)
    dataset = load_dataset(args.dataset) if args.dataset and not args.ela_only else None
    axes = [xs or [None], conv1s or [None], dims or [None], factor_sets or [None]]
    jobs = [(i, x, c, d, f, model, hw, dataset, args.mode, args.ela_only)
            for i, (x, c, d, f) in enumerate(itertools.product(*axes))]
    workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    rows.sort(key=lambda r: int(r[0]))
    manifest = _manifest(args, "sweep", {
        "sweep_x": xs, "sweep_conv1": conv1s, "sweep_input_dim": dims,
        "sched_factor_sets": [list(f) for f in factor_sets],
    })
    write_atomic_dir(Path(args.out), {"sweep.csv": _csv_text([SWEEP_COLUMNS] + rows),
                                      "manifest.json": _json(manifest)})
    failed = sum(r[5] != "ok" for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} sweep points failed; see sweep.csv", file=sys.stderr)
    return 1 if failed else 0


def cmd_gen(args) -> int:
    out = Path(args.out)
    if args.kind == "dataset":
        save_dataset(toy_dataset(args.count, args.seed), out)
        return 0
    if args.kind == "config":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(default_config_toml(), encoding="utf-8")
        return 0
    if args.layers:
        layers = parse_layers(args.layers, args.input_channels, args.input_dim)
        model = random_model(layers, args.weight_bits, args.membrane_bits, args.timesteps, args.seed)
    elif args.preset == "worked-example":
        model = worked_example_model(args.seed, args.weight_bits, args.timesteps, args.input_dim or 32,
                                     args.membrane_bits)
    elif args.preset == "toy":
        train = toy_dataset(args.count, args.seed + 1)
        model = fit_toy_model(train, args.seed, args.weight_bits, args.membrane_bits, args.timesteps or 4)
    else:
        raise UsageError("gen model needs --preset or --layers")
    save_model(model, out)
    return 0


def default_config_toml() -> str:
    hw = HardwareConfig()
    return tomli_w.dumps({
        "seed": hw.seed,
        "array": {"size": hw.xbar_size, "crossbars_per_pe": hw.crossbars_per_pe, "pes_per_tile": hw.pes_per_tile,
                  "mux_size": hw.mux_size, "adc_bits": hw.adc_bits, "diff_speedup": hw.diff_speedup,
                  "read_voltage": hw.read_voltage, "supply_voltage": hw.supply_voltage,
                  "wire_resistance": hw.wire_resistance},
        "device": {"preset": hw.device, "bits_per_cell": hw.bits_per_cell, "r_on": hw.r_on, "r_off": "inf",
                   "sigma": hw.sigma},
        "timing": {"clock_hz": hw.clock_hz, "scheduling_factor": list(hw.scheduling_factors),
                   "slot_aligned_release": hw.slot_aligned_release},
        "cycles": {"input_load": hw.cycles_input_load, "adc_read": hw.cycles_adc_read,
                   "accumulate": hw.cycles_accumulate, "store": hw.cycles_store},
        "buffers": {"global": hw.global_buffer, "tile": hw.tile_buffer, "pe": hw.pe_buffer,
                    "tile_input": hw.tile_input_buffer, "pe_input": hw.pe_input_buffer},
        "noc": {"width": hw.noc_width, "hop_cycles": hw.noc_hop_cycles, "grid_cols": hw.noc_grid_cols},
        "neuron": {"lanes": hw.neuron_lanes},
        "nice": {"encoding": hw.encoding, "layer0_crossbar": hw.layer0_crossbar},
        "ela": {"analytic_sparsity": hw.analytic_sparsity},
    })


def cmd_dump_slice(args) -> int:
    hw = _load_hw(args.hw, args.seed, None)
    model = load_model(args.model)
    mapped = map_network(model, hw)
    slices = mapped.slices_for(args.layer)
    if not slices:
        raise UsageError(f"layer {args.layer} has no crossbars")
    if not 0 <= args.slice < len(slices):
        raise UsageError(f"layer {args.layer} has {len(slices)} slices")
    sl = slices[args.slice]
    bits = [int(c) for c in args.spikes] if args.spikes else [1] * sl.valid_rows
    if len(bits) != sl.valid_rows or any(b not in (0, 1) for b in bits):
        raise UsageError(f"--spikes needs {sl.valid_rows} binary digits")
    text = dump_slice_csv(sl, bits, hw)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xbarsnn", description=(
        "Map quantized spiking networks onto tiled analog crossbars, evaluate accuracy under circuit "
        f"non-idealities and estimate energy, latency and area. Sweep workers: ${WORKERS_ENV}."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p, needs_model=True):
        p.add_argument("--model", required=needs_model, help="model bundle directory")
        p.add_argument("--hw", help="hardware config (TOML); defaults apply when omitted")
        p.add_argument("--dataset", help="dataset directory (required unless --ela-only)")
        p.add_argument("--mode", choices=("ideal", "nonideal"), default="nonideal",
                       help="software-exact or hardware-realistic MACs (default: nonideal)")
        p.add_argument("--ela-only", action="store_true",
                       help="skip inference; energy uses the analytic sparsity assumption")
        p.add_argument("--out", required=True, help="output directory (replaced atomically)")
        p.add_argument("--seed", type=int, help="override the config's RNG seed")

    p = sub.add_parser("eval", help="map, simulate and cost one configuration")
    run_options(p, needs_model=False)
    p.add_argument("--sched-factors", help="comma-separated per-layer scheduling factors, e.g. 0.25,0.5")
    p.add_argument("--manifest", help="re-run from a manifest.json written by a previous eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="Cartesian sweep over topology and hardware axes")
    run_options(p)
    p.add_argument("--sweep-x", help="crossbar sizes, e.g. 64,128,256 (DIFF speedup scales along)")
    p.add_argument("--sweep-conv1", help="first conv layer output channels, e.g. 64,8")
    p.add_argument("--sweep-input-dim", help="input side lengths, e.g. 32,64")
    p.add_argument("--sched-factors", help="factor sets separated by ';', e.g. '0.25;1.0;0.25,0.75'")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a synthetic model, dataset or default config")
    p.add_argument("kind", choices=("model", "dataset", "config"))
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("worked-example", "toy"), help="model preset")
    p.add_argument("--layers", help="layer list, e.g. conv:16:3,conv:32:3,pool:2,fc:10")
    p.add_argument("--input-channels", type=int, default=1)
    p.add_argument("--input-dim", type=int, default=None)
    p.add_argument("--weight-bits", type=int, default=4)
    p.add_argument("--membrane-bits", type=int, default=8)
    p.add_argument("--timesteps", type=int, default=None)
    p.add_argument("--count", type=int, default=600, help="samples (datasets; toy-model training set)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dump-slice", help="CSV dump of one crossbar's circuit solution")
    p.add_argument("--model", required=True)
    p.add_argument("--hw")
    p.add_argument("--seed", type=int)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--slice", type=int, default=0, help="crossbar index within the layer")
    p.add_argument("--spikes", help="binary string, one digit per valid row (default: all ones)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_dump_slice)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen":
        if args.layers and args.input_dim is None:
            parser.error("--layers needs --input-dim")
        if args.timesteps is None and args.kind == "model" and args.preset != "toy":
            args.timesteps = 1
    try:
        return args.func(args)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
