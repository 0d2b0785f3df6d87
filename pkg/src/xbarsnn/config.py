"""Hardware configuration: circuit, device, timing, NoC and cost-table parameters.

Configs are TOML files (conventionally ``hw.conf``). Every key is optional;
absent keys take the defaults below (a 64x64 SRAM crossbar setup).
README.md documents the schema.

Unit costs are *illustrative* defaults: no published per-component table
exists for this architecture, so energies and areas are inputs, not facts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

KB = 1024


class ConfigError(ValueError):
    """Raised for invalid hardware configurations."""


@dataclass(frozen=True)
class CostEntry:
    energy: float  # joules per event (event unit depends on the component)
    area: float  # square metres per instance unit


# Component name -> (event unit, instance unit, default entry). The event and
# instance units are fixed per component; the cost engine counts accordingly.
COMPONENTS: dict[str, tuple[str, str, CostEntry]] = {
    "crossbar_array": ("cell read", "cell", CostEntry(1.0e-15, 1.0e-12)),
    "input_peripherals": ("row drive", "row", CostEntry(5.0e-15, 2.0e-12)),
    "mux": ("column conversion", "ADC group", CostEntry(0.094e-12, 45.9e-12)),
    "adc": ("column conversion", "ADC group", CostEntry(2.03e-12, 693.6e-12)),
    "shift_add": ("column conversion", "ADC group", CostEntry(0.05e-12, 50.0e-12)),
    "diff": ("logical column correction", "ADC group", CostEntry(0.02e-12, 60.0e-12)),
    "pe_input_buffer": ("byte access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "pe_accumulator": ("accumulate", "PE", CostEntry(0.05e-12, 400.0e-12)),
    "pe_buffer": ("byte access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "tile_input_buffer": ("byte access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "tile_accumulator": ("accumulate", "tile", CostEntry(0.06e-12, 800.0e-12)),
    "tile_buffer": ("byte access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "global_buffer": ("byte access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "global_accumulator": ("accumulate", "instance", CostEntry(0.06e-12, 1500.0e-12)),
    "pooling": ("pooled output", "instance", CostEntry(0.03e-12, 500.0e-12)),
    "neuron_adder": ("neuron update", "lane", CostEntry(0.03e-12, 40.0e-12)),
    "neuron_subtractor": ("leak update", "lane", CostEntry(0.03e-12, 40.0e-12)),
    "neuron_comparator": ("threshold compare", "lane", CostEntry(0.01e-12, 20.0e-12)),
    "vmem_cache": ("membrane access", "byte", CostEntry(0.3e-12, 2.0e-12)),
    "noc_router": ("packet hop", "router", CostEntry(1.0e-12, 15000.0e-12)),
}

DEFAULT_COSTS = MappingProxyType({name: spec[2] for name, spec in COMPONENTS.items()})

DEVICE_PRESETS = {
    "sram": {"bits_per_cell": 4, "r_on": 416.67, "r_off": math.inf, "sigma": 0.1},
    "rram": {"bits_per_cell": 1, "r_on": 20e3, "r_off": 200e3, "sigma": 0.1},
}

ENCODINGS = ("ni_aware", "twos_complement")


@dataclass(frozen=True)
class HardwareConfig:
    # crossbar / PE / tile hierarchy
    xbar_size: int = 64
    crossbars_per_pe: int = 9
    pes_per_tile: int = 8
    mux_size: int = 8
    adc_bits: int = 4
    adc_rows: int | None = None  # expected max active rows setting ADC full scale; None -> xbar_size
    diff_speedup: int = 64
    read_voltage: float = 0.1
    supply_voltage: float = 0.9
    wire_resistance: float = 5.0
    # device
    device: str = "sram"
    bits_per_cell: int = 4
    r_on: float = 416.67
    r_off: float = math.inf
    sigma: float = 0.1
    # timing
    clock_hz: float = 250e6
    scheduling_factors: tuple[float, ...] = (0.25,)
    alpha: int | None = None
    slot_aligned_release: bool = True
    cycles_input_load: int = 1
    cycles_adc_read: int = 1
    cycles_accumulate: int = 1
    cycles_store: int = 1
    # buffers, bytes
    global_buffer: int = 20 * KB
    tile_buffer: int = 10 * KB
    pe_buffer: int = 5 * KB
    tile_input_buffer: int = 50 * KB
    pe_input_buffer: int = 30 * KB
    # network on chip
    noc_width: int = 32
    noc_hop_cycles: int = 1
    noc_grid_cols: int = 0  # 0 -> ceil(sqrt(nodes))
    # neuronal module
    neuron_lanes: int = 64
    # functional options
    encoding: str = "ni_aware"
    layer0_crossbar: bool = False
    analytic_sparsity: float = 0.85
    cost_tables: Mapping[str, CostEntry] = field(default_factory=lambda: DEFAULT_COSTS)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheduling_factors", tuple(float(f) for f in self.scheduling_factors))
        object.__setattr__(self, "cost_tables", MappingProxyType(dict(self.cost_tables)))
        self.validate()

    # derived quantities
    @property
    def g_max(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_min(self) -> float:
        return 0.0 if math.isinf(self.r_off) else 1.0 / self.r_off

    @property
    def levels(self) -> int:
        """Largest cell value, 2**b - 1."""
        return (1 << self.bits_per_cell) - 1

    @property
    def clock_period(self) -> float:
        return 1.0 / self.clock_hz

    @property
    def adc_full_scale(self) -> float:
        rows = self.xbar_size if self.adc_rows is None else min(self.xbar_size, self.adc_rows)
        return self.read_voltage * self.g_max * rows

    @property
    def adc_groups(self) -> int:
        """ADC (and mux/shift-add/DIFF) instances per crossbar."""
        return self.xbar_size // self.mux_size

    def scheduling_factor(self, position: int) -> float:
        """Factor for the ``position``-th crossbar layer; the last entry repeats."""
        facs = self.scheduling_factors
        return facs[min(position, len(facs) - 1)]

    def validate(self) -> None:
        x = self.xbar_size
        if x < 8 or x & (x - 1):
            raise ConfigError(f"crossbar size must be a power of two >= 8, got {x}")
        if not (1 <= self.diff_speedup <= x) or x % self.diff_speedup:
            raise ConfigError(f"DIFF speedup {self.diff_speedup} must divide crossbar size {x}")
        if self.mux_size < 1 or x % self.mux_size:
            raise ConfigError(f"mux size {self.mux_size} must divide crossbar size {x}")
        for name in ("crossbars_per_pe", "pes_per_tile", "adc_bits", "bits_per_cell", "noc_width",
                     "noc_hop_cycles", "neuron_lanes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.bits_per_cell > 8:
            raise ConfigError("bits_per_cell must be <= 8")
        if self.adc_rows is not None and self.adc_rows < 1:
            raise ConfigError("adc_rows must be >= 1")
        if not (0 < self.r_on < self.r_off):
            raise ConfigError(f"need 0 < R_on < R_off, got R_on={self.r_on}, R_off={self.r_off}")
        if self.wire_resistance < 0 or self.sigma < 0:
            raise ConfigError("wire resistance and sigma must be non-negative")
        if self.read_voltage <= 0 or self.clock_hz <= 0:
            raise ConfigError("read voltage and clock frequency must be positive")
        if not self.scheduling_factors or any(not (0 < f <= 1) for f in self.scheduling_factors):
            raise ConfigError("scheduling factors must lie in (0, 1]")
        if self.alpha is not None and self.alpha < 1:
            raise ConfigError("alpha must be >= 1")
        if min(self.cycles_input_load, self.cycles_adc_read, self.cycles_accumulate, self.cycles_store) < 0:
            raise ConfigError("cycle counts must be non-negative")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"encoding must be one of {ENCODINGS}")
        if not (0 <= self.analytic_sparsity <= 1):
            raise ConfigError("analytic_sparsity must lie in [0, 1]")
        missing = sorted(set(COMPONENTS) - set(self.cost_tables))
        if missing:
            raise ConfigError(f"missing cost-table entries: {', '.join(missing)}")
        unknown = sorted(set(self.cost_tables) - set(COMPONENTS))
        if unknown:
            raise ConfigError(f"unknown cost-table components: {', '.join(unknown)}")
        for name, entry in self.cost_tables.items():
            if entry.energy < 0 or entry.area < 0:
                raise ConfigError(f"negative cost for {name}")

    def with_changes(self, **changes: Any) -> "HardwareConfig":
        return replace(self, **changes)

    def __reduce__(self):
        # the read-only cost mapping does not pickle; rebuild from a plain dict (sweep workers)
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["cost_tables"] = dict(self.cost_tables)
        return _rebuild_config, (values,)

    def to_dict(self) -> dict[str, Any]:
        """Flat, JSON-friendly view (used for manifests and report headers)."""
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "cost_tables":
                value = {k: {"energy": v.energy, "area": v.area} for k, v in sorted(value.items())}
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, float) and math.isinf(value):
                value = "inf"
            out[f.name] = value
        return out


# TOML section/key -> dataclass field
_SCHEMA: dict[str, dict[str, str]] = {
    "array": {
        "size": "xbar_size",
        "crossbars_per_pe": "crossbars_per_pe",
        "pes_per_tile": "pes_per_tile",
        "mux_size": "mux_size",
        "adc_bits": "adc_bits",
        "adc_rows": "adc_rows",
        "diff_speedup": "diff_speedup",
        "read_voltage": "read_voltage",
        "supply_voltage": "supply_voltage",
        "wire_resistance": "wire_resistance",
    },
    "device": {
        "bits_per_cell": "bits_per_cell",
        "r_on": "r_on",
        "r_off": "r_off",
        "sigma": "sigma",
    },
    "timing": {
        "clock_hz": "clock_hz",
        "scheduling_factor": "scheduling_factors",
        "alpha": "alpha",
        "slot_aligned_release": "slot_aligned_release",
    },
    "cycles": {
        "input_load": "cycles_input_load",
        "adc_read": "cycles_adc_read",
        "accumulate": "cycles_accumulate",
        "store": "cycles_store",
    },
    "buffers": {
        "global": "global_buffer",
        "tile": "tile_buffer",
        "pe": "pe_buffer",
        "tile_input": "tile_input_buffer",
        "pe_input": "pe_input_buffer",
    },
    "noc": {"width": "noc_width", "hop_cycles": "noc_hop_cycles", "grid_cols": "noc_grid_cols"},
    "neuron": {"lanes": "neuron_lanes"},
    "nice": {"encoding": "encoding", "layer0_crossbar": "layer0_crossbar"},
    "ela": {"analytic_sparsity": "analytic_sparsity"},
}

_FLOAT_FIELDS = {"read_voltage", "supply_voltage", "wire_resistance", "r_on", "r_off", "sigma", "clock_hz",
                 "analytic_sparsity"}


def _coerce(name: str, value: Any) -> Any:
    if name == "scheduling_factors":
        return tuple(float(v) for v in value) if isinstance(value, list) else (float(value),)
    if name in _FLOAT_FIELDS:
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(value)
    if name in ("encoding",):
        return str(value)
    if name in ("layer0_crossbar", "slot_aligned_release"):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _rebuild_config(values: dict[str, Any]) -> HardwareConfig:
    return HardwareConfig(**values)


def config_from_dict(data: Mapping[str, Any]) -> HardwareConfig:
    values: dict[str, Any] = {}
    data = dict(data)
    if "seed" in data:
        values["seed"] = _coerce("seed", data.pop("seed"))
    device = dict(data.pop("device", {}))
    preset = str(device.pop("preset", "sram")).lower()
    if preset not in DEVICE_PRESETS:
        raise ConfigError(f"unknown device preset {preset!r}")
    values["device"] = preset
    values.update(DEVICE_PRESETS[preset])
    data["device"] = device
    costs = dict(data.pop("costs", {}))

    for section, table in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            name = _SCHEMA[section][key]
            values[name] = _coerce(name, value)

    use_defaults = costs.pop("use_defaults", True)
    tables = dict(DEFAULT_COSTS) if use_defaults else {}
    for name, entry in costs.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"[costs.{name}] must be a table")
        base = tables.get(name, CostEntry(math.nan, math.nan))
        extra = set(entry) - {"energy", "area"}
        if extra:
            raise ConfigError(f"unknown key(s) in [costs.{name}]: {', '.join(sorted(extra))}")
        tables[name] = CostEntry(float(entry.get("energy", base.energy)), float(entry.get("area", base.area)))
        if math.isnan(tables[name].energy) or math.isnan(tables[name].area):
            raise ConfigError(f"[costs.{name}] needs both energy and area")
    values["cost_tables"] = tables
    return HardwareConfig(**values)


def load_config(path: str | Path) -> HardwareConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(data)
