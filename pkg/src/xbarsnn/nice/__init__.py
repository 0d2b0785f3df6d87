"""Non-ideality computation engine: encoding, circuit solve, ADC and DIFF."""

from .adc import AdcModel, adc_quantize
from .circuit import ColumnCircuit, effective_conductances, ladder_transfer, solve_column, solve_ladder
from .encoding import EncodingInfo, count_zero_cells, decode, encode_layer, shift_exponent, split_cells
from .engine import (
    crossbar_mac,
    crossbar_mac_batch,
    diff_correct,
    dump_slice_csv,
    program_network,
    program_slice,
    weights_to_conductances,
)

__all__ = [
    "AdcModel", "adc_quantize", "ColumnCircuit", "effective_conductances", "ladder_transfer",
    "solve_column", "solve_ladder", "EncodingInfo", "count_zero_cells", "decode", "encode_layer",
    "shift_exponent", "split_cells", "crossbar_mac", "crossbar_mac_batch", "diff_correct",
    "dump_slice_csv", "program_network", "program_slice", "weights_to_conductances",
]
