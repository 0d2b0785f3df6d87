import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import crossbar_count, window_positions
from xbarsnn.config import HardwareConfig
from xbarsnn.mapper import (MappingError, map_network, mapping_report_csv, ops_per_output_channel,
                            reassemble_weights)
from xbarsnn.model import LayerSpec, build_model
from xbarsnn.synth import random_model, worked_example_model


def test_worked_example_mapping():
    mapped = map_network(worked_example_model(), HardwareConfig(), materialize=False)
    assert mapped.pe_count_per_layer == {0: 1, 1: 2, 2: 16}
    assert mapped.par_per_layer == {0: 8, 1: 4, 2: 1}
    assert mapped.total_tiles == 4


def test_sub_crossbar_linear_layer():
    layer = LayerSpec("linear", 10, 10)
    model = build_model([layer], [np.arange(100).reshape(10, 10, 1, 1) % 15 - 7], weight_bits=4)
    hw = HardwareConfig(device="rram", bits_per_cell=1, r_on=20e3, r_off=200e3)
    mapped = map_network(model, hw)
    (sl,) = mapped.slices
    assert (sl.valid_rows, sl.valid_cols) == (10, 40)
    assert mapped.pe_count_per_layer == {0: 1} and mapped.par_per_layer == {0: hw.pes_per_tile}
    assert not sl.encoded_weights[10:].any() and not sl.encoded_weights[:, 40:].any()


def test_ops_per_output_channel_examples():
    assert ops_per_output_channel(LayerSpec("conv", 3, 8, 3, 1, 1, 32)) == 1024
    assert ops_per_output_channel(LayerSpec("linear", 3, 8)) == 1
    # frozen from the window-enumeration oracle
    assert window_positions(8, 3, 2, 1) == 16
    assert ops_per_output_channel(LayerSpec("conv", 3, 8, 3, 2, 1, 8)) == 16


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(1, 12), k=st.integers(1, 5), stride=st.integers(1, 3), pad=st.integers(0, 2))
def test_ops_match_window_enumeration(dim, k, stride, pad):
    layer = LayerSpec("conv", 1, 1, k, stride, pad, dim)
    if layer.output_dim < 1:
        return
    assert ops_per_output_channel(layer) == window_positions(dim, k, stride, pad)


def test_indivisible_bit_slicing_reports_layer_and_deficit():
    model = random_model([LayerSpec("linear", 4, 4)], weight_bits=3)
    hw = HardwareConfig(device="rram", bits_per_cell=1, r_on=20e3, r_off=200e3)
    with pytest.raises(MappingError, match=r"layer 0: 3 bit-slice columns.*\(2 columns short"):
        map_network(model, hw)
    with pytest.raises(MappingError, match="layer 0: bits per cell 4 does not divide"):
        map_network(model, HardwareConfig())


shape = st.tuples(st.integers(1, 150), st.integers(1, 90), st.sampled_from([1, 2, 3]))


@settings(max_examples=30, deadline=None)
@given(shapes=st.lists(shape, min_size=1, max_size=3), b=st.sampled_from([1, 2, 4]),
       X=st.sampled_from([16, 32, 64]), seed=st.integers(0, 2**31), enc=st.sampled_from(["ni_aware", "twos_complement"]))
def test_mapping_invariants(shapes, b, X, seed, enc):
    layers = []
    for n, (m, out, d) in enumerate(shapes):
        m = layers[-1].out_channels if layers else m
        last = n == len(shapes) - 1
        dim = layers[-1].output_dim if layers else 4
        layers.append(LayerSpec("conv", m, out, d, 1, d // 2 if d % 2 else 0, dim, 2.0, 1.0, "none" if last else "IF"))
    model = random_model(layers, weight_bits=4, seed=seed)
    hw = HardwareConfig(xbar_size=X, diff_speedup=X, bits_per_cell=b, mux_size=8, encoding=enc)
    mapped = map_network(model, hw)
    s = 4 // b
    tile_layers: dict[int, set] = {}
    for i, layer in enumerate(model.layers):
        lm = mapped.layers[i]
        M, N, d = layer.in_channels, layer.out_channels, layer.kernel_size
        assert lm.crossbars == crossbar_count(M, N, d, X, s)
        assert lm.pes == -(-lm.crossbars // hw.crossbars_per_pe)
        expect_par = hw.pes_per_tile // lm.pes if lm.pes <= hw.pes_per_tile else 1
        assert lm.par == expect_par
        slices = mapped.slices_for(i)
        # weight conservation and exact inverse mapping
        populated = sum(int(sl.valid_rows * sl.valid_cols) for sl in slices)
        assert populated == M * N * d * d * s
        assert np.array_equal(reassemble_weights(mapped, model, i, lm.encoding.p, b), model.weights[i])
        # kernel positions of one block sit on distinct crossbars
        seen = {}
        for sl in slices:
            key = (sl.row_block.start, sl.col_block.start)
            seen.setdefault(key, set()).add(sl.coords)
            assert not sl.encoded_weights[sl.valid_rows:].any()
            assert not sl.encoded_weights[:, sl.valid_cols:].any()
            assert sl.encoded_weights.max() <= (1 << b) - 1
            tile_layers.setdefault(sl.coords[0], set()).add(i)
        assert all(len(c) == d * d for c in seen.values())
        # sign bits mark exactly the negative source weights
        for sl in slices:
            dr, dc = sl.kernel_pos
            src = model.weights[i][sl.col_block.start:sl.col_block.stop, sl.row_block.start:sl.row_block.stop, dr, dc]
            assert np.array_equal(sl.logical_signs(), (src.T < 0).astype(np.uint8))
    assert all(len(ls) == 1 for ls in tile_layers.values())
    again = map_network(model, hw)
    assert again.tile_assignment == mapped.tile_assignment


def test_mapping_report_csv():
    text = mapping_report_csv(map_network(worked_example_model(), HardwareConfig(), materialize=False))
    lines = text.strip().splitlines()
    assert lines[0] == "layer,kind,crossbars,pes,par,tiles,first_tile,shift_exponent"
    assert lines[1].startswith("0,conv,9,1,8,1,0,") and lines[3].startswith("2,conv,144,16,1,2,2,")
