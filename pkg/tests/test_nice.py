import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_column_current
from xbarsnn.config import HardwareConfig
from xbarsnn.mapper import map_network
from xbarsnn.model import LayerSpec, build_model
from xbarsnn.nice import (AdcModel, ColumnCircuit, adc_quantize, count_zero_cells, crossbar_mac, decode,
                          diff_correct, dump_slice_csv, effective_conductances, encode_layer, solve_column,
                          solve_ladder, weights_to_conductances)
from xbarsnn.nice.engine import program_slice

RRAM = dict(device="rram", bits_per_cell=1, r_on=20e3, r_off=200e3)


# ---------------------------------------------------------------- encoding

def test_encoding_worked_example():
    enc, sign, info = encode_layer(np.array([-2, -1, 1, 2]), 4)
    assert info.p == 1
    assert enc.tolist() == [0, 1, 1, 2] and sign.tolist() == [1, 1, 0, 0]


def test_all_positive_layer_is_identity():
    enc, sign, info = encode_layer(np.array([0, 1, 3]), 4)
    assert info.p == 0 and enc.tolist() == [0, 1, 3] and not sign.any()


def test_twos_complement_scheme():
    enc, _, info = encode_layer(np.array([-2, -1, 1, 2]), 4, "twos_complement")
    assert info.p == 4 and enc.tolist() == [14, 15, 1, 2]


@settings(max_examples=200, deadline=None)
@given(k=st.integers(1, 8), seed=st.integers(0, 2**31), size=st.integers(1, 40))
def test_encoding_properties(k, seed, size):
    rng = np.random.default_rng(seed)
    w = rng.integers(-(1 << (k - 1)), 1 << (k - 1), size=size)
    enc, sign, info = encode_layer(w, k)
    assert np.array_equal(decode(enc, sign, info.p), w)
    assert enc.min() >= 0 and enc.max() < (1 << k)
    assert all(x + (1 << info.p) >= 0 for x in w[w < 0])
    vanilla, _, _ = encode_layer(w, k, "twos_complement")
    for b in [b for b in (1, 2, 4, 8) if k % b == 0]:
        assert count_zero_cells(enc, k, b) >= count_zero_cells(vanilla, k, b)
    assert info.zero_count_gain >= 0


# ---------------------------------------------------------------- conductances

def test_conductance_endpoints():
    hw = HardwareConfig(sigma=0.0)
    G = weights_to_conductances(np.array([[15, 0]]), hw)
    assert G[0, 0] == 1 / hw.r_on and G[0, 1] == 0.0
    rram = HardwareConfig(sigma=0.0, **RRAM)
    assert weights_to_conductances(np.array([1]), rram)[0] == pytest.approx(50e-6, rel=1e-12)


def test_variation_is_seeded_and_bounded():
    model = build_model([LayerSpec("linear", 20, 5)], [np.arange(100).reshape(5, 20, 1, 1) % 15 - 7])
    hw = HardwareConfig(sigma=0.3)
    a, b = map_network(model, hw), map_network(model, hw)
    program_slice(a.slices[0], hw)
    program_slice(b.slices[0], hw)
    assert np.array_equal(a.slices[0].conductances, b.slices[0].conductances)
    G = a.slices[0].conductances
    assert G.min() >= 0 and G.max() <= hw.g_max
    other = map_network(model, hw.with_changes(seed=1))
    program_slice(other.slices[0], hw.with_changes(seed=1))
    assert not np.array_equal(other.slices[0].conductances, G)


# ---------------------------------------------------------------- circuit

def test_ohms_law_limit():
    assert solve_column(ColumnCircuit(np.array([1e-3]), 0.0, np.array([0.1]))) == pytest.approx(100e-6, rel=1e-15)


def test_ir_drop_reduces_full_column_current():
    X, hw = 64, HardwareConfig()
    G, v = np.full(X, hw.g_max), np.full(X, hw.read_voltage)
    assert solve_column(ColumnCircuit(G, 5.0, v)) < X * hw.g_max * hw.read_voltage


@settings(max_examples=100, deadline=None)
@given(X=st.sampled_from([1, 2, 5, 16, 64]), r=st.sampled_from([0.0, 0.1, 1.0, 5.0]), seed=st.integers(0, 2**31))
def test_ladder_matches_dense_nodal_analysis(X, r, seed):
    rng = np.random.default_rng(seed)
    G = rng.uniform(0, 1 / 416.67, X)
    v = rng.integers(0, 2, X) * 0.1
    current = solve_column(ColumnCircuit(G, r, v))
    ref = dense_column_current(G, v, r)
    assert current == pytest.approx(ref, rel=1e-9, abs=1e-18)
    ideal = float(G @ v)
    if r > 0 and ideal > 0:
        assert current < ideal
    # the precomputed transfer factors give the same current
    eff = effective_conductances(G[:, None], r)[:, 0]
    assert float(eff @ v) == pytest.approx(ref, rel=1e-9, abs=1e-18)


def test_node_voltages_satisfy_kcl():
    rng = np.random.default_rng(3)
    G, v, r = rng.uniform(0, 2e-3, 16), rng.integers(0, 2, 16) * 0.1, 2.5
    u, current = solve_ladder(G, v, r)
    g = 1 / r
    for j in range(16):
        inflow = G[j] * (v[j] - u[j])
        left = g * (u[j - 1] - u[j]) if j > 0 else 0.0
        right = g * ((u[j + 1] if j < 15 else 0.0) - u[j])
        assert abs(inflow + left + right) < 1e-15
    assert current == pytest.approx(u[-1] * g)


# ---------------------------------------------------------------- ADC and DIFF

def test_adc_codes():
    adc = AdcModel(4, 15e-6)
    assert adc.lsb == pytest.approx(1e-6)
    assert adc_quantize(0.0, adc) == 0
    assert adc_quantize(adc.full_scale_current, adc) == 15
    assert adc_quantize(1.49 * adc.lsb, adc) == 1 and adc_quantize(1.51 * adc.lsb, adc) == 2
    assert adc_quantize(1e-3, adc) == 15


def test_diff_correction_examples():
    enc, sign, info = encode_layer(np.array([-1, 2]), 4)
    assert info.p == 0
    mac_u = int(enc @ np.array([1, 1]))
    assert mac_u == 2
    assert diff_correct(mac_u, [1, 1], sign, info.p) == 1
    assert diff_correct(7, [1, 0, 1], [0, 0, 0], 3) == 7
    assert diff_correct(0, [0, 0], [1, 1], 2) == 0


def exact_hw(**kw):
    return HardwareConfig(wire_resistance=0.0, sigma=0.0, adc_bits=16, **kw)


def test_identity_slice():
    model = build_model([LayerSpec("linear", 1, 1)], [np.ones((1, 1, 1, 1))])
    hw = exact_hw()
    sl = map_network(model, hw).slices[0]
    assert crossbar_mac(sl, [1], hw, 0).tolist() == [1]


@pytest.mark.parametrize("dev", [{}, RRAM])
def test_exactness_limit_small_exhaustive(dev):
    rng = np.random.default_rng(11)
    w = rng.integers(-8, 8, size=(4, 4, 1, 1))
    model = build_model([LayerSpec("linear", 4, 4)], [w])
    hw = exact_hw(**dev)
    mapped = map_network(model, hw)
    p = mapped.layers[0].encoding.p
    for pattern in range(16):
        spikes = np.array([(pattern >> i) & 1 for i in range(4)])
        assert np.array_equal(crossbar_mac(mapped.slices[0], spikes, hw, p), w[:, :, 0, 0] @ spikes)


def test_dump_slice_csv_columns():
    model = build_model([LayerSpec("linear", 3, 2)], [np.array([[1, -2, 3], [0, 1, -1]]).reshape(2, 3, 1, 1)])
    hw = HardwareConfig()
    sl = map_network(model, hw).slices[0]
    rows = dump_slice_csv(sl, [1, 0, 1], hw).strip().splitlines()
    assert rows[0] == "column,row,conductance_S,input_V,node_V,column_current_A"
    assert len(rows) == 1 + 2 * hw.xbar_size
    current = float(rows[1].split(",")[-1])
    G = sl.conductances[:, 0]
    v = np.zeros(hw.xbar_size)
    v[[0, 2]] = hw.read_voltage
    assert math.isclose(current, dense_column_current(G, v, hw.wire_resistance), rel_tol=1e-9)
