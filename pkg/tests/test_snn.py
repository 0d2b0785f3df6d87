import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import conv2d_reference, lif_reference
from xbarsnn.config import HardwareConfig
from xbarsnn.dataset import Dataset
from xbarsnn.mapper import map_network
from xbarsnn.model import LayerSpec, build_model
from xbarsnn.snn import InferenceError, NeuronState, Simulator, ideal_mac, lif_update, pool, run_inference
from xbarsnn.synth import parse_layers, random_model


def step(U, mac, th, leak, mode="LIF", bits=8):
    state = NeuronState(np.array([U], dtype=np.int64), np.zeros(1, dtype=np.uint8))
    new, spikes = lif_update(state, np.array([mac]), th, leak, mode, bits)
    return int(new.U[0]), int(spikes[0])


def test_lif_examples():
    assert step(0, 3, 2.0, 1.0) == (0, 1)
    assert step(2, 0, 4.0, 0.5) == (1, 0)
    assert step(-3, 0, 4.0, 0.5) == (-1, 0)  # truncation toward zero
    assert step(2, 0, 4.0, 1.0) == (2, 0)
    assert step(2, 2, 4.0, 0.5, "IF") == (4, 0)  # IF ignores leak, no spike at equality
    assert step(120, 100, 500.0, 1.0) == (127, 0)  # saturation
    with pytest.raises(ValueError, match="neuron mode"):
        step(0, 0, 1.0, 1.0, "ReLU")


@settings(max_examples=300, deadline=None)
@given(u=st.integers(-128, 127), mac=st.integers(-300, 300), th=st.integers(0, 120),
       lam=st.integers(0, 256), mode=st.sampled_from(["LIF", "IF"]))
def test_lif_matches_scalar_reference(u, mac, th, lam, mode):
    leak = lam / 256 if mode == "LIF" else 1.0
    got = step(u, mac, float(th), leak, mode)
    assert got == lif_reference(u, mac, th, leak, 8, 8)
    U, s = got
    assert s in (0, 1)
    if s:
        assert U == 0


def test_pool_tie_rule():
    assert pool(np.array([[1, 1], [0, 0]]), 2).tolist() == [[1]]
    assert pool(np.array([[1, 0], [0, 0]]), 2).tolist() == [[0]]
    assert pool(np.ones((3, 3), dtype=np.uint8), 3).tolist() == [[1]]
    with pytest.raises(ValueError, match="divisible"):
        pool(np.ones((3, 3)), 2)


@settings(max_examples=40, deadline=None)
@given(M=st.integers(1, 3), N=st.integers(1, 3), dim=st.integers(3, 6), d=st.sampled_from([1, 2, 3]),
       stride=st.integers(1, 2), seed=st.integers(0, 2**31))
def test_ideal_conv_matches_reference(M, N, dim, d, stride, seed):
    rng = np.random.default_rng(seed)
    pad = d // 2
    layer = LayerSpec("conv", M, N, d, stride, pad, dim)
    x = rng.integers(0, 4, size=(2, M, dim, dim))
    w = rng.integers(-8, 8, size=(N, M, d, d))
    out = ideal_mac(x, layer, w)
    for b in range(2):
        assert np.array_equal(out[b], conv2d_reference(x[b], w, stride, pad))


def tiny_model(T=3):
    # one 1x1 conv neuron with weight 2 and leak 0.5, then a 1-in 1-out readout
    layers = [LayerSpec("conv", 1, 1, 1, 1, 0, 1, 2.0, 0.5, "LIF"), LayerSpec("linear", 1, 1)]
    return build_model(layers, [np.full((1, 1, 1, 1), 2), np.full((1, 1, 1, 1), 3)], timesteps=T)


def test_hand_traced_three_steps():
    model = tiny_model()
    record, record_u = [], []
    scores = Simulator(model, None, None).run_batch(np.ones((1, 1, 1, 1), dtype=np.uint8),
                                                    record=record, record_u=record_u)
    # t0: U = 2 (no spike, 2 > 2 false); t1: U = 1 + 2 = 3 -> spike, reset; t2: U = 0 + 2 = 2
    assert [int(u.ravel()[0]) for _, _, u in record_u] == [2, 0, 2]
    assert [int(sm.values.ravel()[0]) for sm in record if sm.layer == 0] == [0, 1, 0]
    assert scores.tolist() == [[3]]


def test_state_is_cleared_between_batches():
    sim = Simulator(tiny_model(), None, None)
    x = np.ones((1, 1, 1, 1), dtype=np.uint8)
    assert np.array_equal(sim.run_batch(x), sim.run_batch(x))


def small_network(seed=0, T=3):
    layers = parse_layers("conv:6:3,conv:8:3,pool:2,fc:5", 2, 6, threshold=3.0, leak=0.75, activation="LIF")
    return random_model(layers, weight_bits=4, timesteps=T, seed=seed)


def small_dataset(n=20, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.integers(0, 4, size=(n, 2, 6, 6)).astype(np.uint8), rng.integers(0, 5, size=n), 5)


def test_prediction_is_permutation_equivariant():
    model, data = small_network(), small_dataset()
    base = run_inference(model, None, None, data, batch_size=7)
    perm = np.random.default_rng(1).permutation(len(data))
    shuffled = run_inference(model, None, None, Dataset(data.inputs[perm], data.labels[perm], 5), batch_size=3)
    assert np.array_equal(shuffled.predictions, base.predictions[perm])
    assert shuffled.accuracy == base.accuracy


@pytest.mark.parametrize("layer0_crossbar", [False, True])
@pytest.mark.parametrize("dev", [{}, dict(device="rram", bits_per_cell=1, r_on=20e3, r_off=200e3)])
def test_nonideal_equals_ideal_in_exact_limit(layer0_crossbar, dev):
    model, data = small_network(seed=3), small_dataset(seed=4)
    hw = HardwareConfig(wire_resistance=0.0, sigma=0.0, adc_bits=16, layer0_crossbar=layer0_crossbar, **dev)
    ideal = run_inference(model, None, hw, data)
    real = run_inference(model, map_network(model, hw), hw, data, mode="nonideal")
    assert np.array_equal(ideal.scores, real.scores)
    assert real.layer0_digital is (not layer0_crossbar)
    assert ideal.sparsity == real.sparsity


def test_sparsity_and_activity_bookkeeping():
    model, data = small_network(), small_dataset()
    res = run_inference(model, None, None, data)
    assert set(res.sparsity) == {0, 1, 2}
    assert all(0.0 <= v <= 1.0 for v in res.sparsity.values())
    spikes0 = res.activity[0].output_spikes
    assert res.sparsity[0] == pytest.approx(1 - spikes0 / (model.layers[0].neuron_count * len(data) * 3))
    assert res.activity[1].input_events == spikes0


def test_shape_errors():
    model = small_network()
    with pytest.raises(InferenceError, match="sample shape"):
        Simulator(model, None, None).run_batch(np.zeros((1, 1, 6, 6)))
    with pytest.raises(InferenceError, match="materialized"):
        Simulator(model, map_network(model, HardwareConfig(), materialize=False), HardwareConfig(), "nonideal")
