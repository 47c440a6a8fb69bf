import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import oracle_spikes, random_case
from oracles import unit_leak_steps
from snesim.events import Event, EventStream, validate_stream
from snesim.neuron import (LayerError, LayerSpec, LifParams, NeuronState, ResetPolicy, apply_leak,
                           fire_check, golden_layer_exec, golden_network_exec, lazy_leak_equivalence_check,
                           membrane_step, receptive_field, weight_lookup)


@pytest.mark.parametrize("v,leak,dt,w,expected", [
    (10, 0, 5, 0, 10),
    (10, 2, 3, 5, 9),
    (-125, 2, 10, 0, -128),
    (120, 0, 1, 7, 127),
])
def test_membrane_step(v, leak, dt, w, expected):
    out = membrane_step(NeuronState(v, 4), leak, dt, w)
    assert out.v_mem == expected and out.tlu == 4 + dt


def test_membrane_step_negative_dt():
    with pytest.raises(ValueError):
        membrane_step(NeuronState(0), 1, -1, 0)


def test_saturation_per_weight_not_per_sum():
    # per-weight clamping gives 127, 127, 120; clamping only the sum (+7) would give 127
    s = NeuronState(120)
    for w in (7, 7, -7):
        s = membrane_step(s, 0, 0, w)
    assert s.v_mem == 120


@pytest.mark.parametrize("v,th,policy,spiked,after", [
    (5, 5, ResetPolicy.TO_ZERO, True, 0),
    (4, 5, ResetPolicy.TO_ZERO, False, 4),
    (9, 5, ResetPolicy.SUBTRACT_THRESHOLD, True, 4),
    (9, 5, ResetPolicy.NONE, True, 9),
])
def test_fire_check(v, th, policy, spiked, after):
    got, state = fire_check(NeuronState(v), LifParams(v_th=th, reset=policy))
    assert got is spiked and state.v_mem == after


@pytest.mark.parametrize("v,leak,dt,expected", [(50, 3, 7, 29), (-120, 5, 4, -128), (17, 0, 30, 17)])
def test_lazy_leak_examples(v, leak, dt, expected):
    assert apply_leak(v, leak, dt) == unit_leak_steps(v, leak, dt) == expected
    assert lazy_leak_equivalence_check(v, leak, dt)


@given(st.integers(-128, 127), st.integers(0, 15), st.integers(0, 40))
def test_lazy_leak_with_floor(v, leak, dt):
    assert lazy_leak_equivalence_check(v, leak, dt, LifParams(leak=leak, leak_floor=True))


def test_leak_floor_stops_at_zero():
    assert apply_leak(5, 3, 4, floor=True) == 0
    assert apply_leak(-5, 3, 4, floor=True) == -5
    assert apply_leak(5, 3, 4) == -7


def test_lif_params_validation():
    with pytest.raises(ValueError):
        LifParams(v_th=200)
    with pytest.raises(ValueError):
        LifParams(leak=-1)
    assert LifParams(reset="subtract_threshold").reset is ResetPolicy.SUBTRACT_THRESHOLD


def test_layer_spec_geometry():
    s = LayerSpec(2, 4, 10, 12, 3, 3, 1, 0)
    assert (s.h_out, s.w_out, s.n_out, s.weight_shape) == (10, 10, 400, (4, 2, 3, 3))
    with pytest.raises(ValueError):
        LayerSpec(1, 1, 2, 2, 3, 3, 0, 0)
    nxt = s.next_layer(3, 1, 1)
    assert (nxt.c_in, nxt.h_in, nxt.w_in) == (4, 10, 10)


def _field(spec, x, y):
    w = np.ones(spec.weight_shape, int)
    return {(i, j) for i in range(spec.h_out) for j in range(spec.w_out)
            if weight_lookup(spec, w, 0, i, j, 0, x, y) is not None}


def test_identity_field_for_1x1():
    spec = LayerSpec(1, 1, 6, 6, 1, 1)
    assert _field(spec, 2, 4) == {(4, 2)}


def test_3x3_pad1_field_at_4_4():
    spec = LayerSpec(1, 1, 8, 8, 3, 3, 1, 1)
    assert _field(spec, 4, 4) == {(i, j) for i in range(3, 6) for j in range(3, 6)}
    assert receptive_field(spec, 4, 4) == (3, 6, 3, 6)


def test_3x3_corner_field():
    spec = LayerSpec(1, 1, 8, 8, 3, 3, 0, 0)
    assert _field(spec, 0, 0) == {(0, 0)}


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2), st.integers(0, 2), st.data())
@settings(max_examples=50)
def test_receptive_field_matches_lookup(k_h, k_w, p_h, p_w, data):
    p_h, p_w = min(p_h, k_h - 1), min(p_w, k_w - 1)
    spec = LayerSpec(1, 1, 7, 7, k_h, k_w, p_h, p_w)
    x, y = data.draw(st.integers(0, 6)), data.draw(st.integers(0, 6))
    i0, i1, j0, j1 = receptive_field(spec, x, y)
    assert _field(spec, x, y) == {(i, j) for i in range(i0, i1) for j in range(j0, j1)}


def test_weight_lookup_extent_errors():
    spec = LayerSpec(1, 1, 4, 4, 3, 3, 1, 1)
    w = np.zeros(spec.weight_shape, int)
    with pytest.raises(IndexError):
        weight_lookup(spec, w, 0, 4, 0, 0, 0, 0)
    with pytest.raises(IndexError):
        weight_lookup(spec, w, 0, 0, 0, 1, 0, 0)


def test_weight_lookup_index():
    spec = LayerSpec(1, 1, 5, 5, 3, 3, 1, 1)
    w = np.arange(9).reshape(1, 1, 3, 3) - 4
    # ky = e_y - i + p_h, kx = e_x - j + p_w
    assert weight_lookup(spec, w, 0, 1, 2, 0, 3, 2) == w[0, 0, 2, 2]


def test_no_input_no_output():
    spec = LayerSpec(1, 2, 4, 4)
    out, _ = golden_layer_exec(spec, np.ones(spec.weight_shape, int), LifParams(v_th=1), EventStream((), t_max=5))
    assert out.updates() == []


def test_single_neuron_trace():
    spec = LayerSpec(1, 1, 1, 1, 1, 1)
    s = EventStream((Event.update(0, 0, 0, 0), Event.fire(0)))
    out, stats = golden_layer_exec(spec, np.full((1, 1, 1, 1), 7), LifParams(v_th=7), s)
    assert out.updates() == [Event.update(0, 0, 0, 0)]
    assert stats.total_sops == 1 and stats.total_outputs == 1


def test_rst_is_forwarded_and_state_starts_at_zero():
    spec = LayerSpec(1, 1, 1, 1, 1, 1)
    w = np.full((1, 1, 1, 1), 5)
    s = EventStream((Event.rst(0), Event.update(0, 0, 0, 0), Event.fire(0),
                     Event.update(0, 1, 0, 0), Event.fire(1)))
    out, _ = golden_layer_exec(spec, w, LifParams(v_th=8), s)
    assert out[0] == Event.rst(0)
    # 5 held from t=0 plus 5 at t=1 crosses 8 only at t=1
    assert out.updates() == [Event.update(0, 1, 0, 0)]


def test_all_zero_weights_never_fire():
    rng = np.random.default_rng(2)
    case = random_case(rng)
    spec = case.spec
    out, _ = golden_layer_exec(spec, np.zeros(spec.weight_shape, int), LifParams(v_th=1), case.stream)
    assert out.updates() == []


def test_unreachable_threshold_never_fires():
    spec = LayerSpec(1, 1, 4, 4, 3, 3, 1, 1)
    s = EventStream((Event.update(0, 0, 1, 1), Event.fire(0)))
    out, _ = golden_layer_exec(spec, np.full(spec.weight_shape, 7), LifParams(v_th=8), s)
    assert out.updates() == []


def test_shape_and_stream_errors():
    spec = LayerSpec(1, 1, 4, 4)
    with pytest.raises(LayerError, match="shape"):
        golden_layer_exec(spec, np.zeros((2, 1, 3, 3), int), LifParams(), EventStream(()))
    with pytest.raises(LayerError, match="invalid"):
        golden_layer_exec(spec, np.zeros(spec.weight_shape, int), LifParams(),
                          EventStream((Event.fire(0), Event.fire(0))))
    with pytest.raises(LayerError, match="outside"):
        golden_layer_exec(spec, np.zeros(spec.weight_shape, int), LifParams(),
                          EventStream((Event.update(0, 0, 9, 0),)))


def test_golden_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for _ in range(150):
        case = random_case(rng)
        out, _ = golden_layer_exec(case.spec, case.bank, case.params, case.stream)
        assert out.spike_keys() == oracle_spikes(case)
        assert validate_stream(out) == []


def test_network_exec_chains_layers():
    rng = np.random.default_rng(4)
    l0 = LayerSpec(1, 2, 6, 6, 3, 3, 1, 1)
    l1 = l0.next_layer(2, 3, 3, 1, 1)
    w0, w1 = rng.integers(-8, 8, l0.weight_shape), rng.integers(-8, 8, l1.weight_shape)
    p = LifParams(leak=1, v_th=5)
    case = random_case(np.random.default_rng(0))
    stream = EventStream(tuple(e for e in case.stream if e.channel == 0 and e.x < 6 and e.y < 6),
                         t_max=case.stream.t_max)
    res = golden_network_exec([l0, l1], [w0, w1], [p, p], stream)
    mid, _ = golden_layer_exec(l0, w0, p, stream)
    assert res[0][0] == mid
    assert res[1][0] == golden_layer_exec(l1, w1, p, mid)[0]
