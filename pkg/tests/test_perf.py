import json
import math

import numpy as np
import pytest

from snesim.arch import SimTrace, SneConfig, Tally, run_network
from snesim.events import Event, EventStream, validate_stream
from snesim.mapper import plan
from snesim.neuron import LayerSpec, LifParams
from snesim.perf import (EnergyParams, activity, activity_energy_rows, efficiency, event_latency_s,
                         inference_figures, peak_sops, report_from_trace, slices_throughput_rows, throughput,
                         write_report_json, write_rows_csv)
from snesim.synth import gen_counted_stream, gen_stream


@pytest.mark.parametrize("n,gsops", [(1, 6.4), (2, 12.8), (4, 25.6), (8, 51.2)])
def test_peak_throughput(n, gsops):
    assert peak_sops(SneConfig(n_slices=n)) == gsops * 1e9


def test_effective_throughput_and_errors():
    tr = SimTrace(cycles=400, sop_count=1000)
    t = throughput(SneConfig(), tr)
    assert t.effective == 1000 / (400 / 4e8)
    assert throughput(SneConfig(), SimTrace(cycles=10)).effective == 0
    with pytest.raises(ValueError):
        throughput(SneConfig(), SimTrace())


def test_efficiency_two_routes():
    e = efficiency(EnergyParams())
    assert e.from_power == pytest.approx(51.2e9 / 11.29e-3 / 1e12)
    assert e.from_energy_per_op == pytest.approx(1 / 0.221)
    assert e.consistent(0.01)
    doubled = efficiency(EnergyParams(power_mw=2 * 11.29))
    assert doubled.from_power == pytest.approx(e.from_power / 2)


def test_energy_params_validation_and_table():
    with pytest.raises(ValueError):
        EnergyParams(pj_per_sop=0)
    with pytest.raises(ValueError):
        EnergyParams(power_mw=-1)
    p = EnergyParams(power_table={2: 4.0})
    assert p.power_for(2) == 4.0 and not p.is_extrapolated(2)
    assert p.power_for(4) == pytest.approx(11.29 / 2) and p.is_extrapolated(4)
    assert not p.is_extrapolated(8)


@pytest.mark.parametrize("events,ms,rate,uj", [(59_167, 7.10, 140.8, 80.2), (192_667, 23.12, 43.3, 261.0)])
def test_inference_triples(events, ms, rate, uj):
    r = inference_figures(SneConfig(), EnergyParams(), [events])
    # expected values are quoted to the precision written here
    assert round(r.time_s * 1e3, 2) == ms
    assert round(r.rate, 1) == rate
    assert round(r.energy_time_j * 1e6, 1) == uj
    assert r.rate * r.time_s == pytest.approx(1.0, abs=1e-15)
    # per-op model at full activity agrees within the calibration gap
    assert r.model_divergence < 0.01


def test_sequential_model_sums_layers():
    a = inference_figures(SneConfig(), EnergyParams(), {0: 1000, 1: 500})
    b = inference_figures(SneConfig(), EnergyParams(), [1500])
    assert a.time_s == b.time_s and a.energy_time_j == b.energy_time_j


def test_zero_events():
    r = inference_figures(SneConfig(), EnergyParams(), [0])
    assert r.energy_time_j == 0 and r.time_s == 0 and math.isinf(r.rate)
    assert r.to_dict()["rate_inf_s"] is None


def test_bad_counts():
    with pytest.raises(ValueError):
        inference_figures(SneConfig(), EnergyParams(), [-1])
    with pytest.raises(ValueError):
        inference_figures(SneConfig(), EnergyParams(), [])
    with pytest.raises(ValueError):
        inference_figures(SneConfig(), EnergyParams(), {0: None})


def test_monotone_in_events():
    prev = None
    for n in (0, 1, 10, 100, 5000):
        r = inference_figures(SneConfig(), EnergyParams(), [n])
        if prev:
            assert r.time_s >= prev.time_s and r.energy_time_j >= prev.energy_time_j
            assert r.energy_op_j >= prev.energy_op_j
        prev = r


def test_event_latency():
    assert event_latency_s(SneConfig()) == 48 / 4e8
    assert event_latency_s(SneConfig()) * 1e9 == pytest.approx(120, abs=1e-9)


def test_activity():
    spec = LayerSpec(2, 1, 25, 41, 1, 1)
    s = gen_counted_stream(2, 25, 41, 615, 25, seed=1)
    assert activity(s, spec) == pytest.approx(0.012)
    assert activity(EventStream((), t_max=4), spec) == 0
    tiny = LayerSpec(1, 1, 2, 2, 1, 1)
    full = EventStream(tuple(Event.update(0, t, x, y) for t in range(3) for y in range(2) for x in range(2)))
    assert activity(full, tiny) == 1
    with pytest.raises(ValueError):
        activity(EventStream((), t_max=0), tiny)


def test_report_from_trace_consistency():
    spec = LayerSpec(2, 4, 16, 16, 3, 3, 1, 1)
    cfg = SneConfig()
    w = np.random.default_rng(0).integers(-8, 8, spec.weight_shape)
    s = gen_stream(2, 16, 16, 20, 0.05, seed=0)
    r = run_network(cfg, plan([spec], cfg), w, LifParams(leak=1, v_th=10), s)
    rep = report_from_trace(cfg, EnergyParams(), r.trace, {0: activity(s, spec)})
    assert rep.sop_count == r.trace.sop_count
    assert rep.busy_cycles + rep.idle_cycles + rep.stall_cycles == cfg.n_slices * r.trace.cycles
    assert rep.time_s == r.trace.cycles / cfg.clock_hz
    assert 0 < rep.efficiency_tsops_w <= 4.54
    assert rep.energy_op_j == pytest.approx(0.221e-12 * rep.sop_count)


def test_time_model_equals_op_model_at_full_utilisation():
    cfg = SneConfig(n_slices=1)
    tr = SimTrace(cycles=1000, sop_count=16 * 1000)
    tr.tallies["slice0"] = Tally(busy=1000)
    p = EnergyParams(pj_per_sop=11.29e-3 / 8 / (16 * 4e8) * 1e12)
    rep = report_from_trace(cfg, p, tr)
    assert rep.energy_time_j == pytest.approx(rep.energy_op_j, rel=1e-12)


def test_emission(tmp_path):
    r = inference_figures(SneConfig(), EnergyParams(), [100])
    write_report_json(r, tmp_path / "r.json", {"seed": 3})
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["seed"] == 3 and d["sop_count"] == r.sop_count
    rows = slices_throughput_rows(EnergyParams())
    assert [row["peak_gsops"] for row in rows] == [6.4, 12.8, 25.6, 51.2]
    write_rows_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("slices,peak_gsops")
    pts = activity_energy_rows([(0.01, r)])
    assert pts[0]["energy_time_uj"] == pytest.approx(r.energy_time_j * 1e6)


def test_gen_stream():
    s = gen_stream(2, 4, 4, 5, 0.0, seed=1)
    assert [e.op.name for e in s] == ["RST"] + ["FIRE"] * 5
    big = gen_stream(2, 128, 128, 100, 0.05, seed=7)
    assert len(big.updates()) == 163_840
    assert validate_stream(big) == []
    assert gen_stream(2, 8, 8, 10, 0.3, seed=5) == gen_stream(2, 8, 8, 10, 0.3, seed=5)
    assert gen_stream(2, 8, 8, 10, 0.3, seed=5) != gen_stream(2, 8, 8, 10, 0.3, seed=6)
    with pytest.raises(ValueError):
        gen_stream(1, 2, 2, 2, 1.5)
