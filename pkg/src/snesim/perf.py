"""Time, throughput, power and energy figures derived from simulation results.

Two energy models are always reported side by side: busy time multiplied by
power, and SOP count multiplied by a fixed energy per SOP. They agree on
saturating workloads and drift apart on sparse or unbalanced ones.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

from .arch.config import SneConfig
from .arch.trace import SimTrace
from .events import EventOp, EventStream
from .neuron import LayerSpec

log = logging.getLogger(__name__)

REFERENCE_SLICES = 8


@dataclass(frozen=True)
class EnergyParams:
    """Energy calibration.

    ``power_mw`` is the full-activity draw of the reference 8-slice device.
    ``power_table`` maps slice counts to measured power; counts missing from
    the table are scaled linearly from the reference point.
    """

    pj_per_sop: float = 0.221
    power_mw: float = 11.29
    static_mw: float = 0.0
    power_table: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.pj_per_sop <= 0:
            raise ValueError(f"pj_per_sop must be positive, got {self.pj_per_sop}")
        if self.power_mw <= 0:
            raise ValueError(f"power_mw must be positive, got {self.power_mw}")
        if self.static_mw < 0:
            raise ValueError(f"static_mw must be >= 0, got {self.static_mw}")
        for n, p in self.power_table.items():
            if n < 1 or p <= 0:
                raise ValueError(f"bad power table entry {n}: {p}")

    def power_for(self, n_slices: int) -> float:
        """Active power in mW of a device with ``n_slices`` slices."""
        if n_slices in self.power_table:
            return float(self.power_table[n_slices])
        if n_slices == REFERENCE_SLICES:
            return self.power_mw
        log.info("power for %d slices extrapolated linearly from the %d-slice point",
                 n_slices, REFERENCE_SLICES)
        return self.power_mw * n_slices / REFERENCE_SLICES

    def is_extrapolated(self, n_slices: int) -> bool:
        return n_slices not in self.power_table and n_slices != REFERENCE_SLICES

    def to_dict(self) -> dict:
        d = asdict(self)
        d["power_table"] = {str(k): v for k, v in self.power_table.items()}
        return d


def peak_sops(config: SneConfig) -> float:
    """One SOP per cluster per cycle."""
    return config.n_slices * config.clusters_per_slice * config.clock_hz


@dataclass(frozen=True)
class Throughput:
    peak: float
    effective: float


def throughput(config: SneConfig, trace: SimTrace) -> Throughput:
    if trace.cycles <= 0:
        raise ValueError("throughput of a zero-cycle trace is undefined")
    return Throughput(peak_sops(config), trace.sop_count * config.clock_hz / trace.cycles)


@dataclass(frozen=True)
class Efficiency:
    """Peak efficiency in TSOP/s/W, computed two independent ways."""

    from_power: float
    from_energy_per_op: float

    @property
    def mismatch(self) -> float:
        return abs(self.from_power - self.from_energy_per_op) / self.from_energy_per_op

    def consistent(self, rel_tol: float = 0.01) -> bool:
        return self.mismatch <= rel_tol


def efficiency(params: EnergyParams, config: SneConfig | None = None) -> Efficiency:
    config = config or SneConfig()
    watts = params.power_for(config.n_slices) * 1e-3
    return Efficiency(peak_sops(config) / watts / 1e12, 1.0 / params.pj_per_sop)


@dataclass
class PerfReport:
    sop_count: int
    busy_cycles: int
    idle_cycles: int
    stall_cycles: int
    time_s: float
    energy_time_j: float
    energy_op_j: float
    effective_sops: float
    peak_sops: float
    power_mw: float
    power_extrapolated: bool
    model: str
    layer_events: dict[int, int] = field(default_factory=dict)
    activity: dict[int, float] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        """Inferences per second; infinite for an empty workload."""
        return math.inf if self.time_s == 0 else 1.0 / self.time_s

    @property
    def efficiency_tsops_w(self) -> float:
        """Effective TSOP/s/W under the time-based energy model."""
        if self.energy_time_j == 0:
            return 0.0
        return self.sop_count / self.energy_time_j / 1e12

    @property
    def model_divergence(self) -> float:
        """Relative gap between the two energy models."""
        ref = max(self.energy_time_j, self.energy_op_j)
        return 0.0 if ref == 0 else abs(self.energy_time_j - self.energy_op_j) / ref

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_events"] = {str(k): v for k, v in self.layer_events.items()}
        d["activity"] = {str(k): v for k, v in self.activity.items()}
        d["rate_inf_s"] = None if math.isinf(self.rate) else self.rate
        d["efficiency_tsops_w"] = self.efficiency_tsops_w
        d["model_divergence"] = self.model_divergence
        return d


def inference_figures(config: SneConfig, params: EnergyParams, event_counts: Mapping[int, int] | Sequence[int],
                      sop_count: int | None = None) -> PerfReport:
    """Sequential model: every layer's input events are consumed one after another.

    Each event occupies the device for ``cycles_per_event`` cycles with every
    slice busy. Without a measured ``sop_count`` the per-op model assumes
    every cluster does one SOP per busy cycle.
    """
    if not isinstance(event_counts, Mapping):
        event_counts = dict(enumerate(event_counts))
    if not event_counts:
        raise ValueError("no per-layer event counts given")
    for k, n in event_counts.items():
        if n is None or n < 0:
            raise ValueError(f"layer {k}: event count must be a non-negative integer, got {n}")
    events = sum(event_counts.values())
    busy = events * config.cycles_per_event
    time_s = busy / config.clock_hz
    if sop_count is None:
        sop_count = busy * config.n_clusters
    power = params.power_for(config.n_slices)
    return PerfReport(
        sop_count=sop_count, busy_cycles=busy, idle_cycles=0, stall_cycles=0, time_s=time_s,
        energy_time_j=(power + params.static_mw) * 1e-3 * time_s,
        energy_op_j=params.pj_per_sop * 1e-12 * sop_count,
        effective_sops=sop_count / time_s if time_s else 0.0,
        peak_sops=peak_sops(config), power_mw=power,
        power_extrapolated=params.is_extrapolated(config.n_slices),
        model="sequential", layer_events=dict(event_counts))


def report_from_trace(config: SneConfig, params: EnergyParams, trace: SimTrace,
                      activity_by_layer: Mapping[int, float] | None = None) -> PerfReport:
    """Pipeline-aware figures from a simulated trace.

    Active power is charged per busy slice-cycle (``power / n_slices`` each);
    static power, if any, over the whole run.
    """
    slices = [n for n in trace.tallies if n.startswith("slice") and "." not in n]
    busy = sum(trace.tallies[n].busy for n in slices)
    stall = sum(trace.tallies[n].stall for n in slices)
    idle = len(slices) * trace.cycles - busy - stall
    time_s = trace.cycles / config.clock_hz
    power = params.power_for(config.n_slices)
    per_slice_j = power * 1e-3 / config.n_slices / config.clock_hz
    return PerfReport(
        sop_count=trace.sop_count, busy_cycles=busy, idle_cycles=idle, stall_cycles=stall,
        time_s=time_s,
        energy_time_j=busy * per_slice_j + params.static_mw * 1e-3 * time_s,
        energy_op_j=params.pj_per_sop * 1e-12 * trace.sop_count,
        effective_sops=trace.sop_count / time_s if time_s else 0.0,
        peak_sops=peak_sops(config), power_mw=power,
        power_extrapolated=params.is_extrapolated(config.n_slices),
        model="trace", layer_events=dict(trace.layer_inputs),
        activity=dict(activity_by_layer or {}))


def event_latency_s(config: SneConfig) -> float:
    return config.cycles_per_event / config.clock_hz


def activity(stream: EventStream, spec: LayerSpec, T: int | None = None) -> float:
    """Fraction of (channel, position, timestep) sites carrying an UPDATE event."""
    T = stream.t_max if T is None else T
    sites = spec.c_in * spec.h_in * spec.w_in * T
    if sites <= 0:
        raise ValueError("activity of a zero-size layer is undefined")
    return sum(1 for e in stream if e.op is EventOp.UPDATE) / sites


# -- emission ------------------------------------------------------------------

def write_report_json(report: PerfReport, path: str | Path, extra: Mapping | None = None) -> None:
    d = report.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True))


def write_rows_csv(rows: Iterable[Mapping], dest: str | Path | TextIO) -> None:
    """Write dict rows as CSV to a path or an open text stream."""
    rows = list(rows)
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    if hasattr(dest, "write"):
        _write_rows(rows, cols, dest)
        return
    with Path(dest).open("w", newline="") as fh:
        _write_rows(rows, cols, fh)


def _write_rows(rows, cols, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=cols)
    w.writeheader()
    w.writerows(rows)


def slices_throughput_rows(params: EnergyParams, slice_counts: Sequence[int] = (1, 2, 4, 8),
                           base: SneConfig | None = None) -> list[dict]:
    """Plot data: peak throughput, power and efficiency against slice count."""
    base = base or SneConfig()
    rows = []
    for n in slice_counts:
        cfg = replace(base, n_slices=n)
        eff = efficiency(params, cfg)
        rows.append({"slices": n, "peak_gsops": peak_sops(cfg) / 1e9, "power_mw": params.power_for(n),
                     "power_extrapolated": params.is_extrapolated(n),
                     "tsops_per_w": eff.from_power, "pj_per_sop": params.pj_per_sop})
    return rows


def activity_energy_rows(points: Iterable[tuple[float, PerfReport]]) -> list[dict]:
    """Plot data: activity against energy per inference and rate."""
    return [{"activity": a, "energy_time_uj": r.energy_time_j * 1e6, "energy_op_uj": r.energy_op_j * 1e6,
             "time_ms": r.time_s * 1e3, "rate_inf_s": r.rate} for a, r in points]
