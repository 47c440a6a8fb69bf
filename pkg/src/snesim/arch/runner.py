"""Whole-network execution over a mapping plan, plus the collector arbitration rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..events import Event, EventOp, EventStream
from ..mapper import PIPELINED, MappingPlan
from .config import SneConfig
from .sim import configure, run_inference
from .trace import SimTrace


def collector_merge(sources: Sequence[Sequence[Event]]) -> list[Event]:
    """Merge per-port event queues into one stream.

    The smallest pending timestamp always goes first; ports holding that
    timestamp are served round-robin starting after the last port served.
    """
    queues = [list(s) for s in sources]
    pos = [0] * len(queues)
    out: list[Event] = []
    rr = 0
    n = len(queues)
    remaining = sum(len(q) for q in queues)
    while remaining:
        t_min = min(q[p].t for q, p in zip(queues, pos) if p < len(q))
        for k in range(n):
            i = (rr + k) % n
            if pos[i] < len(queues[i]) and queues[i][pos[i]].t == t_min:
                out.append(queues[i][pos[i]])
                pos[i] += 1
                rr = (i + 1) % n
                remaining -= 1
                break
    return out


def merge_pass_outputs(streams: Sequence[EventStream]) -> EventStream:
    """Host-side merge of the per-pass outputs of one layer into a single stream.

    Every pass saw the same input, so RST/FIRE markers are common to all of
    them and are emitted once per timestep.
    """
    t_max = max((s.t_max for s in streams), default=0)
    per_t: dict[int, list[Event]] = {}
    rst: set[int] = set()
    fire: set[int] = set()
    for s in streams:
        for e in s:
            if e.op is EventOp.RST:
                rst.add(e.t)
            elif e.op is EventOp.FIRE:
                fire.add(e.t)
            else:
                per_t.setdefault(e.t, []).append(e)
    out: list[Event] = []
    for t in sorted(set(per_t) | rst | fire):
        if t in rst:
            out.append(Event.rst(t))
        out.extend(per_t.get(t, ()))
        if t in fire:
            out.append(Event.fire(t))
    return EventStream(tuple(out), t_max=t_max)


@dataclass
class NetworkRun:
    output: EventStream
    trace: SimTrace
    layer_outputs: dict[int, EventStream]
    layer_inputs: dict[int, EventStream]
    pass_traces: list[SimTrace] = field(default_factory=list)

    @property
    def reprogram_count(self) -> int:
        return self.trace.reprogram_count


def run_network(config: SneConfig, plan: MappingPlan, weights, params, stream: EventStream,
                fast_forward: bool = True) -> NetworkRun:
    """Execute every pass of ``plan``.

    Pipelined plans run once with layers chained through the crossbar. Tiled
    plans run pass by pass; each pass re-reads its layer's input from memory
    and the host merges the per-pass outputs before the next layer starts.
    """
    if plan.mode == PIPELINED:
        inst = configure(config, plan, weights, params, 0, fast_forward)
        out, tr = run_inference(inst, stream)
        tr.reprogram_count = 1
        layer_out = {k: inst.layer_stream(k) for k in inst.groups}
        layer_in = {0: stream}
        for k in range(1, len(plan.layers)):
            layer_in[k] = layer_out[k - 1]
        return NetworkRun(out, tr, layer_out, layer_in, [tr])

    traces: list[SimTrace] = []
    layer_out: dict[int, EventStream] = {}
    layer_in: dict[int, EventStream] = {}
    cur = stream
    for k in range(len(plan.layers)):
        layer_in[k] = cur
        outs = []
        for p in plan.passes_for_layer(k):
            inst = configure(config, plan, weights, params, p.index, fast_forward)
            out, tr = run_inference(inst, cur)
            tr.reprogram_count = 1
            traces.append(tr)
            outs.append(out)
        cur = merge_pass_outputs(outs)
        layer_out[k] = cur
    total = SimTrace()
    for tr in traces:
        total = total.merge(tr)
    return NetworkRun(cur, total, layer_out, layer_in, traces)
