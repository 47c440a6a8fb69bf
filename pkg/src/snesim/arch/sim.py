"""Cycle-approximate structural model of the engine.

One clock cycle is evaluated back to front so a register freed in a cycle can
be refilled in the next one without a bubble:

1. output DMA writes one word to memory
2. slices start/advance their current operation, clusters update or scan
3. collector loads one eligible cluster-FIFO event (or marker) into its register
4. crossbar delivers the collector register and the input-DMA FIFO head
5. input DMA fetches one word from memory

Functional state changes happen when an operation starts (UPDATE, RST) or
as a snapshot when a FIRE scan starts; the cycle model only decides when.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..events import Event, EventOp, EventStream, encode_event, decode_event
from ..mapper import ClusterAssignment, MappingPlan
from ..neuron import LayerSpec, LifParams, ResetPolicy, check_input, receptive_field
from ..weights import FilterBank, weight_image
from .config import SneConfig
from .trace import SimTrace, Tally

log = logging.getLogger(__name__)

UPDATE, RST, FIRE = EventOp.UPDATE, EventOp.RST, EventOp.FIRE


class SimError(RuntimeError):
    pass


class SimDeadlock(SimError):
    pass


class PlanOverflowError(ValueError):
    pass


class RouteError(ValueError):
    pass


@dataclass(frozen=True)
class XbarRoute:
    mode: str  # "p2p" or "broadcast"
    master: str
    slaves: tuple[str, ...]


@dataclass
class CycleDelta:
    cycle: int
    sops: int
    states: dict[str, str]


def _leak(v: np.ndarray, amount: np.ndarray, p: LifParams) -> np.ndarray:
    if p.leak_floor:
        return np.where(v > 0, np.maximum(v - amount, 0), v)
    return np.clip(v - amount, p.v_min, p.v_max)


class Cluster:
    """64 TDM neuron slots over one rectangular tile of one output channel."""

    def __init__(self, name: str, assign: ClusterAssignment | None, spec: LayerSpec | None,
                 w: np.ndarray | None, params: LifParams | None, cfg: SneConfig):
        self.name = name
        self.assign = assign
        self.spec = spec
        self.w = w  # (c_in, k_h, k_w) for this cluster's output channel
        self.params = params
        self.cfg = cfg
        self.tally = Tally()
        self.fifo: deque[Event] = deque()
        self.busy_left = 0
        self.pending: deque[tuple[int, Event]] = deque()
        self.scanning = False
        self.scan_step = 0
        self.scan_t = 0
        if assign is not None:
            self.v = np.zeros((assign.h, assign.w), dtype=np.int16)
            self.tlu = np.zeros((assign.h, assign.w), dtype=np.int32)

    def window(self, e: Event) -> tuple[int, int, int, int] | None:
        """Tile-local (a, b, c, d) rows/cols hit by ``e``; None when clock-gated."""
        a0 = self.assign
        i0, i1, j0, j1 = receptive_field(self.spec, e.x, e.y)
        a, b = max(i0, a0.y0), min(i1, a0.y0 + a0.h)
        c, d = max(j0, a0.x0), min(j1, a0.x0 + a0.w)
        if a >= b or c >= d:
            return None
        return a, b, c, d

    def update(self, e: Event) -> int:
        win = self.window(e)
        if win is None:
            return 0
        a, b, c, d = win
        sp, p, a0 = self.spec, self.params, self.assign
        ky = e.y - np.arange(a, b) + sp.p_h
        kx = e.x - np.arange(c, d) + sp.p_w
        wpatch = self.w[e.channel][np.ix_(ky, kx)]
        rows, cols = slice(a - a0.y0, b - a0.y0), slice(c - a0.x0, d - a0.x0)
        dt = (e.t + 1) - self.tlu[rows, cols]
        v = _leak(self.v[rows, cols], p.leak * dt, p)
        self.v[rows, cols] = np.clip(v + wpatch, p.v_min, p.v_max)
        self.tlu[rows, cols] = e.t + 1
        return (b - a) * (d - c)

    def reset(self, t: int) -> None:
        self.v[:] = 0
        self.tlu[:] = t

    def start_scan(self, t: int) -> int:
        p, a0 = self.params, self.assign
        self.v = _leak(self.v, p.leak * ((t + 1) - self.tlu), p).astype(np.int16)
        self.tlu[:] = t + 1
        mask = self.v >= p.v_th
        ys, xs = np.nonzero(mask)
        npc, scan_len = self.cfg.neurons_per_cluster, self.cfg.fire_scan_cycles
        self.pending = deque(
            ((y * a0.w + x) * scan_len // npc, Event.update(a0.channel, t, a0.x0 + x, a0.y0 + y))
            for y, x in zip(ys.tolist(), xs.tolist()))
        if p.reset is ResetPolicy.TO_ZERO:
            self.v[mask] = 0
        elif p.reset is ResetPolicy.SUBTRACT_THRESHOLD:
            self.v[mask] = np.clip(self.v[mask].astype(np.int32) - p.v_th, p.v_min, p.v_max)
        self.scanning = True
        self.scan_step = 0
        self.scan_t = t
        return len(self.pending)

    def step(self, trace: SimTrace) -> str | None:
        busy = False
        if self.busy_left:
            self.busy_left -= 1
            busy = True
        if self.scanning:
            pend = self.pending
            if pend and pend[0][0] <= self.scan_step:
                if len(self.fifo) >= self.cfg.fifo_depth_cluster:
                    if busy:
                        self.tally.busy += 1
                        return "busy"
                    self.tally.stall += 1
                    return "stall"
                self.fifo.append(pend.popleft()[1])
                if len(self.fifo) > trace.fifo_max:
                    trace.fifo_max = len(self.fifo)
            if not pend or pend[0][0] > self.scan_step:
                self.scan_step += 1
            if self.scan_step >= self.cfg.fire_scan_cycles and not pend:
                self.scanning = False
            busy = True
        if busy:
            self.tally.busy += 1
            return "busy"
        return None

    @property
    def active(self) -> bool:
        return self.busy_left > 0 or self.scanning


class Group:
    """The slices implementing one layer in the current pass."""

    def __init__(self, layer: int, spec: LayerSpec, params: LifParams):
        self.layer = layer
        self.spec = spec
        self.params = params
        self.slices: list[Slice] = []
        self.markers: deque[Event] = deque()
        self.fire_done: Counter = Counter()
        self.rst_seen: set[int] = set()
        self.downstream: list[Slice] | None = None
        self.emitted: list[Event] = []

    @property
    def clusters(self) -> list[Cluster]:
        return [c for s in self.slices for c in s.clusters if c.assign is not None]

    def floor(self) -> int:
        return min(s.floor() for s in self.slices)


class Slice:
    def __init__(self, index: int, cfg: SneConfig):
        self.index = index
        self.name = f"slice{index}"
        self.cfg = cfg
        self.group: Group | None = None
        self.clusters: list[Cluster] = []
        self.reg: Event | None = None
        self.op: Event | None = None
        self.countdown = 0
        self.last_t = 0
        self.scans_active = False
        self.scan_t = 0
        self.active: list[Cluster] = []
        self.tally = Tally()

    @property
    def assigned(self) -> list[Cluster]:
        return [c for c in self.clusters if c.assign is not None]

    def floor(self) -> int:
        ts = []
        if self.op is not None:
            ts.append(self.op.t)
        if self.scans_active:
            ts.append(self.scan_t)
        return min(ts) if ts else self.last_t


class SimInstance:
    def __init__(self, config: SneConfig, plan: MappingPlan, pass_index: int,
                 weights: Sequence[FilterBank], params: Sequence[LifParams],
                 fast_forward: bool = True):
        self.config = config
        self.plan = plan
        self.pass_index = pass_index
        self.fast_forward = fast_forward
        self.trace = SimTrace(passes=1)
        self.slices = [Slice(s, config) for s in range(config.n_slices)]
        self.groups: dict[int, Group] = {}
        p = plan.passes[pass_index]
        assigned: dict[tuple[int, int], ClusterAssignment] = {}
        for sa in p.slices:
            for ca in sa.clusters:
                assigned[(ca.slice, ca.cluster)] = ca
        for sa in p.slices:
            layer = sa.layer
            if layer not in self.groups:
                self.groups[layer] = Group(layer, plan.layers[layer], params[layer])
            g = self.groups[layer]
            g.slices.append(self.slices[sa.slice])
            self.slices[sa.slice].group = g
            bank = weights[layer]
            self.trace.weight_words += (len(weight_image(bank.select_channels(*sa.channels))) + 3) // 4
        for s in self.slices:
            for c in range(config.clusters_per_slice):
                ca = assigned.get((s.index, c))
                name = f"{s.name}.cluster{c}"
                if ca is None:
                    s.clusters.append(Cluster(name, None, None, None, None, config))
                else:
                    w = weights[ca.layer][0][ca.channel].astype(np.int16)
                    s.clusters.append(Cluster(name, ca, plan.layers[ca.layer], w, params[ca.layer], config))
        layers = sorted(self.groups)
        self.input_group = self.groups[layers[0]]
        self.routes: list[XbarRoute] = [XbarRoute(
            "broadcast" if len(self.input_group.slices) > 1 else "p2p", "dma0",
            tuple(s.name for s in self.input_group.slices))]
        for a, b in zip(layers, layers[1:]):
            self.routes.append(pipeline_route(self, self.groups[a].slices[0].index,
                                              self.groups[b].slices[0].index))
            self.groups[a].downstream = self.groups[b].slices
        self.output_group = self.groups[layers[-1]]
        self.routes.append(XbarRoute("p2p", "collector", (self.dma_out_name,)))
        # collector ports: every assigned cluster FIFO, then one marker port per group
        self.ports: list[tuple[Group, Cluster | None]] = []
        for g in self.groups.values():
            for c in g.clusters:
                self.ports.append((g, c))
        for g in self.groups.values():
            self.ports.append((g, None))
        self.rr = 0
        self.coll_reg: tuple[Group, Event] | None = None
        self.coll_tally = Tally()
        self.xbar_tally = Tally()
        self.dma_in_tally = Tally()
        self.dma_out_tally = self.dma_in_tally if config.n_dmas == 1 else Tally()
        self.in_words: list[int] = []
        self.in_ptr = 0
        self.in_wait = 0
        self.in_fifo: deque[Event] = deque()
        self.out_fifo: deque[Event] = deque()
        self.out_words: list[int] = []
        self.cycle = 0
        self._idle_run = 0
        self._rec: dict[str, str] | None = None
        self._sops_this_cycle = 0
        self.t_max = 0

    @property
    def dma_out_name(self) -> str:
        return "dma0" if self.config.n_dmas == 1 else "dma1"

    @property
    def n_neurons(self) -> int:
        return self.config.capacity

    @property
    def mapped_neurons(self) -> int:
        return sum(c.assign.n_neurons for g in self.groups.values() for c in g.clusters)

    # -- loading -----------------------------------------------------------------

    def load_input(self, stream: EventStream) -> None:
        self.in_words = [encode_event(e) for e in stream]
        self.in_ptr = 0
        self.t_max = stream.t_max

    # -- per-cycle ---------------------------------------------------------------

    def _mark(self, name: str, state: str) -> None:
        if self._rec is not None:
            self._rec[name] = state

    def step_cycle(self, record: bool = False) -> CycleDelta | None:
        """Advance every component by one clock."""
        self._rec = {} if record else None
        sops_before = self.trace.sop_count
        progress = False
        cfg, tr = self.config, self.trace

        wrote = False
        if self.out_fifo:
            e = self.out_fifo.popleft()
            self.out_words.append(encode_event(e))
            tr.dma_words_written += 1
            tr.events_out[e.op.name] += 1
            self.dma_out_tally.busy += 1
            self._mark(self.dma_out_name, "busy")
            wrote = progress = True

        for s in self.slices:
            if s.group is not None and self._step_slice(s):
                progress = True

        if self.coll_reg is None:
            cand = self._select()
            if cand is not None:
                self.coll_reg = cand
                self.coll_tally.busy += 1
                self._mark("collector", "busy")
                progress = True
        else:
            self.coll_tally.stall += 1
            self._mark("collector", "stall")

        moved = blocked = False
        if self.coll_reg is not None:
            g, e = self.coll_reg
            if g.downstream is not None:
                if all(s.reg is None for s in g.downstream):
                    for s in g.downstream:
                        s.reg = e
                    tr.internal_hops += 1
                    moved = True
                else:
                    blocked = True
            elif len(self.out_fifo) < cfg.dma_fifo_depth:
                self.out_fifo.append(e)
                tr.dma_fifo_max = max(tr.dma_fifo_max, len(self.out_fifo))
                moved = True
            else:
                blocked = True
            if not blocked:
                g.emitted.append(e)
                self.coll_reg = None
        if self.in_fifo:
            dests = self.input_group.slices
            if all(s.reg is None for s in dests):
                e = self.in_fifo.popleft()
                for s in dests:
                    s.reg = e
                moved = True
            else:
                blocked = True
        if moved:
            self.xbar_tally.busy += 1
            self._mark("xbar", "busy")
            progress = True
        elif blocked:
            self.xbar_tally.stall += 1
            self._mark("xbar", "stall")

        if self.in_ptr < len(self.in_words):
            if cfg.n_dmas == 1 and wrote:
                pass
            elif len(self.in_fifo) < cfg.dma_fifo_depth:
                if self.in_wait:
                    self.in_wait -= 1
                else:
                    e = decode_event(self.in_words[self.in_ptr])
                    self.in_ptr += 1
                    self.in_fifo.append(e)
                    tr.dma_words_read += 1
                    tr.events_in[e.op.name] += 1
                    tr.dma_fifo_max = max(tr.dma_fifo_max, len(self.in_fifo))
                    self.in_wait = cfg.mem_latency
                self.dma_in_tally.busy += 1
                self._mark("dma0", "busy")
                progress = True
            else:
                self.dma_in_tally.stall += 1
                self._mark("dma0", "stall")

        self.cycle += 1
        tr.cycles += 1
        self._idle_run = 0 if progress else self._idle_run + 1
        if self._idle_run >= cfg.deadlock_cycles:
            raise SimDeadlock(f"no progress for {self._idle_run} cycles at cycle {self.cycle}")
        if record:
            return CycleDelta(self.cycle - 1, tr.sop_count - sops_before, self._rec)
        return None

    def _step_slice(self, s: Slice) -> bool:
        cfg, tr = self.config, self.trace
        progress = False
        blocked_start = False
        if s.op is None and s.reg is not None:
            if s.reg.op is FIRE and s.scans_active:
                blocked_start = True
            else:
                e, s.reg = s.reg, None
                self._start(s, e)
                progress = True

        moved_any = stalled_any = False
        if s.active:
            keep = []
            for c in s.active:
                st = c.step(tr)
                if st is not None:
                    self._mark(c.name, st)
                    if st == "busy":
                        moved_any = True
                    else:
                        stalled_any = True
                if c.active:
                    keep.append(c)
            s.active = keep
            if s.scans_active and not any(c.scanning for c in keep):
                s.scans_active = False
                self._fire_complete(s, s.scan_t)

        if s.op is not None:
            name = s.op.op.name
            tr.slice_op_cycles[name] += 1
            if s.op.op is FIRE and not cfg.fire_overlap:
                if moved_any or not stalled_any:
                    s.tally.busy += 1
                    self._mark(s.name, "busy")
                else:
                    s.tally.stall += 1
                    self._mark(s.name, "stall")
                if not s.scans_active:
                    s.last_t, s.op = s.op.t, None
                progress = moved_any or not stalled_any
            else:
                s.tally.busy += 1
                self._mark(s.name, "busy")
                s.countdown -= 1
                if s.countdown == 0:
                    s.last_t, s.op = s.op.t, None
                progress = True
        elif blocked_start:
            s.tally.stall += 1
            self._mark(s.name, "stall")
        return progress or moved_any

    def _start(self, s: Slice, e: Event) -> None:
        cfg, tr, g = self.config, self.trace, s.group
        s.op = e
        tr.slice_ops[e.op.name] += 1
        if e.op is UPDATE:
            if g.slices[0] is s:
                tr.layer_inputs[g.layer] += 1
            longest = 0
            for c in s.assigned:
                n = c.update(e)
                if n:
                    c.busy_left = n
                    tr.sop_count += n
                    longest = max(longest, n)
                    if c not in s.active:
                        s.active.append(c)
            s.countdown = max(cfg.cycles_per_event, longest)
        elif e.op is RST:
            if e.t not in g.rst_seen:
                g.rst_seen.add(e.t)
                g.markers.append(e)
            for c in s.assigned:
                c.reset(e.t)
                c.busy_left = cfg.rst_cycles
                if c not in s.active:
                    s.active.append(c)
            s.countdown = cfg.rst_cycles
        else:
            spikes = 0
            for c in s.assigned:
                spikes += c.start_scan(e.t)
                if c not in s.active:
                    s.active.append(c)
            tr.layer_outputs[g.layer] += spikes
            s.scans_active = True
            s.scan_t = e.t
            s.countdown = 1

    def _fire_complete(self, s: Slice, t: int) -> None:
        g = s.group
        g.fire_done[t] += 1
        if g.fire_done[t] == len(g.slices):
            del g.fire_done[t]
            g.markers.append(Event.fire(t))

    # -- collector ---------------------------------------------------------------

    @staticmethod
    def _key(e: Event) -> tuple[int, int]:
        return (e.t, -1 if e.op is RST else 1 if e.op is FIRE else 0)

    def _eligible(self) -> dict[int, tuple]:
        """Per group: (minimum pending key, floor) when something is pending."""
        out = {}
        for layer, g in self.groups.items():
            keys = [self._key(c.fifo[0]) for s in g.slices for c in s.clusters if c.fifo]
            if g.markers:
                keys.append(self._key(g.markers[0]))
            if keys:
                out[layer] = (min(keys), g.floor())
        return out

    def _can_deliver(self, g: Group) -> bool:
        if g.downstream is not None:
            return all(s.reg is None for s in g.downstream)
        return len(self.out_fifo) < self.config.dma_fifo_depth

    def _select(self, peek: bool = False):
        """Round-robin pick among ports whose head is eligible and whose destination is free.

        Checking the destination first keeps a blocked item from occupying the
        shared register while the downstream layer waits on the collector.
        """
        elig = self._eligible()
        elig = {k: v for k, v in elig.items() if self._can_deliver(self.groups[k])}
        if not elig:
            return None
        n = len(self.ports)
        for k in range(n):
            idx = (self.rr + k) % n
            g, c = self.ports[idx]
            info = elig.get(g.layer)
            if info is None:
                continue
            min_key, floor = info
            if c is None:
                if not g.markers or self._key(g.markers[0]) != min_key:
                    continue
                if peek:
                    return True
                e = g.markers.popleft()
            else:
                if not c.fifo:
                    continue
                head = c.fifo[0]
                if self._key(head) != min_key or head.t > floor:
                    continue
                if peek:
                    return True
                e = c.fifo.popleft()
            self.rr = (idx + 1) % n
            return (g, e)
        return None

    # -- run ---------------------------------------------------------------------

    def done(self) -> bool:
        if self.in_ptr < len(self.in_words) or self.in_fifo or self.out_fifo or self.coll_reg:
            return False
        for s in self.slices:
            if s.reg is not None or s.op is not None or s.active:
                return False
            for c in s.clusters:
                if c.fifo:
                    return False
        return not any(g.markers for g in self.groups.values())

    def _quiescent_span(self) -> int:
        """Cycles that can be skipped because only countdowns would advance."""
        cfg = self.config
        if self.out_fifo:
            return 0
        if self.in_ptr < len(self.in_words) and len(self.in_fifo) < cfg.dma_fifo_depth:
            return 0
        if self.in_fifo and all(s.reg is None for s in self.input_group.slices):
            return 0
        if self.coll_reg is None:
            if self._select(peek=True):
                return 0
        else:
            g, _ = self.coll_reg
            if g.downstream is not None:
                if all(s.reg is None for s in g.downstream):
                    return 0
            elif len(self.out_fifo) < cfg.dma_fifo_depth:
                return 0
        span = None
        for s in self.slices:
            if s.group is None:
                continue
            if s.op is None and s.reg is not None and not (s.reg.op is FIRE and s.scans_active):
                return 0
            if s.op is not None and (s.op.op is not FIRE or cfg.fire_overlap):
                span = s.countdown if span is None else min(span, s.countdown)
            for c in s.active:
                if c.scanning:
                    if c.pending:
                        return 0
                    rem = cfg.fire_scan_cycles - c.scan_step
                    span = rem if span is None else min(span, rem)
        if span is None:
            return 0
        return span - 1

    def _skip(self, k: int) -> None:
        cfg, tr = self.config, self.trace
        if self.in_ptr < len(self.in_words):
            self.dma_in_tally.stall += k
        if self.in_fifo or self.coll_reg is not None:
            self.xbar_tally.stall += k
        if self.coll_reg is not None:
            self.coll_tally.stall += k
        for s in self.slices:
            if s.group is None:
                continue
            if s.op is not None:
                s.tally.busy += k
                tr.slice_op_cycles[s.op.op.name] += k
                if s.op.op is not FIRE or cfg.fire_overlap:
                    s.countdown -= k
            elif s.reg is not None:
                s.tally.stall += k
            for c in s.active:
                scan = min(cfg.fire_scan_cycles - c.scan_step, k) if c.scanning else 0
                upd = min(c.busy_left, k)
                c.tally.busy += max(scan, upd)
                c.busy_left -= upd
                c.scan_step += scan
            s.active = [c for c in s.active if c.active]
        self.cycle += k
        tr.cycles += k
        self._idle_run = 0

    def run(self, max_cycles: int | None = None) -> SimTrace:
        while not self.done():
            if max_cycles is not None and self.cycle >= max_cycles:
                raise SimError(f"cycle limit {max_cycles} reached")
            if self.fast_forward:
                k = self._quiescent_span()
                if k > 0:
                    self._skip(k)
                    continue
            self.step_cycle()
        self._finalize()
        return self.trace

    def _finalize(self) -> None:
        tr = self.trace
        for name, t in (("collector", self.coll_tally), ("xbar", self.xbar_tally), ("dma0", self.dma_in_tally)):
            tr.tallies[name] = t
        if self.config.n_dmas > 1:
            tr.tallies["dma1"] = self.dma_out_tally
        for s in self.slices:
            tr.tallies[s.name] = s.tally
            for c in s.clusters:
                tr.tallies[c.name] = c.tally

    def output_stream(self) -> EventStream:
        evs = tuple(decode_event(w) for w in self.out_words)
        return EventStream(evs, t_max=self.t_max)

    def layer_stream(self, layer: int) -> EventStream:
        return EventStream(tuple(self.groups[layer].emitted), t_max=self.t_max)

    def dispatch_event(self, e: Event, layer: int | None = None) -> dict[int, list[bool]]:
        return dispatch_event(self, e, layer)


def _as_list(x, n: int) -> list:
    if isinstance(x, (list, tuple)):
        if len(x) < n:
            raise ValueError(f"expected {n} per-layer entries, got {len(x)}")
        return list(x)
    return [x] * n


def configure(config: SneConfig, plan: MappingPlan, weights, params, pass_index: int = 0,
              fast_forward: bool = True) -> SimInstance:
    """Build a simulator instance for one pass of ``plan``.

    ``weights``/``params`` are per-layer sequences (a single value is reused for
    every layer). Neuron states start at zero with TLU 0.
    """
    n_layers = len(plan.layers)
    banks = []
    for k, w in enumerate(_as_list(weights, n_layers)):
        bank = w if isinstance(w, FilterBank) else FilterBank.single(w)
        if bank.shape != plan.layers[k].weight_shape:
            raise ValueError(f"layer {k}: weights {bank.shape} vs layer {plan.layers[k].weight_shape}")
        banks.append(bank)
    lif = _as_list(params, n_layers)
    if not 0 <= pass_index < plan.n_passes:
        raise IndexError(f"pass {pass_index} not in plan with {plan.n_passes} passes")
    for ca in plan.passes[pass_index].clusters():
        if (ca.slice >= config.n_slices or ca.cluster >= config.clusters_per_slice
                or ca.n_neurons > config.neurons_per_cluster):
            raise PlanOverflowError(
                f"tile {ca.h}x{ca.w} at (y={ca.y0}, x={ca.x0}) of layer {ca.layer} channel {ca.channel} "
                f"needs slice {ca.slice} cluster {ca.cluster}, beyond a device of {config.n_slices} "
                f"slices x {config.clusters_per_slice} clusters x {config.neurons_per_cluster} neurons")
    return SimInstance(config, plan, pass_index, banks, lif, fast_forward)


def dispatch_event(instance: SimInstance, e: Event, layer: int | None = None) -> dict[int, list[bool]]:
    """Address filter: which clusters of each target slice accept ``e``.

    UPDATE events reach the clusters whose tile meets the event's receptive
    field; RST and FIRE reach every cluster of the target slices.
    """
    g = instance.input_group if layer is None else instance.groups[layer]
    spec = g.spec
    if e.op is UPDATE and not (e.channel < spec.c_in and e.y < spec.h_in and e.x < spec.w_in):
        raise ValueError(f"{e} outside layer {g.layer} input extent {spec.c_in}x{spec.h_in}x{spec.w_in}")
    out = {}
    for s in g.slices:
        if e.op is UPDATE:
            out[s.index] = [c.assign is not None and c.window(e) is not None for c in s.clusters]
        else:
            out[s.index] = [True] * len(s.clusters)
    return out


def pipeline_route(instance: SimInstance, from_slice: int, to_slice: int) -> XbarRoute:
    """Internal collector-to-slice route carrying one layer's output into the next layer."""
    if from_slice == to_slice:
        raise RouteError(f"slice {from_slice} cannot route to itself")
    for s in (from_slice, to_slice):
        if not 0 <= s < len(instance.slices) or instance.slices[s].group is None:
            raise RouteError(f"slice {s} is not configured")
    src, dst = instance.slices[from_slice].group, instance.slices[to_slice].group
    if dst.layer != src.layer + 1:
        raise RouteError(f"slice {from_slice} (layer {src.layer}) and slice {to_slice} "
                         f"(layer {dst.layer}) do not hold consecutive layers")
    names = tuple(s.name for s in dst.slices)
    return XbarRoute("broadcast" if len(names) > 1 else "p2p", "collector", names)


def run_inference(instance: SimInstance, stream: EventStream,
                  max_cycles: int | None = None) -> tuple[EventStream, SimTrace]:
    check_input(instance.input_group.spec, stream)
    instance.load_input(stream)
    trace = instance.run(max_cycles)
    return instance.output_stream(), trace
