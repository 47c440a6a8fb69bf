from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


@dataclass
class Tally:
    busy: int = 0
    stall: int = 0

    def idle(self, cycles: int) -> int:
        return cycles - self.busy - self.stall


@dataclass
class SimTrace:
    """Cycle totals and activity counters of one simulation (or a sequence of passes).

    Only busy and stall cycles are counted per component; idle is whatever is
    left of the total, so clock-gated units cost nothing to track.
    """

    cycles: int = 0
    tallies: dict[str, Tally] = field(default_factory=dict)
    sop_count: int = 0
    events_in: Counter = field(default_factory=Counter)
    events_out: Counter = field(default_factory=Counter)
    internal_hops: int = 0
    dma_words_read: int = 0
    dma_words_written: int = 0
    weight_words: int = 0
    reprogram_count: int = 0
    slice_op_cycles: Counter = field(default_factory=Counter)
    slice_ops: Counter = field(default_factory=Counter)
    layer_inputs: Counter = field(default_factory=Counter)
    layer_outputs: Counter = field(default_factory=Counter)
    fifo_max: int = 0
    dma_fifo_max: int = 0
    passes: int = 0

    def tally(self, name: str) -> Tally:
        t = self.tallies.get(name)
        if t is None:
            t = self.tallies[name] = Tally()
        return t

    def component(self, name: str) -> dict[str, int]:
        t = self.tallies.get(name, Tally())
        return {"busy": t.busy, "stall": t.stall, "idle": t.idle(self.cycles)}

    def busy_cycles(self, prefix: str = "slice") -> int:
        """Busy cycles summed over top-level components whose name starts with ``prefix``."""
        return sum(t.busy for n, t in self.tallies.items() if n.startswith(prefix) and "." not in n)

    def merge(self, other: SimTrace) -> SimTrace:
        """Sequential composition: ``other`` runs after ``self``."""
        out = SimTrace(
            cycles=self.cycles + other.cycles,
            sop_count=self.sop_count + other.sop_count,
            events_in=self.events_in + other.events_in,
            events_out=self.events_out + other.events_out,
            internal_hops=self.internal_hops + other.internal_hops,
            dma_words_read=self.dma_words_read + other.dma_words_read,
            dma_words_written=self.dma_words_written + other.dma_words_written,
            weight_words=self.weight_words + other.weight_words,
            reprogram_count=self.reprogram_count + other.reprogram_count,
            slice_op_cycles=self.slice_op_cycles + other.slice_op_cycles,
            slice_ops=self.slice_ops + other.slice_ops,
            layer_inputs=self.layer_inputs + other.layer_inputs,
            layer_outputs=self.layer_outputs + other.layer_outputs,
            fifo_max=max(self.fifo_max, other.fifo_max),
            dma_fifo_max=max(self.dma_fifo_max, other.dma_fifo_max),
            passes=self.passes + other.passes,
        )
        for src in (self, other):
            for n, t in src.tallies.items():
                o = out.tally(n)
                o.busy += t.busy
                o.stall += t.stall
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "cycles": self.cycles,
            "sop_count": self.sop_count,
            "components": {n: self.component(n) for n in sorted(self.tallies)},
            "events_in": dict(self.events_in),
            "events_out": dict(self.events_out),
            "internal_hops": self.internal_hops,
            "dma_words_read": self.dma_words_read,
            "dma_words_written": self.dma_words_written,
            "weight_words": self.weight_words,
            "reprogram_count": self.reprogram_count,
            "slice_op_cycles": dict(self.slice_op_cycles),
            "slice_ops": dict(self.slice_ops),
            "layer_inputs": {str(k): v for k, v in self.layer_inputs.items()},
            "layer_outputs": {str(k): v for k, v in self.layer_outputs.items()},
            "fifo_max": self.fifo_max,
            "dma_fifo_max": self.dma_fifo_max,
            "passes": self.passes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SimTrace:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"trace schema version {d.get('schema_version')} != {SCHEMA_VERSION}")
        tr = cls(
            cycles=d["cycles"], sop_count=d["sop_count"],
            events_in=Counter(d["events_in"]), events_out=Counter(d["events_out"]),
            internal_hops=d["internal_hops"], dma_words_read=d["dma_words_read"],
            dma_words_written=d["dma_words_written"], weight_words=d["weight_words"],
            reprogram_count=d["reprogram_count"],
            slice_op_cycles=Counter(d["slice_op_cycles"]), slice_ops=Counter(d["slice_ops"]),
            layer_inputs=Counter({int(k): v for k, v in d["layer_inputs"].items()}),
            layer_outputs=Counter({int(k): v for k, v in d["layer_outputs"].items()}),
            fifo_max=d["fifo_max"], dma_fifo_max=d["dma_fifo_max"], passes=d["passes"],
        )
        for n, c in d["components"].items():
            tr.tallies[n] = Tally(c["busy"], c["stall"])
        return tr

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def write_cycle_csv(rows, path: str | Path) -> None:
    """Per-cycle component states from ``SimInstance.step_cycle(record=True)`` deltas."""
    rows = list(rows)
    names = sorted({n for r in rows for n in r.states})
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "sops", *names])
        for r in rows:
            w.writerow([r.cycle, r.sops, *(r.states.get(n, "idle") for n in names)])
