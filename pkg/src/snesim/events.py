"""Event records, the packed 32-bit event word, stream ordering rules and event files.

Word layout (MSB to LSB)::

    [31:30] op   0=RST 1=UPDATE 2=FIRE (3 is invalid)
    [29:24] channel
    [23:16] t
    [15:8]  y
    [7:0]   x
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

OP_SHIFT = 30
CH_SHIFT = 24
T_SHIFT = 16
Y_SHIFT = 8

CH_BITS = 6
T_BITS = 8
XY_BITS = 8

MAX_CHANNEL = (1 << CH_BITS) - 1
MAX_T = (1 << T_BITS) - 1
MAX_XY = (1 << XY_BITS) - 1


class EventFormatError(ValueError):
    """Raised for malformed event words, out-of-range fields and bad event files."""


class EventOp(enum.IntEnum):
    RST = 0
    UPDATE = 1
    FIRE = 2


@dataclass(frozen=True, slots=True)
class Event:
    op: EventOp
    channel: int = 0
    t: int = 0
    x: int = 0
    y: int = 0

    def __post_init__(self):
        if not isinstance(self.op, EventOp):
            object.__setattr__(self, "op", EventOp(self.op))
        if self.op is not EventOp.UPDATE and (self.channel or self.x or self.y):
            object.__setattr__(self, "channel", 0)
            object.__setattr__(self, "x", 0)
            object.__setattr__(self, "y", 0)

    @classmethod
    def update(cls, channel: int, t: int, x: int, y: int) -> Event:
        return cls(EventOp.UPDATE, channel, t, x, y)

    @classmethod
    def fire(cls, t: int) -> Event:
        return cls(EventOp.FIRE, 0, t)

    @classmethod
    def rst(cls, t: int = 0) -> Event:
        return cls(EventOp.RST, 0, t)

    @property
    def key(self) -> tuple[int, int, int, int]:
        """(channel, t, y, x): identity of a spike, used for multiset comparisons."""
        return (self.channel, self.t, self.y, self.x)

    def __str__(self) -> str:
        if self.op is EventOp.UPDATE:
            return f"UPDATE(c={self.channel}, t={self.t}, x={self.x}, y={self.y})"
        return f"{self.op.name}(t={self.t})"


def _check_field(name: str, value: int, limit: int) -> None:
    if not 0 <= value <= limit:
        raise EventFormatError(f"{name}={value} out of range [0, {limit}]")


def encode_event(e: Event) -> int:
    _check_field("channel", e.channel, MAX_CHANNEL)
    _check_field("t", e.t, MAX_T)
    _check_field("x", e.x, MAX_XY)
    _check_field("y", e.y, MAX_XY)
    return (
        (int(e.op) << OP_SHIFT)
        | (e.channel << CH_SHIFT)
        | (e.t << T_SHIFT)
        | (e.y << Y_SHIFT)
        | e.x
    )


def decode_event(word: int) -> Event:
    if not 0 <= word <= 0xFFFFFFFF:
        raise EventFormatError(f"word {word:#x} is not a 32-bit value")
    op = word >> OP_SHIFT
    if op == 3:
        raise EventFormatError(f"invalid opcode 3 in word {word:#010x}")
    return Event(
        EventOp(op),
        (word >> CH_SHIFT) & MAX_CHANNEL,
        (word >> T_SHIFT) & MAX_T,
        word & MAX_XY,
        (word >> Y_SHIFT) & MAX_XY,
    )


@dataclass(frozen=True)
class EventStream:
    """An ordered event sequence covering ``t_max`` timesteps."""

    events: tuple[Event, ...] = ()
    t_max: int = field(default=-1)

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))
        if self.t_max < 0:
            t_max = max((e.t for e in self.events), default=-1) + 1
            object.__setattr__(self, "t_max", t_max)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def updates(self) -> list[Event]:
        return [e for e in self.events if e.op is EventOp.UPDATE]

    def spike_keys(self) -> list[tuple[int, int, int, int]]:
        """Sorted (channel, t, y, x) keys of all UPDATE events: a canonical multiset."""
        return sorted(e.key for e in self.events if e.op is EventOp.UPDATE)

    def count(self, op: EventOp) -> int:
        return sum(1 for e in self.events if e.op is op)

    def by_timestep(self) -> dict[int, list[Event]]:
        out: dict[int, list[Event]] = {}
        for e in self.events:
            out.setdefault(e.t, []).append(e)
        return out


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"event {self.index}: {self.rule}: {self.detail}"


def validate_stream(s: EventStream) -> list[Violation]:
    """Check ordering rules; an empty list means the stream is well formed."""
    out: list[Violation] = []
    prev_t = -1
    fired: set[int] = set()
    for i, e in enumerate(s.events):
        if e.t < prev_t:
            out.append(Violation(i, "unsorted", f"t={e.t} after t={prev_t}"))
        prev_t = max(prev_t, e.t)
        if s.t_max and e.t >= s.t_max:
            out.append(Violation(i, "beyond-t-max", f"t={e.t} >= t_max={s.t_max}"))
        if e.op is EventOp.RST:
            if i != 0:
                out.append(Violation(i, "misplaced-rst", "RST must be the first event"))
        elif e.op is EventOp.FIRE:
            if e.t in fired:
                out.append(Violation(i, "duplicate-fire", f"second FIRE at t={e.t}"))
            fired.add(e.t)
        elif e.t in fired:
            out.append(Violation(i, "update-after-fire", f"UPDATE at t={e.t} follows FIRE at t={e.t}"))
    return out


def encode_stream(s: EventStream | Iterable[Event]) -> np.ndarray:
    return np.fromiter((encode_event(e) for e in s), dtype="<u4")


def decode_words(words: Sequence[int] | np.ndarray) -> EventStream:
    events = []
    for k, w in enumerate(np.asarray(words, dtype=np.uint32).tolist()):
        try:
            events.append(decode_event(w))
        except EventFormatError as err:
            raise EventFormatError(f"word {k} (byte offset {4 * k}): {err}") from None
    return EventStream(tuple(events))


def write_event_file(s: EventStream, path: str | Path) -> None:
    path = Path(path)
    if path.name.endswith(".csv"):
        _write_csv(s, path)
    else:
        path.write_bytes(encode_stream(s).tobytes())


def read_event_file(path: str | Path) -> EventStream:
    path = Path(path)
    if path.name.endswith(".csv"):
        return _read_csv(path)
    raw = path.read_bytes()
    if len(raw) % 4:
        raise EventFormatError(f"{path}: truncated file, {len(raw)} bytes is not a multiple of 4")
    try:
        return decode_words(np.frombuffer(raw, dtype="<u4"))
    except EventFormatError as err:
        raise EventFormatError(f"{path}: {err}") from None


def _write_csv(s: EventStream, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["op", "channel", "t", "y", "x"])
        for e in s:
            w.writerow([e.op.name, e.channel, e.t, e.y, e.x])


def _read_csv(path: Path) -> EventStream:
    events = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["op", "channel", "t", "y", "x"]:
            raise EventFormatError(f"{path}: bad header {reader.fieldnames}")
        for row_no, row in enumerate(reader, start=2):
            try:
                op = EventOp[row["op"].strip().upper()]
                e = Event(op, int(row["channel"]), int(row["t"]), int(row["x"]), int(row["y"]))
                encode_event(e)
            except (KeyError, ValueError) as err:
                raise EventFormatError(f"{path}:{row_no}: {err}") from None
            events.append(e)
    return EventStream(tuple(events))


def split_windows(events: Iterable[Event], window: int = MAX_T + 1) -> list[EventStream]:
    """Cut a stream with unbounded timestamps into windows of at most ``window`` steps.

    Timestamps are rebased to the window start. Each window becomes an
    independent inference, so every window starts with an RST.
    """
    if not 1 <= window <= MAX_T + 1:
        raise ValueError(f"window must be in [1, {MAX_T + 1}]")
    buckets: dict[int, list[Event]] = {}
    for e in events:
        if e.op is EventOp.RST:
            continue
        w, t = divmod(e.t, window)
        buckets.setdefault(w, []).append(Event(e.op, e.channel, t, e.x, e.y))
    out = []
    for w in range(max(buckets, default=-1) + 1):
        evs = [Event.rst(0)] + buckets.get(w, [])
        out.append(EventStream(tuple(evs), t_max=window))
    return out
