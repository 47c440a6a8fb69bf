"""Quantized linear-leak LIF neuron and the dense golden executor for one eCNN layer."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .events import Event, EventOp, EventStream, validate_stream
from .weights import FilterBank

V_MIN, V_MAX = -128, 127


class ResetPolicy(enum.Enum):
    TO_ZERO = "to_zero"
    SUBTRACT_THRESHOLD = "subtract_threshold"
    NONE = "none"


@dataclass(frozen=True)
class LifParams:
    leak: int = 0
    v_th: int = 1
    reset: ResetPolicy = ResetPolicy.TO_ZERO
    v_min: int = V_MIN
    v_max: int = V_MAX
    leak_floor: bool = False  # leak stops at zero instead of running down to v_min

    def __post_init__(self):
        if not isinstance(self.reset, ResetPolicy):
            object.__setattr__(self, "reset", ResetPolicy(self.reset))
        if self.leak < 0:
            raise ValueError(f"leak must be >= 0, got {self.leak}")
        if not self.v_min <= self.v_th <= self.v_max:
            raise ValueError(f"v_th={self.v_th} outside [{self.v_min}, {self.v_max}]")


@dataclass(frozen=True)
class NeuronState:
    v_mem: int = 0
    tlu: int = 0


@dataclass(frozen=True)
class LayerSpec:
    """Unit-stride convolution geometry: ``h_out = h_in + 2*p_h - k_h + 1``."""

    c_in: int
    c_out: int
    h_in: int
    w_in: int
    k_h: int = 3
    k_w: int = 3
    p_h: int = 0
    p_w: int = 0
    T: int | None = None

    def __post_init__(self):
        for name in ("c_in", "c_out", "h_in", "w_in", "k_h", "k_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.p_h < 0 or self.p_w < 0:
            raise ValueError("padding must be non-negative")
        if self.h_out < 1 or self.w_out < 1:
            raise ValueError(f"kernel {self.k_h}x{self.k_w} with padding ({self.p_h},{self.p_w}) "
                             f"leaves no output for a {self.h_in}x{self.w_in} input")

    @property
    def h_out(self) -> int:
        return self.h_in + 2 * self.p_h - self.k_h + 1

    @property
    def w_out(self) -> int:
        return self.w_in + 2 * self.p_w - self.k_w + 1

    @property
    def n_out(self) -> int:
        return self.c_out * self.h_out * self.w_out

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in, self.k_h, self.k_w)

    def next_layer(self, c_out: int, k_h: int = 3, k_w: int = 3, p_h: int = 0, p_w: int = 0) -> LayerSpec:
        return LayerSpec(self.c_out, c_out, self.h_out, self.w_out, k_h, k_w, p_h, p_w, self.T)


def saturate(v: int, lo: int = V_MIN, hi: int = V_MAX) -> int:
    return lo if v < lo else hi if v > hi else v


def apply_leak(v: int, leak: int, dt: int, lo: int = V_MIN, hi: int = V_MAX, floor: bool = False) -> int:
    """Leak applied over ``dt`` timesteps at once; equal to ``dt`` single steps."""
    if floor:
        return v if v <= 0 else max(v - leak * dt, 0)
    return saturate(v - leak * dt, lo, hi)


def membrane_step(state: NeuronState, leak: int, dt: int, w_sum: int,
                  params: LifParams | None = None) -> NeuronState:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    p = params or LifParams(leak=leak)
    v = apply_leak(state.v_mem, leak, dt, p.v_min, p.v_max, p.leak_floor)
    return NeuronState(saturate(v + w_sum, p.v_min, p.v_max), state.tlu + dt)


def reset_value(v: int, params: LifParams) -> int:
    if params.reset is ResetPolicy.TO_ZERO:
        return 0
    if params.reset is ResetPolicy.SUBTRACT_THRESHOLD:
        return saturate(v - params.v_th, params.v_min, params.v_max)
    return v


def fire_check(state: NeuronState, params: LifParams) -> tuple[bool, NeuronState]:
    # threshold is inclusive: v == v_th fires
    if state.v_mem >= params.v_th:
        return True, replace(state, v_mem=reset_value(state.v_mem, params))
    return False, state


def lazy_leak_equivalence_check(v: int, leak: int, dt: int, params: LifParams | None = None) -> bool:
    p = params or LifParams(leak=leak)
    lazy = membrane_step(NeuronState(v), leak, dt, 0, p)
    step = NeuronState(v)
    for _ in range(dt):
        step = membrane_step(step, leak, 1, 0, p)
    return lazy == step


def receptive_field(spec: LayerSpec, e_x: int, e_y: int) -> tuple[int, int, int, int]:
    """Half-open output window ``(i0, i1, j0, j1)`` reached by an input event at (e_x, e_y)."""
    i0 = max(e_y + spec.p_h - spec.k_h + 1, 0)
    i1 = min(e_y + spec.p_h + 1, spec.h_out)
    j0 = max(e_x + spec.p_w - spec.k_w + 1, 0)
    j1 = min(e_x + spec.p_w + 1, spec.w_out)
    return i0, max(i1, i0), j0, max(j1, j0)


def weight_lookup(spec: LayerSpec, w: np.ndarray, c_out: int, i: int, j: int,
                  k_i: int, e_x: int, e_y: int) -> int | None:
    """Weight linking input (k_i, e_y, e_x) to output neuron (c_out, i, j); None if out of field."""
    if not (0 <= c_out < spec.c_out and 0 <= i < spec.h_out and 0 <= j < spec.w_out):
        raise IndexError(f"output neuron ({c_out}, {i}, {j}) outside layer output extent")
    if not (0 <= k_i < spec.c_in and 0 <= e_y < spec.h_in and 0 <= e_x < spec.w_in):
        raise IndexError(f"input event ({k_i}, {e_y}, {e_x}) outside layer input extent")
    ky = e_y - i + spec.p_h
    kx = e_x - j + spec.p_w
    if 0 <= ky < spec.k_h and 0 <= kx < spec.k_w:
        return int(w[c_out, k_i, ky, kx])
    return None


class LayerError(ValueError):
    pass


@dataclass
class GoldenStats:
    inputs: dict[int, int] = field(default_factory=dict)   # t -> UPDATE events consumed
    outputs: dict[int, int] = field(default_factory=dict)  # t -> spikes emitted
    sops: dict[int, int] = field(default_factory=dict)     # t -> neuron updates

    @property
    def total_sops(self) -> int:
        return sum(self.sops.values())

    @property
    def total_inputs(self) -> int:
        return sum(self.inputs.values())

    @property
    def total_outputs(self) -> int:
        return sum(self.outputs.values())


def _weights(w, spec: LayerSpec, weight_set: int) -> np.ndarray:
    arr = w[weight_set] if isinstance(w, FilterBank) else np.asarray(w)
    if arr.shape != spec.weight_shape:
        raise LayerError(f"weight shape {arr.shape} does not match layer {spec.weight_shape}")
    return arr.astype(np.int16)


def check_input(spec: LayerSpec, stream: EventStream) -> None:
    problems = validate_stream(stream)
    if problems:
        raise LayerError(f"invalid input stream: {problems[0]}")
    for e in stream:
        if e.op is EventOp.UPDATE and not (e.channel < spec.c_in and e.y < spec.h_in and e.x < spec.w_in):
            raise LayerError(f"{e} outside layer input extent {spec.c_in}x{spec.h_in}x{spec.w_in}")


def golden_layer_exec(spec: LayerSpec, w, params: LifParams, stream: EventStream,
                      weight_set: int = 0) -> tuple[EventStream, GoldenStats]:
    """Dense reference execution of one layer.

    Per timestep: RST (if any) zeroes every membrane, then every neuron leaks,
    then each UPDATE is integrated in stream order with saturation after every
    weight, then FIRE emits one UPDATE event per neuron at or above threshold.
    RST and FIRE are forwarded so the output can feed the next layer.
    """
    wt = _weights(w, spec, weight_set)
    check_input(spec, stream)
    lo, hi = params.v_min, params.v_max
    v = np.zeros((spec.c_out, spec.h_out, spec.w_out), dtype=np.int16)
    stats = GoldenStats()
    out: list[Event] = []
    by_t = stream.by_timestep()
    flip = wt[:, :, ::-1, ::-1]

    for t in range(stream.t_max):
        evs = by_t.get(t, [])
        if evs and evs[0].op is EventOp.RST:
            v[:] = 0
            out.append(Event.rst(t))
        if params.leak:
            if params.leak_floor:
                v = np.where(v > 0, np.maximum(v - params.leak, 0), v)
            else:
                v = np.clip(v - params.leak, lo, hi)
        n_in = sops = 0
        for e in evs:
            if e.op is EventOp.UPDATE:
                i0, i1, j0, j1 = receptive_field(spec, e.x, e.y)
                if i1 > i0 and j1 > j0:
                    # ky = e_y - i + p_h decreases with i, so walk the flipped kernel forwards
                    a0 = spec.k_h - 1 - e.y - spec.p_h + i0
                    b0 = spec.k_w - 1 - e.x - spec.p_w + j0
                    patch = flip[:, e.channel, a0:a0 + i1 - i0, b0:b0 + j1 - j0]
                    region = v[:, i0:i1, j0:j1]
                    np.clip(region + patch, lo, hi, out=region)
                    sops += spec.c_out * (i1 - i0) * (j1 - j0)
                n_in += 1
            elif e.op is EventOp.FIRE:
                mask = v >= params.v_th
                cs, ys, xs = np.nonzero(mask)
                for c, y, x in zip(cs.tolist(), ys.tolist(), xs.tolist()):
                    out.append(Event.update(c, t, x, y))
                if params.reset is ResetPolicy.TO_ZERO:
                    v[mask] = 0
                elif params.reset is ResetPolicy.SUBTRACT_THRESHOLD:
                    v[mask] = np.clip(v[mask] - params.v_th, lo, hi)
                stats.outputs[t] = len(cs)
                out.append(Event.fire(t))
        stats.inputs[t] = n_in
        stats.sops[t] = sops
    return EventStream(tuple(out), t_max=stream.t_max), stats


def golden_network_exec(specs, weights, params, stream: EventStream) -> list[tuple[EventStream, GoldenStats]]:
    """Run layers back to back; each layer consumes the previous layer's output."""
    results = []
    cur = stream
    for spec, w, p in zip(specs, weights, params, strict=True):
        cur, st = golden_layer_exec(spec, w, p, cur)
        results.append((cur, st))
    return results
