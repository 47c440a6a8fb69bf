"""Layer-to-hardware mapping.

Pipelined mode gives each layer its own slice(s) and forwards events between
them through the crossbar. Tiled mode runs one layer at a time, packing whole
output channels greedily into passes; a channel larger than the device is
split spatially across passes. Every cluster owns a rectangular tile of one
output channel.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .events import MAX_CHANNEL, MAX_XY
from .neuron import LayerSpec, LifParams
from .weights import MAX_SETS, FilterBank, weight_image

if TYPE_CHECKING:
    from .arch.config import SneConfig


class MappingError(ValueError):
    pass


PIPELINED = "pipelined"
TILED = "tiled"


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    weights: tuple[FilterBank, ...] = ()
    params: tuple[LifParams, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "params", tuple(self.params))
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if (a.c_out, a.h_out, a.w_out) != (b.c_in, b.h_in, b.w_in):
                raise MappingError(
                    f"layer {k} output {a.c_out}x{a.h_out}x{a.w_out} does not feed "
                    f"layer {k + 1} input {b.c_in}x{b.h_in}x{b.w_in}")
        for k, (spec, w) in enumerate(zip(self.layers, self.weights)):
            if w.shape != spec.weight_shape:
                raise MappingError(f"layer {k}: weights {w.shape} vs layer {spec.weight_shape}")

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ClusterAssignment:
    slice: int
    cluster: int
    layer: int
    channel: int
    y0: int
    x0: int
    h: int
    w: int

    @property
    def n_neurons(self) -> int:
        return self.h * self.w


@dataclass
class SliceAssignment:
    slice: int
    layer: int
    clusters: list[ClusterAssignment] = field(default_factory=list)

    @property
    def channels(self) -> tuple[int, int]:
        """Half-open output-channel range held by this slice."""
        cs = [c.channel for c in self.clusters]
        return min(cs), max(cs) + 1

    @property
    def weight_set_ids(self) -> list[int]:
        # one filter-buffer set per output channel
        return sorted({c.channel for c in self.clusters})


@dataclass
class Pass:
    index: int
    slices: list[SliceAssignment]

    @property
    def layers(self) -> list[int]:
        return sorted({s.layer for s in self.slices})

    def slices_of(self, layer: int) -> list[int]:
        return [s.slice for s in self.slices if s.layer == layer]

    def clusters(self):
        for s in self.slices:
            yield from s.clusters


@dataclass
class MappingPlan:
    mode: str
    n_slices: int
    clusters_per_slice: int
    neurons_per_cluster: int
    layers: list[LayerSpec]
    passes: list[Pass]
    extrapolations: list[str] = field(default_factory=list)

    @property
    def n_passes(self) -> int:
        return len(self.passes)

    def passes_for_layer(self, layer: int) -> list[Pass]:
        return [p for p in self.passes if layer in p.layers]

    def neurons_required(self) -> int:
        return sum(c.n_neurons for p in self.passes for c in p.clusters())

    def check(self) -> None:
        """Raise MappingError unless every output neuron is owned exactly once."""
        seen: dict[int, set] = {k: set() for k in range(len(self.layers))}
        for p in self.passes:
            used_slices = set()
            for s in p.slices:
                if s.slice in used_slices:
                    raise MappingError(f"pass {p.index}: slice {s.slice} assigned twice")
                used_slices.add(s.slice)
                if not 0 <= s.slice < self.n_slices:
                    raise MappingError(f"pass {p.index}: slice {s.slice} does not exist")
                if len(s.clusters) > self.clusters_per_slice:
                    raise MappingError(f"pass {p.index}: slice {s.slice} over-subscribed")
                if len(s.weight_set_ids) > MAX_SETS:
                    raise MappingError(f"pass {p.index}: slice {s.slice} needs more than {MAX_SETS} sets")
                for c in s.clusters:
                    if c.n_neurons > self.neurons_per_cluster:
                        raise MappingError(f"cluster tile {c} exceeds {self.neurons_per_cluster} neurons")
                    for y in range(c.y0, c.y0 + c.h):
                        for x in range(c.x0, c.x0 + c.w):
                            key = (c.channel, y, x)
                            if key in seen[c.layer]:
                                raise MappingError(f"layer {c.layer} neuron {key} mapped twice")
                            seen[c.layer].add(key)
        for k, spec in enumerate(self.layers):
            if len(seen[k]) != spec.n_out:
                raise MappingError(f"layer {k}: {len(seen[k])} of {spec.n_out} neurons mapped")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_slices": self.n_slices,
            "clusters_per_slice": self.clusters_per_slice,
            "neurons_per_cluster": self.neurons_per_cluster,
            "layers": [asdict(l) for l in self.layers],
            "passes": [
                {"index": p.index,
                 "slices": [{"slice": s.slice, "layer": s.layer, "channels": list(s.channels),
                             "weight_set_ids": s.weight_set_ids,
                             "clusters": [asdict(c) for c in s.clusters]} for s in p.slices]}
                for p in self.passes],
            "extrapolations": list(self.extrapolations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> MappingPlan:
        passes = []
        for p in d["passes"]:
            slices = [SliceAssignment(s["slice"], s["layer"], [ClusterAssignment(**c) for c in s["clusters"]])
                      for s in p["slices"]]
            passes.append(Pass(p["index"], slices))
        return cls(d["mode"], d["n_slices"], d["clusters_per_slice"], d["neurons_per_cluster"],
                   [LayerSpec(**l) for l in d["layers"]], passes, list(d.get("extrapolations", [])))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> MappingPlan:
        return cls.from_dict(json.loads(Path(path).read_text()))


def tile_shape(h: int, w: int, neurons_per_cluster: int) -> tuple[int, int]:
    """Tile (th, tw) with th*tw <= neurons_per_cluster minimising the tile count.

    Ties go to the squarest tile, so 64-neuron clusters get 8x8 tiles.
    """
    best = None
    for th in range(1, neurons_per_cluster + 1):
        tw = neurons_per_cluster // th
        th_eff, tw_eff = min(th, h), min(tw, w)
        n = math.ceil(h / th_eff) * math.ceil(w / tw_eff)
        score = (n, abs(th - tw), th)
        if best is None or score < best[0]:
            best = (score, (th_eff, tw_eff))
    return best[1]


def channel_tiles(spec: LayerSpec, neurons_per_cluster: int) -> list[tuple[int, int, int, int]]:
    """Row-major (y0, x0, h, w) tiles covering one output channel."""
    th, tw = tile_shape(spec.h_out, spec.w_out, neurons_per_cluster)
    return [(y0, x0, min(th, spec.h_out - y0), min(tw, spec.w_out - x0))
            for y0 in range(0, spec.h_out, th) for x0 in range(0, spec.w_out, tw)]


def _layers_of(net) -> list[LayerSpec]:
    return list(net.layers) if isinstance(net, NetworkSpec) else list(net)


def _check_layers(layers: Sequence[LayerSpec]) -> None:
    if not layers:
        raise MappingError("empty network")
    for k, (a, b) in enumerate(zip(layers, layers[1:])):
        if (a.c_out, a.h_out, a.w_out) != (b.c_in, b.h_in, b.w_in):
            raise MappingError(f"layer {k} output does not match layer {k + 1} input")
    for k, l in enumerate(layers):
        if l.c_in > MAX_CHANNEL + 1 or l.c_out > MAX_CHANNEL + 1:
            raise MappingError(f"layer {k}: channel count exceeds the {MAX_CHANNEL + 1}-channel event field")
        if max(l.h_in, l.w_in, l.h_out, l.w_out) > MAX_XY + 1:
            raise MappingError(f"layer {k}: spatial extent exceeds the {MAX_XY + 1}-wide event field")


def _place(units, cps: int, layer: int, first_flat: int = 0) -> list[SliceAssignment]:
    """Lay (channel, tile) units onto clusters in slice-major order."""
    by_slice: dict[int, SliceAssignment] = {}
    for k, (ch, (y0, x0, h, w)) in enumerate(units):
        s, c = divmod(first_flat + k, cps)
        sa = by_slice.setdefault(s, SliceAssignment(s, layer))
        sa.clusters.append(ClusterAssignment(s, c, layer, ch, y0, x0, h, w))
    return list(by_slice.values())


def plan(net, config: SneConfig, force_mode: str | None = None,
         allow_spatial_tiling: bool = True) -> MappingPlan:
    layers = _layers_of(net)
    _check_layers(layers)
    cps, npc = config.clusters_per_slice, config.neurons_per_cluster
    tiles = [channel_tiles(l, npc) for l in layers]
    slices_needed = [math.ceil(l.c_out * len(t) / cps) for l, t in zip(layers, tiles)]
    fits = sum(slices_needed) <= config.n_slices
    mode = force_mode or (PIPELINED if fits else TILED)
    if mode == PIPELINED and not fits:
        raise MappingError(f"network needs {sum(slices_needed)} slices in pipelined mode, "
                           f"device has {config.n_slices}")
    notes: list[str] = []

    if mode == PIPELINED:
        slices: list[SliceAssignment] = []
        first = 0
        for k, (l, t) in enumerate(zip(layers, tiles)):
            units = [(ch, tile) for ch in range(l.c_out) for tile in t]
            slices += _place(units, cps, k, first * cps)
            if slices_needed[k] > 1:
                notes.append(f"layer {k} spans {slices_needed[k]} slices in pipelined mode")
            first += slices_needed[k]
        result = MappingPlan(mode, config.n_slices, cps, npc, layers, [Pass(0, slices)], notes)
        result.check()
        return result

    pool = config.n_clusters
    passes: list[Pass] = []
    for k, (l, t) in enumerate(zip(layers, tiles)):
        if len(t) > pool and not allow_spatial_tiling:
            raise MappingError(f"layer {k}: one output channel needs {len(t)} clusters, "
                               f"device has {pool}")
        current: list = []
        groups: list[list] = []
        for ch in range(l.c_out):
            units = [(ch, tile) for tile in t]
            if len(units) > pool:
                if current:
                    groups.append(current)
                    current = []
                for i in range(0, len(units), pool):
                    groups.append(units[i:i + pool])
                notes.append(f"layer {k} channel {ch} split spatially over "
                             f"{math.ceil(len(units) / pool)} passes")
                continue
            if len(current) + len(units) > pool:
                groups.append(current)
                current = []
            current += units
        if current:
            groups.append(current)
        for g in groups:
            passes.append(Pass(len(passes), _place(g, cps, k)))
    result = MappingPlan(TILED, config.n_slices, cps, npc, layers, passes, notes)
    result.check()
    return result


@dataclass
class PassImage:
    index: int
    slice_images: dict[int, bytes]
    records: list[dict]


def emit_pass_images(mplan: MappingPlan, weights: Sequence[FilterBank],
                     params: Sequence[LifParams] | None = None) -> list[PassImage]:
    """Per-pass weight images (``.sne-wgt`` bytes, one per slice) and slice records."""
    out = []
    for p in mplan.passes:
        images, records = {}, []
        for s in p.slices:
            if s.layer >= len(weights) or weights[s.layer] is None:
                raise MappingError(f"pass {p.index}: weights for layer {s.layer} are missing")
            lo, hi = s.channels
            images[s.slice] = weight_image(weights[s.layer].select_channels(lo, hi))
            rec = {"slice": s.slice, "layer": s.layer, "channels": [lo, hi],
                   "weight_set_ids": s.weight_set_ids,
                   "clusters": [asdict(c) for c in s.clusters]}
            if params is not None:
                lp = params[s.layer]
                rec.update(leak=lp.leak, v_th=lp.v_th, reset=lp.reset.value)
            records.append(rec)
        out.append(PassImage(p.index, images, records))
    return out


def save_pass_images(images: Sequence[PassImage], directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for img in images:
        for s, data in sorted(img.slice_images.items()):
            path = d / f"pass{img.index:03d}_slice{s}.sne-wgt"
            path.write_bytes(data)
            paths.append(path)
    return paths


@dataclass
class TrafficEstimate:
    input_words: list[int]
    output_words: list[int]

    @property
    def total(self) -> int:
        return sum(self.input_words) + sum(self.output_words)


def estimate_memory_traffic(mplan: MappingPlan, input_events: int,
                            layer_outputs: Sequence[int]) -> TrafficEstimate:
    """Event words crossing external memory, per pass.

    ``layer_outputs[k]`` is the expected number of output events of layer k.
    Pipelined: only the network input and the last layer's output. Tiled: every
    pass re-reads its layer's whole input and writes its share of the output.
    """
    if len(layer_outputs) != len(mplan.layers):
        raise ValueError("need one output count per layer")
    if mplan.mode == PIPELINED:
        return TrafficEstimate([input_events], [layer_outputs[-1]])
    ins, outs = [], []
    for k, spec in enumerate(mplan.layers):
        layer_in = input_events if k == 0 else layer_outputs[k - 1]
        lp = mplan.passes_for_layer(k)
        shares = [sum(c.n_neurons for c in p.clusters()) for p in lp]
        total = sum(shares)
        assigned = 0
        for i, (p, n) in enumerate(zip(lp, shares)):
            ins.append(layer_in)
            part = layer_outputs[k] - assigned if i == len(lp) - 1 else layer_outputs[k] * n // total
            assigned += part
            outs.append(part)
    return TrafficEstimate(ins, outs)
