"""JSON network descriptions.

A network file names the input shape and lists layers in order. Weight images
are ``.sne-wgt`` files resolved relative to the JSON file::

    {
      "input": {"channels": 2, "height": 32, "width": 32},
      "layers": [
        {"out_channels": 8, "kernel": 3, "padding": 1, "weights": "l0.sne-wgt",
         "v_th": 12, "leak": 1, "reset": "to_zero"}
      ]
    }

``kernel`` and ``padding`` take an int or an ``[h, w]`` pair. ``leak``,
``v_th``, ``reset`` and ``leak_floor`` default to the LIF defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from .mapper import NetworkSpec
from .neuron import LayerSpec, LifParams, ResetPolicy
from .weights import FilterBank, WeightFormatError, read_weight_file, write_weight_file


class NetworkFormatError(ValueError):
    pass


def _pair(v, what: str, where: str) -> tuple[int, int]:
    if isinstance(v, int):
        return v, v
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return v[0], v[1]
    raise NetworkFormatError(f"{where}: {what} must be an int or [h, w], got {v!r}")


def load_network(path: str | Path) -> NetworkSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise NetworkFormatError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    try:
        inp = doc["input"]
        c, h, w = inp["channels"], inp["height"], inp["width"]
        layer_docs = doc["layers"]
    except (KeyError, TypeError) as err:
        raise NetworkFormatError(f"{path}: missing field {err}") from None
    if not layer_docs:
        raise NetworkFormatError(f"{path}: network has no layers")
    layers, banks, params = [], [], []
    for k, ld in enumerate(layer_docs):
        where = f"{path}: layers[{k}]"
        try:
            k_h, k_w = _pair(ld.get("kernel", 3), "kernel", where)
            p_h, p_w = _pair(ld.get("padding", 0), "padding", where)
            spec = LayerSpec(c, ld["out_channels"], h, w, k_h, k_w, p_h, p_w, doc.get("timesteps"))
            lif = LifParams(leak=ld.get("leak", 0), v_th=ld.get("v_th", 1),
                            reset=ResetPolicy(ld.get("reset", "to_zero")),
                            leak_floor=bool(ld.get("leak_floor", False)))
            wpath = path.parent / ld["weights"]
        except KeyError as err:
            raise NetworkFormatError(f"{where}: missing field {err}") from None
        except ValueError as err:
            raise NetworkFormatError(f"{where}: {err}") from None
        if not wpath.exists():
            raise NetworkFormatError(f"{where}: weight file {wpath} not found")
        try:
            bank = read_weight_file(wpath)
        except WeightFormatError as err:
            raise NetworkFormatError(f"{where}: {err}") from None
        if bank.shape != spec.weight_shape:
            raise NetworkFormatError(f"{where}: {wpath} holds weights {bank.shape}, "
                                     f"layer needs {spec.weight_shape}")
        layers.append(spec)
        banks.append(bank)
        params.append(lif)
        c, h, w = spec.c_out, spec.h_out, spec.w_out
    return NetworkSpec(layers, banks, params)


def save_network(net: NetworkSpec, path: str | Path) -> None:
    """Write ``net`` as JSON plus one ``layerK.sne-wgt`` file per layer next to it."""
    path = Path(path)
    first = net.layers[0]
    layer_docs = []
    for k, (spec, bank, lif) in enumerate(zip(net.layers, net.weights, net.params, strict=True)):
        wname = f"{path.stem}.layer{k}.sne-wgt"
        write_weight_file(bank if isinstance(bank, FilterBank) else FilterBank.single(bank),
                          path.parent / wname)
        layer_docs.append({"out_channels": spec.c_out, "kernel": [spec.k_h, spec.k_w],
                           "padding": [spec.p_h, spec.p_w], "weights": wname,
                           "v_th": lif.v_th, "leak": lif.leak, "reset": lif.reset.value,
                           "leak_floor": lif.leak_floor})
    doc = {"input": {"channels": first.c_in, "height": first.h_in, "width": first.w_in},
           "layers": layer_docs}
    if first.T is not None:
        doc["timesteps"] = first.T
    path.write_text(json.dumps(doc, indent=2))
