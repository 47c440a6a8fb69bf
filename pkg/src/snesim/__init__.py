"""Event-driven simulator for a sparse neuromorphic convolution engine.

The package offers a golden LIF reference model, a cycle-approximate
architectural simulator, a network mapper and performance/energy reporting.
"""

from .events import Event, EventOp, EventStream, decode_event, encode_event, validate_stream
from .neuron import LayerSpec, LifParams, ResetPolicy, golden_layer_exec, golden_network_exec
from .weights import FilterBank, pack_weights, unpack_weights

__version__ = "0.1.0"

__all__ = [
    "Event", "EventOp", "EventStream", "decode_event", "encode_event", "validate_stream",
    "LayerSpec", "LifParams", "ResetPolicy", "golden_layer_exec", "golden_network_exec",
    "FilterBank", "pack_weights", "unpack_weights",
]
