from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

log = logging.getLogger(__name__)

CALIBRATED_SLICE_COUNTS = (1, 2, 4, 8)


@dataclass(frozen=True)
class SneConfig:
    """Accelerator geometry, timing and clocking.

    ``rst_cycles`` defaults to one sweep over the TDM slots, like a FIRE scan.
    ``mem_latency`` adds cycles per word fetched by the input DMA.
    """

    n_slices: int = 8
    clusters_per_slice: int = 16
    neurons_per_cluster: int = 64
    cycles_per_event: int = 48
    fire_scan_cycles: int = 64
    rst_cycles: int | None = None
    fifo_depth_cluster: int = 4
    dma_fifo_depth: int = 16
    n_dmas: int = 2
    clock_hz: float = 4.0e8
    weight_bits: int = 4
    state_bits: int = 8
    mem_latency: int = 0
    fire_overlap: bool = False
    deadlock_cycles: int = 100_000

    def __post_init__(self):
        for f in ("n_slices", "clusters_per_slice", "neurons_per_cluster", "cycles_per_event",
                  "fire_scan_cycles", "fifo_depth_cluster", "dma_fifo_depth", "n_dmas",
                  "deadlock_cycles"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be positive, got {getattr(self, f)}")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")
        if self.mem_latency < 0:
            raise ValueError("mem_latency must be >= 0")
        if self.rst_cycles is None:
            object.__setattr__(self, "rst_cycles", self.neurons_per_cluster)
        if self.n_slices not in CALIBRATED_SLICE_COUNTS:
            log.warning("n_slices=%d is outside the characterised 1/2/4/8 configurations", self.n_slices)

    @property
    def n_clusters(self) -> int:
        return self.n_slices * self.clusters_per_slice

    @property
    def capacity(self) -> int:
        return self.n_clusters * self.neurons_per_cluster

    @property
    def slice_capacity(self) -> int:
        return self.clusters_per_slice * self.neurons_per_cluster

    @property
    def extrapolated(self) -> bool:
        return self.n_slices not in CALIBRATED_SLICE_COUNTS

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SneConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
