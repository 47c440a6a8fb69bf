"""Signed 4-bit filter banks and their packed nibble image.

Nibbles are laid out c_out-major with k_w innermost, two weights per byte,
low nibble first. Each set is padded to a whole byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

W_MIN, W_MAX = -8, 7
MAX_SETS = 256

MAGIC = b"SNEW"
VERSION = 1
_HEADER = struct.Struct("<4sBHBBBB5x")
HEADER_SIZE = _HEADER.size  # 16


class WeightFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FilterBank:
    """Weight sets sharing one shape ``(c_out, c_in, k_h, k_w)``."""

    sets: tuple[np.ndarray, ...]

    def __post_init__(self):
        sets = tuple(np.asarray(s) for s in self.sets)
        if not sets:
            raise WeightFormatError("a filter bank needs at least one weight set")
        if len(sets) > MAX_SETS:
            raise WeightFormatError(f"{len(sets)} weight sets exceed the {MAX_SETS}-set filter buffer")
        shape = sets[0].shape
        if len(shape) != 4:
            raise WeightFormatError(f"weight set must be 4-D (c_out, c_in, k_h, k_w), got shape {shape}")
        for k, s in enumerate(sets):
            if s.shape != shape:
                raise WeightFormatError(f"set {k} has shape {s.shape}, expected {shape}")
            _check_range(s, k)
        object.__setattr__(self, "sets", tuple(s.astype(np.int8) for s in sets))

    @classmethod
    def single(cls, w) -> FilterBank:
        return cls((np.asarray(w),))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.sets[0].shape

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.sets[k]

    def select_channels(self, lo: int, hi: int) -> FilterBank:
        return FilterBank(tuple(s[lo:hi] for s in self.sets))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FilterBank):
            return NotImplemented
        return len(self) == len(other) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.sets, other.sets)
        )

    __hash__ = None


def _check_range(w: np.ndarray, set_idx: int) -> None:
    bad = np.argwhere((w < W_MIN) | (w > W_MAX))
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        raise WeightFormatError(
            f"weight {int(w[idx])} at set {set_idx} index {idx} outside [{W_MIN}, {W_MAX}]"
        )


def set_nbytes(shape: tuple[int, ...]) -> int:
    return (int(np.prod(shape)) + 1) // 2


def pack_weights(bank: FilterBank) -> bytes:
    out = bytearray()
    for s in bank.sets:
        flat = s.reshape(-1).astype(np.int16) & 0xF
        if flat.size % 2:
            flat = np.append(flat, 0)
        out += (flat[0::2] | (flat[1::2] << 4)).astype(np.uint8).tobytes()
    return bytes(out)


def unpack_weights(data: bytes, shape: tuple[int, int, int, int], n_sets: int = 1) -> FilterBank:
    per_set = set_nbytes(shape)
    if len(data) != per_set * n_sets:
        raise WeightFormatError(
            f"expected {per_set * n_sets} bytes for {n_sets} set(s) of shape {shape}, got {len(data)}"
        )
    n = int(np.prod(shape))
    raw = np.frombuffer(data, dtype=np.uint8)
    sets = []
    for k in range(n_sets):
        b = raw[k * per_set:(k + 1) * per_set]
        nib = np.empty(per_set * 2, dtype=np.int8)
        nib[0::2] = b & 0xF
        nib[1::2] = b >> 4
        nib = nib[:n]
        nib = np.where(nib >= 8, nib - 16, nib).astype(np.int8)
        sets.append(nib.reshape(shape))
    return FilterBank(tuple(sets))


def weight_image(bank: FilterBank) -> bytes:
    """Header plus packed nibbles: the ``.sne-wgt`` byte image."""
    if max(bank.shape) > 255:
        raise WeightFormatError(f"shape {bank.shape} does not fit the u8 header fields")
    return _HEADER.pack(MAGIC, VERSION, len(bank), *bank.shape) + pack_weights(bank)


def write_weight_file(bank: FilterBank, path: str | Path) -> None:
    Path(path).write_bytes(weight_image(bank))


def read_weight_file(path: str | Path) -> FilterBank:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise WeightFormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, version, n_sets, c_out, c_in, k_h, k_w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    try:
        return unpack_weights(raw[HEADER_SIZE:], (c_out, c_in, k_h, k_w), n_sets)
    except WeightFormatError as err:
        raise WeightFormatError(f"{path}: {err}") from None
