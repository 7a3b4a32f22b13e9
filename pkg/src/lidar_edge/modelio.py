"""LEDM model persistence.

Layout (all integers little-endian u32, floats little-endian f64):

    magic b"LEDM"
    version (= 1)
    model kind (1 = nested detector, 2 = patch classifier)
    arch descriptor:
        nested: S, S stage widths, input height, input width
        patch:  3, conv1 ch, conv2 ch, hidden, 28, 28, f64 dropout rate
    each named tensor in declaration order: rank, dims..., f64 values
    CRC32 of every prior byte

load(save(p)) is a bitwise identity on every tensor.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import (CorruptModelError, MagicError, TruncationError,
                     VersionError)
from .models import (NestedArch, NestedNetParams, PatchArch, PatchNetParams,
                     init_nested, init_patch)

MAGIC = b"LEDM"
VERSION = 1
KIND_NESTED = 1
KIND_PATCH = 2


def _pack_tensor(arr: np.ndarray) -> bytes:
    dims = arr.shape if arr.ndim else (1,)
    return (struct.pack("<I", len(dims))
            + struct.pack(f"<{len(dims)}I", *dims)
            + np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_model(params, path) -> None:
    if isinstance(params, NestedNetParams):
        arch = params.arch
        body = struct.pack("<I", arch.stages)
        body += struct.pack(f"<{arch.stages}I", *arch.widths)
        body += struct.pack("<II", *arch.input_hw)
        head = struct.pack("<II", VERSION, KIND_NESTED)
    elif isinstance(params, PatchNetParams):
        arch = params.arch
        body = struct.pack("<I", 3)
        body += struct.pack("<III", *arch.conv_channels, arch.hidden)
        body += struct.pack("<II", *arch.input_hw)
        body += struct.pack("<d", arch.dropout_rate)
        head = struct.pack("<II", VERSION, KIND_PATCH)
    else:
        raise TypeError(f"cannot serialize {type(params).__name__}")
    for _, tensor in params.named_tensors():
        body += _pack_tensor(tensor)
    payload = MAGIC + head + body
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise TruncationError(f"{self.path}: file ends {self.pos + n - len(self.raw)} bytes early")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def tensor(self, shape: tuple) -> np.ndarray:
        rank = self.u32()
        dims = tuple(self.u32() for _ in range(rank))
        if dims != (shape if shape else (1,)):
            raise CorruptModelError(f"{self.path}: tensor dims {dims}, expected {shape}")
        n = int(np.prod(dims))
        arr = np.frombuffer(self.take(8 * n), dtype="<f8").reshape(dims)
        return arr.astype(np.float64).reshape(shape)


def load_model(path):
    """Read an LEDM file; returns NestedNetParams or PatchNetParams."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise MagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 16:
        raise TruncationError(f"{path}: too short for an LEDM header")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptModelError(f"{path}: CRC32 mismatch")
    r = _Reader(raw[:-4], path)
    r.take(4)  # magic
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"{path}: unsupported LEDM version {version}")
    kind = r.u32()
    if kind == KIND_NESTED:
        stages = r.u32()
        widths = tuple(r.u32() for _ in range(stages))
        input_hw = (r.u32(), r.u32())
        params = init_nested(NestedArch(stages=stages, widths=widths,
                                        input_hw=input_hw), seed=0)
    elif kind == KIND_PATCH:
        n = r.u32()
        if n != 3:
            raise CorruptModelError(f"{path}: bad patch descriptor length {n}")
        c1, c2, hidden = r.u32(), r.u32(), r.u32()
        input_hw = (r.u32(), r.u32())
        rate = r.f64()
        params = init_patch(PatchArch(conv_channels=(c1, c2), hidden=hidden,
                                      dropout_rate=rate, input_hw=input_hw), seed=0)
    else:
        raise CorruptModelError(f"{path}: unknown model kind {kind}")
    for _, tensor in params.named_tensors():
        tensor[...] = r.tensor(tensor.shape)
    if r.pos != len(r.raw):
        raise CorruptModelError(f"{path}: {len(r.raw) - r.pos} trailing bytes")
    return params
