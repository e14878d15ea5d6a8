"""
``.voxw`` weight checkpoints, little-endian::

    "VOXW"  u16 version=1  u8 variant  u32 epoch  u64 seed
    u32 depth_size  u32 n_tensors
    per tensor: u16 name length, name (utf-8), u8 rank, u32 extents[rank],
                f32 data, f32 momentum buffer, u8 trainable
    u32 CRC-32 of everything before it

Each parameter group contributes two tensors, ``<group>.weight`` and
``<group>.bias``.
"""

from __future__ import annotations

import io
import os
import struct
import zlib

import numpy as np

from .codec import AutoEncoder
from .errors import CheckpointError, TruncationError, VariantError, VersionError
from .model import AUTOENCODER, VARIANTS, CompletionModel, layer_plan
from .neural import ParamGroup

MAGIC = b"VOXW"
VERSION = 1
_HEAD = struct.Struct("<4sHBIQII")


def _pack_tensor(out, name, data, velocity, trainable):
    raw = name.encode("utf-8")
    out.write(struct.pack("<H", len(raw)))
    out.write(raw)
    out.write(struct.pack("<B", data.ndim))
    out.write(struct.pack(f"<{data.ndim}I", *data.shape))
    out.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    out.write(np.ascontiguousarray(velocity, dtype="<f4").tobytes())
    out.write(struct.pack("<B", int(trainable)))


def to_bytes(obj, epoch: int | None = None, seed: int | None = None) -> bytes:
    """Serialize a CompletionModel or AutoEncoder."""
    if isinstance(obj, AutoEncoder):
        variant, groups, depth_size = AUTOENCODER, obj.groups, 0
        epoch = epoch or 0
        seed = seed or 0
    else:
        variant, groups, depth_size = obj.variant, obj.groups, obj.depth_size
        epoch = obj.epoch if epoch is None else epoch
        seed = obj.seed if seed is None else seed
    out = io.BytesIO()
    out.write(_HEAD.pack(MAGIC, VERSION, VARIANTS.index(variant), epoch, seed,
                         depth_size, 2 * len(groups)))
    for g in groups:
        _pack_tensor(out, f"{g.name}.weight", g.weight, g.weight_velocity, g.trainable)
        _pack_tensor(out, f"{g.name}.bias", g.bias, g.bias_velocity, g.trainable)
    body = out.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, n):
        if self.off + n > len(self.data):
            raise TruncationError("checkpoint ends early", self.off)
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def from_bytes(data: bytes, expect_variant: str | None = None):
    """Inverse of ``to_bytes``; returns a CompletionModel or an AutoEncoder."""
    data = bytes(data)
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < _HEAD.size + 4:
        raise TruncationError("checkpoint ends inside the header", len(data))
    _, version, variant_id, epoch, seed, depth_size, n_tensors = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}", 4)
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch, checkpoint is corrupted", len(data) - 4)
    if variant_id >= len(VARIANTS):
        raise CheckpointError(f"unknown variant id {variant_id}", 6)
    variant = VARIANTS[variant_id]
    if expect_variant is not None and variant != expect_variant:
        raise VariantError(f"checkpoint holds {variant}, expected {expect_variant}")

    r = _Reader(body)
    r.off = _HEAD.size
    tensors = {}
    for _ in range(n_tensors):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I")
        count = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
        velocity = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
        (trainable,) = r.unpack("<B")
        tensors[name] = (value, velocity, bool(trainable))
    if r.off != len(body):
        raise CheckpointError(f"{len(body) - r.off} unexpected bytes after the last tensor", r.off)

    def group(name):
        try:
            w, wv, trainable = tensors[f"{name}.weight"]
            b, bv, _ = tensors[f"{name}.bias"]
        except KeyError:
            raise CheckpointError(f"checkpoint lacks parameter group {name!r}") from None
        return ParamGroup(name, w, b, trainable, wv, bv)

    if variant == AUTOENCODER:
        return AutoEncoder(group("encoder"), group("decoder"))
    groups = {}
    for name, spec in layer_plan(variant, depth_size):
        if name is None:
            continue
        g = group(name)
        if g.weight.shape != spec.weight_shape or g.bias.shape != spec.bias_shape:
            raise CheckpointError(
                f"{name}: stored shape {g.weight.shape} does not match {spec.weight_shape}")
        groups[name] = g
    return CompletionModel(variant, groups, depth_size, epoch=epoch, seed=seed)


def save_checkpoint(obj, path: str | os.PathLike, **kw) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(obj, **kw))


def load_checkpoint(path: str | os.PathLike, expect_variant: str | None = None):
    with open(path, "rb") as f:
        return from_bytes(f.read(), expect_variant)
