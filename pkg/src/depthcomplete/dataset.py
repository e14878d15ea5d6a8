"""
Sample construction and the ``.voxc`` sample container.

Container layout, little-endian::

    "VOXC"  u16 version=1  u16 flags  u32 R  u32 depth_w  u32 depth_h
    u32 n_views  u32 n_classes  u64 n_records  u64 seed
    per record: u16 class_id  u16 view_index  f32[depth_w*depth_h]
                occupancy, R^3 bits MSB-first in (i, j, k) row-major order,
                zero-padded to a whole byte

Class ids index ``shapes.KINDS``.
"""

from __future__ import annotations

import io
import logging
import os
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Sequence

import numpy as np

from . import codec
from .errors import (DegenerateGeometryError, DomainError, FormatError,
                     ResolutionError, TruncationError, VersionError)
from .geometry import (DEFAULT_DEPTH_SIZE, DEFAULT_ELEVATION, TriangleMesh,
                       normalize_mesh, render_depth, viewpoint_ring, voxelize)
from .shapes import KINDS, gen_primitive, kind_id

log = logging.getLogger(__name__)

MAGIC = b"VOXC"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIIQQ")
_RECORD_HEAD = struct.Struct("<HH")


@dataclass
class Sample:
    depth: np.ndarray    # (h, w) float32
    target: np.ndarray   # (R, R, R) bool
    class_id: int
    view_index: int

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.class_id == other.class_id and self.view_index == other.view_index
                and np.array_equal(self.depth, other.depth)
                and np.array_equal(self.target, other.target))


@dataclass
class SampleStore:
    resolution: int
    depth_size: tuple[int, int]   # (width, height)
    n_views: int
    n_classes: int
    seed: int
    records: list[Sample] = field(default_factory=list)
    flags: int = 0
    skipped: int = field(default=0, compare=False)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def class_ids(self) -> list[int]:
        return sorted({r.class_id for r in self.records})

    def depths(self) -> np.ndarray:
        w, h = self.depth_size
        if not self.records:
            return np.zeros((0, h, w), dtype=np.float32)
        return np.stack([r.depth for r in self.records])

    def targets(self) -> np.ndarray:
        R = self.resolution
        if not self.records:
            return np.zeros((0, R, R, R), dtype=bool)
        return np.stack([r.target for r in self.records])

    def with_records(self, records) -> "SampleStore":
        return replace(self, records=list(records), skipped=0)


# ---------------------------------------------------------------------------
# building


def make_sample(mesh: TriangleMesh, class_id: int, view_index: int, n_views: int,
                resolution: int, depth_size: int = DEFAULT_DEPTH_SIZE,
                elevation: float = DEFAULT_ELEVATION, target=None) -> Sample:
    """One record for an already normalized mesh."""
    view = viewpoint_ring(n_views, elevation)[view_index]
    if target is None:
        target = voxelize(mesh, resolution)
    return Sample(render_depth(mesh, view, depth_size), target, class_id, view_index)


def build_dataset(meshes: Sequence[TriangleMesh], class_ids: Sequence[int], n_views: int = 8,
                  resolution: int = 30, depth_size: int = DEFAULT_DEPTH_SIZE, seed: int = 0,
                  elevation: float = DEFAULT_ELEVATION,
                  views_per_mesh: int | None = None) -> SampleStore:
    """Normalize, voxelize once, and render depth maps over ``viewpoint_ring(n_views)``.

    Every mesh gets all ``n_views`` views unless ``views_per_mesh`` is set, in
    which case that many ring positions are drawn per mesh from a generator
    seeded with ``seed``. Records come out ordered by (mesh, view). Meshes
    that cannot be normalized, or whose grid ends up empty or full, are
    skipped and counted in ``store.skipped``.
    """
    if not meshes:
        raise ValueError("build_dataset needs at least one mesh")
    if len(class_ids) != len(meshes):
        raise ValueError("need one class id per mesh")
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if views_per_mesh is not None and not 1 <= views_per_mesh <= n_views:
        raise ValueError(f"views_per_mesh must lie in [1, {n_views}]")
    view_rng = np.random.default_rng(seed)
    R = int(resolution)
    records, skipped = [], 0
    for mesh, cid in zip(meshes, class_ids):
        try:
            m = normalize_mesh(mesh)
            target = voxelize(m, R)
        except (DegenerateGeometryError, DomainError) as exc:
            log.warning("skipping mesh: %s", exc)
            skipped += 1
            continue
        occupied = int(target.sum())
        if occupied == 0 or occupied == target.size:
            log.warning("skipping mesh with %d of %d voxels occupied", occupied, target.size)
            skipped += 1
            continue
        if views_per_mesh is None:
            views = range(n_views)
        else:
            views = np.sort(view_rng.choice(n_views, views_per_mesh, replace=False))
        for v in views:
            records.append(make_sample(m, int(cid), int(v), n_views, R, depth_size, elevation,
                                       target))
    return SampleStore(R, (depth_size, depth_size), n_views, len(KINDS), int(seed), records,
                       skipped=skipped)


def procedural_meshes(kinds: Sequence[str], per_kind: int, seed: int):
    """``per_kind`` meshes of each kind, seeds derived from ``seed``.

    Returns (meshes, class_ids) ordered kind-major.
    """
    meshes, ids = [], []
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(kinds))
    for kind, child in zip(kinds, children):
        cid = kind_id(kind)
        for s in child.generate_state(per_kind, dtype=np.uint32):
            meshes.append(gen_primitive(kind, seed=int(s)))
            ids.append(cid)
    return meshes, ids


def build_procedural(kinds: Sequence[str], per_kind: int, n_views: int = 8, resolution: int = 30,
                     depth_size: int = DEFAULT_DEPTH_SIZE, seed: int = 0,
                     elevation: float = DEFAULT_ELEVATION,
                     views_per_mesh: int | None = None) -> SampleStore:
    meshes, ids = procedural_meshes(kinds, per_kind, seed)
    return build_dataset(meshes, ids, n_views, resolution, depth_size, seed, elevation,
                         views_per_mesh)


def build_subregion_store(store: SampleStore) -> np.ndarray:
    """All 10^3 blocks of every target, 27 per sample in partition order.

    Returns a (27 * len(store), 10, 10, 10) bool array.
    """
    if store.resolution != codec.GRID:
        raise ResolutionError(f"sub-region store needs R = 30, got R = {store.resolution}")
    if not store.records:
        return np.zeros((0, codec.BLOCK, codec.BLOCK, codec.BLOCK), dtype=bool)
    return codec.partition(store.targets()).reshape(-1, codec.BLOCK, codec.BLOCK, codec.BLOCK)


def split_holdout(store: SampleStore, holdout_class: int) -> tuple[SampleStore, SampleStore]:
    """(train, test): test holds exactly ``holdout_class``'s records, both keep order."""
    if holdout_class not in store.class_ids:
        raise ValueError(f"class {holdout_class} does not occur in the store")
    train = [r for r in store.records if r.class_id != holdout_class]
    test = [r for r in store.records if r.class_id == holdout_class]
    return store.with_records(train), store.with_records(test)


# ---------------------------------------------------------------------------
# serialization


def store_to_bytes(store: SampleStore) -> bytes:
    w, h = store.depth_size
    R = store.resolution
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, VERSION, store.flags, R, w, h, store.n_views,
                           store.n_classes, len(store.records), store.seed))
    for r in store.records:
        if r.depth.shape != (h, w) or r.target.shape != (R, R, R):
            raise ValueError("record shapes do not match the store header")
        out.write(_RECORD_HEAD.pack(r.class_id, r.view_index))
        out.write(np.ascontiguousarray(r.depth, dtype="<f4").tobytes())
        out.write(np.packbits(r.target.reshape(-1).astype(bool)).tobytes())
    return out.getvalue()


def store_from_bytes(data: bytes) -> SampleStore:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < _HEADER.size:
        raise TruncationError("stream ends inside the header", len(data))
    (_, version, flags, R, w, h, n_views, n_classes,
     n_records, seed) = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise VersionError(f"unsupported store version {version}", 4)
    n_depth = w * h
    n_bytes = (R ** 3 + 7) // 8
    rec_size = _RECORD_HEAD.size + 4 * n_depth + n_bytes
    expected = _HEADER.size + n_records * rec_size
    if len(data) < expected:
        short = (len(data) - _HEADER.size) // rec_size
        raise TruncationError(f"header declares {n_records} records, stream holds {short}",
                              _HEADER.size + short * rec_size)
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after the last record", expected)
    records = []
    off = _HEADER.size
    for _ in range(n_records):
        cid, view = _RECORD_HEAD.unpack_from(data, off)
        off += _RECORD_HEAD.size
        depth = np.frombuffer(data, dtype="<f4", count=n_depth, offset=off).reshape(h, w)
        off += 4 * n_depth
        bits = np.frombuffer(data, dtype=np.uint8, count=n_bytes, offset=off)
        off += n_bytes
        target = np.unpackbits(bits, count=R ** 3).astype(bool).reshape(R, R, R)
        records.append(Sample(depth.astype(np.float32), target, cid, view))
    return SampleStore(R, (w, h), n_views, n_classes, seed, records, flags=flags)


def write_store(store: SampleStore, dest: str | os.PathLike | BinaryIO) -> None:
    payload = store_to_bytes(store)
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "wb") as f:
            f.write(payload)


def read_store(src: str | os.PathLike | BinaryIO | bytes) -> SampleStore:
    if isinstance(src, (bytes, bytearray)):
        return store_from_bytes(src)
    if hasattr(src, "read"):
        return store_from_bytes(src.read())
    with open(src, "rb") as f:
        return store_from_bytes(f.read())
