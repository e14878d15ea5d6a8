"""
Triangle meshes, surface voxelization and orthographic depth rendering.

Coordinates: z is up. The voxel domain is the cube [-0.5, 0.5]^3 and voxel
(i, j, k) covers x, y, z cells [-0.5 + i/R, -0.5 + (i+1)/R), with the last
cell on each axis closed.

A camera at azimuth ``a`` and elevation ``e`` looks at the origin; at a = 0,
e = 0 it sits on the -y side looking along +y. Rendering a mesh at azimuth
``a`` gives the same image as rendering the mesh turned by ``+a`` about z at
azimuth 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateGeometryError, DomainError, FormatError,
                     MeshIndexError, TruncationError)

NORMALIZED_EXTENT = 0.9
DEFAULT_ELEVATION = 20.0
DEFAULT_DEPTH_SIZE = 64
BACKGROUND = 1.0

_DOMAIN_TOL = 1e-9


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) == 0:
            raise DegenerateGeometryError("mesh has no triangles")
        if not np.all(np.isfinite(self.vertices)):
            raise DegenerateGeometryError("mesh has non-finite vertex coordinates")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshIndexError(
                f"triangle index out of range for {len(self.vertices)} vertices")

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    @staticmethod
    def concatenate(meshes) -> "TriangleMesh":
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        return TriangleMesh(np.concatenate(verts), np.concatenate(tris))

    def transformed(self, matrix=None, offset=None) -> "TriangleMesh":
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if offset is not None:
            v = v + np.asarray(offset, dtype=np.float64)
        return TriangleMesh(v, self.triangles.copy())


def rotation_z(degrees: float) -> np.ndarray:
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# OFF


def _off_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_off(data) -> TriangleMesh:
    """Parse OFF text. Polygons with more than three corners are fan-triangulated
    from their first corner.

    Accepts ``bytes``, ``str`` or a readable stream. The header may also be in
    the run-together ``OFF8 6 0`` form found in some ModelNet files.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii", errors="replace")
    lines = _off_lines(data)

    try:
        lineno, first = next(lines)
    except StopIteration:
        raise FormatError("empty OFF stream", 0) from None
    if not first.startswith("OFF"):
        raise FormatError(f"missing OFF magic, got {first[:8]!r}", lineno)
    rest = first[3:].strip()
    try:
        if rest:
            counts = rest.split()
        else:
            lineno, counts_line = next(lines)
            counts = counts_line.split()
        n_verts, n_faces = int(counts[0]), int(counts[1])
    except StopIteration:
        raise TruncationError("missing OFF counts line", lineno) from None
    except (ValueError, IndexError):
        raise FormatError("unparsable OFF counts line", lineno) from None
    if n_verts < 0 or n_faces < 0:
        raise FormatError("negative element count", lineno)

    verts = np.empty((n_verts, 3))
    for i in range(n_verts):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise TruncationError(
                f"header declares {n_verts} vertices, stream holds {i}", lineno) from None
        parts = line.split()
        try:
            verts[i] = [float(p) for p in parts[:3]]
        except ValueError:
            raise FormatError("unparsable vertex line", lineno) from None
        if len(parts) < 3:
            raise FormatError("vertex line with fewer than 3 coordinates", lineno)

    tris = []
    for i in range(n_faces):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise TruncationError(
                f"header declares {n_faces} faces, stream holds {i}", lineno) from None
        try:
            parts = [int(p) for p in line.split()]
        except ValueError:
            raise FormatError("unparsable face line", lineno) from None
        k = parts[0]
        idx = parts[1:1 + k]
        if k < 3 or len(idx) < k:
            raise FormatError(f"face line declares {k} corners, holds {len(idx)}", lineno)
        for j in idx:
            if not 0 <= j < n_verts:
                raise MeshIndexError(f"vertex index {j} out of range [0, {n_verts})", lineno)
        for j in range(1, k - 1):
            tris.append((idx[0], idx[j], idx[j + 1]))

    if not tris:
        raise DegenerateGeometryError("OFF stream contains no faces")
    return TriangleMesh(verts, np.array(tris))


def save_off(mesh: TriangleMesh) -> str:
    out = io.StringIO()
    out.write("OFF\n")
    out.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
    for v in mesh.vertices:
        out.write(" ".join(repr(float(c)) for c in v) + "\n")
    for t in mesh.triangles:
        out.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# normalization and voxelization


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale its longest side to 0.9."""
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if not extent > 0.0:
        raise DegenerateGeometryError("mesh bounding box has zero extent")
    center = (lo + hi) / 2.0
    v = (mesh.vertices - center) * (NORMALIZED_EXTENT / extent)
    return TriangleMesh(v, mesh.triangles.copy())


def _check_domain(mesh):
    lo, hi = mesh.bounds()
    if lo.min() < -0.5 - _DOMAIN_TOL or hi.max() > 0.5 + _DOMAIN_TOL:
        raise DomainError(f"mesh bounds [{lo.min():.4g}, {hi.max():.4g}] exceed [-0.5, 0.5]")


def _tri_box_overlap(tri, cell, R):
    """Separating-axis triangle/box test for many (triangle, cell) pairs at once.

    ``tri`` is (P, 3, 3) corner coordinates, ``cell`` (P, 3) integer cell
    indices. On the three box axes the cell is half-open [low, high), closed
    for the last cell, compared exactly. Every other axis tests the closed box
    grown by a rounding tolerance, since box centers are not exactly
    representable and a face-touching triangle would otherwise flicker.
    """
    low = -0.5 + cell / R
    high = -0.5 + (cell + 1) / R
    tmin = tri.min(axis=1)
    tmax = tri.max(axis=1)
    below_top = np.where(cell == R - 1, tmin <= high, tmin < high)
    hit = np.all(below_top & (tmax >= low), axis=1)

    h = 0.5 / R * (1.0 + 1e-9) + 1e-12
    center = -0.5 + (cell + 0.5) / R
    v0, v1, v2 = tri[:, 0] - center, tri[:, 1] - center, tri[:, 2] - center

    e0, e1, e2 = v1 - v0, v2 - v1, v0 - v2
    normal = np.cross(e0, e1)
    d = np.einsum("ij,ij->i", normal, v0)
    hit &= np.abs(d) <= h * np.abs(normal).sum(axis=1)

    # axis = unit_a x edge; projections of the three corners onto it
    for edge in (e0, e1, e2):
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            # unit_a x edge has components (0 at a, -edge_c at b, edge_b at c)
            ab, ac = -edge[:, c], edge[:, b]
            p0 = ab * v0[:, b] + ac * v0[:, c]
            p1 = ab * v1[:, b] + ac * v1[:, c]
            p2 = ab * v2[:, b] + ac * v2[:, c]
            r = h * (np.abs(ab) + np.abs(ac))
            pmin = np.minimum(np.minimum(p0, p1), p2)
            pmax = np.maximum(np.maximum(p0, p1), p2)
            hit &= (pmin <= r) & (pmax >= -r)
    return hit


def voxelize(mesh: TriangleMesh, resolution: int = 30, chunk: int = 1 << 18) -> np.ndarray:
    """Surface voxelization: a cell is occupied iff some triangle overlaps it.

    Returns an (R, R, R) bool array indexed by (x, y, z) cell.
    """
    R = int(resolution)
    if R < 2:
        raise ValueError("resolution must be >= 2")
    _check_domain(mesh)
    grid = np.zeros((R, R, R), dtype=bool)
    corners = mesh.corners
    lo = np.clip(np.floor((corners.min(axis=1) + 0.5) * R).astype(np.int64) - 1, 0, R - 1)
    hi = np.clip(np.floor((corners.max(axis=1) + 0.5) * R).astype(np.int64) + 1, 0, R - 1)
    span = hi - lo + 1
    counts = span.prod(axis=1)

    start = 0
    n_tri = len(corners)
    while start < n_tri:
        # group triangles so each batch stays near ``chunk`` candidate pairs
        csum = np.cumsum(counts[start:])
        stop = start + max(1, int(np.searchsorted(csum, chunk, side="right")))
        tri_ids = np.repeat(np.arange(start, stop), counts[start:stop])
        local = np.arange(len(tri_ids)) - np.repeat(
            np.concatenate(([0], np.cumsum(counts[start:stop])[:-1])), counts[start:stop])
        sp = span[tri_ids]
        ci = lo[tri_ids, 0] + local // (sp[:, 1] * sp[:, 2])
        cj = lo[tri_ids, 1] + (local // sp[:, 2]) % sp[:, 1]
        ck = lo[tri_ids, 2] + local % sp[:, 2]
        cell = np.stack([ci, cj, ck], axis=1)
        hit = _tri_box_overlap(corners[tri_ids], cell, R)
        grid[ci[hit], cj[hit], ck[hit]] = True
        start = stop
    return grid


# ---------------------------------------------------------------------------
# depth rendering


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float
    elevation: float = DEFAULT_ELEVATION

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit (ray direction, image right, image up) vectors."""
        a, e = np.deg2rad(self.azimuth), np.deg2rad(self.elevation)
        ca, sa, ce, se = np.cos(a), np.sin(a), np.cos(e), np.sin(e)
        direction = np.array([ce * sa, ce * ca, -se])
        right = np.array([ca, -sa, 0.0])
        up = np.array([se * sa, se * ca, ce])
        return direction, right, up


def viewpoint_ring(n: int, elevation: float = DEFAULT_ELEVATION) -> list[Viewpoint]:
    """``n`` viewpoints evenly spaced in azimuth around the vertical axis."""
    if n < 1:
        raise ValueError("viewpoint ring needs n >= 1")
    return [Viewpoint(k * (360.0 / n), elevation) for k in range(n)]


def _pixel_rays(view, size):
    d, r, u = view.frame()
    s = (np.arange(size) + 0.5) / size - 0.5
    # row 0 is the top of the image
    origins = (-s)[:, None, None] * u + s[None, :, None] * r
    return d, origins.reshape(-1, 3)


def _domain_span(origins, d):
    """Per-ray entry/exit parameters of the [-0.5, 0.5]^3 cube (inf where missed)."""
    t_near = np.full(len(origins), -np.inf)
    t_far = np.full(len(origins), np.inf)
    inside = np.ones(len(origins), dtype=bool)
    for a in range(3):
        if abs(d[a]) < 1e-12:
            inside &= np.abs(origins[:, a]) <= 0.5
            continue
        t1 = (-0.5 - origins[:, a]) / d[a]
        t2 = (0.5 - origins[:, a]) / d[a]
        t_near = np.maximum(t_near, np.minimum(t1, t2))
        t_far = np.minimum(t_far, np.maximum(t1, t2))
    inside &= t_far > t_near
    return t_near, t_far, inside


def render_depth(mesh: TriangleMesh, view: Viewpoint, size: int = DEFAULT_DEPTH_SIZE,
                 chunk: int = 1 << 21) -> np.ndarray:
    """Orthographic depth map, (size, size) float32 in [0, 1].

    Rays are parallel to the view direction through a size x size grid on the
    unit square centered at the origin. Depth is the nearest hit's position
    along the ray's traversal of the domain cube; misses read 1.0.
    """
    if size < 8:
        raise ValueError("depth map size must be >= 8")
    d, origins = _pixel_rays(view, size)
    t_near, t_far, inside = _domain_span(origins, d)

    c = mesh.corners
    v0 = c[:, 0]
    e1 = c[:, 1] - v0
    e2 = c[:, 2] - v0
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    keep = np.abs(det) > 1e-14
    v0, e1, e2, pvec, det = v0[keep], e1[keep], e2[keep], pvec[keep], det[keep]
    # With one shared ray direction, u, v and t are affine in the ray origin.
    A = pvec / det[:, None]
    B = np.cross(e1, d) / det[:, None]
    C = np.cross(e1, e2) / det[:, None]
    # Moller-Trumbore with qvec = tvec x e1: d.qvec = tvec.(e1 x d), e2.qvec = tvec.(e1 x e2)
    a0 = np.einsum("ij,ij->i", v0, A)
    b0 = np.einsum("ij,ij->i", v0, B)
    c0 = np.einsum("ij,ij->i", v0, C)

    best = np.full(len(origins), np.inf)
    n_tri = len(v0)
    step = max(1, chunk // max(1, len(origins)))
    for s in range(0, n_tri, step):
        sl = slice(s, s + step)
        u = origins @ A[sl].T - a0[sl]
        v = origins @ B[sl].T - b0[sl]
        t = origins @ C[sl].T - c0[sl]
        ok = (u >= 0) & (v >= 0) & (u + v <= 1)
        t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    depth = np.full(len(origins), BACKGROUND)
    hit = inside & np.isfinite(best)
    depth[hit] = (best[hit] - t_near[hit]) / (t_far[hit] - t_near[hit])
    depth = np.clip(depth, 0.0, 1.0)
    return depth.reshape(size, size).astype(np.float32)
