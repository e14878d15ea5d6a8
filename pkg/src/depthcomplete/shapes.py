"""Procedural meshes standing in for ModelNet classes."""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh

BASIC_KINDS = ("box", "icosphere", "cylinder", "composite")
# multi-part families used as the broader fine-tuning set
FAMILY_KINDS = ("table", "dumbbell", "tower", "arch", "lamp", "cross", "mushroom")
KINDS = BASIC_KINDS + FAMILY_KINDS

MAX_SUBDIVISION = 4


def kind_id(kind: str) -> int:
    try:
        return KINDS.index(kind)
    except ValueError:
        raise ValueError(f"unknown shape kind {kind!r}; choose from {', '.join(KINDS)}") from None


# -- building blocks ---------------------------------------------------------

_BOX_TRIS = np.array([
    [0, 2, 1], [0, 3, 2],   # z-
    [4, 5, 6], [4, 6, 7],   # z+
    [0, 1, 5], [0, 5, 4],   # y-
    [2, 3, 7], [2, 7, 6],   # y+
    [1, 2, 6], [1, 6, 5],   # x+
    [0, 4, 7], [0, 7, 3],   # x-
])


def box_mesh(extents, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    ex, ey, ez = (np.asarray(extents, dtype=np.float64) / 2.0)
    corners = np.array([[-ex, -ey, -ez], [ex, -ey, -ez], [ex, ey, -ez], [-ex, ey, -ez],
                        [-ex, -ey, ez], [ex, -ey, ez], [ex, ey, ez], [-ex, ey, ez]])
    return TriangleMesh(corners + np.asarray(center, dtype=np.float64), _BOX_TRIS.copy())


def icosphere_mesh(subdivision=2, radii=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron, 20 * 4**subdivision faces, scaled per axis."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivision):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * np.asarray(radii, dtype=np.float64) + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces))


def cylinder_mesh(radius=0.5, height=1.0, segments=16, center=(0.0, 0.0, 0.0),
                  axis=2) -> TriangleMesh:
    """Capped cylinder along ``axis``: 4 * segments triangles."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = height / 2.0
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    verts = np.vstack([bottom, top, [[0, 0, -h], [0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i),
                 (cb, j, i), (ct, segments + i, segments + j)]
    # move the cylinder axis from z onto the requested one
    verts = np.roll(verts, shift=(axis - 2) % 3, axis=1)
    return TriangleMesh(verts + np.asarray(center, dtype=np.float64), np.array(tris))


def _yaw(mesh, degrees):
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    return mesh.transformed([[c, -s, 0], [s, c, 0], [0, 0, 1]])


# -- kinds -------------------------------------------------------------------
#
# Every kind is built in a canonical orientation, the way ModelNet models are
# aligned per class; that keeps the world-frame target recoverable from one
# view. An explicit ``yaw`` (degrees about z) rotates the result.


def _yaw_param(params):
    return float(params.get("yaw", 0.0))


def _positive(name, values):
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if not np.all(arr > 0):
        raise ValueError(f"{name} must be positive, got {values}")
    return arr


def _box(params, rng):
    extents = _positive("extents", params.get("extents", rng.uniform(0.3, 1.0, 3)))
    if extents.shape != (3,):
        raise ValueError("box extents need three values")
    return _yaw(box_mesh(extents), _yaw_param(params))


def _icosphere(params, rng):
    level = int(params.get("subdivision", 2))
    if not 0 <= level <= MAX_SUBDIVISION:
        raise ValueError(f"subdivision must lie in [0, {MAX_SUBDIVISION}], got {level}")
    radii = _positive("radii", params.get("radii", rng.uniform(0.5, 1.0, 3)))
    return _yaw(icosphere_mesh(level, radii), _yaw_param(params))


def _cylinder(params, rng):
    radius = float(_positive("radius", params.get("radius", rng.uniform(0.15, 0.5)))[0])
    height = float(_positive("height", params.get("height", rng.uniform(0.3, 1.0)))[0])
    segments = int(params.get("segments", 16))
    if segments < 3:
        raise ValueError("cylinder needs at least 3 segments")
    return _yaw(cylinder_mesh(radius, height, segments), _yaw_param(params))


def _composite(params, rng):
    n = int(params.get("parts", rng.integers(2, 5)))
    if not 2 <= n <= 4:
        raise ValueError("composite needs 2 to 4 parts")
    parts = []
    for _ in range(n):
        kind = rng.choice(["box", "icosphere", "cylinder"])
        offset = rng.uniform(-0.35, 0.35, 3)
        scale = rng.uniform(0.3, 0.6)
        if kind == "box":
            part = _box({}, rng)
        elif kind == "icosphere":
            part = _icosphere({"subdivision": 1}, rng)
        else:
            part = _cylinder({"segments": 12}, rng)
        parts.append(part.transformed(np.eye(3) * scale, offset))
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _table(params, rng):
    w, d = rng.uniform(0.7, 1.0), rng.uniform(0.4, 0.8)
    h = rng.uniform(0.4, 0.8)
    top_t = rng.uniform(0.05, 0.1)
    leg = rng.uniform(0.05, 0.1)
    parts = [box_mesh((w, d, top_t), (0, 0, h - top_t / 2))]
    for sx in (-1, 1):
        for sy in (-1, 1):
            parts.append(box_mesh((leg, leg, h - top_t),
                                  (sx * (w - leg) / 2, sy * (d - leg) / 2, (h - top_t) / 2)))
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _dumbbell(params, rng):
    r = rng.uniform(0.15, 0.25)
    length = rng.uniform(0.6, 1.0)
    bar = cylinder_mesh(rng.uniform(0.03, 0.08), length, 12, axis=0)
    ends = [icosphere_mesh(1, (r, r, r), (s * length / 2, 0, 0)) for s in (-1, 1)]
    return _yaw(TriangleMesh.concatenate([bar] + ends), _yaw_param(params))


def _tower(params, rng):
    n = int(rng.integers(2, 5))
    z, parts, width = 0.0, [], rng.uniform(0.6, 1.0)
    for _ in range(n):
        h = rng.uniform(0.15, 0.35)
        if rng.random() < 0.5:
            parts.append(box_mesh((width, width, h), (0, 0, z + h / 2)))
        else:
            parts.append(cylinder_mesh(width / 2, h, 12, (0, 0, z + h / 2)))
        z += h
        width *= rng.uniform(0.55, 0.85)
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _arch(params, rng):
    span = rng.uniform(0.5, 1.0)
    h = rng.uniform(0.4, 0.9)
    t = rng.uniform(0.1, 0.2)
    depth = rng.uniform(0.1, 0.4)
    parts = [box_mesh((t, depth, h), (s * (span - t) / 2, 0, h / 2)) for s in (-1, 1)]
    parts.append(box_mesh((span, depth, t), (0, 0, h + t / 2)))
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _lamp(params, rng):
    base_r = rng.uniform(0.2, 0.4)
    pole_h = rng.uniform(0.5, 1.0)
    shade_r = rng.uniform(0.15, 0.35)
    parts = [cylinder_mesh(base_r, 0.06, 16, (0, 0, 0.03)),
             cylinder_mesh(0.03, pole_h, 8, (0, 0, pole_h / 2)),
             icosphere_mesh(1, (shade_r, shade_r, shade_r * 0.7), (0, 0, pole_h))]
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _cross(params, rng):
    a = rng.uniform(0.1, 0.25, 3)
    lengths = rng.uniform(0.5, 1.0, 3)
    parts = [box_mesh((lengths[0], a[0], a[0])),
             box_mesh((a[1], lengths[1], a[1])),
             box_mesh((a[2], a[2], lengths[2]))]
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


def _mushroom(params, rng):
    stem_h = rng.uniform(0.3, 0.6)
    cap_r = rng.uniform(0.3, 0.5)
    parts = [cylinder_mesh(rng.uniform(0.05, 0.15), stem_h, 12, (0, 0, stem_h / 2)),
             icosphere_mesh(1, (cap_r, cap_r, cap_r * rng.uniform(0.3, 0.6)), (0, 0, stem_h))]
    return _yaw(TriangleMesh.concatenate(parts), _yaw_param(params))


_BUILDERS = {
    "box": _box, "icosphere": _icosphere, "cylinder": _cylinder, "composite": _composite,
    "table": _table, "dumbbell": _dumbbell, "tower": _tower, "arch": _arch,
    "lamp": _lamp, "cross": _cross, "mushroom": _mushroom,
}


def gen_primitive(kind: str, params: dict | None = None, seed: int = 0) -> TriangleMesh:
    """Deterministic mesh for ``(kind, params, seed)``.

    Parameters left out of ``params`` are drawn from a generator seeded with
    ``seed``. Recognized keys: box ``extents``, ``yaw``; icosphere
    ``subdivision`` (0..4), ``radii``, ``yaw``; cylinder ``radius``,
    ``height``, ``segments``; composite ``parts`` (2..4).
    """
    if kind not in _BUILDERS:
        raise ValueError(f"unknown shape kind {kind!r}; choose from {', '.join(KINDS)}")
    rng = np.random.default_rng(seed)
    return _BUILDERS[kind](dict(params or {}), rng)
