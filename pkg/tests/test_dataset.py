import io
import struct
from collections import Counter

import numpy as np
import pytest

from depthcomplete.codec import assemble
from depthcomplete.dataset import (Sample, SampleStore, build_dataset, build_procedural,
                                   build_subregion_store, read_store, split_holdout,
                                   store_from_bytes, store_to_bytes, write_store)
from depthcomplete.errors import FormatError, ResolutionError, TruncationError, VersionError
from depthcomplete.geometry import (TriangleMesh, Viewpoint, normalize_mesh, render_depth,
                                    viewpoint_ring)
from depthcomplete.shapes import KINDS, gen_primitive, kind_id


@pytest.fixture(scope="module")
def small_store():
    return build_procedural(["box", "icosphere", "cylinder"], 2, n_views=2, resolution=10,
                            depth_size=16, seed=5)


def _key(r):
    return (r.class_id, r.view_index, r.depth.tobytes(), r.target.tobytes())


# -- generators --------------------------------------------------------------


def test_gen_primitive_counts():
    assert len(gen_primitive("box").triangles) == 12
    assert len(gen_primitive("icosphere", {"subdivision": 2}).triangles) == 320
    assert len(gen_primitive("cylinder", {"segments": 12}).triangles) == 48


def test_gen_primitive_deterministic():
    for kind in KINDS:
        a, b = gen_primitive(kind, seed=9), gen_primitive(kind, seed=9)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)


def test_gen_primitive_bad_params():
    with pytest.raises(ValueError):
        gen_primitive("icosphere", {"subdivision": 5})
    with pytest.raises(ValueError):
        gen_primitive("box", {"extents": (1, 0, 1)})
    with pytest.raises(ValueError):
        gen_primitive("teapot")
    with pytest.raises(ValueError):
        kind_id("teapot")


def test_composite_has_multiple_parts():
    mesh = gen_primitive("composite", seed=2)
    assert len(mesh.triangles) > 12


# -- build_dataset ----------------------------------------------------------


def test_build_counts_and_order():
    meshes = [gen_primitive("box", seed=s) for s in range(5)]
    store = build_dataset(meshes, [0] * 5, n_views=8, resolution=10, depth_size=8)
    assert len(store) == 40
    assert [r.view_index for r in store.records[:9]] == [0, 1, 2, 3, 4, 5, 6, 7, 0]


def test_build_single_record():
    store = build_dataset([gen_primitive("icosphere")], [1], n_views=1, resolution=10,
                          depth_size=8)
    assert len(store) == 1
    assert store.records[0].target.shape == (10, 10, 10)


def test_build_determinism(small_store):
    again = build_procedural(["box", "icosphere", "cylinder"], 2, n_views=2, resolution=10,
                             depth_size=16, seed=5)
    assert store_to_bytes(again) == store_to_bytes(small_store)


def test_build_rejects_and_skips():
    with pytest.raises(ValueError):
        build_dataset([], [], n_views=1)
    flat = TriangleMesh(np.ones((3, 3)), [[0, 1, 2]])
    store = build_dataset([flat, gen_primitive("box")], [0, 0], n_views=1, resolution=10,
                          depth_size=8)
    assert len(store) == 1 and store.skipped == 1


def test_targets_strictly_partial(small_store):
    for r in small_store:
        assert 0 < r.target.sum() < r.target.size


def test_rerender_reproduces_depth():
    mesh = gen_primitive("composite", seed=3)
    store = build_dataset([mesh], [kind_id("composite")], n_views=4, resolution=10,
                          depth_size=16)
    ring = viewpoint_ring(4)
    for r in store:
        again = render_depth(normalize_mesh(mesh), ring[r.view_index], 16)
        assert again.tobytes() == r.depth.tobytes()


# -- sub-regions --------------------------------------------------------------


def test_subregion_store():
    store = build_procedural(["box"], 2, n_views=1, resolution=30, depth_size=8, seed=0)
    blocks = build_subregion_store(store)
    assert blocks.shape == (27 * len(store), 10, 10, 10)
    np.testing.assert_array_equal(assemble(blocks[:27]), store.records[0].target)


def test_subregion_store_empty_target_and_resolution(small_store):
    empty = Sample(np.ones((8, 8), np.float32), np.zeros((30, 30, 30), bool), 0, 0)
    store = SampleStore(30, (8, 8), 1, len(KINDS), 0, [empty])
    blocks = build_subregion_store(store)
    assert blocks.shape == (27, 10, 10, 10) and not blocks.any()
    with pytest.raises(ResolutionError):
        build_subregion_store(small_store)


# -- holdout -----------------------------------------------------------------


def _labelled_store(counts):
    recs = []
    for cid, n in counts.items():
        for v in range(n):
            t = np.zeros((10, 10, 10), bool)
            t[cid, v, 0] = True
            recs.append(Sample(np.full((4, 4), cid, np.float32), t, cid, v))
    return SampleStore(10, (4, 4), 4, len(KINDS), 0, recs)


def test_split_holdout_counts_and_conservation():
    store = _labelled_store({0: 4, 1: 4, 2: 4})
    train, test = split_holdout(store, 1)
    assert len(train) == 8 and len(test) == 4
    assert {r.class_id for r in test} == {1}
    assert Counter(map(_key, train.records + test.records)) == Counter(map(_key, store.records))
    # order within each side is preserved
    assert [r.class_id for r in train] == [0] * 4 + [2] * 4


def test_split_holdout_absent():
    with pytest.raises(ValueError):
        split_holdout(_labelled_store({0: 2}), 5)


# -- container ---------------------------------------------------------------


def test_round_trip(small_store, tmp_path):
    three = small_store.with_records(small_store.records[:3])
    data = store_to_bytes(three)
    back = store_from_bytes(data)
    assert back == three
    assert store_to_bytes(back) == data
    path = tmp_path / "s.voxc"
    write_store(three, path)
    assert read_store(path) == three
    buf = io.BytesIO()
    write_store(three, buf)
    assert read_store(io.BytesIO(buf.getvalue())) == three


def test_header_layout(small_store):
    data = store_to_bytes(small_store)
    magic, version, flags, R, w, h, nv, nc, nr, seed = struct.unpack_from("<4sHHIIIIIQQ", data)
    assert (magic, version, flags, R, w, h, nv, nc, nr, seed) == (
        b"VOXC", 1, 0, 10, 16, 16, 2, len(KINDS), len(small_store), 5)
    rec = 4 + 4 * 16 * 16 + (1000 + 7) // 8
    assert len(data) == 44 + nr * rec


def test_bit_order_msb_first():
    t = np.zeros((10, 10, 10), bool)
    t[0, 0, 0] = True
    store = SampleStore(10, (1, 1), 1, len(KINDS), 0, [Sample(np.zeros((1, 1), np.float32), t, 0, 0)])
    data = store_to_bytes(store)
    assert data[44 + 4 + 4] == 0x80


def test_bad_magic(small_store):
    data = bytearray(store_to_bytes(small_store))
    data[0:4] = b"XXXX"
    with pytest.raises(FormatError):
        store_from_bytes(bytes(data))


def test_unsupported_version(small_store):
    data = bytearray(store_to_bytes(small_store))
    data[4:6] = struct.pack("<H", 255)
    with pytest.raises(VersionError):
        store_from_bytes(bytes(data))


def test_truncation_reports_offset(small_store):
    data = store_to_bytes(small_store)
    with pytest.raises(TruncationError) as info:
        store_from_bytes(data[:-10])
    assert info.value.offset is not None
    with pytest.raises(TruncationError):
        store_from_bytes(data[:20])


def test_trailing_bytes(small_store):
    with pytest.raises(FormatError):
        store_from_bytes(store_to_bytes(small_store) + b"\0")
