import numpy as np
import pytest

from depthcomplete.dataset import build_procedural
from depthcomplete.errors import DimensionError, ResolutionError
from depthcomplete.metrics import evaluate, iou, per_sample_scores, summarize, voxel_accuracy
from depthcomplete.model import HIGH_RES, LOW_RES, CompletionModel


def test_accuracy_examples():
    gt = np.random.default_rng(0).random((30, 30, 30)) < 0.2
    assert voxel_accuracy(gt.astype(float), gt) == 1.0
    assert voxel_accuracy((~gt).astype(float), gt) == 0.0
    sparse = np.zeros(27000, bool)
    sparse[:1890] = True
    assert voxel_accuracy(np.zeros(27000), sparse) == pytest.approx(0.93, abs=1e-15)
    with pytest.raises(DimensionError):
        voxel_accuracy(np.zeros(3), np.zeros(4, bool))


def test_accuracy_complement():
    rng = np.random.default_rng(1)
    p = rng.random(500)
    p[p == 0.5] = 0.25
    gt = rng.random(500) < 0.3
    assert voxel_accuracy(p, gt) + voxel_accuracy(1 - p, gt) == pytest.approx(1.0)


def test_iou_examples():
    gt = np.zeros(100, bool)
    gt[:20] = True
    assert iou(gt.astype(float), gt) == 1.0
    other = np.zeros(100)
    other[50:60] = 1
    assert iou(other, gt) == 0.0
    half = np.zeros(100)
    half[:10] = 1
    assert iou(half, gt) == 0.5
    assert iou(np.zeros(10), np.zeros(10, bool)) == 1.0
    with pytest.raises(DimensionError):
        iou(np.zeros(3), np.zeros(4, bool))


def test_per_sample_scores_match_scalar():
    rng = np.random.default_rng(2)
    p = rng.random((5, 10, 10, 10))
    g = rng.random((5, 10, 10, 10)) < 0.3
    acc, ious = per_sample_scores(p, g)
    for n in range(5):
        assert acc[n] == pytest.approx(voxel_accuracy(p[n], g[n]))
        assert ious[n] == pytest.approx(iou(p[n], g[n]))


def test_summarize_per_angle():
    rep = summarize([0.9, 0.8, 1.0], [0.5, 0.5, 0.5], [0, 0, 1], [3, 3, 3])
    assert rep.per_angle == {0: pytest.approx(0.85), 1: 1.0}
    assert rep.overall_accuracy == pytest.approx(0.9)
    weighted = sum(rep.per_angle[v] * rep.per_angle_count[v] for v in rep.per_angle)
    assert weighted / rep.sample_count == pytest.approx(rep.overall_accuracy)
    with pytest.raises(ValueError):
        summarize([], [], [], [])


def test_report_text():
    rep = summarize([0.9, 0.8], [0.1, 0.3], [0, 1], [0, 1])
    lines = rep.to_text().splitlines()
    assert "overall_iou 0.200000" in lines
    assert all(len(line.split()) == 2 for line in lines)


@pytest.fixture(scope="module")
def store10():
    return build_procedural(["box", "cylinder"], 2, n_views=2, resolution=10, depth_size=16,
                            seed=2)


def test_evaluate_order_independent(store10):
    model = CompletionModel.initialize(LOW_RES, seed=3, depth_size=16)
    a = evaluate(model, store10)
    rev = store10.with_records(store10.records[::-1])
    b = evaluate(model, rev)
    assert a.overall_accuracy == pytest.approx(b.overall_accuracy, abs=1e-15)
    assert a.per_angle == pytest.approx(b.per_angle)
    assert a.per_class == pytest.approx(b.per_class)
    acc, _ = per_sample_scores(model.predict(store10.depths()), store10.targets())
    assert a.overall_accuracy == pytest.approx(acc.mean())


def test_evaluate_errors(store10):
    model = CompletionModel.initialize(LOW_RES, seed=3, depth_size=16)
    with pytest.raises(ValueError):
        evaluate(model, store10.with_records([]))
    with pytest.raises(ResolutionError):
        evaluate(CompletionModel.initialize(HIGH_RES, depth_size=16), store10)
