import math

import numpy as np
import pytest

from linecombo.applications import (
    RetrievalEntry,
    angle_accuracy,
    angle_error,
    detect_vp,
    kmeans_cluster,
    rank_symmetry_axes,
    retrieve,
)
from linecombo.candidates import Combination
from linecombo.exceptions import AllParallel, DimensionMismatch, EmptyIndexAfterFilter, TooFewPoints
from linecombo.geometry import Frame, Line, segment_to_polar
from linecombo.scoring import HeuristicScorer, OracleScorer, TableScorer


def test_detect_vp_exact_pair(square):
    vp = (12.0, -7.0)
    a = segment_to_polar(vp, (50.0, 40.0))
    b = segment_to_polar(vp, (-50.0, 30.0))
    est = detect_vp([a, b], OracleScorer([a, b], square))
    assert est.point == pytest.approx(vp, abs=1e-9)
    for l in (a, b):
        assert abs(l.signed_distance(*est.point)) <= 1e-6


def test_detect_vp_skips_parallel_pairs():
    rel = [Line(0, 0), Line(0, math.pi / 2), Line(1, math.pi / 2)]
    # the parallel pair (ids 6) scores highest but is not admissible
    est = detect_vp(rel, TableScorer({3: 0.4, 5: 0.6, 6: 0.9}))
    assert est.pair == (0, 2)
    assert est.point == pytest.approx((0.0, 1.0))
    with pytest.raises(AllParallel):
        detect_vp([Line(0, 1.0), Line(5, 1.0), Line(-5, 1.0)], TableScorer({}))


def test_angle_error_examples():
    f = 480.0
    assert angle_error((3, 4), (3, 4), f) == 0.0
    assert angle_error((0, 0), (f, 0), f) == pytest.approx(45.0, abs=1e-9)
    assert angle_accuracy([1.0, 5.0, 11.0], 10.0) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        angle_error((0, 0), (1, 1), 0.0)


def test_angle_error_metric_properties(rng):
    for _ in range(200):
        a, b, c = (tuple(rng.normal(scale=1000, size=2)) for _ in range(3))
        ab, bc, ac = angle_error(a, b, 500), angle_error(b, c, 500), angle_error(a, c, 500)
        assert 0.0 <= ab <= 180.0
        assert ac <= ab + bc + 1e-9


def test_rank_symmetry_axes_single(square):
    out = rank_symmetry_axes([Line(0, 0)], TableScorer({1: 0.3}))
    assert out == [(0, Line(0, 0), 0.3)]


def test_rank_symmetry_axes_mirror_image(frame480):
    # mirror-symmetric layout about x = 0 with the two halves in different tones
    xs = np.arange(480) + 0.5 - 240
    ys = np.arange(480) + 0.5 - 240
    X, Y = np.meshgrid(xs, ys)
    img = 60 + 40 * (np.abs(X) < 120) + 30 * (Y > 60) + 80 * (X >= 0)
    axis = Line(0.0, 0.0)
    rel = [Line(120.0, 0.0), Line(60.0, math.pi / 2), axis, Line(-120.0, 0.0), Line(30.0, 0.7)]
    ranked = rank_symmetry_axes(rel, HeuristicScorer(img.astype(np.uint8), frame480))
    assert ranked[0][0] == 2
    assert [r[2] for r in ranked] == sorted((r[2] for r in ranked), reverse=True)


def _entries(vals, scores):
    return [RetrievalEntry(f"e{i}", [v], s) for i, (v, s) in enumerate(zip(vals, scores))]


def test_retrieve_examples():
    q = RetrievalEntry("q", [0.0], 1.0)
    idx = _entries([2.0, 1.0, 0.0, 0.5], [0.9, 0.9, 0.9, 0.5])
    out = retrieve(q, idx)
    assert [i for i, _ in out] == ["e2", "e1", "e0"]  # e3 (score 0.5) filtered
    assert out[0][1] == 0.0
    assert retrieve(q, idx, top_k=1) == [("e2", 0.0)]


def test_retrieve_ties_and_errors():
    q = RetrievalEntry("q", [0.0, 0.0], 1.0)
    idx = [RetrievalEntry("b", [1, 0], 1.0), RetrievalEntry("a", [0, 1], 1.0)]
    assert [i for i, _ in retrieve(q, idx)] == ["a", "b"]
    with pytest.raises(EmptyIndexAfterFilter):
        retrieve(q, [RetrievalEntry("x", [0, 0], 0.1)])
    with pytest.raises(DimensionMismatch):
        retrieve(q, [RetrievalEntry("x", [0, 0, 0], 1.0)])


def test_retrieve_threshold_monotone(rng):
    q = RetrievalEntry("q", rng.normal(size=3), 1.0)
    idx = [RetrievalEntry(f"e{i}", rng.normal(size=3), float(s)) for i, s in enumerate(rng.uniform(size=30))]
    prev = None
    for t in np.linspace(0.0, 0.95, 20):
        try:
            got = {i for i, _ in retrieve(q, idx, float(t), top_k=30)}
        except EmptyIndexAfterFilter:
            got = set()
        if prev is not None:
            assert got <= prev
        prev = got


def test_kmeans_examples(rng):
    x = rng.normal(size=(40, 3))
    res = kmeans_cluster(x, 1)
    assert np.allclose(res.centroids[0], x.mean(axis=0))
    blobs = np.concatenate([rng.normal(0, 1, (30, 2)), rng.normal(0, 1, (30, 2)) + [20, 0]])
    res = kmeans_cluster(blobs, 2, seed=3)
    assert len(set(res.assignments[:30])) == 1 and len(set(res.assignments[30:])) == 1
    assert res.assignments[0] != res.assignments[30]
    with pytest.raises(TooFewPoints):
        kmeans_cluster(x[:2], 3)


def test_kmeans_monotone_and_deterministic():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(int(rng.integers(10, 60)), 4))
        k = int(rng.integers(1, 6))
        a = kmeans_cluster(x, k, seed=seed)
        assert all(b <= a_ + 1e-9 for a_, b in zip(a.objective_history, a.objective_history[1:]))
        assert np.array_equal(a.assignments, kmeans_cluster(x, k, seed=seed).assignments)


def test_kmeans_duplicate_points_reseed():
    x = np.zeros((5, 2))
    x[4] = [1.0, 1.0]
    res = kmeans_cluster(x, 3, seed=0)
    assert res.centroids.shape == (3, 2)
    assert np.isfinite(res.objective)
