"""Downstream uses of combination search: vanishing points, symmetry axes, retrieval."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .candidates import Combination
from .exceptions import AllParallel, DimensionMismatch, EmptyIndexAfterFilter, ParallelLines, TooFewPoints
from .geometry import Line, Point, line_intersection
from .scoring import Scorer, SearchConstraint, search_best_combination

RETRIEVAL_THRESHOLD = 0.75


@dataclass(frozen=True)
class VpEstimate:
    point: Point
    pair: Tuple[int, int]
    score: float


def _non_parallel(reliable: Sequence[Line]):
    def admit(combo: Combination) -> bool:
        i, j = combo.indices
        try:
            line_intersection(reliable[i], reliable[j])
        except ParallelLines:
            return False
        return True
    return admit


def detect_vp(reliable: Sequence[Line], scorer: Scorer) -> VpEstimate:
    """Best-scoring non-parallel pair of reliable lines and its intersection."""
    reliable = list(reliable)
    if len(reliable) < 2:
        raise ValueError("vanishing point detection needs at least two lines")
    admit = _non_parallel(reliable)
    if not any(admit(c) for c in SearchConstraint("pairs").combinations(len(reliable))):
        raise AllParallel("every pair of reliable lines is parallel")
    report = search_best_combination(reliable, scorer, SearchConstraint("pairs"), predicate=admit)
    i, j = report.best.combination.indices
    return VpEstimate(line_intersection(reliable[i], reliable[j]), (i, j), report.best.score)


def angle_error(vp_pred: Point, vp_gt: Point, focal: float) -> float:
    """Angle in degrees between the rays ``(x, y, focal)`` through two image points.

    Points are in centered coordinates; ``focal`` is in pixels.
    """
    if focal <= 0:
        raise ValueError("focal must be positive")
    a = np.array([vp_pred[0], vp_pred[1], focal], dtype=float)
    b = np.array([vp_gt[0], vp_gt[1], focal], dtype=float)
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    # atan2 form stays accurate for tiny angles, unlike arccos
    return math.degrees(math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b))))


def angle_accuracy(errors: Sequence[float], threshold_deg: float) -> float:
    """Fraction of errors at or below ``threshold_deg``."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return 0.0
    return float(np.mean(errors <= threshold_deg))


def rank_symmetry_axes(reliable: Sequence[Line], scorer: Scorer) -> List[Tuple[int, Line, float]]:
    """Score each reliable line alone; ``(index, line, score)`` best first."""
    reliable = list(reliable)
    if not reliable:
        raise ValueError("need at least one reliable line")
    report = search_best_combination(reliable, scorer, SearchConstraint("singletons"))
    out = []
    for rec in report.ranked():
        (i,) = rec.combination.indices
        out.append((i, reliable[i], rec.score))
    return out


@dataclass
class RetrievalEntry:
    identifier: str
    embedding: np.ndarray
    composition_score: float

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float).reshape(-1)


def retrieve(query: RetrievalEntry, index: Sequence[RetrievalEntry], score_threshold: float = RETRIEVAL_THRESHOLD,
             top_k: int = 4) -> List[Tuple[str, float]]:
    """Nearest index entries to the query by Euclidean embedding distance.

    Entries whose composition score is below ``score_threshold`` are dropped
    first.  Ties in distance are broken by identifier.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    dim = query.embedding.size
    for e in index:
        if e.embedding.size != dim:
            raise DimensionMismatch(f"entry {e.identifier!r} has dimension {e.embedding.size}, query has {dim}")
    kept = [e for e in index if e.composition_score >= score_threshold]
    if not kept:
        raise EmptyIndexAfterFilter(f"no index entry scores at least {score_threshold}")
    dists = [(float(np.linalg.norm(e.embedding - query.embedding)), e.identifier) for e in kept]
    dists.sort()
    return [(ident, d) for d, ident in dists[:top_k]]


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    objective_history: List[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(x: np.ndarray, k: int, rng) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d = _sq_dists(x, np.array(centers)).min(axis=1)
        total = d.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d / total)
        centers.append(x[idx])
    return np.array(centers, dtype=float)


def kmeans_cluster(embeddings, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """Lloyd's k-means with seeded k-means++ initialization.

    Iterates until assignments stop changing or ``max_iter`` is reached.  An
    empty cluster is re-seeded with the point farthest from its current
    centroid.  ``objective_history`` records the sum of squared distances
    after every assignment step and is non-increasing.
    """
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("embeddings must form a 2D array")
    if k < 1 or k > len(x):
        raise TooFewPoints(f"cannot form {k} clusters from {len(x)} points")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, k, rng)
    assign: Optional[np.ndarray] = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = assign == c
            if members.any():
                centroids[c] = x[members].mean(axis=0)
        for c in range(k):
            if not (assign == c).any():
                own = ((x - centroids[assign]) ** 2).sum(axis=1)
                far = int(np.argmax(own))
                centroids[c] = x[far]
                assign[far] = c
    return KMeansResult(assign, centroids, history, it)
