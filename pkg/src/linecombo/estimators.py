"""scikit-learn style front ends for the detection and retrieval pipeline.

The estimators hold configuration only; nothing is learned from data except
cluster centroids and the retrieval index.  They follow the usual contract
(``get_params``/``set_params``, ``fit`` returns ``self``, fitted attributes
end with an underscore) so they drop into grid searches and pipelines.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .applications import RetrievalEntry, kmeans_cluster, retrieve, RETRIEVAL_THRESHOLD
from .candidates import DEFAULT_K, DEFAULT_NMS_THRESHOLD, MAX_K, Selection, nms_select
from .geometry import Line
from .maps import DEFAULT_GRID, DEFAULT_POOL, line_collection_map, positional_embedding
from .scoring import HeuristicScorer, OracleScorer, ScoreReport, SearchConstraint, search_best_combination
from .validation import check_candidates, check_grid, check_image, check_lines, image_frame


class LineCombinationDetector(BaseEstimator):
    """Pick the best-scoring combination of reliable lines for each image.

    Parameters
    ----------
    k : int
        Number of reliable lines kept by NMS.
    nms_threshold : float
        Normalized polar distance below which NMS suppresses a candidate.
    scorer : {"heuristic", "oracle"}
        ``"oracle"`` needs ground-truth lines passed to ``predict``.
    mode : {"all", "exactly_n", "singletons", "pairs"}
    n_lines : int or None
        Combination size for ``mode="exactly_n"``.
    grid : tuple
        Raster grid ``(grid_h, grid_w)`` for the heuristic scorer.
    w_edge, w_region, w_lines : float
        Heuristic scorer weights.
    """

    def __init__(self, k=DEFAULT_K, nms_threshold=DEFAULT_NMS_THRESHOLD, scorer="heuristic", mode="all",
                 n_lines=None, grid=DEFAULT_GRID, w_edge=1.0, w_region=1.0, w_lines=0.25):
        self.k = k
        self.nms_threshold = nms_threshold
        self.scorer = scorer
        self.mode = mode
        self.n_lines = n_lines
        self.grid = grid
        self.w_edge = w_edge
        self.w_region = w_region
        self.w_lines = w_lines

    def _validate_params(self):
        if not 1 <= int(self.k) <= MAX_K:
            raise ValueError(f"k must be in [1, {MAX_K}], got {self.k}")
        if self.nms_threshold <= 0:
            raise ValueError("nms_threshold must be positive")
        if self.scorer not in ("heuristic", "oracle"):
            raise ValueError(f"unknown scorer {self.scorer!r}")
        SearchConstraint(self.mode, self.n_lines)
        check_grid(self.grid)

    def fit(self, X=None, y=None):
        self._validate_params()
        self.constraint_ = SearchConstraint(self.mode, self.n_lines)
        self.grid_ = check_grid(self.grid)
        return self

    def _make_scorer(self, image, frame, gt):
        if self.scorer == "oracle":
            if gt is None:
                raise ValueError("the oracle scorer needs ground-truth lines")
            return OracleScorer(check_lines(gt), frame)
        return HeuristicScorer(image, frame, grid=self.grid_, w_edge=self.w_edge,
                               w_region=self.w_region, w_lines=self.w_lines)

    def score_combinations(self, image, candidates, gt=None):
        """NMS plus exhaustive scoring for one image; ``(selection, report)``."""
        check_is_fitted(self, "constraint_")
        image = check_image(image)
        frame = image_frame(image)
        selection: Selection = nms_select(check_candidates(candidates, frame), int(self.k), self.nms_threshold)
        scorer = self._make_scorer(image, frame, gt)
        report: ScoreReport = search_best_combination(selection.lines, scorer, self.constraint_)
        return selection, report

    def predict(self, X, gt=None) -> List[List[Line]]:
        """Best line combination for each ``(image, candidates)`` pair in ``X``."""
        out = []
        gts = gt if gt is not None else [None] * len(X)
        for (image, cands), g in zip(X, gts):
            selection, report = self.score_combinations(image, cands, g)
            out.append(report.best.combination.select(selection.lines))
        return out


class PositionalEmbedder(TransformerMixin, BaseEstimator):
    """Turn line collection maps ``(n, K, H, W)`` into pooled embeddings ``(n, D)``."""

    def __init__(self, pool=DEFAULT_POOL):
        self.pool = pool

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim != 4:
            raise ValueError(f"expected line collection maps of shape (n, K, H, W), got {X.shape}")
        self.map_shape_ = X.shape[1:]
        positional_embedding(X[0], self.pool)  # validates pool against the grid
        return self

    def transform(self, X):
        check_is_fitted(self, "map_shape_")
        X = np.asarray(X)
        if X.shape[1:] != self.map_shape_:
            raise ValueError(f"maps of shape {X.shape[1:]} differ from fitted {self.map_shape_}")
        return np.stack([positional_embedding(m, self.pool) for m in X])

    @staticmethod
    def maps_for(reliable, combo, grid=DEFAULT_GRID, frame=None):
        h, w = check_grid(grid)
        return line_collection_map(check_lines(reliable), combo, h, w, frame)


class CompositionKMeans(ClusterMixin, BaseEstimator):
    """Seeded k-means over composition embeddings."""

    def __init__(self, n_clusters=8, random_state=0, max_iter=100):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X)
        res = kmeans_cluster(X, self.n_clusters, seed=self.random_state, max_iter=self.max_iter)
        self.labels_ = res.assignments
        self.cluster_centers_ = res.centroids
        self.objective_history_ = res.objective_history
        self.inertia_ = res.objective
        self.n_iter_ = res.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X)
        d = ((X[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)


class CompositionRetriever(BaseEstimator):
    """Composition-based nearest-neighbour lookup with a score filter."""

    def __init__(self, score_threshold=RETRIEVAL_THRESHOLD, top_k=4):
        self.score_threshold = score_threshold
        self.top_k = top_k

    def fit(self, X, scores, identifiers: Optional[Sequence[str]] = None):
        X = check_array(X)
        scores = np.asarray(scores, dtype=float).reshape(-1)
        if identifiers is None:
            identifiers = [str(i) for i in range(len(X))]
        if not len(X) == len(scores) == len(identifiers):
            raise ValueError("embeddings, scores and identifiers must have equal length")
        self.index_ = [RetrievalEntry(i, v, s) for i, v, s in zip(identifiers, X, scores)]
        return self

    def query(self, embedding, score=1.0):
        check_is_fitted(self, "index_")
        q = RetrievalEntry("<query>", embedding, score)
        return retrieve(q, self.index_, self.score_threshold, self.top_k)
