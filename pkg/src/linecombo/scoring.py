"""Combination scorers and the exhaustive best-combination search.

A scorer is any callable ``scorer(reliable, combo) -> float`` returning a
composition score in ``[0, 1]``.  It must be pure: the same arguments always
give the same score.  Scorers may cache work per reliable set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arrangement import build_overlay, hiou_from_labels
from .candidates import Combination, enumerate_combinations
from .exceptions import BadImage, NoCombination
from .geometry import Frame, Line, intersects_frame, rasterize_line, side_map
from .maps import DEFAULT_GRID

Scorer = Callable[[Sequence[Line], Combination], float]

MODES = ("all", "exactly_n", "singletons", "pairs")


@dataclass(frozen=True)
class SearchConstraint:
    mode: str = "all"
    n: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown search mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "exactly_n" and (self.n is None or self.n < 0):
            raise ValueError("exactly_n mode needs a non-negative n")

    def combinations(self, k: int) -> List[Combination]:
        if self.mode == "all":
            return enumerate_combinations(k)
        size = {"singletons": 1, "pairs": 2}.get(self.mode, self.n)
        if size > k:
            return []
        return [Combination.from_mask([j in c for j in range(k)]) for c in combinations(range(k), size)]


@dataclass(frozen=True)
class ScoreRecord:
    id: int
    mask: Tuple[bool, ...]
    score: float

    @property
    def combination(self) -> Combination:
        return Combination(self.id, self.mask)


@dataclass
class ScoreReport:
    records: List[ScoreRecord]
    best_id: int
    ranking: List[int]

    @property
    def best(self) -> ScoreRecord:
        return self.by_id[self.best_id]

    @property
    def by_id(self) -> Dict[int, ScoreRecord]:
        return {r.id: r for r in self.records}

    def ranked(self) -> List[ScoreRecord]:
        lookup = self.by_id
        return [lookup[i] for i in self.ranking]


def search_best_combination(
    reliable: Sequence[Line],
    scorer: Scorer,
    constraint: SearchConstraint = SearchConstraint(),
    predicate: Optional[Callable[[Combination], bool]] = None,
) -> ScoreReport:
    """Score every admitted combination and rank them.

    Ranking is by score descending with ties broken by lower id, so
    ``best_id`` is the lowest-id maximizer.  ``predicate`` can veto
    individual combinations (e.g. parallel pairs).

    Raises
    ------
    NoCombination
        When the constraint and predicate admit nothing.
    """
    reliable = list(reliable)
    combos = constraint.combinations(len(reliable))
    if predicate is not None:
        combos = [c for c in combos if predicate(c)]
    if not combos:
        raise NoCombination(f"mode {constraint.mode!r} admits no combination of {len(reliable)} lines")
    records = []
    for combo in combos:
        s = float(scorer(reliable, combo))
        if not math.isfinite(s) or s < 0.0 or s > 1.0:
            raise ValueError(f"scorer returned {s} for combination {combo.id}; expected a value in [0, 1]")
        records.append(ScoreRecord(combo.id, combo.mask, s))
    records.sort(key=lambda r: r.id)
    ranking = [r.id for r in sorted(records, key=lambda r: (-r.score, r.id))]
    return ScoreReport(records, ranking[0], ranking)


def _key(reliable: Sequence[Line]) -> tuple:
    return tuple((l.rho, l.theta) for l in reliable)


class OracleScorer:
    """HIoU between a combination's lines and known ground-truth lines.

    The overlay of the reliable set and the ground truth is built once per
    reliable set; each combination is then a relabeling of overlay cells.
    """

    def __init__(self, gt_lines: Sequence[Line], frame: Frame):
        self.gt_lines = list(gt_lines)
        self.frame = frame
        self._cache: Dict[tuple, tuple] = {}

    def _prepare(self, reliable):
        key = _key(reliable)
        if key not in self._cache:
            overlay, (ref_r, ref_g) = build_overlay([list(reliable), self.gt_lines], self.frame)
            self._cache[key] = (overlay, ref_r, overlay.labels(ref_g))
        return self._cache[key]

    def __call__(self, reliable: Sequence[Line], combo: Combination) -> float:
        overlay, ref_r, labels_gt = self._prepare(reliable)
        labels = overlay.labels([ref_r[j] for j in combo.indices])
        return hiou_from_labels(overlay.areas, labels, labels_gt)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Float grayscale in [0, 255]; RGB input is converted by luma weights."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 3:
        img = img.astype(float) @ np.array([0.299, 0.587, 0.114])
    if img.ndim != 2 or min(img.shape) < 2:
        raise BadImage(f"expected a 2D grayscale image, got shape {np.asarray(image).shape}")
    img = img.astype(float)
    if not np.all(np.isfinite(img)):
        raise BadImage("image contains non-finite values")
    return img


def block_average(img: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """Mean of the image pixels whose centers fall in each grid cell."""
    h, w = img.shape
    if h < grid_h or w < grid_w:
        raise BadImage(f"image {w}x{h} is smaller than the {grid_w}x{grid_h} grid")
    rows = (np.arange(h) * grid_h) // h
    cols = (np.arange(w) * grid_w) // w
    cell = (rows[:, None] * grid_w + cols[None, :]).ravel()
    n = grid_h * grid_w
    sums = np.bincount(cell, weights=img.ravel(), minlength=n)
    counts = np.bincount(cell, minlength=n)
    return (sums / counts).reshape(grid_h, grid_w)


def logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class HeuristicScorer:
    """Weight-free image-evidence scorer standing in for a trained regressor.

    ``score = logistic(w_edge*E + w_region*R - w_lines*n)`` where ``n`` is
    the number of included lines and, in the default ``"sum"`` form,

    * ``E`` sums, over included lines, the mean normal-direction intensity
      gradient along the line's raster (central differences on the
      grid-averaged image), scaled so a clean step of height ``g`` gives
      ``g / contrast``;
    * ``R`` sums, over included lines, the area-weighted mean absolute
      difference of mean intensity between cells of the combination's own
      partition that face each other across that line, divided by the same
      ``contrast``.

    ``contrast`` is the 1st-99th percentile spread of the grid image, floored
    at ``min_contrast`` (intensities in [0, 1]).  The ``"mean"`` form averages
    E over all line pixels and R over lines instead of summing; it is kept
    for comparison and is biased towards one-line combinations.
    """

    def __init__(self, image, frame: Frame, grid=DEFAULT_GRID, w_edge=1.0, w_region=1.0, w_lines=0.25,
                 form="sum", min_contrast=0.1):
        img = to_gray(image)
        h, w = img.shape
        if abs(w * frame.height - h * frame.width) > 0.01 * frame.width * frame.height:
            raise BadImage(f"image {w}x{h} does not match the aspect of frame {frame}")
        if form not in ("sum", "mean"):
            raise ValueError("form must be 'sum' or 'mean'")
        self.frame = frame
        self.grid_h, self.grid_w = grid
        self.w_edge, self.w_region, self.w_lines = w_edge, w_region, w_lines
        self.form = form
        g = block_average(img / 255.0, self.grid_h, self.grid_w)
        # region means only enter as differences; centering on one pixel makes
        # flat areas cancel exactly instead of leaving rounding residue
        self._flat = g.ravel() - g.flat[0]
        self._gv, self._gu = np.gradient(g)
        lo, hi = np.percentile(g, [1, 99])
        self.contrast = max(hi - lo, min_contrast)
        self._lines: Dict[tuple, tuple] = {}

    def _line_data(self, line: Line):
        key = (line.rho, line.theta)
        if key not in self._lines:
            if intersects_frame(line, self.frame):
                pix = rasterize_line(line, self.grid_h, self.grid_w, self.frame)
            else:
                pix = np.zeros(0, dtype=np.int64)
            c, s = line.normal
            nu, nv = c * self.frame.width / self.grid_w, s * self.frame.height / self.grid_h
            norm = math.hypot(nu, nv)
            dn = np.abs(self._gu.ravel()[pix] * nu + self._gv.ravel()[pix] * nv) / norm
            side = side_map(line, self.grid_h, self.grid_w, self.frame).ravel() > 0
            self._lines[key] = (pix, dn, side)
        return self._lines[key]

    def evidence(self, reliable: Sequence[Line], combo: Combination) -> Tuple[float, float, int]:
        """``(E, R, n)`` for a combination."""
        idx = combo.indices
        n = len(idx)
        if n == 0:
            return 0.0, 0.0, 0
        data = [self._line_data(reliable[j]) for j in idx]
        codes = np.zeros(self._flat.size, dtype=np.int64)
        for q, (_, _, side) in enumerate(data):
            codes |= side.astype(np.int64) << q
        uniq, inv = np.unique(codes, return_inverse=True)
        counts = np.bincount(inv).astype(float)
        means = np.bincount(inv, weights=self._flat) / counts

        region_terms = []
        for q in range(n):
            bit = 1 << q
            upper = (uniq & bit) > 0
            partner = uniq[upper] ^ bit
            pos = np.searchsorted(uniq, partner)
            pos = np.minimum(pos, len(uniq) - 1)
            found = uniq[pos] == partner
            a = np.nonzero(upper)[0][found]
            b = pos[found]
            if a.size:
                wts = counts[a] + counts[b]
                region_terms.append(float(np.sum(wts * np.abs(means[a] - means[b])) / np.sum(wts)))
            else:
                region_terms.append(0.0)
        edge_terms = [2.0 * float(dn.mean()) if dn.size else 0.0 for _, dn, _ in data]

        if self.form == "sum":
            e = sum(edge_terms)
            r = sum(region_terms)
        else:
            allpix = np.concatenate([d[1] for d in data])
            e = 2.0 * float(allpix.mean()) if allpix.size else 0.0
            r = float(np.mean(region_terms))
        return e / self.contrast, r / self.contrast, n

    def __call__(self, reliable: Sequence[Line], combo: Combination) -> float:
        e, r, n = self.evidence(reliable, combo)
        return logistic(self.w_edge * e + self.w_region * r - self.w_lines * n)


class TableScorer:
    """Scores looked up by combination id; handy for tests and replays."""

    def __init__(self, scores: Dict[int, float]):
        self.scores = dict(scores)

    def __call__(self, reliable, combo: Combination) -> float:
        return self.scores[combo.id]
