"""Line candidates in Hough space: grid, offsets, NMS, combinations, targets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import EmptyCandidates, KTooLarge
from .geometry import Frame, Line, canonicalize, intersects_frame, polar_distance_matrix

DEFAULT_N_RHO = 32
DEFAULT_N_THETA = 32
DEFAULT_K = 8
DEFAULT_NMS_THRESHOLD = 0.08
MAX_K = 16
LAMBDA_CLS = 1.0
LAMBDA_REG = 5.0
PROB_EPS = 1e-7


@dataclass
class CandidateSet:
    """``N`` candidate lines with detector probabilities and offsets.

    ``offsets`` has shape (N, 2) holding ``(d_rho, d_theta)`` per candidate.
    """

    rho: np.ndarray
    theta: np.ndarray
    probs: np.ndarray
    offsets: np.ndarray
    frame: Frame

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float).reshape(-1)
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        n = self.rho.size
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(n, 2)
        if n < 1:
            raise EmptyCandidates("candidate set is empty")
        if self.theta.size != n or self.probs.size != n:
            raise ValueError("rho, theta and probs must have the same length")
        if np.any(self.probs < 0) or np.any(self.probs > 1) or not np.all(np.isfinite(self.probs)):
            raise ValueError("candidate probabilities must lie in [0, 1]")

    def __len__(self):
        return self.rho.size

    @property
    def lines(self) -> List[Line]:
        return [Line(float(r), float(t)) for r, t in zip(self.rho, self.theta)]

    @classmethod
    def from_lines(cls, lines: Sequence[Line], frame: Frame, probs=None, offsets=None) -> "CandidateSet":
        n = len(lines)
        return cls(
            rho=[l.rho for l in lines],
            theta=[l.theta for l in lines],
            probs=np.zeros(n) if probs is None else probs,
            offsets=np.zeros((n, 2)) if offsets is None else offsets,
            frame=frame,
        )


@dataclass(frozen=True)
class Combination:
    """Subset of the ``K`` reliable lines; bit ``k`` of ``id`` selects line ``k``."""

    id: int
    mask: Tuple[bool, ...]

    @classmethod
    def from_id(cls, combo_id: int, k: int) -> "Combination":
        return cls(combo_id, tuple(bool((combo_id >> j) & 1) for j in range(k)))

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> "Combination":
        mask = tuple(bool(m) for m in mask)
        return cls(sum(1 << j for j, m in enumerate(mask) if m), mask)

    @property
    def indices(self) -> List[int]:
        return [j for j, m in enumerate(self.mask) if m]

    @property
    def size(self) -> int:
        return sum(self.mask)

    @property
    def bits(self) -> str:
        """Binary encoding of ``id``, line 1 rightmost."""
        return format(self.id, f"0{len(self.mask)}b") if self.mask else ""

    def select(self, reliable: Sequence[Line]) -> List[Line]:
        return [reliable[j] for j in self.indices]


@dataclass
class DetectorTargets:
    gt_probs: np.ndarray
    gt_offsets: np.ndarray
    match_index: List[Optional[int]] = field(default_factory=list)


@dataclass
class Selection:
    """Result of NMS: reliable lines, their probabilities and source indices."""

    lines: List[Line]
    probs: np.ndarray
    indices: List[int]


def generate_candidate_grid(n_rho: int = DEFAULT_N_RHO, n_theta: int = DEFAULT_N_THETA, frame: Frame = None) -> CandidateSet:
    """Uniform ``n_rho x n_theta`` grid of cell-midpoint lines (rho-major order)."""
    if n_rho < 1 or n_theta < 1:
        raise ValueError("n_rho and n_theta must be >= 1")
    rho_max = frame.rho_max
    rhos = -rho_max + (np.arange(n_rho) + 0.5) * (2.0 * rho_max / n_rho)
    thetas = (np.arange(n_theta) + 0.5) * (math.pi / n_theta)
    rr, tt = np.meshgrid(rhos, thetas, indexing="ij")
    n = n_rho * n_theta
    return CandidateSet(rr.ravel(), tt.ravel(), np.zeros(n), np.zeros((n, 2)), frame)


def apply_offsets(candidates: CandidateSet) -> List[Line]:
    """Updated lines ``L + O``, canonicalized, with rho clamped to the frame."""
    rho_max = candidates.frame.rho_max
    out = []
    for r, t, (dr, dt) in zip(candidates.rho, candidates.theta, candidates.offsets):
        rho, theta = canonicalize(float(r + dr), float(t + dt))
        out.append(Line(min(max(rho, -rho_max), rho_max), theta))
    return out


def nms_select(
    candidates: CandidateSet,
    k: int = DEFAULT_K,
    suppress_threshold: float = DEFAULT_NMS_THRESHOLD,
) -> Selection:
    """Greedy Hough-space NMS over the offset-updated candidates.

    Repeatedly take the most probable live candidate (ties: lower index) and
    suppress every candidate closer than ``suppress_threshold`` in
    normalized polar distance.  When live candidates run out before ``k``
    picks, the remaining slots are filled with the most probable suppressed
    candidates.  Candidates whose updated line misses the frame are never
    selected.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if suppress_threshold <= 0:
        raise ValueError("suppress_threshold must be positive")
    frame = candidates.frame
    lines = apply_offsets(candidates)
    eligible = np.array([intersects_frame(l, frame) for l in lines])
    if not eligible.any():
        raise EmptyCandidates("no candidate line crosses the frame")
    rho = np.array([l.rho for l in lines])
    theta = np.array([l.theta for l in lines])
    probs = candidates.probs
    # stable order: probability descending, index ascending
    order = np.lexsort((np.arange(len(lines)), -probs))
    order = order[eligible[order]]

    alive = np.zeros(len(lines), dtype=bool)
    alive[order] = True
    picked: List[int] = []
    for _ in range(k):
        live = order[alive[order]]
        if live.size == 0:
            break
        best = int(live[0])
        picked.append(best)
        d = polar_distance_matrix(rho[best:best + 1], theta[best:best + 1], rho, theta, frame)[0]
        alive &= d >= suppress_threshold
        alive[best] = False
    if len(picked) < k:
        taken = set(picked)
        for i in order:
            if len(picked) == k:
                break
            if int(i) not in taken:
                picked.append(int(i))
                taken.add(int(i))
    return Selection([lines[i] for i in picked], probs[picked].copy(), picked)


def enumerate_combinations(k: int) -> List[Combination]:
    """All ``2**k`` combinations in ascending id order, empty one included."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > MAX_K:
        raise KTooLarge(f"k={k} exceeds the limit of {MAX_K}")
    return [Combination.from_id(i, k) for i in range(1 << k)]


def combination_matrix(k: int) -> np.ndarray:
    """Boolean ``K x 2**K`` matrix whose column ``i`` is the mask of combination ``i``."""
    if k > MAX_K:
        raise KTooLarge(f"k={k} exceeds the limit of {MAX_K}")
    ids = np.arange(1 << k)
    return ((ids[None, :] >> np.arange(k)[:, None]) & 1).astype(bool)


def detector_targets(
    candidates: CandidateSet,
    gt_lines: Sequence[Line],
    match_threshold: float,
    frame: Frame = None,
) -> DetectorTargets:
    """Classification and offset targets for the (pre-offset) candidate lines.

    The offset points from the candidate to the representation of its
    nearest GT line that realizes the polar distance, so it may cross the
    ``theta`` wrap.
    """
    if match_threshold <= 0:
        raise ValueError("match_threshold must be positive")
    frame = frame or candidates.frame
    n = len(candidates)
    gt_probs = np.zeros(n)
    gt_offsets = np.zeros((n, 2))
    match: List[Optional[int]] = [None] * n
    if not gt_lines:
        return DetectorTargets(gt_probs, gt_offsets, match)

    grho = np.array([g.rho for g in gt_lines])
    gtheta = np.array([g.theta for g in gt_lines])
    rho_max = frame.rho_max
    half_pi = math.pi / 2.0
    # distances for the three representations of every GT line
    reps = [(1.0, 0.0), (-1.0, math.pi), (-1.0, -math.pi)]
    dists = np.stack([
        np.hypot((candidates.rho[:, None] - s * grho[None, :]) / rho_max,
                 (candidates.theta[:, None] - (gtheta[None, :] + sh)) / half_pi)
        for s, sh in reps
    ])  # (3, N, G)
    flat = dists.transpose(1, 2, 0).reshape(n, -1)
    arg = np.argmin(flat, axis=1)
    best_d = flat[np.arange(n), arg]
    g_idx, r_idx = np.divmod(arg, len(reps))
    for i in np.nonzero(best_d < match_threshold)[0]:
        s, sh = reps[r_idx[i]]
        g = g_idx[i]
        gt_probs[i] = 1.0
        gt_offsets[i] = (s * grho[g] - candidates.rho[i], gtheta[g] + sh - candidates.theta[i])
        match[i] = int(g)
    return DetectorTargets(gt_probs, gt_offsets, match)


def smooth_l1(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def detector_loss(probs, offsets, targets: DetectorTargets, lambda_cls: float = LAMBDA_CLS, lambda_reg: float = LAMBDA_REG) -> float:
    """Weighted sum of mean binary cross-entropy and mean smooth-L1 offset loss.

    The regression term averages over the offset components of matched
    candidates only and is zero when nothing matched.
    """
    p = np.clip(np.asarray(probs, dtype=float).reshape(-1), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(targets.gt_probs, dtype=float).reshape(-1)
    cls = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
    matched = y > 0.5
    if matched.any():
        diff = np.asarray(offsets, dtype=float).reshape(-1, 2)[matched] - np.asarray(targets.gt_offsets).reshape(-1, 2)[matched]
        reg = float(np.mean(smooth_l1(diff)))
    else:
        reg = 0.0
    return lambda_cls * cls + lambda_reg * reg
