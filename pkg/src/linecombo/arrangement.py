"""Partitioning the image rectangle by a set of lines, and the HIoU metric.

Cells are computed exactly by successive half-plane clipping of the frame
rectangle.  HIoU between two line sets is evaluated on the common refinement
(the overlay of both sets): every region of either partition is a union of
overlay cells, so all intersection areas fall out of one weighted
histogram over overlay cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import DuplicateLines
from .geometry import Frame, Line, Point, polar_distance, side_map

MIN_CELL_AREA = 1e-9
MAX_HIOU_LINES = 32
_SAME_LINE_TOL = 1e-9


@dataclass(frozen=True)
class ConvexCell:
    vertices: Tuple[Point, ...]
    sign_vector: Tuple[int, ...]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)


@dataclass
class RegionPartition:
    cells: List[ConvexCell]
    frame: Frame
    lines: List[Line] = field(default_factory=list)

    def __len__(self):
        return len(self.cells)

    @property
    def areas(self) -> np.ndarray:
        return np.array([c.area for c in self.cells])


def polygon_area(vertices: Sequence[Point]) -> float:
    """Shoelace area, positive for counterclockwise vertex order."""
    n = len(vertices)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def clip_halfplane(poly: Sequence[Point], nx: float, ny: float, offset: float) -> List[Point]:
    """Keep the part of a convex polygon where ``nx*x + ny*y - offset >= 0``."""
    if not poly:
        return []
    out = []
    prev = poly[-1]
    dp = nx * prev[0] + ny * prev[1] - offset
    for cur in poly:
        dc = nx * cur[0] + ny * cur[1] - offset
        if dc >= 0.0:
            if dp < 0.0:
                t = dp / (dp - dc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append(cur)
        elif dp >= 0.0:
            if dp > 0.0:
                t = dp / (dp - dc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
        prev, dp = cur, dc
    return out


def _split(poly, line: Line):
    c, s = line.normal
    pos = clip_halfplane(poly, c, s, line.rho)
    neg = clip_halfplane(poly, -c, -s, -line.rho)
    return pos, neg


def _check_distinct(lines: Sequence[Line], frame: Frame):
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            if polar_distance(lines[i], lines[j], frame) < _SAME_LINE_TOL:
                raise DuplicateLines(f"lines {i} and {j} coincide: {lines[i]} ~ {lines[j]}")


def _refine(lines: Sequence[Line], frame: Frame):
    """Split the frame by every line in turn; yields (vertices, signs, area)."""
    cells = [(frame.corners(), ())]
    for line in lines:
        nxt = []
        for poly, signs in cells:
            pos, neg = _split(poly, line)
            for piece, sgn in ((pos, 1), (neg, -1)):
                if len(piece) >= 3 and polygon_area(piece) > MIN_CELL_AREA:
                    nxt.append((piece, signs + (sgn,)))
        cells = nxt
    return cells


def partition_rectangle(lines: Sequence[Line], frame: Frame) -> RegionPartition:
    """Exact convex-cell partition of the frame by ``lines``.

    Raises
    ------
    DuplicateLines
        If two lines coincide (normalized polar distance below 1e-9).
    """
    lines = list(lines)
    _check_distinct(lines, frame)
    cells = [ConvexCell(tuple(poly), signs) for poly, signs in _refine(lines, frame)]
    return RegionPartition(cells, frame, lines)


def convex_intersection(a: Sequence[Point], b: Sequence[Point]) -> List[Point]:
    """Intersection of two counterclockwise convex polygons."""
    out = list(a)
    n = len(b)
    for i in range(n):
        if len(out) < 3:
            return []
        px, py = b[i]
        qx, qy = b[(i + 1) % n]
        # left of the directed edge p->q is inside for CCW polygons
        nx, ny = -(qy - py), qx - px
        out = clip_halfplane(out, nx, ny, nx * px + ny * py)
    return out


def region_iou(a: ConvexCell, b: ConvexCell) -> float:
    inter = convex_intersection(a.vertices, b.vertices)
    ia = max(polygon_area(inter), 0.0) if len(inter) >= 3 else 0.0
    union = a.area + b.area - ia
    if union <= 0.0:
        return 0.0
    return min(max(ia / union, 0.0), 1.0)


# --- overlay machinery -------------------------------------------------------


@dataclass
class Overlay:
    """Common refinement of several line sets.

    ``signs[c, u]`` is the side (+-1) of overlay cell ``c`` w.r.t. unique
    line ``u``; ``areas[c]`` its area.
    """

    lines: List[Line]
    signs: np.ndarray
    areas: np.ndarray

    def labels(self, refs: Sequence[Tuple[int, int]]) -> np.ndarray:
        """Compact region labels of each overlay cell for a sub-arrangement.

        ``refs`` lists ``(unique_index, orientation)`` pairs, one per line of
        the sub-arrangement.
        """
        if not refs:
            return np.zeros(len(self.areas), dtype=np.int64)
        idx = np.array([r[0] for r in refs])
        orient = np.array([r[1] for r in refs])
        bits = (self.signs[:, idx] * orient) > 0
        codes = bits @ (1 << np.arange(len(refs), dtype=np.int64))
        _, inv = np.unique(codes, return_inverse=True)
        return inv.reshape(-1)


def build_overlay(line_sets: Sequence[Sequence[Line]], frame: Frame):
    """Overlay several line sets; returns ``(overlay, refs_per_set)``.

    Lines equal up to 1e-9 normalized polar distance (in either
    representation) are merged.  The unique lines are processed in sorted
    order so the result does not depend on the order of the inputs.
    """
    pool = sorted({(l.theta, l.rho) for s in line_sets for l in s})
    uniq: List[Line] = []
    for theta, rho in pool:
        cand = Line(rho, theta)
        if not any(_match(u, cand, frame) for u in uniq):
            uniq.append(cand)
    refs = []
    for s in line_sets:
        r = []
        for l in s:
            for ui, u in enumerate(uniq):
                m = _match(u, l, frame)
                if m:
                    r.append((ui, m))
                    break
        refs.append(r)
    cells = _refine(uniq, frame)
    signs = np.array([sg for _, sg in cells], dtype=np.int8).reshape(len(cells), len(uniq))
    areas = np.array([polygon_area(p) for p, _ in cells])
    return Overlay(uniq, signs, areas), refs


def _match(u: Line, l: Line, frame: Frame) -> int:
    """+1 / -1 when ``l`` equals ``u`` directly / with flipped orientation, else 0."""
    scale = frame.rho_max
    if abs(u.rho - l.rho) / scale < _SAME_LINE_TOL and abs(u.theta - l.theta) < _SAME_LINE_TOL:
        return 1
    if polar_distance(u, l, frame) < _SAME_LINE_TOL:
        return -1 if abs(u.theta - l.theta) > 1.0 else 1
    return 0


def hiou_from_labels(weights: np.ndarray, labels_s: np.ndarray, labels_t: np.ndarray) -> float:
    """HIoU from two compact labelings of common atoms with given weights.

    Atoms are overlay cells (weights = areas) or pixels (weights = 1).
    """
    ns = int(labels_s.max()) + 1
    nt = int(labels_t.max()) + 1
    inter = np.bincount(labels_s * nt + labels_t, weights=weights, minlength=ns * nt).reshape(ns, nt)
    # bincount keeps accumulation order identical under swapping S and T
    area_s = np.bincount(labels_s, weights=weights, minlength=ns)
    area_t = np.bincount(labels_t, weights=weights, minlength=nt)
    union = area_s[:, None] + area_t[None, :] - inter
    iou = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    total = iou.max(axis=1).sum() + iou.max(axis=0).sum()
    return float(total / (ns + nt))


def _check_hiou_input(lines: Sequence[Line], frame: Frame, what: str):
    if len(lines) > MAX_HIOU_LINES:
        raise ValueError(f"{what}: at most {MAX_HIOU_LINES} lines per HIoU call, got {len(lines)}")
    _check_distinct(lines, frame)


def hiou(detected: Sequence[Line], ground_truth: Sequence[Line], frame: Frame) -> float:
    """Harmony IoU between the partitions induced by two line sets.

    Each region of either partition is matched to its best-overlapping
    region of the other; HIoU is the mean of those IoUs over all regions.
    An empty line set induces a single region, the whole frame.
    """
    detected, ground_truth = list(detected), list(ground_truth)
    _check_hiou_input(detected, frame, "detected")
    _check_hiou_input(ground_truth, frame, "ground_truth")
    overlay, (rs, rt) = build_overlay([detected, ground_truth], frame)
    return hiou_from_labels(overlay.areas, overlay.labels(rs), overlay.labels(rt))


def hiou_pairwise(detected: Sequence[Line], ground_truth: Sequence[Line], frame: Frame) -> float:
    """HIoU by explicit cell-by-cell convex clipping; slower reference route."""
    ps = partition_rectangle(detected, frame).cells
    pt = partition_rectangle(ground_truth, frame).cells
    iou = np.array([[region_iou(s, t) for t in pt] for s in ps])
    return float((iou.max(axis=1).sum() + iou.max(axis=0).sum()) / (len(ps) + len(pt)))


def pixel_label_map(lines: Sequence[Line], grid_h: int, grid_w: int, frame: Frame) -> np.ndarray:
    """Label every grid-cell center by its sign vector; compact int labels.

    Centers exactly on a line count as the positive side.
    """
    lines = list(lines)
    _check_distinct(lines, frame)
    codes = np.zeros((grid_h, grid_w), dtype=np.int64)
    for k, line in enumerate(lines):
        codes |= (side_map(line, grid_h, grid_w, frame) > 0).astype(np.int64) << k
    _, inv = np.unique(codes, return_inverse=True)
    return inv.reshape(grid_h, grid_w)


def pixel_hiou(detected, ground_truth, grid_h: int, grid_w: int, frame: Frame) -> float:
    """HIoU measured by counting grid cells instead of exact areas."""
    ls = pixel_label_map(detected, grid_h, grid_w, frame).ravel()
    lt = pixel_label_map(ground_truth, grid_h, grid_w, frame).ravel()
    return hiou_from_labels(np.ones(ls.size), ls, lt)
