"""Region-query cross-attention grouping and the associated losses.

Matrices follow a row-per-item convention: a feature map is ``(HW, C)``
with pixel ``i = row * grid_w + col``; the attention matrix is ``(M, HW)``
and is normalized over the query axis, so each column is the membership
distribution of one pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import BadChannelCount, DegenerateSplit, NonFiniteInput, ShapeMismatch
from .geometry import Frame, Line, side_map

DEFAULT_STEPS = 3
DEFAULT_TAU = 1.0
DEFAULT_QUERIES = 8
SRS_EPS = 1e-8
RANK_MARGIN = 0.1


def sinusoidal_pe(grid_h: int, grid_w: int, c: int) -> np.ndarray:
    """2D sinusoidal positional encoding, shape ``(grid_h*grid_w, c)``.

    The first ``c/2`` channels encode the column, the last ``c/2`` the row,
    each as interleaved ``sin, cos`` pairs at geometric frequencies with
    base 10000.
    """
    if c <= 0 or c % 4:
        raise BadChannelCount(f"channel count must be a positive multiple of 4, got {c}")
    half = c // 2
    freqs = 1.0 / 10000.0 ** (np.arange(0, half, 2) / half)

    def encode(pos):
        ang = pos[:, None] * freqs[None, :]
        out = np.empty((pos.size, half))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    ex = encode(np.arange(grid_w, dtype=float))
    ey = encode(np.arange(grid_h, dtype=float))
    pe = np.concatenate([
        np.tile(ex, (grid_h, 1)),
        np.repeat(ey, grid_w, axis=0),
    ], axis=1)
    return pe


def column_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over axis 0 (the query axis)."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class GroupingResult:
    queries: np.ndarray  # updated region queries (M, C)
    attention: np.ndarray  # last attention matrix (M, HW)
    semantic: np.ndarray  # semantic feature map (HW, C)
    membership: np.ndarray  # argmax region per pixel (HW,)
    history: List[np.ndarray] = field(default_factory=list)


def grouping_forward(
    queries: np.ndarray,
    u_q: np.ndarray,
    u_k: np.ndarray,
    u_v: np.ndarray,
    features: np.ndarray,
    pos: np.ndarray,
    steps: int = DEFAULT_STEPS,
    tau: float = DEFAULT_TAU,
) -> GroupingResult:
    """Run ``steps`` cross-attention updates of the region queries.

    Each step computes ``A = softmax_M(R U_q ((F+S) U_k)^T / tau)`` and
    ``R <- A (F+S) U_v + R``.  The semantic map is ``A^T R`` of the last
    step; membership is the per-pixel argmax of ``A`` (ties to the lowest
    query index).
    """
    arrays = [np.asarray(a, dtype=float) for a in (queries, u_q, u_k, u_v, features, pos)]
    r, u_q, u_k, u_v, f, s = arrays
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("grouping inputs must be finite")
    if r.ndim != 2 or f.ndim != 2:
        raise ShapeMismatch("queries and features must be 2D")
    c = r.shape[1]
    if f.shape[1] != c or s.shape != f.shape:
        raise ShapeMismatch(f"features {f.shape} / encoding {s.shape} do not match {c} channels")
    for u in (u_q, u_k, u_v):
        if u.shape != (c, c):
            raise ShapeMismatch(f"projection must be {c}x{c}, got {u.shape}")
    if steps < 1 or tau <= 0:
        raise ValueError("steps must be >= 1 and tau > 0")

    fs = f + s
    f_k = fs @ u_k
    f_v = fs @ u_v
    history = []
    for _ in range(steps):
        a = column_softmax((r @ u_q) @ f_k.T / tau)
        r = a @ f_v + r
        history.append(a)
    semantic = a.T @ r
    membership = np.argmax(a, axis=0)
    return GroupingResult(r, a, semantic, membership, history)


def _kld(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def _split_masks(line: Line, grid_h: int, grid_w: int, frame: Frame):
    sides = side_map(line, grid_h, grid_w, frame, zero_to=1).ravel()
    pos, neg = sides > 0, sides < 0
    if not pos.any() or not neg.any():
        raise DegenerateSplit(f"{line} leaves one side of the {grid_h}x{grid_w} grid empty")
    return pos, neg


def srs_loss(
    attention: np.ndarray,
    gt_lines: Sequence[Line],
    grid_h: int,
    grid_w: int,
    frame: Frame,
    eps: float = SRS_EPS,
) -> Tuple[float, np.ndarray]:
    """Negative symmetric KL divergence between the two sides of each GT line.

    For every line the attention columns are averaged over the pixels on
    either side, smoothed with ``eps`` and renormalized; the loss is minus
    the sum of both KL directions over all lines.  Returns the loss and its
    gradient with respect to ``attention``.
    """
    a = np.asarray(attention, dtype=float)
    m, hw = a.shape
    if hw != grid_h * grid_w:
        raise ShapeMismatch(f"attention has {hw} columns for a {grid_h}x{grid_w} grid")
    if not gt_lines:
        raise DegenerateSplit("at least one ground-truth line is required")
    loss = 0.0
    grad = np.zeros_like(a)
    for line in gt_lines:
        x_mask, y_mask = _split_masks(line, grid_h, grid_w, frame)
        nx, ny = x_mask.sum(), y_mask.sum()
        px = a[:, x_mask].mean(axis=1)
        py = a[:, y_mask].mean(axis=1)
        zx = np.sum(px + eps)
        zy = np.sum(py + eps)
        qx = (px + eps) / zx
        qy = (py + eps) / zy
        loss -= _kld(qx, qy) + _kld(qy, qx)
        # d/dq of D(qx||qy) + D(qy||qx)
        log_ratio = np.log(qx / qy)
        gqx = -(log_ratio + 1.0 - qy / qx)
        gqy = -(-log_ratio + 1.0 - qx / qy)
        # through the renormalization q = (p + eps) / sum(p + eps)
        gpx = (gqx - np.dot(gqx, qx)) / zx
        gpy = (gqy - np.dot(gqy, qy)) / zy
        grad[:, x_mask] += gpx[:, None] / nx
        grad[:, y_mask] += gpy[:, None] / ny
    return loss, grad


def regression_loss(s: float, s_bar: float) -> float:
    return (s - s_bar) ** 2


def ranking_loss(batch: Sequence[Tuple[float, float]], margin: float = RANK_MARGIN) -> float:
    """Mean pairwise hinge over pairs ordered by their target scores."""
    terms = []
    for si, ti in batch:
        for sj, tj in batch:
            if ti > tj:
                terms.append(max(0.0, margin - (si - sj)))
    return float(np.mean(terms)) if terms else 0.0


def score_losses(s: float, s_bar: float, batch: Sequence[Tuple[float, float]] = (), margin: float = RANK_MARGIN) -> Tuple[float, float]:
    """``(L_reg, L_rank)`` for one prediction and a batch of (pred, target) pairs."""
    return regression_loss(s, s_bar), ranking_loss(batch, margin)
