"""Input coercion helpers shared by the estimators and the CLI."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .candidates import CandidateSet
from .exceptions import BadImage
from .geometry import Frame, Line


def check_frame(frame) -> Frame:
    """Accept a :class:`Frame`, a ``(width, height)`` pair or a ``"WxH"`` string."""
    if isinstance(frame, Frame):
        return frame
    if isinstance(frame, str):
        return Frame.parse(frame)
    try:
        w, h = frame
    except (TypeError, ValueError):
        raise ValueError(f"cannot interpret {frame!r} as a frame") from None
    return Frame(int(w), int(h))


def check_grid(grid) -> tuple:
    """``(grid_h, grid_w)`` from a pair or an ``"HxW"`` string."""
    if isinstance(grid, str):
        try:
            h, w = (int(v) for v in grid.lower().split("x"))
        except ValueError:
            raise ValueError(f"bad grid spec {grid!r}, expected HxW") from None
    else:
        h, w = (int(v) for v in grid)
    if h < 1 or w < 1:
        raise ValueError("grid dimensions must be positive")
    return h, w


def check_lines(lines) -> List[Line]:
    """Lines from a sequence of :class:`Line` or an ``(n, 2)`` array of (rho, theta)."""
    if isinstance(lines, np.ndarray):
        arr = np.asarray(lines, dtype=float).reshape(-1, 2)
        return [Line.make(r, t) for r, t in arr]
    out = []
    for l in lines:
        out.append(l if isinstance(l, Line) else Line.make(*l))
    return out


def check_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim not in (2, 3) or img.size == 0:
        raise BadImage(f"expected a 2D grayscale or HxWx3 image, got shape {img.shape}")
    if not np.issubdtype(img.dtype, np.number):
        raise BadImage("image must be numeric")
    return img


def check_candidates(cands, frame: Frame) -> CandidateSet:
    """A :class:`CandidateSet`, or an ``(n, 5)`` array of ``rho, theta, prob, d_rho, d_theta``."""
    if isinstance(cands, CandidateSet):
        return cands
    a = np.asarray(cands, dtype=float)
    if a.ndim != 2 or a.shape[1] != 5:
        raise ValueError(f"candidate array must be (n, 5), got {a.shape}")
    return CandidateSet(a[:, 0], a[:, 1], a[:, 2], a[:, 3:5], frame)


def image_frame(image: np.ndarray) -> Frame:
    h, w = np.asarray(image).shape[:2]
    return Frame(w, h)


def as_lines_list(groups: Sequence) -> List[List[Line]]:
    return [check_lines(g) for g in groups]
