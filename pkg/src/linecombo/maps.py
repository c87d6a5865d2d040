"""Per-combination masks: line mask, line collection map, feature split, embedding."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .candidates import Combination
from .exceptions import BadPool, ShapeMismatch
from .geometry import Frame, Line, rasterize_line, side_map

DEFAULT_GRID = (60, 60)
DEFAULT_POOL = 15


def _check_combo(reliable: Sequence[Line], combo: Combination):
    if len(combo.mask) != len(reliable):
        raise ShapeMismatch(f"combination has {len(combo.mask)} bits for {len(reliable)} reliable lines")


def binary_mask(reliable: Sequence[Line], combo: Combination, grid_h: int, grid_w: int, frame: Frame) -> np.ndarray:
    """``(grid_h, grid_w)`` uint8 mask, 1 on rasterized pixels of included lines."""
    _check_combo(reliable, combo)
    out = np.zeros(grid_h * grid_w, dtype=np.uint8)
    for j in combo.indices:
        out[rasterize_line(reliable[j], grid_h, grid_w, frame)] = 1
    return out.reshape(grid_h, grid_w)


def line_collection_map(reliable: Sequence[Line], combo: Combination, grid_h: int, grid_w: int, frame: Frame) -> np.ndarray:
    """Ternary side maps, shape ``(K, grid_h, grid_w)``.

    Channel ``k`` is zero when line ``k`` is excluded; otherwise it holds the
    side (+1/-1) of each pixel center, with on-line centers taking +1.
    """
    _check_combo(reliable, combo)
    out = np.zeros((len(reliable), grid_h, grid_w), dtype=np.int8)
    for j in combo.indices:
        out[j] = side_map(reliable[j], grid_h, grid_w, frame, zero_to=1)
    return out


def _spatial_mask(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b)
    if x.ndim == 2 and b.size == x.shape[0]:
        return b.reshape(-1, 1)
    if b.shape == x.shape[:-1]:
        return b[..., None]
    raise ShapeMismatch(f"feature map {x.shape} and mask {b.shape} disagree spatially")


def decompose_features(x: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split features into line part ``x*b`` and region part ``x*(1-b)``.

    ``x`` is channel-last: ``(HW, C)`` or ``(H, W, C)``.
    """
    x = np.asarray(x)
    m = _spatial_mask(x, b).astype(x.dtype)
    return x * m, x * (1 - m)


def compositional_feature(x: np.ndarray, b: np.ndarray, positional: np.ndarray) -> np.ndarray:
    """Channel concatenation ``[x_line, x_region, positional]``."""
    x_l, x_r = decompose_features(x, b)
    positional = np.asarray(positional)
    if positional.shape[:-1] != x.shape[:-1]:
        raise ShapeMismatch(f"positional map {positional.shape} does not match features {x.shape}")
    return np.concatenate([x_l, x_r, positional], axis=-1)


def positional_embedding(lcm: np.ndarray, pool: int = DEFAULT_POOL) -> np.ndarray:
    """Block-average pooling of a line collection map, flattened channel-major.

    A weight-free, linear stand-in for a learned positional encoder: the
    output length is ``K * (grid_h/pool) * (grid_w/pool)``.
    """
    lcm = np.asarray(lcm, dtype=float)
    if lcm.ndim != 3:
        raise ShapeMismatch(f"line collection map must be (K, H, W), got {lcm.shape}")
    k, h, w = lcm.shape
    if pool < 1 or h % pool or w % pool:
        raise BadPool(f"pool {pool} does not divide grid {h}x{w}")
    blocks = lcm.reshape(k, h // pool, pool, w // pool, pool).mean(axis=(2, 4))
    return blocks.reshape(-1)
