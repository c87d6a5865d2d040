"""Line geometry in a centered image frame.

Coordinates are centered on the image: the origin sits at the image center,
``x`` grows to the right and ``y`` grows downward (pixel-row direction).  A
line is stored in Hough form ``(rho, theta)`` and denotes the point set
``x*cos(theta) + y*sin(theta) = rho``.  The canonical form keeps ``theta`` in
``[0, pi)``; ``(rho, theta)`` and ``(-rho, theta +- pi)`` are the same line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .exceptions import DegenerateSegment, NoIntersection, ParallelLines

Point = Tuple[float, float]

_SIDE_TOL = 1e-12
_PARALLEL_TOL = 1e-12
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Frame:
    """Image rectangle ``[-W/2, W/2] x [-H/2, H/2]`` in centered coordinates."""

    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("frame dimensions must be integers")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"frame must be at least 2x2, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def rho_max(self) -> float:
        return self.diagonal / 2.0

    @property
    def area(self) -> float:
        return float(self.width * self.height)

    def corners(self) -> list:
        """Rectangle corners, counterclockwise in (x, y)."""
        hw, hh = self.width / 2.0, self.height / 2.0
        return [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]

    @classmethod
    def parse(cls, text: str) -> "Frame":
        """Parse ``"WxH"``."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except (ValueError, AttributeError) as exc:
            raise ValueError(f"bad frame spec {text!r}, expected WxH") from exc

    def __str__(self):
        return f"{self.width}x{self.height}"


def canonicalize(rho: float, theta: float) -> Tuple[float, float]:
    """Wrap ``theta`` into ``[0, pi)``, negating ``rho`` for every odd shift."""
    k = math.floor(theta / math.pi)
    theta = theta - k * math.pi
    if k % 2:
        rho = -rho
    if theta >= math.pi:
        theta -= math.pi
        rho = -rho
    if theta < 0.0:
        theta = 0.0
    return rho + 0.0, theta + 0.0


@dataclass(frozen=True)
class Line:
    rho: float
    theta: float

    @classmethod
    def make(cls, rho: float, theta: float) -> "Line":
        """Build a canonical line from any (rho, theta) representation."""
        return cls(*canonicalize(float(rho), float(theta)))

    @property
    def normal(self) -> Point:
        return math.cos(self.theta), math.sin(self.theta)

    def signed_distance(self, x, y):
        """Signed distance of point(s) to the line; works on scalars or arrays."""
        return x * math.cos(self.theta) + y * math.sin(self.theta) - self.rho

    def flipped(self) -> Tuple[float, float]:
        """The equivalent, non-canonical representation ``(-rho, theta - pi)``."""
        return -self.rho, self.theta - math.pi


@dataclass(frozen=True)
class Segment:
    p0: Point
    p1: Point


def _reach(line: Line, frame: Frame) -> float:
    c, s = line.normal
    return (frame.width * abs(c) + frame.height * abs(s)) / 2.0


def intersects_frame(line: Line, frame: Frame) -> bool:
    """True when the line passes through the open frame rectangle."""
    return abs(line.rho) < _reach(line, frame)


def polar_to_segment(line: Line, frame: Frame) -> Segment:
    """Clip a line to the frame boundary.

    Endpoints are ordered lexicographically by ``(x, y)``.

    Raises
    ------
    NoIntersection
        If the line misses the open rectangle.
    """
    if not intersects_frame(line, frame):
        raise NoIntersection(f"{line} misses the {frame} frame")
    c, s = line.normal
    hw, hh = frame.width / 2.0, frame.height / 2.0
    pts = []
    if abs(s) > 1e-15:
        for x in (-hw, hw):
            y = (line.rho - x * c) / s
            if -hh - _BOUNDARY_TOL <= y <= hh + _BOUNDARY_TOL:
                pts.append((x, min(max(y, -hh), hh)))
    if abs(c) > 1e-15:
        for y in (-hh, hh):
            x = (line.rho - y * s) / c
            if -hw - _BOUNDARY_TOL <= x <= hw + _BOUNDARY_TOL:
                pts.append((min(max(x, -hw), hw), y))
    # corner hits appear twice; keep the farthest pair
    best, pair = -1.0, None
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = math.dist(pts[i], pts[j])
            if d > best:
                best, pair = d, (pts[i], pts[j])
    if pair is None or best <= _BOUNDARY_TOL:
        raise NoIntersection(f"{line} touches the {frame} frame only at a point")
    p0, p1 = sorted(pair)
    return Segment((p0[0] + 0.0, p0[1] + 0.0), (p1[0] + 0.0, p1[1] + 0.0))


def segment_to_polar(p0: Point, p1: Point, frame: Frame = None) -> Line:
    """Canonical Hough parameters of the line through two points.

    ``frame`` is accepted for symmetry with :func:`polar_to_segment`; the
    conversion itself does not depend on it.
    """
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise DegenerateSegment(f"segment endpoints coincide at {p0}")
    nx, ny = -dy / norm, dx / norm
    theta = math.atan2(ny, nx)
    rho = nx * p0[0] + ny * p0[1]
    return Line.make(rho, theta)


def side_of_line(line: Line, point: Point) -> int:
    """Sign of the signed distance; 0 when the point lies on the line."""
    d = line.signed_distance(point[0], point[1])
    if abs(d) <= _SIDE_TOL:
        return 0
    return 1 if d > 0 else -1


def line_intersection(a: Line, b: Line) -> Point:
    det = math.sin(b.theta - a.theta)
    if abs(det) < _PARALLEL_TOL:
        raise ParallelLines(f"{a} and {b} are parallel")
    ca, sa = a.normal
    cb, sb = b.normal
    x = (a.rho * sb - b.rho * sa) / det
    y = (ca * b.rho - cb * a.rho) / det
    return x + 0.0, y + 0.0


def polar_distance(a: Line, b: Line, frame: Frame) -> float:
    """Normalized L2 distance in Hough space, aware of the (rho, theta) wrap.

    ``rho`` differences are scaled by the frame's ``rho_max`` and ``theta``
    differences by ``pi/2``.  The minimum is taken over ``b`` and its two
    equivalent representations ``(-rho, theta -+ pi)``.
    """
    rho_scale = frame.rho_max
    best = math.inf
    for sign, shift in ((1.0, 0.0), (-1.0, math.pi), (-1.0, -math.pi)):
        dr = (a.rho - sign * b.rho) / rho_scale
        dt = (a.theta - (b.theta + shift)) / (math.pi / 2.0)
        best = min(best, math.hypot(dr, dt))
    return best


def polar_distance_matrix(rho_a, theta_a, rho_b, theta_b, frame: Frame) -> np.ndarray:
    """Vectorized :func:`polar_distance` between two line arrays, shape (A, B)."""
    ra = np.asarray(rho_a, dtype=float)[:, None]
    ta = np.asarray(theta_a, dtype=float)[:, None]
    rb = np.asarray(rho_b, dtype=float)[None, :]
    tb = np.asarray(theta_b, dtype=float)[None, :]
    half_pi = math.pi / 2.0
    d = np.hypot((ra - rb) / frame.rho_max, (ta - tb) / half_pi)
    for shift in (math.pi, -math.pi):
        d = np.minimum(d, np.hypot((ra + rb) / frame.rho_max, (ta - tb - shift) / half_pi))
    return d


def grid_centers(grid_h: int, grid_w: int, frame: Frame) -> Tuple[np.ndarray, np.ndarray]:
    """Centered coordinates of grid-cell centers: ``(xs[grid_w], ys[grid_h])``."""
    xs = (np.arange(grid_w) + 0.5) * (frame.width / grid_w) - frame.width / 2.0
    ys = (np.arange(grid_h) + 0.5) * (frame.height / grid_h) - frame.height / 2.0
    return xs, ys


def side_map(line: Line, grid_h: int, grid_w: int, frame: Frame, zero_to: int = 1) -> np.ndarray:
    """Side of every grid-cell center, shape (grid_h, grid_w), values +-1.

    Centers lying on the line take ``zero_to``.
    """
    xs, ys = grid_centers(grid_h, grid_w, frame)
    d = line.signed_distance(xs[None, :], ys[:, None])
    out = np.sign(d).astype(np.int8)
    out[np.abs(d) <= _SIDE_TOL] = zero_to
    return out


def rasterize_line(line: Line, grid_h: int, grid_w: int, frame: Frame) -> np.ndarray:
    """Flat indices (row * grid_w + col) of an 8-connected raster of the line.

    The frame is scaled onto a ``grid_h x grid_w`` grid.  The line is walked
    along its dominant grid axis, one pixel per step, so the raster is one
    pixel thick and every pixel center is within half a cell of the line.
    Indices are returned sorted.
    """
    if not intersects_frame(line, frame):
        raise NoIntersection(f"{line} misses the {frame} frame")
    c, s = line.normal
    # line in grid coordinates: a*u + b*v = r, u=column, v=row (continuous)
    a = c * frame.width / grid_w
    b = s * frame.height / grid_h
    r = line.rho + c * frame.width / 2.0 + s * frame.height / 2.0
    if abs(a) >= abs(b):
        v = np.arange(grid_h) + 0.5
        u = (r - b * v) / a
        keep = (u >= 0.0) & (u < grid_w)
        rows = np.arange(grid_h)[keep]
        cols = np.floor(u[keep]).astype(np.int64)
    else:
        u = np.arange(grid_w) + 0.5
        v = (r - a * u) / b
        keep = (v >= 0.0) & (v < grid_h)
        cols = np.arange(grid_w)[keep]
        rows = np.floor(v[keep]).astype(np.int64)
    return np.sort(rows * grid_w + cols)
