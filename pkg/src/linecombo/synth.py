"""Synthetic piecewise-constant scenes with known semantic lines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .arrangement import partition_rectangle
from .candidates import CandidateSet, generate_candidate_grid
from .exceptions import SpecInvalid
from .geometry import Frame, Line, polar_distance, polar_distance_matrix

MIN_SOLVABLE_GAP = 30.0


@dataclass
class SynthSpec:
    width: int
    height: int
    gt_lines: List[Line]
    region_intensities: List[float]  # one per cell of partition_rectangle(gt_lines)
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def frame(self) -> Frame:
        return Frame(self.width, self.height)

    def validate(self):
        try:
            frame = self.frame
        except ValueError as exc:
            raise SpecInvalid(str(exc)) from None
        if not 1 <= len(self.gt_lines) <= 4:
            raise SpecInvalid(f"need 1-4 ground-truth lines, got {len(self.gt_lines)}")
        try:
            part = partition_rectangle(self.gt_lines, frame)
        except ValueError as exc:
            raise SpecInvalid(str(exc)) from None
        if len(self.region_intensities) != len(part.cells):
            raise SpecInvalid(f"{len(part.cells)} cells but {len(self.region_intensities)} intensities")
        if any(not 0 <= v <= 255 for v in self.region_intensities):
            raise SpecInvalid("region intensities must lie in [0, 255]")
        if self.noise_sigma < 0:
            raise SpecInvalid("noise_sigma must be non-negative")
        return part


def adjacent_pairs(sign_vectors: Sequence[Tuple[int, ...]]) -> List[Tuple[int, int]]:
    """Cell pairs whose sign vectors differ in exactly one line.

    In a line arrangement such cells share an edge on that line.
    """
    out = []
    for i in range(len(sign_vectors)):
        for j in range(i + 1, len(sign_vectors)):
            if sum(a != b for a, b in zip(sign_vectors[i], sign_vectors[j])) == 1:
                out.append((i, j))
    return out


def min_adjacent_gap(spec: SynthSpec) -> float:
    part = spec.validate()
    pairs = adjacent_pairs([c.sign_vector for c in part.cells])
    v = spec.region_intensities
    return min((abs(v[i] - v[j]) for i, j in pairs), default=math.inf)


def synth_scene(spec: SynthSpec) -> Tuple[np.ndarray, List[Line]]:
    """Render a :class:`SynthSpec` as an 8-bit grayscale image.

    Pixels take the intensity of the cell containing their center (centers on
    a line count as its positive side), then seeded Gaussian noise is added
    and the result is rounded and clipped to [0, 255].
    """
    part = spec.validate()
    w, h = spec.width, spec.height
    xs = np.arange(w) + 0.5 - w / 2.0
    ys = np.arange(h) + 0.5 - h / 2.0
    codes = np.zeros((h, w), dtype=np.int64)
    for k, line in enumerate(spec.gt_lines):
        d = line.signed_distance(xs[None, :], ys[:, None])
        codes |= (d >= 0).astype(np.int64) << k
    lut_codes = [sum(1 << k for k, s in enumerate(c.sign_vector) if s > 0) for c in part.cells]
    img = np.zeros((h, w))
    filled = np.zeros((h, w), dtype=bool)
    for code, value in zip(lut_codes, spec.region_intensities):
        m = codes == code
        img[m] = value
        filled |= m
    if not filled.all():
        # sign vectors of degenerate cells: take the Hamming-nearest real cell
        for code in np.unique(codes[~filled]):
            dist = [bin(int(code) ^ c).count("1") for c in lut_codes]
            img[codes == code] = spec.region_intensities[int(np.argmin(dist))]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), list(spec.gt_lines)


def random_lines(rng, frame: Frame, count: int, existing: Sequence[Line] = (), min_separation: float = 0.2,
                 max_rho_frac: float = 0.6, max_tries: int = 10000) -> List[Line]:
    """Random lines through the central part of the frame, mutually separated.

    ``rho`` is drawn within ``max_rho_frac`` of the frame's reach at the
    drawn angle; every new line keeps at least ``min_separation`` normalized
    polar distance from all others (including ``existing``).
    """
    out: List[Line] = []
    taken = list(existing)
    for _ in range(max_tries):
        if len(out) == count:
            break
        theta = rng.uniform(0.0, math.pi)
        reach = (frame.width * abs(math.cos(theta)) + frame.height * abs(math.sin(theta))) / 2.0
        line = Line.make(rng.uniform(-max_rho_frac, max_rho_frac) * reach, theta)
        if all(polar_distance(line, t, frame) >= min_separation for t in taken):
            out.append(line)
            taken.append(line)
    if len(out) < count:
        raise SpecInvalid(f"could not place {count} lines with separation {min_separation}")
    return out


def _assign_intensities(rng, n_cells, pairs, min_gap, lo=20.0, hi=235.0, tries=200):
    nbrs = [[] for _ in range(n_cells)]
    for i, j in pairs:
        nbrs[i].append(j)
        nbrs[j].append(i)
    for _ in range(tries):
        vals: List[Optional[float]] = [None] * n_cells
        ok = True
        for c in range(n_cells):
            for _ in range(100):
                v = float(rng.integers(int(lo), int(hi) + 1))
                if all(vals[n] is None or abs(v - vals[n]) >= min_gap for n in nbrs[c]):
                    vals[c] = v
                    break
            else:
                ok = False
                break
        if ok:
            return vals
    return None


def random_synth_spec(seed: int, frame: Frame, n_lines: Optional[int] = None, min_gap: float = 60.0,
                      noise_sigma: float = 0.0, min_cell_frac: float = 0.01,
                      min_separation: float = 0.2) -> SynthSpec:
    """A random solvable spec: 1-4 separated lines, adjacent-cell gaps >= ``min_gap``.

    Every cell covers at least ``min_cell_frac`` of the frame.
    """
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        n = int(n_lines) if n_lines is not None else int(rng.integers(1, 5))
        lines = random_lines(rng, frame, n, min_separation=min_separation)
        part = partition_rectangle(lines, frame)
        if part.areas.min() < min_cell_frac * frame.area:
            continue
        pairs = adjacent_pairs([c.sign_vector for c in part.cells])
        vals = _assign_intensities(rng, len(part.cells), pairs, min_gap)
        if vals is not None:
            return SynthSpec(frame.width, frame.height, lines, vals, noise_sigma, seed)
    raise SpecInvalid(f"no solvable spec found for seed {seed}")


def inject_candidates(frame: Frame, lines: Sequence[Line], probs: Sequence[float], n_rho: int = 32,
                      n_theta: int = 32, seed: int = 0, background: float = 0.3) -> CandidateSet:
    """A synthetic detector output: grid candidates that land on given lines.

    Background candidates get probabilities below ``background``.  For each
    target line, the nearest unused grid candidate receives the given
    probability and the offset that moves it exactly onto the line.
    """
    cands = generate_candidate_grid(n_rho, n_theta, frame)
    rng = np.random.default_rng(seed)
    probs_out = rng.uniform(0.0, background, size=len(cands))
    offsets = np.zeros((len(cands), 2))
    used = set()
    for line, p in zip(lines, probs):
        d = polar_distance_matrix([line.rho], [line.theta], cands.rho, cands.theta, frame)[0]
        for i in np.argsort(d, kind="stable"):
            if int(i) not in used:
                break
        i = int(i)
        used.add(i)
        best = None
        for sign, shift in ((1.0, 0.0), (-1.0, math.pi), (-1.0, -math.pi)):
            dr = sign * line.rho - cands.rho[i]
            dt = line.theta + shift - cands.theta[i]
            cost = math.hypot(dr / frame.rho_max, dt / (math.pi / 2))
            if best is None or cost < best[0]:
                best = (cost, dr, dt)
        probs_out[i] = p
        offsets[i] = best[1:]
    return CandidateSet(cands.rho, cands.theta, probs_out, offsets, frame)
