"""File formats: annotations, images, candidate/score CSVs, retrieval index, config.

Annotation documents are JSON::

    {"records": [{"image_id": "a", "width": 480, "height": 320,
                  "lines": [[x1, y1, x2, y2], ...],
                  "composition_class": "Horizontal"}]}

Endpoint coordinates are top-left pixel coordinates (origin at the image
corner, y down) and must lie on the image boundary.  Internally lines live in
centered coordinates; see :mod:`linecombo.geometry`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .candidates import CandidateSet
from .exceptions import InvariantViolation, ParseError
from .geometry import Frame, Line, polar_to_segment, segment_to_polar
from .scoring import ScoreReport

COMPOSITION_CLASSES = ("Horizontal", "Vertical", "Diagonal", "Triangle", "Symmetric", "Low", "Front")
MAX_ANNOTATED_LINES = 32
BOUNDARY_TOL_PX = 0.5
CANDIDATE_HEADER = ["rho", "theta", "prob", "d_rho", "d_theta"]
REPORT_HEADER = ["combo_id", "mask_bits", "score", "rank"]


def atomic_write(path, data, binary: bool = False):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        if binary:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
        else:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- annotations --------------------------------------------------------------


@dataclass
class AnnotationRecord:
    image_id: str
    width: int
    height: int
    lines: List[Tuple[float, float, float, float]] = field(default_factory=list)
    composition_class: Optional[str] = None

    @property
    def frame(self) -> Frame:
        return Frame(self.width, self.height)

    def to_lines(self) -> List[Line]:
        hw, hh = self.width / 2.0, self.height / 2.0
        return [segment_to_polar((x1 - hw, y1 - hh), (x2 - hw, y2 - hh)) for x1, y1, x2, y2 in self.lines]

    @classmethod
    def from_lines(cls, image_id: str, frame: Frame, lines: Sequence[Line], composition_class=None):
        hw, hh = frame.width / 2.0, frame.height / 2.0
        quads = []
        for line in lines:
            seg = polar_to_segment(line, frame)
            quads.append((seg.p0[0] + hw, seg.p0[1] + hh, seg.p1[0] + hw, seg.p1[1] + hh))
        return cls(image_id, frame.width, frame.height, quads, composition_class)

    def to_dict(self) -> dict:
        d = {"image_id": self.image_id, "width": self.width, "height": self.height,
             "lines": [list(q) for q in self.lines]}
        if self.composition_class is not None:
            d["composition_class"] = self.composition_class
        return d

    def validate(self):
        where = f"record {self.image_id!r}"
        if self.width < 2 or self.height < 2:
            raise InvariantViolation(f"{where}: image must be at least 2x2")
        if len(self.lines) > MAX_ANNOTATED_LINES:
            raise InvariantViolation(f"{where}: {len(self.lines)} lines exceed {MAX_ANNOTATED_LINES}")
        if self.composition_class is not None and self.composition_class not in COMPOSITION_CLASSES:
            raise InvariantViolation(f"{where}: unknown composition class {self.composition_class!r}")
        for i, (x1, y1, x2, y2) in enumerate(self.lines):
            for x, y in ((x1, y1), (x2, y2)):
                if not _on_boundary(x, y, self.width, self.height):
                    raise InvariantViolation(f"{where}, line {i}: endpoint ({x}, {y}) is off the image boundary")
            if (x1, y1) == (x2, y2):
                raise InvariantViolation(f"{where}, line {i}: endpoints coincide")


def _on_boundary(x, y, w, h) -> bool:
    t = BOUNDARY_TOL_PX
    if not (-t <= x <= w + t and -t <= y <= h + t):
        return False
    return min(abs(x), abs(x - w), abs(y), abs(y - h)) <= t


def _record_from_dict(d, index: int) -> AnnotationRecord:
    where = f"record {index}"
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object")
    try:
        rec = AnnotationRecord(
            image_id=str(d["image_id"]),
            width=_as_int(d["width"], f"{where}, field 'width'"),
            height=_as_int(d["height"], f"{where}, field 'height'"),
            composition_class=d.get("composition_class"),
        )
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
    lines = d.get("lines", [])
    if not isinstance(lines, list):
        raise ParseError(f"{where}, field 'lines': expected a list")
    for i, q in enumerate(lines):
        if not isinstance(q, (list, tuple)) or len(q) != 4:
            raise ParseError(f"{where}, field 'lines'[{i}]: expected [x1, y1, x2, y2]")
        try:
            vals = tuple(float(v) for v in q)
        except (TypeError, ValueError):
            raise ParseError(f"{where}, field 'lines'[{i}]: non-numeric coordinate") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(f"{where}, field 'lines'[{i}]: non-finite coordinate")
        rec.lines.append(vals)
    return rec


def _as_int(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ParseError(f"{where}: expected an integer, got {v!r}")
    return int(v)


def parse_annotations(text: str) -> List[AnnotationRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict) and "records" in doc:
        raw = doc["records"]
        if not isinstance(raw, list):
            raise ParseError("field 'records': expected a list")
    elif isinstance(doc, dict):
        raw = [doc]
    else:
        raise ParseError("expected an annotation object or {'records': [...]}")
    records = [_record_from_dict(d, i) for i, d in enumerate(raw)]
    for rec in records:
        rec.validate()
    return records


def load_annotations(path) -> List[AnnotationRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_annotations(fh.read())


def dump_annotations(records: Sequence[AnnotationRecord]) -> str:
    return json.dumps({"records": [r.to_dict() for r in records]}, indent=2) + "\n"


def save_annotations(path, records: Sequence[AnnotationRecord]):
    atomic_write(path, dump_annotations(records))


# --- images -------------------------------------------------------------------


def _read_header(buf: bytes, nfields: int):
    fields, pos = [], 0
    while len(fields) < nfields:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated image header")
        fields.append(buf[start:pos])
    return fields, pos + 1  # exactly one whitespace byte before the raster


def read_image(path) -> np.ndarray:
    """Read binary PGM (P5) or PPM (P6); PPM is converted to 8-bit luma."""
    buf = Path(path).read_bytes()
    fields, pos = _read_header(buf, 4)
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{path}: unsupported image type {magic!r}, expected P5 or P6")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed image header") from None
    if not (0 < maxval < 256):
        raise ParseError(f"{path}: only 8-bit images are supported")
    chans = 3 if magic == b"P6" else 1
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * chans, offset=pos) if len(buf) - pos >= w * h * chans else None
    if data is None:
        raise ParseError(f"{path}: raster shorter than {w}x{h}x{chans}")
    img = data.reshape(h, w, chans) if chans == 3 else data.reshape(h, w)
    if chans == 3:
        luma = img.astype(float) @ np.array([0.299, 0.587, 0.114])
        img = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    return img.copy()


def write_pgm(path, image: np.ndarray):
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM output needs a 2D uint8 array")
    h, w = img.shape
    atomic_write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes(), binary=True)


# --- candidates ---------------------------------------------------------------


def dump_candidates(cands: CandidateSet) -> str:
    out = io.StringIO()
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(CANDIDATE_HEADER)
    for r, t, p, (dr, dt) in zip(cands.rho, cands.theta, cands.probs, cands.offsets):
        wr.writerow([repr(float(v)) for v in (r, t, p, dr, dt)])
    return out.getvalue()


def save_candidates(path, cands: CandidateSet):
    atomic_write(path, dump_candidates(cands))


def load_candidates(path, frame: Frame) -> CandidateSet:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != CANDIDATE_HEADER:
        raise ParseError(f"{path}: line 1: expected header {','.join(CANDIDATE_HEADER)}")
    vals = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"{path}: line {ln}: expected 5 fields, got {len(row)}")
        try:
            vals.append([float(v) for v in row])
        except ValueError:
            raise ParseError(f"{path}: line {ln}: non-numeric field") from None
    if not vals:
        raise ParseError(f"{path}: no candidate rows")
    a = np.array(vals)
    if not np.all(np.isfinite(a)):
        raise ParseError(f"{path}: non-finite values")
    bad = np.nonzero((a[:, 2] < 0) | (a[:, 2] > 1))[0]
    if bad.size:
        raise InvariantViolation(f"{path}: line {bad[0] + 2}: prob outside [0, 1]")
    return CandidateSet(a[:, 0], a[:, 1], a[:, 2], a[:, 3:5], frame)


# --- score reports ------------------------------------------------------------


def dump_score_report(report: ScoreReport) -> str:
    out = io.StringIO()
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(REPORT_HEADER)
    for rank, rec in enumerate(report.ranked(), start=1):
        wr.writerow([rec.id, rec.combination.bits, f"{rec.score:.6f}", rank])
    return out.getvalue()


def save_score_report(path, report: ScoreReport):
    atomic_write(path, dump_score_report(report))


# --- retrieval index ----------------------------------------------------------


def dump_index(entries) -> str:
    lines = []
    for e in entries:
        if "\t" in e.identifier or "\n" in e.identifier:
            raise ValueError(f"identifier {e.identifier!r} contains a tab or newline")
        vec = ",".join(repr(float(v)) for v in e.embedding)
        lines.append(f"{e.identifier}\t{float(e.composition_score)!r}\t{vec}\n")
    return "".join(lines)


def save_index(path, entries):
    atomic_write(path, dump_index(entries))


def load_index(path):
    from .applications import RetrievalEntry

    entries = []
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw.strip():
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}: line {ln}: expected 3 tab-separated fields")
            try:
                score = float(parts[1])
                vec = np.array([float(v) for v in parts[2].split(",")]) if parts[2] else np.zeros(0)
            except ValueError:
                raise ParseError(f"{path}: line {ln}: non-numeric score or embedding") from None
            entries.append(RetrievalEntry(parts[0], vec, score))
    return entries


# --- config -------------------------------------------------------------------


def parse_config(text: str, source: str = "<config>") -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys are case-sensitive."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: line {ln}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(f"{source}: line {ln}: empty key")
        out[key.replace("-", "_")] = value
    return out


def load_config(path) -> Dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
