"""Command-line driver.

Exit codes: 0 success, 1 usage error, 2 data error.  Settings resolve as
command-line flag, then ``--config`` file (``key = value``), then built-in
default.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .applications import RetrievalEntry, detect_vp, rank_symmetry_axes, retrieve
from .arrangement import hiou
from .candidates import Combination, generate_candidate_grid, nms_select
from .exceptions import DataError
from .formats import (
    AnnotationRecord,
    atomic_write,
    dump_annotations,
    dump_candidates,
    dump_index,
    dump_score_report,
    load_annotations,
    load_candidates,
    load_config,
    load_index,
    read_image,
    save_annotations,
    save_candidates,
    write_pgm,
)
from .geometry import Frame
from .grouping import grouping_forward, sinusoidal_pe
from .maps import line_collection_map, positional_embedding
from .scoring import HeuristicScorer, OracleScorer, SearchConstraint, block_average, search_best_combination
from .synth import inject_candidates, random_lines, random_synth_spec, synth_scene
from .validation import check_grid

DEFAULTS: Dict[str, object] = {
    "k": 8,
    "n_rho": 32,
    "n_theta": 32,
    "nms_threshold": 0.08,
    "retrieval_threshold": 0.75,
    "w_edge": 1.0,
    "w_region": 1.0,
    "w_lines": 0.25,
    "grid": "60x60",
    "pool": 15,
    "scorer": "heuristic",
    "mode": "all",
    "seed": 0,
    "top_k": 4,
}

_TYPES = {"k": int, "n_rho": int, "n_theta": int, "pool": int, "seed": int, "top_k": int,
          "nms_threshold": float, "retrieval_threshold": float,
          "w_edge": float, "w_region": float, "w_lines": float}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Settings:
    def __init__(self, args, config: Dict[str, str]):
        self.args = args
        self.config = config

    def get(self, key: str, flag: Optional[str] = None):
        v = getattr(self.args, flag or key, None)
        if v is not None:
            return v
        if key in self.config:
            raw = self.config[key]
            try:
                return _TYPES.get(key, str)(raw)
            except ValueError:
                raise DataError(f"config key {key!r}: bad value {raw!r}") from None
        return DEFAULTS[key]


def _emit(text: str, out: Optional[str]):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _frame_arg(text):
    try:
        return Frame.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _first_record(path) -> AnnotationRecord:
    recs = load_annotations(path)
    if not recs:
        raise DataError(f"{path}: no annotation records")
    return recs[0]


def _scorer(settings: Settings, image, frame, gt_path):
    kind = settings.get("scorer")
    if kind == "oracle":
        if not gt_path:
            raise UsageError("--scorer oracle requires --gt")
        return OracleScorer(_first_record(gt_path).to_lines(), frame)
    if image is None:
        raise UsageError("--scorer heuristic requires --image")
    return HeuristicScorer(image, frame, grid=check_grid(settings.get("grid")),
                           w_edge=settings.get("w_edge"), w_region=settings.get("w_region"),
                           w_lines=settings.get("w_lines"))


def _constraint(settings: Settings) -> SearchConstraint:
    mode = settings.get("mode")
    n = getattr(settings.args, "n_lines_exact", None)
    return SearchConstraint(mode, n)


def _load_image_and_frame(args):
    image = read_image(args.image) if getattr(args, "image", None) else None
    if image is not None:
        frame = Frame(image.shape[1], image.shape[0])
        if getattr(args, "frame", None) and args.frame != frame:
            raise DataError(f"--frame {args.frame} disagrees with image size {frame}")
        return image, frame
    if getattr(args, "frame", None):
        return None, args.frame
    return None, None


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args, settings):
    frame = args.frame or Frame(480, 480)
    seed = settings.get("seed")
    spec = random_synth_spec(seed, frame, n_lines=args.n_lines, min_gap=args.min_gap, noise_sigma=args.noise)
    image, gt = synth_scene(spec)
    rng = np.random.default_rng(seed + 1_000_003)
    distractors = random_lines(rng, frame, args.distractors, existing=gt, min_separation=0.15, max_rho_frac=0.9)
    targets = list(gt) + distractors
    probs = rng.uniform(0.6, 0.99, size=len(targets))
    cands = inject_candidates(frame, targets, probs, settings.get("n_rho"), settings.get("n_theta"), seed=seed)
    out = Path(args.out)
    write_pgm(out / "image.pgm", image)
    save_annotations(out / "gt.json", [AnnotationRecord.from_lines(f"synth-{seed}", frame, gt)])
    save_candidates(out / "candidates.csv", cands)
    print(f"wrote {out / 'image.pgm'} ({frame}), {len(gt)} gt lines, {len(distractors)} distractors")
    return 0


def cmd_candidates(args, settings):
    if args.frame is None:
        raise UsageError("candidates: --frame is required")
    cands = generate_candidate_grid(settings.get("n_rho"), settings.get("n_theta"), args.frame)
    _emit(dump_candidates(cands), args.out)
    return 0


def cmd_nms(args, settings):
    image, frame = _load_image_and_frame(args)
    if frame is None:
        raise UsageError("nms: --frame or --image is required")
    cands = load_candidates(args.candidates, frame)
    sel = nms_select(cands, settings.get("k"), settings.get("nms_threshold", "threshold"))
    rec = AnnotationRecord.from_lines(Path(args.candidates).stem, frame, sel.lines)
    _emit(dump_annotations([rec]), args.out)
    return 0


def cmd_score(args, settings):
    image, frame = _load_image_and_frame(args)
    rec = _first_record(args.lines)
    frame = frame or rec.frame
    reliable = rec.to_lines()
    scorer = _scorer(settings, image, frame, args.gt)
    report = search_best_combination(reliable, scorer, _constraint(settings))
    _emit(dump_score_report(report), args.out)
    return 0


def cmd_detect(args, settings):
    image, frame = _load_image_and_frame(args)
    if frame is None:
        raise UsageError("detect: --image is required")
    cands = load_candidates(args.candidates, frame)
    sel = nms_select(cands, settings.get("k"), settings.get("nms_threshold", "threshold"))
    scorer = _scorer(settings, image, frame, args.gt)
    report = search_best_combination(sel.lines, scorer, _constraint(settings))
    best = report.best.combination.select(sel.lines)
    image_id = Path(args.image).stem
    _emit(dump_annotations([AnnotationRecord.from_lines(image_id, frame, best)]), args.out)
    if args.report:
        atomic_write(args.report, dump_score_report(report))
    return 0


def cmd_hiou(args, settings):
    a, b = load_annotations(args.a), load_annotations(args.b)
    if len(a) == 1 and len(b) == 1:
        pairs = [(a[0], b[0])]
    else:
        lookup = {r.image_id: r for r in b}
        pairs = [(r, lookup[r.image_id]) for r in a if r.image_id in lookup]
        if not pairs:
            raise DataError("no image_id is shared by the two annotation files")
    scores = []
    for ra, rb in pairs:
        if (ra.width, ra.height) != (rb.width, rb.height):
            raise DataError(f"{ra.image_id}: image sizes differ between files")
        scores.append(hiou(ra.to_lines(), rb.to_lines(), ra.frame))
    print(f"{float(np.mean(scores)):.6f}")
    return 0


def _reliable_and_scorer(args, settings):
    image, frame = _load_image_and_frame(args)
    rec = _first_record(args.lines)
    frame = frame or rec.frame
    return rec.to_lines(), _scorer(settings, image, frame, args.gt), frame


def cmd_vp(args, settings):
    reliable, scorer, frame = _reliable_and_scorer(args, settings)
    vp = detect_vp(reliable, scorer)
    x, y = vp.point[0] + frame.width / 2.0, vp.point[1] + frame.height / 2.0
    print(f"{x:.6f} {y:.6f} pair={vp.pair[0]},{vp.pair[1]} score={vp.score:.6f}")
    return 0


def cmd_symmetry(args, settings):
    reliable, scorer, _ = _reliable_and_scorer(args, settings)
    for rank, (i, line, score) in enumerate(rank_symmetry_axes(reliable, scorer), start=1):
        print(f"{rank}\t{i}\t{line.rho:.6f}\t{line.theta:.6f}\t{score:.6f}")
    return 0


def cmd_retrieve(args, settings):
    entries = load_index(args.index)
    query = next((e for e in entries if e.identifier == args.query), None)
    if query is None:
        raise DataError(f"query {args.query!r} is not in {args.index}")
    rest = [e for e in entries if e.identifier != args.query]
    hits = retrieve(query, rest, settings.get("retrieval_threshold", "threshold"), settings.get("top_k"))
    for ident, dist in hits:
        print(f"{ident}\t{dist:.6f}")
    return 0


def cmd_index(args, settings):
    image, frame = _load_image_and_frame(args)
    cands = load_candidates(args.candidates, frame)
    sel = nms_select(cands, settings.get("k"), settings.get("nms_threshold"))
    scorer = _scorer(settings, image, frame, None)
    report = search_best_combination(sel.lines, scorer, SearchConstraint("all"))
    gh, gw = check_grid(settings.get("grid"))
    lcm = line_collection_map(sel.lines, report.best.combination, gh, gw, frame)
    entry = RetrievalEntry(args.id or Path(args.image).stem, positional_embedding(lcm, settings.get("pool")),
                           report.best.score)
    entries = load_index(args.out) if os.path.exists(args.out) else []
    entries = [e for e in entries if e.identifier != entry.identifier] + [entry]
    atomic_write(args.out, dump_index(entries))
    print(f"{entry.identifier}\t{entry.composition_score:.6f}")
    return 0


def cmd_group(args, settings):
    gh, gw = check_grid(settings.get("grid") if args.grid is None else args.grid)
    rng = np.random.default_rng(settings.get("seed"))
    c = args.channels
    if args.image:
        img = read_image(args.image).astype(float) / 255.0
        g = block_average(img, gh, gw).reshape(-1, 1)
        feats = g @ rng.normal(size=(1, c)) * 4.0
    else:
        feats = rng.normal(size=(gh * gw, c))
    res = grouping_forward(
        rng.normal(size=(args.queries, c)),
        rng.normal(size=(c, c)) / np.sqrt(c),
        rng.normal(size=(c, c)) / np.sqrt(c),
        rng.normal(size=(c, c)) / np.sqrt(c),
        feats,
        sinusoidal_pe(gh, gw, c),
        steps=args.steps,
    )
    for row in res.membership.reshape(gh, gw):
        print(" ".join(str(int(v)) for v in row))
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="linecombo", description="Semantic line combination detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, *names):
        sp.add_argument("--config", help="key = value settings file")
        if "frame" in names:
            sp.add_argument("--frame", type=_frame_arg, help="image size WxH")
        if "k" in names:
            sp.add_argument("--k", type=int, help="number of reliable lines")
        if "grid" in names:
            sp.add_argument("--n-rho", dest="n_rho", type=int)
            sp.add_argument("--n-theta", dest="n_theta", type=int)
        if "threshold" in names:
            sp.add_argument("--threshold", type=float)
        if "scorer" in names:
            sp.add_argument("--scorer", choices=["oracle", "heuristic"])
            sp.add_argument("--gt", help="ground-truth annotation (oracle scorer)")
            sp.add_argument("--image", help="PGM/PPM image")
        if "mode" in names:
            sp.add_argument("--mode", choices=["all", "pairs", "singletons", "exactly_n"])
            sp.add_argument("--n", dest="n_lines_exact", type=int, help="size for --mode exactly_n")
        if "seed" in names:
            sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("synth", help="write a synthetic image, gt annotation and candidate CSV")
    common(sp, "frame", "grid", "seed")
    sp.add_argument("--n-lines", dest="n_lines", type=int)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--min-gap", dest="min_gap", type=float, default=60.0)
    sp.add_argument("--distractors", type=int, default=4)
    sp.set_defaults(func=cmd_synth, needs_out=True)

    sp = sub.add_parser("candidates", help="emit the candidate grid as CSV")
    common(sp, "frame", "grid")
    sp.set_defaults(func=cmd_candidates)

    sp = sub.add_parser("nms", help="select K reliable lines from a candidate CSV")
    common(sp, "frame", "k", "threshold")
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--image")
    sp.set_defaults(func=cmd_nms)

    sp = sub.add_parser("score", help="score the combinations of K lines")
    common(sp, "frame", "scorer", "mode")
    sp.add_argument("--lines", required=True, help="annotation with the reliable lines")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("detect", help="full pipeline: candidates -> NMS -> best combination")
    common(sp, "frame", "k", "threshold", "scorer", "mode")
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--report", help="also write the score report CSV here")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("hiou", help="HIoU between two annotation files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_hiou)

    for name, func, helptext in (("vp", cmd_vp, "vanishing point from the best line pair"),
                                 ("symmetry", cmd_symmetry, "rank reliable lines as symmetry axes")):
        sp = sub.add_parser(name, help=helptext)
        common(sp, "frame", "scorer")
        sp.add_argument("--lines", required=True)
        sp.set_defaults(func=func)

    sp = sub.add_parser("retrieve", help="composition-based retrieval from an index file")
    sp.add_argument("--config")
    sp.add_argument("--index", required=True)
    sp.add_argument("--query", required=True)
    sp.add_argument("--top-k", dest="top_k", type=int)
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_retrieve)

    sp = sub.add_parser("index", help="detect lines in an image and add its embedding to an index")
    common(sp, "k", "grid")
    sp.add_argument("--image", required=True)
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--id")
    sp.set_defaults(func=cmd_index, needs_out=True)

    sp = sub.add_parser("group", help="print a membership map from random-weight grouping")
    common(sp, "seed")
    sp.add_argument("--grid", help="grid HxW (default 60x60)")
    sp.add_argument("--queries", type=int, default=8)
    sp.add_argument("--channels", type=int, default=16)
    sp.add_argument("--steps", type=int, default=3)
    sp.add_argument("--image")
    sp.set_defaults(func=cmd_group)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "needs_out", False) and not args.out:
            raise UsageError(f"{args.command}: --out is required")
        config = load_config(args.config) if getattr(args, "config", None) else {}
        return args.func(args, Settings(args, config))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
