"""Semantic line combination detection.

Generate Hough-space line candidates, keep ``K`` reliable lines by NMS,
score all ``2**K`` combinations and keep the best one.
"""

__version__ = "0.1.0"

from .arrangement import hiou, partition_rectangle, region_iou
from .candidates import (
    CandidateSet,
    Combination,
    apply_offsets,
    detector_loss,
    detector_targets,
    enumerate_combinations,
    generate_candidate_grid,
    nms_select,
)
from .estimators import CompositionKMeans, CompositionRetriever, LineCombinationDetector, PositionalEmbedder
from .geometry import Frame, Line, Segment, line_intersection, polar_distance, polar_to_segment, segment_to_polar
from .scoring import HeuristicScorer, OracleScorer, ScoreReport, SearchConstraint, search_best_combination

__all__ = [
    "CandidateSet",
    "Combination",
    "CompositionKMeans",
    "CompositionRetriever",
    "Frame",
    "HeuristicScorer",
    "Line",
    "LineCombinationDetector",
    "OracleScorer",
    "PositionalEmbedder",
    "ScoreReport",
    "SearchConstraint",
    "Segment",
    "apply_offsets",
    "detector_loss",
    "detector_targets",
    "enumerate_combinations",
    "generate_candidate_grid",
    "hiou",
    "line_intersection",
    "nms_select",
    "partition_rectangle",
    "polar_distance",
    "polar_to_segment",
    "region_iou",
    "search_best_combination",
    "segment_to_polar",
]
