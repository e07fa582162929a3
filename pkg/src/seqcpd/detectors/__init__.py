"""Streaming change-point detectors."""

from .config import PROCEDURES, AlarmReport, DetectorConfig
from .streaming import Detector, make_detector, pair_segment_statistic, run_detector, segment_sup
from .thresholds import ThresholdTable, segment_thresholds

__all__ = [
    "PROCEDURES",
    "AlarmReport",
    "DetectorConfig",
    "Detector",
    "make_detector",
    "run_detector",
    "pair_segment_statistic",
    "segment_sup",
    "ThresholdTable",
    "segment_thresholds",
]
