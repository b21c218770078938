"""Cross-lingual temporal expression extraction with multi-task transfer."""

from .corpus import IOLabel, LabeledSequence, TimexType
from .metrics import MatchMode, ScoreReport, decode_spans, strict_match_score

__version__ = "0.1.0"

__all__ = [
    "IOLabel",
    "LabeledSequence",
    "MatchMode",
    "ScoreReport",
    "TimexType",
    "decode_spans",
    "strict_match_score",
]
