"""Window-mask revision for facade parsing using detected line segments."""
from .lafr import LafrParams, RevisionResult, acquire_instances, assign_segments, integrate, revise, run_lafr
from .lsd import LineSegment, LsdParams, detect_lines
from .metrics import ConfusionMatrix, report
from .synth import CorruptionParams, FacadeSpec, corrupt, generate
from .vit import VitConfig, segment_forward

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix", "CorruptionParams", "FacadeSpec", "LafrParams", "LineSegment", "LsdParams",
    "RevisionResult", "VitConfig", "acquire_instances", "assign_segments", "corrupt", "detect_lines",
    "generate", "integrate", "report", "revise", "run_lafr", "segment_forward",
]
