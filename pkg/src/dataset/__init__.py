"""Synthetic whole-body movement data: syntax, rendering and sequence generation."""

from .syntax import (
    PRIMITIVES,
    LimbPose,
    Pose,
    SubjectParams,
    SyntaxEntry,
    compose_frame,
    get_primitive,
    sample_subject,
    sharing_pairs,
    sub_primitive,
    sub_primitive_usage,
)
from .renderer import render
from .generator import VideoSequence, generate, parse_plan, plan_label, primitive_set, subject_pool

__all__ = [
    "PRIMITIVES",
    "LimbPose",
    "Pose",
    "SubjectParams",
    "SyntaxEntry",
    "compose_frame",
    "get_primitive",
    "sample_subject",
    "sharing_pairs",
    "sub_primitive",
    "sub_primitive_usage",
    "render",
    "VideoSequence",
    "generate",
    "parse_plan",
    "plan_label",
    "primitive_set",
    "subject_pool",
]
