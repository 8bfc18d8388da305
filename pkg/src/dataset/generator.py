"""
Movement sequence generation from primitive plans.

A plan is an ordered list of (primitive, cycles). Every entry starts at
cycle position u = 0 and consecutive entries are joined by a direct cut.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dataset.renderer import render
from dataset.syntax import SubjectParams, compose_frame, get_primitive, sample_subject
from utils.errors import DataError

Plan = List[Tuple[str, int]]


@dataclass
class VideoSequence:
    """Rendered frames of one plan for one subject."""

    frames: np.ndarray
    label: str
    plan: Plan
    subject: SubjectParams = field(default_factory=SubjectParams)
    boundaries: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def transitions(self) -> List[int]:
        """Frame indices at which a new plan entry starts (the first entry excluded)."""
        return self.boundaries[1:]


def frames_per_cycle(steps_per_cycle: int, speed_scale: float) -> int:
    return max(1, int(round(steps_per_cycle / speed_scale)))


def parse_plan(text: str, cycles: int) -> Plan:
    """'P1-P5-P1' -> [('P1', cycles), ('P5', cycles), ('P1', cycles)]."""
    names = [name.strip() for name in text.split("-") if name.strip()]
    if not names:
        raise DataError(f"Empty sequence plan '{text}'")
    for name in names:
        get_primitive(name)
    return [(name, cycles) for name in names]


def plan_label(plan: Plan) -> str:
    return "-".join(name for name, _ in plan)


def generate(plan: Sequence[Tuple[str, int]], steps_per_cycle: int = 17,
             subject: Optional[SubjectParams] = None, label: Optional[str] = None) -> VideoSequence:
    """
    Render a plan of primitives to a frame sequence.

    Within an entry, u advances by speed_scale / steps_per_cycle per frame
    and the entry lasts round(steps_per_cycle / speed_scale) frames per cycle.

    Args:
        plan: Ordered (primitive name, cycles) pairs
        steps_per_cycle: Frames per cycle at speed_scale 1
        subject: Subject variation (neutral subject by default)
        label: Sequence label (plan names joined by '-' by default)

    Returns:
        VideoSequence with float32 frames in [-1, 1]
    """
    if steps_per_cycle < 2:
        raise DataError("steps_per_cycle must be at least 2")
    plan = [(str(name), int(cycles)) for name, cycles in plan]
    if not plan:
        raise DataError("Sequence plan is empty")
    subject = subject or SubjectParams()
    step = subject.speed_scale / steps_per_cycle
    per_cycle = frames_per_cycle(steps_per_cycle, subject.speed_scale)

    frames: List[np.ndarray] = []
    boundaries: List[int] = []
    for name, cycles in plan:
        if cycles < 1:
            raise DataError(f"{name}: cycles must be >= 1")
        entry = get_primitive(name)
        boundaries.append(len(frames))
        for k in range(cycles * per_cycle):
            u = (k * step) % 1.0
            frames.append(render(compose_frame(entry, u, subject)))

    return VideoSequence(
        frames=np.stack(frames).astype(np.float32),
        label=label or plan_label(plan),
        plan=plan,
        subject=subject,
        boundaries=boundaries,
    )


def subject_pool(count: int, seed: int, variation: float = 0.15) -> List[SubjectParams]:
    """Reproducible list of sampled subjects."""
    rng = np.random.default_rng(seed)
    return [sample_subject(rng, variation, seed=seed) for _ in range(count)]


def primitive_set(names: Sequence[str], cycles: int, steps_per_cycle: int,
                  subjects: Sequence[SubjectParams]) -> List[VideoSequence]:
    """One single-primitive sequence per (subject, primitive)."""
    sequences = []
    for index, subject in enumerate(subjects):
        for name in names:
            label = name if len(subjects) == 1 else f"{name}/s{index}"
            sequences.append(generate([(name, cycles)], steps_per_cycle, subject, label=label))
    return sequences


def summarize(sequences: Sequence[VideoSequence]) -> Dict[str, int]:
    return {seq.label: len(seq) for seq in sequences}
