"""
Hierarchical movement syntax: limb sub-primitives composed into whole-body
primitives.

Joint angles are radians in the frontal plane. An arm's shoulder angle is
measured from hanging straight down and grows outward then upward (pi/2 is
horizontal, pi is straight up); the elbow adds to it. A leg's hip angle
grows outward; the knee folds the shin back toward the body axis.
"""

import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional

import numpy as np

from utils.errors import DataError

ARM_KINDS = ("A1", "A2", "A3")
LEG_KINDS = ("L1", "L2", "L3")
SIDES = ("left", "right")
PHASES = ("co", "anti")

# (lower, upper) joint limits
JOINT_LIMITS = {
    "shoulder": (0.0, 2.0 * math.pi),
    "elbow": (0.0, math.pi / 2.0),
    "hip": (0.0, math.pi / 3.0),
    "knee": (0.0, math.pi / 2.0),
}

ANTI_PHASE_OFFSET = 0.5


@dataclass(frozen=True)
class LimbPose:
    """Two joint angles of one limb: shoulder/elbow or hip/knee."""

    upper: float
    lower: float


@dataclass(frozen=True)
class Pose:
    """Whole-body pose in radians."""

    left_arm: LimbPose
    right_arm: LimbPose
    left_leg: LimbPose
    right_leg: LimbPose
    limb_scale: float = 1.0
    height_scale: float = 1.0

    def mirrored(self) -> "Pose":
        """Swap left and right limbs."""
        return replace(self, left_arm=self.right_arm, right_arm=self.left_arm,
                       left_leg=self.right_leg, right_leg=self.left_leg)

    def clamped(self) -> "Pose":
        def arm(p: LimbPose) -> LimbPose:
            return LimbPose(float(np.clip(p.upper, *JOINT_LIMITS["shoulder"])),
                            float(np.clip(p.lower, *JOINT_LIMITS["elbow"])))

        def leg(p: LimbPose) -> LimbPose:
            return LimbPose(float(np.clip(p.upper, *JOINT_LIMITS["hip"])),
                            float(np.clip(p.lower, *JOINT_LIMITS["knee"])))

        return replace(self, left_arm=arm(self.left_arm), right_arm=arm(self.right_arm),
                       left_leg=leg(self.left_leg), right_leg=leg(self.right_leg))


@dataclass(frozen=True)
class SyntaxEntry:
    """One whole-body primitive: two arm sub-primitives, their phase relation and a leg sub-primitive."""

    name: str
    arm_left: str
    arm_right: str
    phase: str
    leg: str

    def __post_init__(self):
        if self.arm_left[:2] not in ARM_KINDS or not self.arm_left.endswith("L"):
            raise DataError(f"{self.name}: bad left-arm sub-primitive {self.arm_left}")
        if self.arm_right[:2] not in ARM_KINDS or not self.arm_right.endswith("R"):
            raise DataError(f"{self.name}: bad right-arm sub-primitive {self.arm_right}")
        if self.phase not in PHASES:
            raise DataError(f"{self.name}: phase must be one of {PHASES}")
        if self.leg not in LEG_KINDS:
            raise DataError(f"{self.name}: bad leg sub-primitive {self.leg}")

    @property
    def right_offset(self) -> float:
        return ANTI_PHASE_OFFSET if self.phase == "anti" else 0.0

    def limb_sub_primitives(self) -> Dict[str, str]:
        return {"left_arm": self.arm_left, "right_arm": self.arm_right,
                "left_leg": self.leg, "right_leg": self.leg}


PRIMITIVES: Dict[str, SyntaxEntry] = {
    "P1": SyntaxEntry("P1", "A2L", "A1R", "co", "L1"),
    "P2": SyntaxEntry("P2", "A1L", "A2R", "anti", "L2"),
    "P3": SyntaxEntry("P3", "A3L", "A3R", "co", "L1"),
    "P4": SyntaxEntry("P4", "A3L", "A3R", "anti", "L2"),
    "P5": SyntaxEntry("P5", "A1L", "A1R", "co", "L3"),
    "P6": SyntaxEntry("P6", "A2L", "A2R", "anti", "L3"),
}


def get_primitive(name: str) -> SyntaxEntry:
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise DataError(f"Unknown primitive '{name}'. Known: {', '.join(PRIMITIVES)}") from None


@dataclass(frozen=True)
class SubjectParams:
    """Per-person variation of speed, limb proportions and body height."""

    speed_scale: float = 1.0
    limb_length_scale: float = 1.0
    height_scale: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        for key in ("speed_scale", "limb_length_scale", "height_scale"):
            if getattr(self, key) <= 0:
                raise DataError(f"Subject {key} must be positive")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "SubjectParams":
        return cls(**data)


def sample_subject(rng: np.random.Generator, variation: float = 0.15, seed: Optional[int] = None) -> SubjectParams:
    """Draw a subject with every scale uniform in [1 - variation, 1 + variation]."""
    low, high = 1.0 - variation, 1.0 + variation
    return SubjectParams(
        speed_scale=float(rng.uniform(low, high)),
        limb_length_scale=float(rng.uniform(low, high)),
        height_scale=float(rng.uniform(low, high)),
        seed=seed,
    )


def _swing(u: float) -> float:
    """Smooth 0 -> 1 -> 0 swing over one cycle."""
    return 0.5 * (1.0 - math.cos(2.0 * math.pi * u))


def sub_primitive(kind: str, side: str, phase_offset: float, u: float) -> LimbPose:
    """
    Joint angles of one limb at cycle position u.

    Args:
        kind: A1/A2/A3 (arms) or L1/L2/L3 (legs); a trailing L/R side letter is accepted
        side: "left" or "right"
        phase_offset: Cycle fraction added to u (0.5 for the lagging arm of anti-phase)
        u: Cycle position; the result is periodic in u with period 1

    Returns:
        LimbPose
    """
    kind = kind[:2]
    if side not in SIDES:
        raise DataError(f"Unknown side '{side}'")
    v = (u + phase_offset) % 1.0

    if kind == "A1":
        # lateral raise to horizontal
        return LimbPose(0.5 * math.pi * _swing(v), 0.0)
    if kind == "A2":
        # upper arm out, forearm swings up to vertical
        s = _swing(v)
        return LimbPose(0.5 * math.pi + 0.25 * math.pi * s, 0.5 * math.pi * s)
    if kind == "A3":
        return LimbPose(2.0 * math.pi * v, 0.0)
    if kind == "L1":
        # legs take turns
        if side == "right":
            v = (v + 0.5) % 1.0
        s = max(0.0, math.sin(2.0 * math.pi * v)) ** 2
        return LimbPose(math.pi / 5.0 * s, math.pi / 4.0 * s)
    if kind == "L2":
        return LimbPose(0.05, 0.0)
    if kind == "L3":
        s = _swing(v)
        return LimbPose(math.pi / 6.0 * s, math.pi / 3.0 * s)
    raise DataError(f"Unknown sub-primitive '{kind}'")


def compose_frame(entry: SyntaxEntry, u: float, subject: Optional[SubjectParams] = None) -> Pose:
    """
    Whole-body pose of a primitive at cycle position u.

    Co-phase moves both arms at offset 0; anti-phase puts the right arm at
    offset 0.5. The subject's limb and height scales travel with the pose
    to the renderer.
    """
    subject = subject or SubjectParams()
    pose = Pose(
        left_arm=sub_primitive(entry.arm_left, "left", 0.0, u),
        right_arm=sub_primitive(entry.arm_right, "right", entry.right_offset, u),
        left_leg=sub_primitive(entry.leg, "left", 0.0, u),
        right_leg=sub_primitive(entry.leg, "right", 0.0, u),
        limb_scale=subject.limb_length_scale,
        height_scale=subject.height_scale,
    )
    return pose.clamped()


def sub_primitive_usage() -> Dict[str, int]:
    """How often every limb sub-primitive appears across the built-in primitives."""
    counts: Dict[str, int] = {}
    for entry in PRIMITIVES.values():
        for key in (entry.arm_left, entry.arm_right):
            counts[key] = counts.get(key, 0) + 1
        counts[entry.leg] = counts.get(entry.leg, 0) + 1
    return counts


def sharing_pairs(limb: str):
    """Pairs of primitives that share the sub-primitive of one limb ("left_arm", "right_arm", "legs")."""
    key = {"left_arm": "arm_left", "right_arm": "arm_right", "legs": "leg"}[limb]
    names = sorted(PRIMITIVES)
    return [(a, b) for i, a in enumerate(names) for b in names[i + 1:]
            if getattr(PRIMITIVES[a], key) == getattr(PRIMITIVES[b], key)]
