"""
Anti-aliased stick-figure rasterizer.

The figure stands on the vertical axis x = 17.5 of a 36x36 grid (pixel
centres at integer coordinates, rows growing downward), so swapping a
pose's left and right limbs mirrors the frame exactly. The figure's left
side is drawn in the left half of the image.
"""

import math
from typing import List, Tuple

import numpy as np

from dataset.syntax import LimbPose, Pose

FRAME_SIZE = 36
AXIS_X = (FRAME_SIZE - 1) / 2.0
CENTER_Y = 18.0

BACKGROUND = -1.0
FOREGROUND = 1.0

# body geometry at scale 1 (pixels, offsets from the figure centre)
HEAD_Y, HEAD_RADIUS = -12.5, 3.0
NECK_Y = -9.0
SHOULDER_Y, SHOULDER_HALF_WIDTH = -8.0, 3.0
HIP_Y, HIP_HALF_WIDTH = 2.0, 2.0
UPPER_ARM, FOREARM = 6.0, 5.0
THIGH, SHIN = 7.0, 7.0
LIMB_RADIUS, TORSO_RADIUS = 1.1, 1.8

_rows, _cols = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE].astype(np.float64)

Point = Tuple[float, float]


def _segment_distance(a: Point, b: Point) -> np.ndarray:
    """Distance from every pixel centre to the segment a-b (points are (x, y))."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    length_sq = dx * dx + dy * dy
    px, py = _cols - ax, _rows - ay
    if length_sq == 0:
        return np.hypot(px, py)
    t = np.clip((px * dx + py * dy) / length_sq, 0.0, 1.0)
    return np.hypot(px - t * dx, py - t * dy)


def _coverage(distance: np.ndarray, radius: float) -> np.ndarray:
    return np.clip(0.5 + radius - distance, 0.0, 1.0)


def _limb(root: Point, side: float, limb: LimbPose, first: float, second: float,
          fold: float) -> List[Tuple[Point, Point]]:
    """
    Two segments from root. side is -1 for the figure's left (image left),
    +1 for its right; fold is +1 when the lower joint keeps rotating outward
    (elbows) and -1 when it folds back toward the axis (knees).
    """
    upper = limb.upper
    lower = upper + fold * limb.lower
    joint = (root[0] + side * first * math.sin(upper), root[1] + first * math.cos(upper))
    tip = (joint[0] + side * second * math.sin(lower), joint[1] + second * math.cos(lower))
    return [(root, joint), (joint, tip)]


def render(pose: Pose) -> np.ndarray:
    """
    Rasterize a pose.

    Args:
        pose: Whole-body pose; its limb_scale and height_scale size the body

    Returns:
        (36, 36) float64 frame, background -1, body toward +1
    """
    h = pose.height_scale
    arm_scale = h * pose.limb_scale
    leg_scale = h * pose.limb_scale

    def at(dx: float, dy: float) -> Point:
        return AXIS_X + h * dx, CENTER_Y + h * dy

    strokes: List[Tuple[Point, Point, float]] = [(at(0.0, NECK_Y), at(0.0, HIP_Y), TORSO_RADIUS * h)]
    for side, arm in ((-1.0, pose.left_arm), (1.0, pose.right_arm)):
        shoulder = at(side * SHOULDER_HALF_WIDTH, SHOULDER_Y)
        strokes.append((at(0.0, SHOULDER_Y), shoulder, LIMB_RADIUS * h))
        for a, b in _limb(shoulder, side, arm, UPPER_ARM * arm_scale, FOREARM * arm_scale, 1.0):
            strokes.append((a, b, LIMB_RADIUS * h))
    for side, leg in ((-1.0, pose.left_leg), (1.0, pose.right_leg)):
        hip = at(side * HIP_HALF_WIDTH, HIP_Y)
        strokes.append((at(0.0, HIP_Y), hip, LIMB_RADIUS * h))
        for a, b in _limb(hip, side, leg, THIGH * leg_scale, SHIN * leg_scale, -1.0):
            strokes.append((a, b, LIMB_RADIUS * h))

    cover = _coverage(np.hypot(_cols - AXIS_X, _rows - (CENTER_Y + h * HEAD_Y)), HEAD_RADIUS * h)
    for a, b, radius in strokes:
        np.maximum(cover, _coverage(_segment_distance(a, b), radius), out=cover)
    return BACKGROUND + (FOREGROUND - BACKGROUND) * cover
