"""
Scalar summaries of projected activation trajectories.

cyclicity scores how closely a trajectory repeats itself after a known
period; convergence compares late and early step sizes; trajectory_distance
measures how far apart two trajectories run in the projected space.
"""

import numpy as np

from utils.errors import DataError


def _as_trajectory(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim == 1:
        traj = traj[:, None]
    if traj.ndim != 2:
        raise DataError(f"Trajectory must be (steps, dims), got shape {traj.shape}")
    return traj


def lag_difference(traj, lag: int) -> float:
    """Mean squared distance between points `lag` steps apart."""
    traj = _as_trajectory(traj)
    diff = traj[lag:] - traj[:-lag]
    return float(np.mean(np.sum(diff ** 2, axis=1)))


def cyclicity(traj, period: int) -> float:
    """
    Periodicity score in [0, 1].

    1 - d(period) / mean(d(1..period)), clipped, where d(j) is the mean
    squared lag-j difference. A constant trajectory scores 0.

    Args:
        traj: (steps, dims) trajectory covering at least two periods
        period: Cycle length in steps

    Returns:
        Score, 1 for a perfectly periodic trajectory
    """
    traj = _as_trajectory(traj)
    if period < 1:
        raise DataError("Period must be positive")
    if len(traj) < 2 * period:
        raise DataError(f"Cyclicity needs at least two cycles ({2 * period} steps), got {len(traj)}")
    reference = np.mean([lag_difference(traj, j) for j in range(1, period + 1)])
    if reference <= 0:
        return 0.0
    return float(np.clip(1.0 - lag_difference(traj, period) / reference, 0.0, 1.0))


def step_displacements(traj) -> np.ndarray:
    traj = _as_trajectory(traj)
    return np.linalg.norm(np.diff(traj, axis=0), axis=1)


def convergence(traj) -> float:
    """
    Mean step size in the last quarter over the first quarter.

    Values well below 1 mean the trajectory settles toward a fixed point.
    A constant trajectory gives 0; a trajectory that starts still and then
    moves gives inf.
    """
    traj = _as_trajectory(traj)
    if len(traj) < 10:
        raise DataError(f"Convergence needs at least 10 steps, got {len(traj)}")
    moves = step_displacements(traj)
    quarter = max(1, len(moves) // 4)
    early = float(np.mean(moves[:quarter]))
    late = float(np.mean(moves[-quarter:]))
    if early == 0:
        return 0.0 if late == 0 else float("inf")
    return late / early


def trajectory_distance(a, b) -> float:
    """Symmetric mean nearest-neighbour (chamfer) distance between two point sets."""
    a = _as_trajectory(a)
    b = _as_trajectory(b)
    if a.shape[1] != b.shape[1]:
        raise DataError(f"Trajectories live in different spaces: {a.shape[1]} vs {b.shape[1]} dims")
    if len(a) == 0 or len(b) == 0:
        raise DataError("Trajectories must be non-empty")
    pairwise = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(0.5 * (pairwise.min(axis=1).mean() + pairwise.min(axis=0).mean()))
