"""SVG projection of a reachable tube"""
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from lpreach.models.schemas import ObstacleSpec
from lpreach.services.reach import Trajectory

logger = logging.getLogger(__name__)


def plot_tube(
    traj: Trajectory,
    path: Path,
    coords: Sequence[int] = (0, 1),
    obstacle: Optional[ObstacleSpec] = None,
    samples: Optional[np.ndarray] = None,
    every: int = 1,
    title: Optional[str] = None,
) -> Path:
    """
    Draw the projection of each stored box onto two state coordinates

    Args:
        samples: optional (steps + 1, N, n) point trajectories drawn on top
        every: draw every ``every``-th box
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    try:
        if len(coords) == 1:
            # 1-D: interval against time
            i = coords[0]
            ax.fill_between(traj.times, traj.y_lo[:, i], traj.y_hi[:, i], alpha=0.4, color="tab:blue")
            if obstacle is not None:
                c = obstacle.center[0]
                ax.axhspan(c - obstacle.radius, c + obstacle.radius, color="tab:red", alpha=0.3)
            ax.set_xlabel("t")
            ax.set_ylabel(f"x{i}")
            return _save(fig, ax, path, title)

        i, j = coords
        for s in range(0, traj.length, max(every, 1)):
            lo_i, lo_j = traj.y_lo[s, i], traj.y_lo[s, j]
            ax.add_patch(Rectangle(
                (lo_i, lo_j), traj.y_hi[s, i] - lo_i, traj.y_hi[s, j] - lo_j,
                fill=False, linewidth=0.5, edgecolor="tab:blue",
            ))
        if samples is not None:
            for k in range(samples.shape[1]):
                ax.plot(samples[:, k, i], samples[:, k, j], linewidth=0.3, color="0.4", alpha=0.5)
        if obstacle is not None and len(obstacle.center) >= 2:
            ax.add_patch(Circle(tuple(obstacle.center[:2]), obstacle.radius, color="tab:red", alpha=0.3))
        ax.autoscale_view()
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel(f"x{i}")
        ax.set_ylabel(f"x{j}")
        return _save(fig, ax, path, title)
    finally:
        plt.close(fig)


def _save(fig, ax, path: Path, title: Optional[str]) -> Path:
    if title:
        ax.set_title(title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    logger.debug(f"Wrote tube plot to {path}")
    return path
