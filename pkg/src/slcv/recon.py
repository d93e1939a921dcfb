"""Projective reconstruction container."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import ProjectionMatrix


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Cameras plus optional 3D points, image observations and bar triplets.

    ``observations`` rows are ``(camera, point, u, v)``; ``triplets`` rows are
    point indices ``(end, middle, end)`` of rigid equidistant bars.
    """

    cameras: tuple
    points: np.ndarray | None = None
    observations: np.ndarray | None = None
    triplets: np.ndarray | None = None

    def __post_init__(self):
        cams = tuple(c if isinstance(c, ProjectionMatrix) else ProjectionMatrix(c) for c in self.cameras)
        object.__setattr__(self, "cameras", cams)
        if self.points is not None:
            pts = np.array(self.points, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 4:
                raise InputError("points must be homogeneous 4-vectors")
            object.__setattr__(self, "points", pts)
        if self.observations is not None:
            obs = np.array(self.observations, dtype=float).reshape(-1, 4)
            if len(obs):
                cam = obs[:, 0]
                if np.any(cam < 0) or np.any(cam >= len(cams)) or np.any(cam != np.round(cam)):
                    raise InputError("observation references an unknown camera")
                n = 0 if self.points is None else len(self.points)
                pt = obs[:, 1]
                if np.any(pt < 0) or np.any(pt >= n) or np.any(pt != np.round(pt)):
                    raise InputError("observation references an unknown point")
            object.__setattr__(self, "observations", obs)
        if self.triplets is not None:
            tri = np.array(self.triplets, dtype=int).reshape(-1, 3)
            n = 0 if self.points is None else len(self.points)
            if len(tri) and (tri.min() < 0 or tri.max() >= n):
                raise InputError("triplet references an unknown point")
            object.__setattr__(self, "triplets", tri)

    @property
    def matrices(self) -> np.ndarray:
        return np.array([c.p for c in self.cameras])

    def subset(self, indices) -> "Reconstruction":
        """Reconstruction restricted to some cameras (observations re-indexed)."""
        indices = list(indices)
        obs = None
        if self.observations is not None:
            remap = {old: new for new, old in enumerate(indices)}
            rows = [(remap[int(o[0])], o[1], o[2], o[3]) for o in self.observations if int(o[0]) in remap]
            obs = np.array(rows, dtype=float).reshape(-1, 4)
        return Reconstruction(tuple(self.cameras[i] for i in indices), self.points, obs, self.triplets)
