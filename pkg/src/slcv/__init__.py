"""Euclidean upgrading of projective reconstructions taken by square-pixel cameras.

The plane at infinity is searched along a one-parameter family of candidate
planes cut out by the degree-5 variety of planes meeting the six isotropic
lines of three cameras in six points of a conic.
"""
from .cost import CostWeights, IAC, c0, c1, c2, c3, c4, normalize_iac
from .errors import InputError, SLCVError
from .geometry import PixelShape, ProjectionMatrix
from .kernels import BACKEND
from .recon import Reconstruction
from .search import (
    GridSpec,
    SLCVConfig,
    calibrate_daq,
    calibrate_grid3d,
    calibrate_slcv,
    grid_search,
    refine,
    sample_grid,
)
from .simkit import SceneSpec, make_scene, score
from .upgrade import MetricCamera, UpgradeResult, upgrade
from .variety import CameraTriple, candidate_planes, evalF, evalG, quintic_on_line

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CameraTriple", "CostWeights", "GridSpec", "IAC", "InputError", "MetricCamera",
    "PixelShape", "ProjectionMatrix", "Reconstruction", "SLCVConfig", "SLCVError", "SceneSpec",
    "UpgradeResult", "c0", "c1", "c2", "c3", "c4", "calibrate_daq", "calibrate_grid3d",
    "calibrate_slcv", "candidate_planes", "evalF", "evalG", "grid_search", "make_scene",
    "normalize_iac", "quintic_on_line", "refine", "sample_grid", "score", "upgrade",
]
