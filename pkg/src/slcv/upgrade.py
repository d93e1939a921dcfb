"""Euclidean upgrading from a plane at infinity and one image of the absolute conic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cost import IAC, CostBreakdown
from .errors import ComplexPlane, DegenerateCamera, NoObservations, NonDefiniteIAC, TooFewSegments
from .geometry import as_matrix, fix_phase

COMPLEX_PLANE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MetricCamera:
    k: np.ndarray
    r: np.ndarray
    c: np.ndarray

    @property
    def focal(self) -> float:
        """Mean of the two diagonal focal entries (pixels)."""
        return float(0.5 * (self.k[0, 0] + self.k[1, 1]))

    @property
    def principal_point(self) -> np.ndarray:
        return self.k[:2, 2].copy()

    @property
    def skew(self) -> float:
        return float(self.k[0, 1])

    @property
    def aspect(self) -> float:
        return float(self.k[1, 1] / self.k[0, 0])

    def matrix(self, square_pixels: bool = False) -> np.ndarray:
        k = self.k
        if square_pixels:
            f = np.sqrt(k[0, 0] * k[1, 1])
            k = np.array([[f, 0, k[0, 2]], [0, f, k[1, 2]], [0, 0, 1.0]])
        return k @ self.r @ np.hstack([np.eye(3), -self.c[:, None]])


@dataclass(frozen=True, eq=False)
class UpgradeResult:
    h: np.ndarray
    cameras: list
    plane: np.ndarray
    iac1: IAC | None
    reprojection_rms: float | None = None
    breakdown: CostBreakdown | None = None
    diagnostics: dict = field(default_factory=dict)


def decompose_camera(p) -> MetricCamera:
    """Split a finite camera into ``K (R | -R C)`` with positive focal entries and ``det R = 1``."""
    p = np.array(as_matrix(p), dtype=float)
    m = p[:, :3]
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise DegenerateCamera("left 3x3 block is singular")
    if np.linalg.det(m) < 0:
        p, m = -p, -m
    k, r = scipy.linalg.rq(m)
    d = np.diag(np.sign(np.diag(k)))
    k, r = k @ d, d @ r
    c = -np.linalg.solve(m, p[:, 3])
    k = k / k[2, 2]
    return MetricCamera(k, r, c)


def _real_plane(pi) -> np.ndarray:
    pi = fix_phase(np.asarray(pi, dtype=complex))
    re, im = pi.real, pi.imag
    if np.linalg.norm(im) > COMPLEX_PLANE_TOL * np.linalg.norm(re):
        raise ComplexPlane("plane at infinity is not real")
    return re / np.linalg.norm(re)


def _affine_frame(pi: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose last row is the (unit) plane: it sends the plane to (0,0,0,1)."""
    u, _, _ = np.linalg.svd(pi[:, None])
    h = np.vstack([u[:, 1:].T, pi])
    if np.linalg.det(h) < 0:
        h[0] = -h[0]
    return h


def homography_from_plane_iac(pi, omega1, p1) -> np.ndarray:
    """Stratified upgrading homography ``H`` (points map as ``X -> H X``).

    The plane ``pi`` goes to infinity and the first camera's IAC becomes the
    image of the absolute conic.  The remaining similarity is fixed by putting
    the first camera at the origin with identity rotation.
    """
    pi = _real_plane(pi)
    if isinstance(omega1, IAC):
        frame, w = omega1.frame, omega1.omega
    else:
        frame, w = np.eye(3), np.asarray(omega1)
    w = np.real(w)
    w = 0.5 * (w + w.T)
    cam = np.linalg.solve(frame, as_matrix(p1))  # camera in the IAC's image frame
    ha = _affine_frame(pi)
    m1 = (cam @ ha.T)[:, :3]
    s = m1.T @ w @ m1
    s = s / np.linalg.norm(s)
    ev = np.linalg.eigvalsh(s)
    if ev[0] < 0 < ev[-1] or ev[0] == 0 or ev[-1] == 0:
        raise NonDefiniteIAC("Re(omega) is not definite")
    if ev[-1] < 0:
        s = -s
    s = s / np.cbrt(np.linalg.det(s))  # scale gauge: unit-determinant metric block
    a = np.linalg.cholesky(s).T
    h = scipy.linalg.block_diag(a, 1.0) @ ha
    # gauge: first camera at the origin, axis-aligned
    cam1 = decompose_camera(as_matrix(p1) @ np.linalg.inv(h))
    sim = np.eye(4)
    sim[:3, :3] = cam1.r
    sim[:3, 3] = -cam1.r @ cam1.c
    h = sim @ h
    return h / np.linalg.norm(h)


def upgrade_cameras(cameras, h) -> list:
    hinv = np.linalg.inv(h)
    return [decompose_camera(as_matrix(c) @ hinv) for c in cameras]


def reprojection_rms(recon, cameras=None, h=None, square_pixels: bool = False) -> float:
    """RMS pixel distance between observations and reprojected points.

    With ``cameras`` (metric cameras) the points are first mapped by ``h``;
    otherwise the reconstruction's own cameras and points are used.
    """
    obs = recon.observations
    if obs is None or len(obs) == 0 or recon.points is None:
        raise NoObservations("reconstruction has no observations")
    pts = recon.points
    if cameras is None:
        mats = [c.p for c in recon.cameras]
    else:
        mats = [c.matrix(square_pixels) for c in cameras]
        if h is not None:
            pts = pts @ np.asarray(h).T
    ci = obs[:, 0].astype(int)
    pi = obs[:, 1].astype(int)
    mats = np.array(mats)
    x = np.einsum("nij,nj->ni", mats[ci], pts[pi])
    uv = x[:, :2] / x[:, 2:]
    d = uv - obs[:, 2:]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def segment_length_stats(points, triplets, h=None):
    """Population std, mean and their ratio of the end-to-end lengths of bar triplets."""
    triplets = np.asarray(triplets, dtype=int).reshape(-1, 3)
    if len(triplets) < 2:
        raise TooFewSegments("need at least two bars")
    pts = np.asarray(points, dtype=float)
    if h is not None:
        pts = pts @ np.asarray(h).T
    x = pts[:, :3] / pts[:, 3:]
    lengths = np.linalg.norm(x[triplets[:, 0]] - x[triplets[:, 2]], axis=1)
    sigma = float(np.std(lengths))
    mu = float(np.mean(lengths))
    return sigma, mu, sigma / mu


def upgrade(recon, pi, omega1, camera_index: int = 0, breakdown=None, diagnostics=None) -> UpgradeResult:
    """Full upgrade: homography, decomposed cameras, reprojection error."""
    h = homography_from_plane_iac(pi, omega1, recon.cameras[camera_index])
    cams = upgrade_cameras(recon.cameras, h)
    rms = None
    if recon.observations is not None and len(recon.observations) and recon.points is not None:
        rms = reprojection_rms(recon, cams, h)
    plane = _real_plane(pi)
    return UpgradeResult(h, cams, plane, omega1 if isinstance(omega1, IAC) else None,
                         rms, breakdown, dict(diagnostics or {}))

