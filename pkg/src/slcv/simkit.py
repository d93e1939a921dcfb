"""Synthetic metric scenes, projective scrambling and scoring.

Randomness comes from numpy's PCG64 generator seeded through ``SeedSequence``;
separate child streams drive cameras, points, the scramble and the noise, so
changing e.g. the noise level does not move the cameras.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, Mismatch, SpecInfeasible
from .geometry import ProjectionMatrix, angle_between, optical_center
from .recon import Reconstruction
from .upgrade import MetricCamera, UpgradeResult, reprojection_rms, segment_length_stats

MAX_RETRIES = 50


@dataclass(frozen=True)
class SceneSpec:
    n_cameras: int = 5
    focal_range: tuple = (800.0, 1200.0)
    pp_offset_range: tuple = (0.0, 40.0)
    image_size: tuple = (1280.0, 960.0)
    n_points: int = 100
    n_bar_triplets: int = 20
    bar_length: float = 0.5
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_cameras < 2:
            raise InputError("a scene needs at least two cameras")
        lo, hi = self.focal_range
        if not 0 < lo <= hi:
            raise InputError("focal range must be positive")
        plo, phi = self.pp_offset_range
        if not 0 <= plo <= phi:
            raise InputError("principal-point offset range must be nonnegative")
        if self.noise_sigma < 0:
            raise InputError("noise level must be nonnegative")
        if self.n_points < 0 or self.n_bar_triplets < 0 or self.bar_length <= 0:
            raise InputError("invalid point or bar counts")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    cameras: list          # MetricCamera, metric frame
    points: np.ndarray     # (n, 4) metric homogeneous points
    triplets: np.ndarray   # (t, 3) indices: end, midpoint, end
    plane: np.ndarray      # plane at infinity in the scrambled frame
    scramble: np.ndarray   # X_scrambled = scramble @ X_metric


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(4)]


def _look_at(center: np.ndarray, target: np.ndarray, rng) -> np.ndarray:
    z = target - center
    z /= np.linalg.norm(z)
    up = rng.standard_normal(3)
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def _small_rotation(rng, angle: float) -> np.ndarray:
    w = rng.standard_normal(3)
    w *= angle / np.linalg.norm(w)
    k = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    th = np.linalg.norm(w)
    kn = k / th
    return np.eye(3) + np.sin(th) * kn + (1 - np.cos(th)) * kn @ kn


def _make_points(spec: SceneSpec, rng):
    pts = list(rng.uniform(-1, 1, (spec.n_points, 3)))
    triplets = []
    for _ in range(spec.n_bar_triplets):
        mid = rng.uniform(-0.7, 0.7, 3)
        d = rng.standard_normal(3)
        d *= spec.bar_length / (2 * np.linalg.norm(d))
        base = len(pts)
        pts.extend([mid - d, mid, mid + d])
        triplets.append([base, base + 1, base + 2])
    x = np.array(pts).reshape(-1, 3)
    return np.hstack([x, np.ones((len(x), 1))]), np.array(triplets, dtype=int).reshape(-1, 3)


def _make_cameras(spec: SceneSpec, rng, points: np.ndarray):
    w, h = spec.image_size
    radius = np.max(np.linalg.norm(points[:, :3], axis=1)) if len(points) else 1.0
    cams = []
    for _ in range(spec.n_cameras):
        f = rng.uniform(*spec.focal_range)
        off = rng.uniform(*spec.pp_offset_range, size=2) * rng.choice([-1, 1], size=2)
        u0, v0 = w / 2 + off[0], h / 2 + off[1]
        k = np.array([[f, 0, u0], [0, f, v0], [0, 0, 1.0]])
        # distance at which the cloud fits in the image with a margin
        half = min(u0, w - u0, v0, h - v0) * 0.8
        if half <= 0:
            raise SpecInfeasible("principal point offset leaves no image area")
        dist = radius * (1 + f / half) * rng.uniform(1.3, 1.8)
        d = rng.standard_normal(3)
        c = d / np.linalg.norm(d) * dist
        # optical axes through a common point make the focal lengths ambiguous,
        # so each camera aims at its own random point of the cloud
        target = rng.uniform(-0.5, 0.5, 3)
        r = _small_rotation(rng, 0.03) @ _look_at(c, target, rng)
        cams.append(MetricCamera(k, r, c))
    return cams


def _visible(cams, points, size) -> bool:
    w, h = size
    for cam in cams:
        x = points @ cam.matrix().T
        if np.any(x[:, 2] <= 0):
            return False
        uv = x[:, :2] / x[:, 2:]
        if np.any(uv < 0) or np.any(uv[:, 0] > w) or np.any(uv[:, 1] > h):
            return False
    return True


def _generic(mats) -> bool:
    """No optical center on (or very near) another camera's principal plane."""
    centers = [optical_center(p) for p in mats]
    for i, p in enumerate(mats):
        plane = p[2] / np.linalg.norm(p[2])
        for j, c in enumerate(centers):
            if i != j and abs(plane @ c) < 1e-3 * np.linalg.norm(c):
                return False
    return True


def _scramble(rng) -> np.ndarray:
    while True:
        h = np.eye(4) + rng.uniform(-0.3, 0.3, (4, 4))
        if np.linalg.cond(h) < 100:
            return h


def _dlt_resection(x3: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Camera from 3D-2D correspondences (normalized DLT)."""
    t = _similarity_3d(x3)
    s = _similarity_2d(uv)
    xn = x3 @ t.T
    un = np.hstack([uv, np.ones((len(uv), 1))]) @ s.T
    rows = []
    for xx, (u, v, _) in zip(xn, un):
        rows.append(np.concatenate([np.zeros(4), -xx, v * xx]))
        rows.append(np.concatenate([xx, np.zeros(4), -u * xx]))
    _, _, vh = np.linalg.svd(np.array(rows))
    p = vh[-1].reshape(3, 4)
    return np.linalg.solve(s, p) @ t


def _dlt_triangulate(mats: np.ndarray, uv: np.ndarray) -> np.ndarray:
    rows = []
    for p, (u, v) in zip(mats, uv):
        p = p / np.linalg.norm(p)
        rows.append(u * p[2] - p[0])
        rows.append(v * p[2] - p[1])
    _, _, vh = np.linalg.svd(np.array(rows))
    x = vh[-1]
    return x / np.linalg.norm(x)


def _similarity_3d(x: np.ndarray) -> np.ndarray:
    e = x[:, :3] / x[:, 3:]
    c = e.mean(axis=0)
    s = np.sqrt(3) / np.mean(np.linalg.norm(e - c, axis=1))
    t = np.eye(4)
    t[:3, :3] *= s
    t[:3, 3] = -s * c
    return t


def _similarity_2d(uv: np.ndarray) -> np.ndarray:
    c = uv.mean(axis=0)
    s = np.sqrt(2) / np.mean(np.linalg.norm(uv - c, axis=1))
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _noisy_reconstruction(mats, points, obs):
    """Projective cameras and points re-estimated from noisy observations."""
    n_cam = len(mats)
    pts_aff = points / points[:, 3:]
    new_mats = []
    for i in range(n_cam):
        sel = obs[:, 0] == i
        new_mats.append(_dlt_resection(pts_aff[obs[sel, 1].astype(int)], obs[sel, 2:]))
    new_mats = np.array(new_mats)
    new_pts = np.empty_like(points)
    for j in range(len(points)):
        sel = obs[:, 1] == j
        new_pts[j] = _dlt_triangulate(new_mats[obs[sel, 0].astype(int)], obs[sel, 2:])
    return new_mats, new_pts


def make_scene(spec: SceneSpec):
    """Random metric scene seen by square-pixel cameras, handed out in a scrambled frame.

    Returns ``(truth, reconstruction)``.
    """
    rng_cam, rng_pts, rng_scr, rng_noise = _streams(spec.seed)
    points, triplets = _make_points(spec, rng_pts)
    if len(points) < 6:
        raise SpecInfeasible("need at least six points")
    for _ in range(MAX_RETRIES):
        cams = _make_cameras(spec, rng_cam, points)
        if _visible(cams, points, spec.image_size) and _generic([c.matrix() for c in cams]):
            break
    else:
        raise SpecInfeasible("could not place cameras that see the whole cloud")
    for _ in range(MAX_RETRIES):
        h = _scramble(rng_scr)
        hinv = np.linalg.inv(h)
        mats = np.array([c.matrix() @ hinv for c in cams])
        mats /= np.linalg.norm(mats, axis=(1, 2), keepdims=True)
        if _generic(mats):
            break
    else:
        raise SpecInfeasible("could not draw a generic scramble")
    spts = points @ h.T
    spts /= np.linalg.norm(spts, axis=1, keepdims=True)
    obs = []
    for i, cam in enumerate(cams):
        x = points @ cam.matrix().T
        uv = x[:, :2] / x[:, 2:]
        if spec.noise_sigma > 0:
            uv = uv + rng_noise.normal(0, spec.noise_sigma, uv.shape)
        obs.append(np.column_stack([np.full(len(uv), i), np.arange(len(uv)), uv]))
    obs = np.vstack(obs)
    if spec.noise_sigma > 0:
        mats, spts = _noisy_reconstruction(mats, spts, obs)
        mats /= np.linalg.norm(mats, axis=(1, 2), keepdims=True)
    w, hh = spec.image_size
    recon = Reconstruction(
        tuple(ProjectionMatrix(p, w, hh) for p in mats), spts, obs, triplets
    )
    plane = hinv.T @ np.array([0, 0, 0, 1.0])
    truth = GroundTruth(cams, points, triplets, plane / np.linalg.norm(plane), h)
    return truth, recon


@dataclass(frozen=True, eq=False)
class Score:
    focal_rel_errors: np.ndarray
    pp_errors: np.ndarray
    plane_angle: float
    sigma_mu: float | None
    rms: float | None
    skew: np.ndarray = field(default=None)
    aspect_errors: np.ndarray = field(default=None)

    def as_dict(self) -> dict:
        return {
            "focal_rel_error_mean": float(np.mean(self.focal_rel_errors)),
            "focal_rel_error_max": float(np.max(self.focal_rel_errors)),
            "pp_error_mean": float(np.mean(self.pp_errors)),
            "pp_error_std": float(np.std(self.pp_errors)),
            "plane_angle": self.plane_angle,
            "sigma_mu": self.sigma_mu,
            "rms": self.rms,
        }


def score(result: UpgradeResult, truth: GroundTruth, recon: Reconstruction | None = None) -> Score:
    """Compare a recovered calibration with the ground truth."""
    if len(result.cameras) != len(truth.cameras):
        raise Mismatch("camera counts differ")
    f_err = np.array([abs(r.focal - t.focal) / t.focal for r, t in zip(result.cameras, truth.cameras)])
    pp_err = np.array([np.linalg.norm(r.principal_point - t.principal_point)
                       for r, t in zip(result.cameras, truth.cameras)])
    skew = np.array([abs(r.skew) / r.focal for r in result.cameras])
    aspect = np.array([abs(r.aspect - 1) for r in result.cameras])
    angle = angle_between(result.plane, truth.plane)
    sm = rms = None
    if recon is not None and recon.points is not None:
        if recon.triplets is not None and len(recon.triplets) >= 2:
            sm = segment_length_stats(recon.points, recon.triplets, result.h)[2]
        if recon.observations is not None and len(recon.observations):
            rms = reprojection_rms(recon, result.cameras, result.h)
    return Score(f_err, pp_err, angle, sm, rms, skew, aspect)


def true_result(truth: GroundTruth, recon: Reconstruction) -> UpgradeResult:
    """The ideal upgrade (inverse scramble) expressed as an UpgradeResult."""
    return UpgradeResult(np.linalg.inv(truth.scramble), list(truth.cameras), truth.plane, None,
                         reprojection_rms(recon) if recon.observations is not None else None)
