"""Complex projective geometry: Pluecker lines, Veronese maps, conics, cameras.

Homogeneous points and planes are plain numpy vectors (complex where needed).
A spatial line is stored as its 4x4 antisymmetric Pluecker matrix in *point*
form, so that ``L @ plane`` is the intersection point of the line and the plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCamera, DegenerateInput, RankDeficient, SingularTransform

# singular-value ratio below which two vectors count as proportional
PROPORTIONAL_TOL = 1e-12
DEFAULT_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """A 3x4 camera matrix with the size of its image in pixels."""

    p: np.ndarray
    width: float = 1280.0
    height: float = 960.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class PixelShape:
    """Aspect ratio ``tau = m_y/m_x`` and skew angle ``theta`` (radians)."""

    tau: float = 1.0
    theta: float = np.pi / 2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("aspect ratio must be positive")
        if not 0 < self.theta < np.pi:
            raise ValueError("skew angle must lie in (0, pi)")


def as_matrix(p) -> np.ndarray:
    """Return the raw 3x4 array of a ProjectionMatrix or array-like."""
    if isinstance(p, ProjectionMatrix):
        return p.p
    return np.asarray(p)


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    n = np.linalg.norm(v)
    if n == 0:
        raise DegenerateInput("zero vector has no projective meaning")
    return v / n


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Unit-normalize ``v`` and rotate its phase so the largest entry is real positive."""
    v = normalize(v)
    flat = v.ravel()
    k = np.argmax(np.abs(flat))
    return v * (np.abs(flat[k]) / flat[k])


def proportional(u, v, rtol: float = DEFAULT_RTOL) -> bool:
    """True when ``u`` and ``v`` are equal up to a nonzero complex scale."""
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return False
    u = u / nu
    v = v / nv
    return abs(1.0 - abs(np.vdot(u, v))) <= rtol


def angle_between(u, v) -> float:
    """Angle between two homogeneous vectors seen as points of projective space."""
    u = normalize(np.asarray(u).ravel())
    v = normalize(np.asarray(v).ravel())
    c = min(1.0, abs(np.vdot(u, v)))
    # acos loses precision near 1; use the sine of the angle instead
    s = np.linalg.norm(v - np.vdot(u, v) * u)
    return float(np.arctan2(s, c))


def _check_not_proportional(p, q):
    s = np.linalg.svd(np.vstack([p, q]), compute_uv=False)
    if s[0] == 0 or s[1] / s[0] < PROPORTIONAL_TOL:
        raise DegenerateInput("points are proportional")


def join_matrix(a, b) -> np.ndarray:
    """``a b^T - b a^T`` with no checks (the M(a, b) operator)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.multiply.outer(a, b) - np.multiply.outer(b, a)


def plucker_from_points(p, q) -> np.ndarray:
    """Pluecker matrix ``p q^T - q p^T`` of the line through two points."""
    p = np.asarray(p)
    q = np.asarray(q)
    _check_not_proportional(p, q)
    return join_matrix(p, q)


def plucker_dual(m: np.ndarray) -> np.ndarray:
    """Swap between the point form and the plane form of a Pluecker matrix."""
    m = np.asarray(m)
    d = np.zeros_like(m)
    d[..., 0, 1] = m[..., 2, 3]
    d[..., 0, 2] = m[..., 3, 1]
    d[..., 0, 3] = m[..., 1, 2]
    d[..., 1, 2] = m[..., 0, 3]
    d[..., 1, 3] = m[..., 2, 0]
    d[..., 2, 3] = m[..., 0, 1]
    return d - np.swapaxes(d, -1, -2)


def line_plane_meet(m: np.ndarray, plane, rtol: float = 1e-12):
    """Intersection point of a line and a plane, or ``None`` if the line lies in it."""
    plane = np.asarray(plane)
    x = np.asarray(m) @ plane
    scale = np.linalg.norm(m) * np.linalg.norm(plane)
    if np.linalg.norm(x) <= rtol * scale:
        return None
    return x


def line_contains(m: np.ndarray, x, rtol: float = 1e-9) -> bool:
    """True when the point ``x`` lies on the line (point-form matrix ``m``)."""
    x = np.asarray(x)
    r = plucker_dual(m) @ x
    return np.linalg.norm(r) <= rtol * np.linalg.norm(m) * np.linalg.norm(x)


def plucker_transform(m: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Express a line in new coordinates ``X' = h X``."""
    h = np.asarray(h)
    s = np.linalg.svd(h, compute_uv=False)
    if s[-1] <= 1e-14 * s[0]:
        raise SingularTransform("coordinate change is singular")
    return h @ m @ h.T


def veronese2(x: np.ndarray) -> np.ndarray:
    """Degree-2 Veronese map of 3-vectors; works over leading axes."""
    x = np.asarray(x)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x1 * x1, x1 * x2, x1 * x3, x2 * x2, x2 * x3, x3 * x3], axis=-1)


_V3_I, _V3_J = np.triu_indices(4)


def veronese3(x: np.ndarray) -> np.ndarray:
    """Degree-2 Veronese map of 4-vectors (10 monomials, lexicographic)."""
    x = np.asarray(x)
    return x[..., _V3_I] * x[..., _V3_J]


def conic_coefficients(c: np.ndarray) -> np.ndarray:
    """Coefficient vector ``cbar`` with ``veronese2(x) @ cbar == x^T c x``."""
    c = np.asarray(c)
    return np.stack(
        [c[..., 0, 0], 2 * c[..., 0, 1], 2 * c[..., 0, 2],
         c[..., 1, 1], 2 * c[..., 1, 2], c[..., 2, 2]],
        axis=-1,
    )


def conic_from_coefficients(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`conic_coefficients` (symmetric 3x3 matrix)."""
    k = np.asarray(k)
    c = np.empty(k.shape[:-1] + (3, 3), dtype=k.dtype)
    c[..., 0, 0] = k[..., 0]
    c[..., 1, 1] = k[..., 3]
    c[..., 2, 2] = k[..., 5]
    c[..., 0, 1] = c[..., 1, 0] = k[..., 1] / 2
    c[..., 0, 2] = c[..., 2, 0] = k[..., 2] / 2
    c[..., 1, 2] = c[..., 2, 1] = k[..., 4] / 2
    return c


def _unit_rows(points: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(points, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise RankDeficient("zero point cannot constrain a conic")
    return points / n


def conic_fit(points, rank_tol: float = 1e-10) -> np.ndarray:
    """Conic through five or more (complex) points of the projective plane.

    The coefficient vector is the right singular vector of the stacked Veronese
    rows for the smallest singular value.  Raises :class:`RankDeficient` when a
    second conic fits equally well.
    """
    pts = _unit_rows(np.asarray(points, dtype=complex))
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 5:
        raise DegenerateInput("conic_fit needs at least five 3-vectors")
    a = veronese2(pts)
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    s = np.concatenate([s, np.zeros(6 - len(s))])
    if s[4] <= rank_tol * s[0]:
        raise RankDeficient("points do not determine a unique conic")
    return normalize(conic_from_coefficients(vh[-1].conj()))


def points_on_conic_residual(points) -> float:
    """Smallest singular value of the 6x6 Veronese matrix with unit columns.

    Zero exactly when the six points lie on a common conic.
    """
    pts = np.asarray(points, dtype=complex)
    if pts.shape != (6, 3):
        raise DegenerateInput("need exactly six 3-vectors")
    cols = veronese2(pts)
    cols = cols / np.linalg.norm(cols, axis=1, keepdims=True)
    return float(np.linalg.svd(cols.T, compute_uv=False)[-1])


def optical_center(p) -> np.ndarray:
    """Null vector of the camera matrix, unit norm, last coordinate >= 0."""
    p = as_matrix(p)
    _, s, vh = np.linalg.svd(p)
    if s[2] <= 1e-12 * s[0]:
        raise DegenerateCamera("camera matrix has rank < 3")
    c = vh[-1]
    k = 3 if abs(c[3]) > 1e-14 else int(np.argmax(np.abs(c)))
    return c if c[k] > 0 else -c


def principal_plane(p) -> np.ndarray:
    """Third row of the camera matrix."""
    return np.array(as_matrix(p)[2], dtype=float)


def is_finite_camera(p, rtol: float = 1e-12) -> bool:
    m = as_matrix(p)[:, :3]
    s = np.linalg.svd(m, compute_uv=False)
    return bool(s[-1] > rtol * s[0])


def isotropic_lines(p) -> tuple[np.ndarray, np.ndarray]:
    """Back-projections of the cyclic points ``(1, +-i, 0)``, unit Frobenius norm.

    The first line is ``(M(p3, p2 + i p1))*``; the second is its complex conjugate.
    """
    pm = as_matrix(p).astype(float)
    if not is_finite_camera(pm):
        raise DegenerateCamera("isotropic lines need a finite camera")
    p1, p2, p3 = pm
    line = plucker_dual(join_matrix(p3, p2 + 1j * p1))
    line = line / np.linalg.norm(line)
    return line, line.conj()


def pixel_shape_matrix(shape: PixelShape) -> np.ndarray:
    """Affine image transform that turns a camera of this pixel shape into a square-pixel one."""
    return np.array(
        [[shape.tau, np.cos(shape.theta), 0.0],
         [0.0, np.sin(shape.theta), 0.0],
         [0.0, 0.0, 1.0]]
    )


def pixel_shape_normalize(p, shape: PixelShape):
    """Apply :func:`pixel_shape_matrix` to a camera; keeps the ProjectionMatrix wrapper."""
    a = pixel_shape_matrix(shape)
    if isinstance(p, ProjectionMatrix):
        return ProjectionMatrix(a @ p.p, p.width, p.height)
    return a @ np.asarray(p)


def image_frame(width: float, height: float) -> np.ndarray:
    """Map from normalized image coordinates (centred, ~[-1, 1]) to pixels."""
    s = max(width, height) / 2.0
    return np.array([[s, 0.0, width / 2.0], [0.0, s, height / 2.0], [0.0, 0.0, 1.0]])


def plane_basis(plane) -> np.ndarray:
    """Orthonormal 4x3 basis of the points lying on a (complex) plane."""
    plane = np.asarray(plane, dtype=complex).reshape(1, 4)
    _, _, vh = np.linalg.svd(plane)
    return vh[1:].conj().T


def meets_in_plane_coordinates(lines: np.ndarray, plane) -> np.ndarray:
    """Intersections of lines with a plane, written in a basis of that plane."""
    basis = plane_basis(plane)
    x = np.asarray(lines) @ np.asarray(plane)
    coords, *_ = np.linalg.lstsq(basis, x.T, rcond=None)
    return coords.T
