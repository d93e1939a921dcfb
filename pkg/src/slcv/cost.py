"""Candidate image-of-absolute-conic construction and the compatibility cost.

For a candidate plane at infinity ``chi`` the six isotropic lines of the camera
triple meet ``chi`` in six points.  Projecting those points into any camera and
fitting a conic gives that camera's candidate IAC.  Four nonnegative terms
score how far each IAC is from a plausible square-pixel camera:

* C1: how complex the IAC is after the best phase rotation,
* C2: how far ``Re(omega)`` is from definite,
* C3: deviation from unit aspect ratio and zero skew,
* C4: taxicab distance of the principal point outside the image.

C1-C3 are computed in a normalized image frame (centred, half-size unit) so the
weights do not depend on the image resolution; C4 is measured in pixels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContainedLine, DegenerateAdjoint, IllConditioned, RankDeficient, ZeroMatrix
from .geometry import ProjectionMatrix, conic_from_coefficients, image_frame, veronese2

CONIC_RANK_TOL = 1e-10
MEET_TOL = 1e-12
MINOR_TOL = 1e-12
_IU = np.triu_indices(3)


@dataclass(frozen=True, eq=False)
class IAC:
    """Candidate image of the absolute conic.

    ``omega`` is expressed in the normalized image frame ``frame`` (pixels =
    ``frame @ normalized``); use :meth:`pixel` for pixel coordinates.
    """

    omega: np.ndarray
    normalized: bool = False
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))

    def pixel(self) -> np.ndarray:
        finv = np.linalg.inv(self.frame)
        return finv.T @ self.omega @ finv


@dataclass(frozen=True)
class CostWeights:
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    gamma4: float = 1.0

    def __post_init__(self):
        if min(self.as_array()) < 0:
            raise ValueError("cost weights must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2, self.gamma3, self.gamma4], dtype=float)


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    terms: np.ndarray      # (n_cameras, 4): C1..C4 per camera (inf when infeasible)
    weighted: np.ndarray   # (n_cameras,)
    c0: float
    plane: np.ndarray


# ---------------------------------------------------------------- normalization
def _phase_rotation(omega: np.ndarray) -> np.ndarray:
    """Unit complex ``s`` maximizing ``||Re(s omega)||_F`` (batched over leading axes)."""
    u, v = omega.real, omega.imag
    a = np.sum(u * u, axis=(-2, -1))
    b = np.sum(u * v, axis=(-2, -1))
    c = np.sum(v * v, axis=(-2, -1))
    # ||Re(e^{i phi} omega)||^2 = x^T [[a, -b], [-b, c]] x with x = (cos phi, sin phi);
    # the leading eigenvector angle of a symmetric 2x2 matrix has a closed form
    phi = 0.5 * np.arctan2(-2 * b, a - c)
    return np.exp(1j * phi)


def _normalize(omega: np.ndarray) -> np.ndarray:
    s = _phase_rotation(omega)
    w = omega * s[..., None, None]
    w = w / np.linalg.norm(w, axis=(-2, -1))[..., None, None]
    # resolve the remaining sign: largest real entry positive
    flat = w.real.reshape(w.shape[:-2] + (9,))
    k = np.argmax(np.abs(flat), axis=-1)
    sign = np.sign(np.take_along_axis(flat, k[..., None], axis=-1)[..., 0])
    sign = np.where(sign == 0, 1.0, sign)
    return w * sign[..., None, None]


def normalize_iac(omega, frame=None) -> IAC:
    """Rotate the phase of ``omega`` to make it as real as possible, then scale to unit norm."""
    if isinstance(omega, IAC):
        frame = omega.frame if frame is None else frame
        omega = omega.omega
    omega = np.asarray(omega, dtype=complex)
    if np.linalg.norm(omega) == 0:
        raise ZeroMatrix("cannot normalize the zero matrix")
    return IAC(_normalize(omega), True, np.eye(3) if frame is None else np.asarray(frame, float))


# ---------------------------------------------------------------- terms
def _mat(omega) -> np.ndarray:
    return omega.omega if isinstance(omega, IAC) else np.asarray(omega)


def _c1(w):
    u = w.real[..., _IU[0], _IU[1]]
    v = w.imag[..., _IU[0], _IU[1]]
    uu = np.sum(u * u, -1)
    vv = np.sum(v * v, -1)
    uv = np.sum(u * v, -1)
    # ||u v^T - v u^T||_F^2 = 2(|u|^2 |v|^2 - (u.v)^2)
    num = np.sqrt(np.maximum(2 * (uu * vv - uv * uv), 0))
    return num / (uu + vv)


def c1(omega) -> float:
    """Imaginary-part penalty ``||u v^T - v u^T||_F / (|u|^2 + |v|^2)``."""
    return float(_c1(np.asarray(_mat(omega), dtype=complex)))


def _g(a):
    d1 = a[..., 0, 0]
    d2 = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    d3 = np.linalg.det(a)
    return -(np.minimum(0, d1) + np.minimum(0, d2) + np.minimum(0, d3))


def _c2(w):
    r = w.real
    return np.minimum(_g(r), _g(-r)) + 0.0  # no negative zero


def c2(omega) -> float:
    """Definiteness penalty from the leading principal minors of ``+-Re(omega)``."""
    return float(_c2(np.asarray(_mat(omega), dtype=complex)))


def _c3(w):
    r = w.real
    w11, w22, w12 = r[..., 0, 0], r[..., 1, 1], r[..., 0, 1]
    bad = (np.abs(w11) < MINOR_TOL) | (np.abs(w22) < MINOR_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau2 = w11 / w22
        cos2 = w12 * w12 / (w11 * w22)
        out = np.abs(tau2 - 1) + np.abs(cos2)
    return np.where(bad, np.inf, out)


def c3(omega) -> float:
    """Pixel-shape penalty ``|tau^2 - 1| + cos^2(theta)`` with ``tau^2 = w11/w22``."""
    w = np.asarray(_mat(omega), dtype=complex)
    r = w.real
    if abs(r[0, 0]) < MINOR_TOL or abs(r[1, 1]) < MINOR_TOL:
        raise IllConditioned("omega_11 or omega_22 vanishes")
    return float(_c3(w))


def _adjugate(a):
    """Adjugate of (a stack of) 3x3 matrices via cofactors."""
    adj = np.empty_like(a)
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = a[..., r[0], c[0]] * a[..., r[1], c[1]] - a[..., r[0], c[1]] * a[..., r[1], c[0]]
            adj[..., i, j] = (-1) ** (i + j) * minor
    return adj


def _principal_point(w):
    """Principal point of ``Re(w)`` from its adjugate; nan where undefined."""
    adj = _adjugate(w.real)
    a33 = adj[..., 2, 2]
    scale = np.linalg.norm(adj, axis=(-2, -1))
    bad = np.abs(a33) <= MINOR_TOL * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        pp = np.stack([adj[..., 0, 2] / a33, adj[..., 1, 2] / a33], axis=-1)
    pp[bad] = np.nan
    return pp


def _box_distance(pp, width, height):
    u, v = pp[..., 0], pp[..., 1]
    du = np.maximum(0, -u) + np.maximum(0, u - width)
    dv = np.maximum(0, -v) + np.maximum(0, v - height)
    return np.where(np.isnan(u) | np.isnan(v), np.inf, du + dv)


def c4(omega, width: float, height: float, frame=None) -> float:
    """Taxicab distance from the principal point to the image box ``[0,W] x [0,H]``.

    ``frame`` maps the coordinates ``omega`` is written in to pixels; by
    default it is taken from the IAC (identity for a plain matrix).
    """
    if frame is None:
        frame = omega.frame if isinstance(omega, IAC) else np.eye(3)
    pp = _principal_point(np.asarray(_mat(omega), dtype=complex))
    if np.any(np.isnan(pp)):
        raise DegenerateAdjoint("adjugate entry (3,3) vanishes")
    pix = np.asarray(frame, float) @ np.array([pp[0], pp[1], 1.0])
    return float(_box_distance(pix[:2] / pix[2], width, height))


def principal_point(omega) -> np.ndarray:
    """Principal point in pixels of an IAC (uses the IAC frame)."""
    frame = omega.frame if isinstance(omega, IAC) else np.eye(3)
    pp = _principal_point(np.asarray(_mat(omega), dtype=complex))
    if np.any(np.isnan(pp)):
        raise DegenerateAdjoint("adjugate entry (3,3) vanishes")
    pix = frame @ np.array([pp[0], pp[1], 1.0])
    return pix[:2] / pix[2]


# ---------------------------------------------------------------- context
@dataclass(frozen=True, eq=False)
class CostContext:
    """Everything needed to score planes: all cameras, the triple's lines, weights."""

    cameras: tuple
    lines: np.ndarray            # (6, 4, 4) isotropic lines of the triple
    weights: CostWeights = CostWeights()
    frames: np.ndarray = field(init=False, repr=False)
    normalized_cameras: np.ndarray = field(init=False, repr=False)
    sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cams = tuple(c if isinstance(c, ProjectionMatrix) else ProjectionMatrix(c) for c in self.cameras)
        object.__setattr__(self, "cameras", cams)
        frames = np.array([image_frame(c.width, c.height) for c in cams])
        ncams = np.array([np.linalg.solve(f, c.p) for f, c in zip(frames, cams)])
        ncams /= np.linalg.norm(ncams, axis=(1, 2), keepdims=True)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "normalized_cameras", ncams)
        object.__setattr__(self, "sizes", np.array([[c.width, c.height] for c in cams]))
        object.__setattr__(self, "lines", np.asarray(self.lines, dtype=complex))


def _iacs_batch(planes: np.ndarray, ctx: CostContext):
    """Normalized IACs (n, n_cams, 3, 3) in normalized image frames plus a feasibility mask."""
    meets = np.einsum("lij,nj->nli", ctx.lines, planes)  # (n, 6, 4)
    scale = np.linalg.norm(ctx.lines, axis=(1, 2))[None, :] * np.linalg.norm(planes, axis=1)[:, None]
    ok = np.all(np.linalg.norm(meets, axis=2) > MEET_TOL * scale, axis=1)
    meets = meets / np.maximum(np.linalg.norm(meets, axis=2, keepdims=True), 1e-300)
    x = np.einsum("kab,nlb->nkla", ctx.normalized_cameras, meets)  # (n, K, 6, 3)
    xn = np.linalg.norm(x, axis=3, keepdims=True)
    ok_pts = np.all(xn[..., 0] > MEET_TOL, axis=2)  # (n, K)
    x = x / np.maximum(xn, 1e-300)
    v = veronese2(x)  # (n, K, 6, 6)
    _, s, vh = np.linalg.svd(v)
    ok_rank = s[..., 4] > CONIC_RANK_TOL * s[..., 0]
    omega = conic_from_coefficients(vh[..., -1, :].conj())
    omega = _normalize(omega)
    feasible = ok[:, None] & ok_pts & ok_rank
    return omega, feasible


def _terms_batch(omega, feasible, ctx: CostContext):
    t = np.full(omega.shape[:2] + (4,), np.inf)
    t[..., 0] = _c1(omega)
    t[..., 1] = _c2(omega)
    t[..., 2] = _c3(omega)
    pp = _principal_point(omega)  # normalized coordinates
    f = ctx.frames  # (K, 3, 3)
    pix = np.stack(
        [f[:, 0, 0] * pp[..., 0] + f[:, 0, 2], f[:, 1, 1] * pp[..., 1] + f[:, 1, 2]], axis=-1
    )
    t[..., 3] = _box_distance(pix, ctx.sizes[:, 0], ctx.sizes[:, 1])
    t[~feasible] = np.inf
    t[np.isnan(t)] = np.inf
    return t


def terms_batch(planes, ctx: CostContext) -> np.ndarray:
    """Per-plane, per-camera C1..C4, shape (n, n_cams, 4); rows are inf when infeasible."""
    planes = np.atleast_2d(np.asarray(planes, dtype=complex))
    omega, feasible = _iacs_batch(planes, ctx)
    return _terms_batch(omega, feasible, ctx)


def c0_batch(planes, ctx: CostContext) -> np.ndarray:
    """``C0`` for many planes at once."""
    t = terms_batch(planes, ctx)
    w = ctx.weights.as_array()
    with np.errstate(invalid="ignore"):
        ws = np.where(np.isinf(t), np.inf, t * w).sum(axis=2)
    return ws.max(axis=1)


def iac_from_plane(chi, camera_index: int, ctx: CostContext) -> IAC:
    """Conic through the projections into camera ``camera_index`` of the six line/plane meets."""
    chi = np.asarray(chi, dtype=complex)
    meets = ctx.lines @ chi
    scale = np.linalg.norm(ctx.lines, axis=(1, 2)) * np.linalg.norm(chi)
    if np.any(np.linalg.norm(meets, axis=1) <= MEET_TOL * scale):
        raise ContainedLine("an isotropic line lies in the candidate plane")
    omega, feasible = _iacs_batch(chi[None], ctx)
    if not feasible[0, camera_index]:
        raise RankDeficient("projected points do not determine a unique conic")
    return IAC(omega[0, camera_index], True, ctx.frames[camera_index])


def c0(chi, ctx: CostContext) -> CostBreakdown:
    """``C0(chi) = max_i sum_k gamma_k C_k(omega_i(chi))`` with per-camera detail."""
    chi = np.asarray(chi, dtype=complex)
    t = terms_batch(chi[None], ctx)[0]
    w = ctx.weights.as_array()
    with np.errstate(invalid="ignore"):
        ws = np.where(np.isinf(t), np.inf, t * w).sum(axis=1)
    return CostBreakdown(t, ws, float(ws.max()), chi)


def cost_z_batch(zs, ctx: CostContext, triple):
    """``C(z)`` and the costs of both candidate planes for many ``z``."""
    from .variety import OK, candidate_planes_batch

    out = candidate_planes_batch(triple, zs)
    n = len(out["z"])
    costs = np.full((n, 2), np.inf)
    good = out["status"] == OK
    if good.any():
        chi = out["chi"][good].reshape(-1, 4)
        costs[good] = c0_batch(chi, ctx).reshape(-1, 2)
    return costs.min(axis=1), costs[:, 0], costs[:, 1], out


def cost_z(z, ctx: CostContext, triple) -> float:
    """``C(z) = min(C0(chi1(z)), C0(chi2(z)))``; inf when no candidate plane exists at ``z``."""
    return float(cost_z_batch([z], ctx, triple)[0][0])
