"""The six-line conic variety of three square-pixel cameras.

Planes are evaluated through the 10x10 determinant ``D`` built from the
Veronese images of six line/plane meets and four auxiliary points.  Dividing
out the auxiliary-point factors leaves ``F`` (degree 8); dividing out the three
optical-center factors leaves ``G`` (degree 5).  Candidate planes at infinity
are parameterized by a complex number ``z``: for each ``z`` a real line of the
first principal plane is fixed, and the pencil of planes through it meets the
variety in two further planes besides the principal plane (a triple point).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    DegenerateConfiguration,
    DegenerateInput,
    DegeneratePencil,
    NearCenterPlane,
    UnluckyFactorDraw,
)
from .geometry import (
    ProjectionMatrix,
    fix_phase,
    isotropic_lines,
    optical_center,
    principal_plane,
    proportional,
    veronese3,
)

FACTOR_TOL = 1e-10
MAX_REDRAWS = 5
CENTER_TOL = 1e-10
FRAME_COND_MAX = 1e12
COEFF_TOL = 1e-10
RESIDUAL_TOL = 1e-7
DOUBLE_ROOT_TOL = 1e-10
# |G| on a pencil, relative to |G| on random planes, below which the pencil is
# taken to lie in the variety (exact cases measure <= 2e-12)
FLAT_TOL = 1e-11

# canonical images of C1, C2, C3, q, conj(q)
CANONICAL_POINTS = np.array(
    [[0, 0, 0, 1], [0, 0, 1, 1], [0, 1, -1, 1], [1, 1j, 0, 0], [1, -1j, 0, 0]],
    dtype=complex,
)
CANONICAL_PI1 = np.array([0, 0, 1, 0], dtype=complex)
CANONICAL_XI = np.array([0, 0, 1, -1], dtype=complex)
_BETA = np.linalg.solve(CANONICAL_POINTS[:4].T, CANONICAL_POINTS[4])
_V_BETA = CANONICAL_POINTS[:4].T * _BETA

# samples on the projective line used to interpolate the restricted quintic;
# none hits lambda = 0 or mu = 0, where a center factor vanishes on the pencil
_THETA = np.pi * (np.arange(6) + 0.5) / 6
_LAM, _MU = np.cos(_THETA), np.sin(_THETA)
_VANDER = np.stack([_LAM ** (5 - k) * _MU**k for k in range(6)], axis=1)
_VANDER_INV = np.linalg.inv(_VANDER)


# ---------------------------------------------------------------- anchors
@dataclass(frozen=True, eq=False)
class Anchors:
    """Seeded auxiliary points ``a_1..a_4`` (plus backups) used to evaluate F.

    ``F`` does not depend on the draw, so a backup draw can be used for any
    plane that happens to pass too close to one of the primary points.
    """

    seed: int = 0
    draws: tuple = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0x51C5])))
        draws = []
        while len(draws) < 1 + MAX_REDRAWS:
            a = rng.standard_normal((4, 4))
            a /= np.linalg.norm(a, axis=1, keepdims=True)
            det = np.linalg.det(a)
            if abs(det) < FACTOR_TOL:
                continue
            draws.append((a, veronese3(a).astype(complex), det))
        object.__setattr__(self, "draws", tuple(draws))


DEFAULT_ANCHORS = Anchors(0)


def _as_planes(pi) -> np.ndarray:
    return np.atleast_2d(np.asarray(pi, dtype=complex))


def detD(pi, lines, a) -> complex:
    """The 10x10 determinant ``det(nu(L_1 pi), ..., nu(L_6 pi), nu(a_1), ..., nu(a_4))``."""
    lines = np.asarray(lines, dtype=complex)
    rows = veronese3(np.asarray(a, dtype=complex))
    return complex(kernels.det_batch(lines, _as_planes(pi), rows)[0])


def eval_f_batch(planes, lines, anchors: Anchors = DEFAULT_ANCHORS) -> np.ndarray:
    """``F`` at many planes; ``nan`` where every anchor draw is unlucky."""
    planes = _as_planes(planes)
    lines = np.asarray(lines, dtype=complex)
    out = np.full(len(planes), np.nan + 0j)
    todo = np.ones(len(planes), dtype=bool)
    pn = np.linalg.norm(planes, axis=1)
    for a, rows, det in anchors.draws:
        if not todo.any():
            break
        fac = planes @ a.T
        ok = todo & np.all(np.abs(fac) > FACTOR_TOL * pn[:, None], axis=1)
        if ok.any():
            d = kernels.det_batch(lines, planes[ok], rows)
            out[ok] = d / (det * np.prod(fac[ok], axis=1))
            todo &= ~ok
    return out


def evalF(pi, lines, anchors: Anchors = DEFAULT_ANCHORS) -> complex:
    """Degree-8 polynomial ``F(pi) = D / (det(a) prod(pi^T a_j))``."""
    val = eval_f_batch(pi, lines, anchors)[0]
    if np.isnan(val):
        raise UnluckyFactorDraw("plane passes through every auxiliary point draw")
    return complex(val)


# ---------------------------------------------------------------- triple
@dataclass(frozen=True, eq=False)
class CameraTriple:
    """Three finite cameras with their centers, principal planes and isotropic lines."""

    cameras: tuple
    centers: np.ndarray
    principal_planes: np.ndarray
    iso_lines: np.ndarray  # (6, 4, 4): l1, conj l1, l2, conj l2, l3, conj l3
    genericity_flags: tuple
    anchors: Anchors = DEFAULT_ANCHORS

    @classmethod
    def from_cameras(cls, cameras, anchors: Anchors = DEFAULT_ANCHORS) -> "CameraTriple":
        cams = tuple(c if isinstance(c, ProjectionMatrix) else ProjectionMatrix(c) for c in cameras)
        if len(cams) != 3:
            raise DegenerateInput("a camera triple needs exactly three cameras")
        centers = np.array([optical_center(c) for c in cams])
        if np.any(np.abs(centers[:, 3]) < 1e-12):
            raise DegenerateInput("camera centers must be finite")
        planes = np.array([principal_plane(c) for c in cams])
        lines = []
        for c in cams:
            lines.extend(isotropic_lines(c))
        flags = []
        for i in range(3):
            pn = planes[i] / np.linalg.norm(planes[i])
            others = [j for j in range(3) if j != i]
            flags.append(bool(all(abs(pn @ centers[j]) > 1e-9 for j in others)))
        for arr in (centers, planes):
            arr.setflags(write=False)
        lines = np.array(lines)
        lines.setflags(write=False)
        return cls(cams, centers, planes, lines, tuple(flags), anchors)

    @property
    def generic(self) -> bool:
        return self.genericity_flags[0]

    def fixed_point(self) -> np.ndarray:
        """Point ``r`` of ``l1``: its meet with the plane whose coordinates equal ``C1``."""
        r = self.iso_lines[0] @ self.centers[0]
        if np.linalg.norm(r) < 1e-9 or proportional(r, self.centers[0], 1e-9):
            # fall back to a fixed plane through neither C1 nor r
            rng = np.random.Generator(np.random.PCG64(12345))
            while True:
                plane = rng.standard_normal(4)
                if abs(plane @ self.centers[0]) > 1e-3:
                    r = self.iso_lines[0] @ plane
                    break
        return r / np.linalg.norm(r)


def eval_g_batch(planes, triple: CameraTriple) -> np.ndarray:
    """``G`` at many planes; ``nan`` where a plane is too close to an optical center."""
    planes = _as_planes(planes)
    f = eval_f_batch(planes, triple.iso_lines, triple.anchors)
    fac = planes @ triple.centers.T
    near = np.any(np.abs(fac) <= CENTER_TOL * np.linalg.norm(planes, axis=1)[:, None], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = f / np.prod(fac, axis=1)
    g[near] = np.nan
    return g


def evalG(pi, triple: CameraTriple) -> complex:
    """Quintic ``G(pi) = F(pi) / prod(pi^T C_i)``."""
    pi = np.asarray(pi, dtype=complex)
    fac = triple.centers @ pi
    if np.any(np.abs(fac) <= CENTER_TOL * np.linalg.norm(pi)):
        raise NearCenterPlane("plane passes through an optical center")
    return evalF(pi, triple.iso_lines, triple.anchors) / complex(np.prod(fac))


# ---------------------------------------------------------------- frames
@dataclass(frozen=True, eq=False)
class PencilQuadratic:
    a0: complex
    b0: complex
    c0: complex
    residual: float


@dataclass(frozen=True, eq=False)
class CandidatePlanePair:
    z: complex
    chi1: np.ndarray
    chi2: np.ndarray
    xi: np.ndarray
    frame: np.ndarray
    conjugate_pair: bool
    double_root: bool
    quadratic: PencilQuadratic


# status codes of the batched candidate-plane evaluation
OK, BAD_FRAME, BAD_PENCIL, BAD_SAMPLE = 0, 1, 2, 3


def _frames(triple: CameraTriple, zs: np.ndarray):
    """Coordinate changes for many ``z`` at once; returns (H, ok)."""
    c = triple.centers.astype(complex)
    r = triple.fixed_point()
    q = r[None, :] + zs[:, None] * c[0][None, :]
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    m = np.empty((len(zs), 4, 4), dtype=complex)
    m[:, :, 0], m[:, :, 1], m[:, :, 2] = c[0], c[1], c[2]
    m[:, :, 3] = q
    sv = np.linalg.svd(m, compute_uv=False)
    ok = sv[:, -1] > sv[:, 0] / FRAME_COND_MAX
    h = np.zeros_like(m)
    if ok.any():
        mo = m[ok]
        alpha = np.linalg.solve(mo, q[ok].conj()[..., None])[..., 0]
        amax = np.abs(alpha).max(axis=1)
        good = np.all(np.abs(alpha) > COEFF_TOL * amax[:, None], axis=1)
        idx = np.flatnonzero(ok)
        ok[idx[~good]] = False
        mo, alpha = mo[good], alpha[good]
        # H (alpha_k X_k) = beta_k v_k  =>  H = V_beta (M diag(alpha))^-1
        hh = np.linalg.solve(np.swapaxes(mo * alpha[:, None, :], 1, 2), _V_BETA.T[None])
        hh = np.swapaxes(hh, 1, 2)
        hh /= np.linalg.norm(hh, axis=(1, 2), keepdims=True)
        h[idx[good]] = hh
    return h, ok


def canonical_frame(triple: CameraTriple, z: complex) -> np.ndarray:
    """4x4 matrix sending C1, C2, C3, q, conj(q) to their canonical positions."""
    h, ok = _frames(triple, np.array([z], dtype=complex))
    if not ok[0]:
        raise DegenerateConfiguration(f"points are not in general position at z={z}")
    return h[0]


def _restricted_coeffs(triple: CameraTriple, frames: np.ndarray):
    """Homogeneous coefficients of G along lambda*pi1 + mu*xi for each frame.

    Returns (coeffs, scale, ok): coefficients of ``lam^(5-k) mu^k`` for k=0..5,
    the magnitude of the samples, and a mask of frames where every sample was
    evaluable.
    """
    n = len(frames)
    canon = _LAM[:, None] * CANONICAL_PI1 + _MU[:, None] * CANONICAL_XI  # (6, 4)
    planes = np.einsum("nji,sj->nsi", frames, canon)  # H^T applied to planes
    g = eval_g_batch(planes.reshape(-1, 4), triple).reshape(n, 6)
    ok = ~np.any(np.isnan(g), axis=1)
    g = np.where(ok[:, None], g, 0)
    coeffs = g @ _VANDER_INV.T
    # G is homogeneous of degree 5: compare sample sizes on unit planes
    scale = np.max(np.abs(g) / np.linalg.norm(planes, axis=2) ** 5, axis=1)
    return coeffs, scale, ok


def _solve_quadratics(a, b, c):
    """Roots (lam, mu) of ``a lam^2 + b lam mu + c mu^2`` without cancellation."""
    disc = np.sqrt(b * b - 4 * a * c)
    sgn = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
    qq = -(b + sgn * disc) / 2
    r1 = np.stack([qq, a], axis=-1)
    r2 = np.stack([c, qq], axis=-1)
    # q == 0 only when b == 0 and a*c == 0
    zero = np.abs(qq) == 0
    if np.any(zero):
        a0 = np.abs(a) > 0
        r1[zero] = np.where(a0[zero, None], np.array([0, 1]), np.array([1, 0]))
        r2[zero] = r1[zero]
    double = np.abs(disc) ** 2 <= DOUBLE_ROOT_TOL * (np.abs(b) ** 2 + 4 * np.abs(a * c) + 1e-300)
    return r1, r2, double


def candidate_planes_batch(triple: CameraTriple, zs, polish: bool = True):
    """Candidate planes for many parameters.

    With ``polish`` each root of ``H0`` is refined by Newton steps on ``G``
    evaluated directly near the root; interpolation alone loses accuracy
    when a root lies close to the principal plane of the pencil.

    Returns a dict with ``chi`` (n, 2, 4), ``xi`` (n, 4), ``frames`` (n, 4, 4),
    ``coeffs`` (n, 6), ``residual`` (n,), ``double`` (n,), ``status`` (n,).
    Rows whose status is not ``OK`` contain zeros.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    n = len(zs)
    status = np.full(n, OK)
    frames, ok = _frames(triple, zs)
    status[~ok] = BAD_FRAME
    coeffs = np.zeros((n, 6), dtype=complex)
    residual = np.full(n, np.inf)
    chi = np.zeros((n, 2, 4), dtype=complex)
    xi = np.zeros((n, 4), dtype=complex)
    double = np.zeros(n, dtype=bool)
    idx = np.flatnonzero(ok)
    if len(idx):
        cf, scale, sok = _restricted_coeffs(triple, frames[idx])
        status[idx[~sok]] = BAD_SAMPLE
        cmax = np.max(np.abs(cf), axis=1)
        ref = _typical_scale(triple)
        flat = sok & (scale <= FLAT_TOL * ref)
        status[idx[flat]] = BAD_PENCIL
        good = sok & ~flat
        coeffs[idx] = cf
        with np.errstate(invalid="ignore", divide="ignore"):
            residual[idx[good]] = np.max(np.abs(cf[good, :3]), axis=1) / cmax[good]
        gi = idx[good]
        if len(gi):
            a, b, c = cf[good, 3], cf[good, 4], cf[good, 5]
            r1, r2, dbl = _solve_quadratics(a, b, c)
            double[gi] = dbl
            fr = frames[gi]
            if polish:
                r1 = _polish(triple, fr, r1, a, b, c, ~dbl)
                r2 = _polish(triple, fr, r2, a, b, c, ~dbl)
            for k, rr in enumerate((r1, r2)):
                canon = rr[:, :1] * CANONICAL_PI1 + rr[:, 1:] * CANONICAL_XI
                planes = np.einsum("nji,nj->ni", fr, canon)
                planes /= np.linalg.norm(planes, axis=1, keepdims=True)
                chi[gi, k] = planes
            x = fr.transpose(0, 2, 1) @ CANONICAL_XI
            xi[gi] = x / np.linalg.norm(x, axis=1, keepdims=True)
    return {
        "z": zs, "chi": chi, "xi": xi, "frames": frames, "coeffs": coeffs,
        "residual": residual, "double": double, "status": status,
    }


POLISH_STEPS = 2


def _polish(triple, frames, roots, a, b, c, mask):
    """Newton refinement of pencil roots using the fitted quadratic's derivative.

    Roots with ``|lam| >= |mu|`` are written as ``(1, t)`` and refined on
    ``G / t^3`` (the triple factor removed); the others as ``(s, 1)``.
    A step is kept only if it lowers the residual.
    """
    roots = roots.copy()
    lam, mu = roots[:, 0], roots[:, 1]
    chart_a = np.abs(lam) >= np.abs(mu)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(chart_a, mu / lam, lam / mu)
    live = mask & np.isfinite(x) & ~(chart_a & (np.abs(x) < 1e-8))
    if not live.any():
        return roots
    idx = np.flatnonzero(live)
    fr, ca, x = frames[idx], chart_a[idx], x[idx]
    a, b, c = a[idx], b[idx], c[idx]

    def resid(xv):
        canon = np.where(ca[:, None], CANONICAL_PI1 + xv[:, None] * CANONICAL_XI,
                         xv[:, None] * CANONICAL_PI1 + CANONICAL_XI)
        planes = np.einsum("nji,nj->ni", fr, canon)
        g = eval_g_batch(planes, triple)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ca, g / xv**3, g)

    def slope(xv):
        # derivative of H(1, t) = a + b t + c t^2, or of H(s, 1) = a s^2 + b s + c
        return np.where(ca, b + 2 * c * xv, 2 * a * xv + b)

    r = resid(x)
    for _ in range(POLISH_STEPS):
        d = slope(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            xn = x - r / d
        rn = resid(xn)
        better = np.isfinite(rn) & np.isfinite(xn) & (np.abs(rn) < np.abs(r))
        x = np.where(better, xn, x)
        r = np.where(better, rn, r)
    roots[idx] = np.where(ca[:, None], np.stack([np.ones_like(x), x], 1), np.stack([x, np.ones_like(x)], 1))
    return roots


_SCALE_CACHE: dict = {}


def _typical_scale(triple: CameraTriple) -> float:
    """Median ``|G|`` over a fixed set of random unit planes (sets 'small')."""
    key = id(triple)
    hit = _SCALE_CACHE.get(key)
    if hit is not None and hit[0] is triple:
        return hit[1]
    rng = np.random.Generator(np.random.PCG64(2024))
    planes = rng.standard_normal((16, 4))
    planes /= np.linalg.norm(planes, axis=1, keepdims=True)
    g = np.abs(eval_g_batch(planes, triple))
    val = float(np.nanmedian(g)) if np.any(~np.isnan(g)) else 1.0
    if len(_SCALE_CACHE) > 64:
        _SCALE_CACHE.clear()
    _SCALE_CACHE[key] = (triple, val)
    return val


def _raise_for(status: int, z):
    if status == BAD_FRAME:
        raise DegenerateConfiguration(f"degenerate canonical frame at z={z}")
    if status == BAD_PENCIL:
        raise DegeneratePencil(f"pencil at z={z} lies in the variety")
    if status == BAD_SAMPLE:
        raise NearCenterPlane(f"pencil sample at z={z} passes through an optical center")


def pencil_quadratic(triple: CameraTriple, z: complex) -> PencilQuadratic:
    """Quadratic factor ``H0`` of ``G(lam pi1 + mu xi) = mu^3 H0(lam, mu)``."""
    out = candidate_planes_batch(triple, [z])
    _raise_for(out["status"][0], z)
    c = out["coeffs"][0]
    return PencilQuadratic(complex(c[3]), complex(c[4]), complex(c[5]), float(out["residual"][0]))


def candidate_planes(triple: CameraTriple, z: complex) -> CandidatePlanePair:
    """The two planes of the pencil through ``q(z)``, ``conj q(z)`` that lie on the variety."""
    if not triple.generic:
        raise DegenerateConfiguration("first principal plane is not generic")
    out = candidate_planes_batch(triple, [z])
    _raise_for(out["status"][0], z)
    c = out["coeffs"][0]
    chi1, chi2 = (fix_phase(p) for p in out["chi"][0])
    conj = (not proportional(chi1, chi1.conj())) and proportional(chi2, chi1.conj())
    return CandidatePlanePair(
        z=complex(z), chi1=chi1, chi2=chi2, xi=out["xi"][0], frame=out["frames"][0],
        conjugate_pair=bool(conj), double_root=bool(out["double"][0]),
        quadratic=PencilQuadratic(complex(c[3]), complex(c[4]), complex(c[5]),
                                  float(out["residual"][0])),
    )


def q_point(triple: CameraTriple, z: complex) -> np.ndarray:
    """The point ``q = r + z C1`` of the first isotropic line."""
    return triple.fixed_point() + z * triple.centers[0]


def z_of_plane(triple: CameraTriple, plane) -> complex:
    """Parameter ``z`` whose pencil contains ``plane`` (inverse of candidate_planes)."""
    plane = np.asarray(plane, dtype=complex)
    r = triple.fixed_point()
    c1 = triple.centers[0]
    den = plane @ c1
    if abs(den) < 1e-14 * np.linalg.norm(plane):
        raise NearCenterPlane("plane passes through C1")
    return complex(-(plane @ r) / den)


# ---------------------------------------------------------------- pencils
def restricted_polynomial(alpha, beta, triple: CameraTriple, degree: int = 5, samples: int = 12):
    """Least-squares homogeneous coefficients of ``G(lam alpha + mu beta)``.

    Returns coefficients of ``lam^(d-k) mu^k`` for ``k = 0..d`` (planes normalized
    to unit norm first so the coefficients are comparable).
    """
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    alpha = alpha / np.linalg.norm(alpha)
    beta = beta / np.linalg.norm(beta)
    theta = np.pi * (np.arange(samples) + 0.5) / samples
    lam, mu = np.cos(theta), np.sin(theta)
    g = eval_g_batch(lam[:, None] * alpha + mu[:, None] * beta, triple)
    keep = ~np.isnan(g)
    if keep.sum() < degree + 1:
        raise NearCenterPlane("too many pencil samples pass through optical centers")
    vander = np.stack([lam ** (degree - k) * mu**k for k in range(degree + 1)], axis=1)
    coeffs, *_ = np.linalg.lstsq(vander[keep], g[keep], rcond=None)
    return coeffs


def _companion_roots(coeffs: np.ndarray) -> np.ndarray:
    """Roots (lam, mu) of a homogeneous binary form given high-to-low in lam."""
    c = np.asarray(coeffs, dtype=complex)
    cmax = np.max(np.abs(c))
    lead = 0
    while lead < len(c) - 1 and abs(c[lead]) <= 1e-12 * cmax:
        lead += 1
    roots = [np.array([1.0, 0.0], dtype=complex)] * lead  # mu = 0 roots
    p = c[lead:] / c[lead]
    deg = len(p) - 1
    if deg > 0:
        comp = np.zeros((deg, deg), dtype=complex)
        comp[0, :] = -p[1:]
        comp[1:, :-1] = np.eye(deg - 1)
        for t in np.linalg.eigvals(comp):
            roots.append(np.array([t, 1.0], dtype=complex))
    return np.array(roots)


def quintic_on_line(alpha, beta, triple: CameraTriple, imag_tol: float = 1e-6) -> list:
    """Real planes of the pencil ``lam alpha + mu beta`` lying on the variety (at most 5)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    s = np.linalg.svd(np.vstack([alpha, beta]), compute_uv=False)
    if s[1] <= 1e-12 * s[0]:
        raise DegenerateInput("pencil generators are proportional")
    coeffs = restricted_polynomial(alpha, beta, triple)
    if np.max(np.abs(coeffs)) <= FLAT_TOL * _typical_scale(triple):
        raise DegeneratePencil("pencil lies in the variety")
    an = alpha / np.linalg.norm(alpha)
    bn = beta / np.linalg.norm(beta)
    out = []
    for lam, mu in _companion_roots(coeffs):
        # one affine chart per root: the larger coordinate is fixed to 1
        if abs(lam) >= abs(mu):
            t, base, step = mu / lam, an, bn
        else:
            t, base, step = lam / mu, bn, an
        t = _newton_on_pencil(t, base, step, triple)
        if abs(t.imag) > imag_tol * (1 + abs(t)):
            continue
        plane = base + t.real * step
        out.append(plane / np.linalg.norm(plane))
    return out


def _newton_on_pencil(t, base, step, triple, iters: int = 6):
    """Polish a root of ``G(base + t step)`` using the exact determinant form."""
    for _ in range(iters):
        h = 1e-6 * (1 + abs(t))
        g = eval_g_batch(np.array([base + (t + d) * step for d in (0, h, -h)]), triple)
        dg = (g[1] - g[2]) / (2 * h)
        if not np.all(np.isfinite(g)) or dg == 0:
            break
        dt = g[0] / dg
        t = t - dt
        if abs(dt) <= 1e-14 * (1 + abs(t)):
            break
    return t
