"""Plane-at-infinity search.

* :func:`calibrate_slcv` - grid over the complex parameter of the candidate
  planes, Nelder-Mead refinement, then stratified upgrade.
* :func:`plane_grid_search_3d` - brute-force search over ``pi = (n, 1)`` with
  the cyclic-point-transfer cost (baseline).
* :func:`calibrate_daq` - linear dual-absolute-quadric estimate assuming known
  principal points (baseline).
"""
from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .cost import (
    IAC,
    CostBreakdown,
    CostContext,
    CostWeights,
    _iacs_batch,
    _normalize,
    c0,
    c0_batch,
    cost_z_batch,
    iac_from_plane,
)
from .errors import (
    AllInfeasible,
    DegenerateSolution,
    InputError,
    NonGenericConfiguration,
    UnderConstrained,
)
from .geometry import conic_from_coefficients, image_frame, veronese2
from .recon import Reconstruction
from .upgrade import UpgradeResult, decompose_camera, upgrade
from .variety import OK, CameraTriple, candidate_planes_batch

log = logging.getLogger(__name__)

CHUNK = 256
SENTINEL = 1e300  # stands in for +inf inside the simplex search


@dataclass(frozen=True)
class GridSpec:
    n: int = 50
    m: int = 50

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("grid sizes must be at least 1")

    @property
    def size(self) -> int:
        return 1 + self.n * self.m + (self.n - 1) * self.m


@dataclass(frozen=True)
class SLCVConfig:
    grid: GridSpec = GridSpec()
    weights: CostWeights = CostWeights()
    triple: tuple = (0, 1, 2)
    max_iters: int = 500
    starts: int = 3
    threads: int | None = None


@dataclass(frozen=True, eq=False)
class GridResult:
    z: np.ndarray
    j: np.ndarray
    k: np.ndarray
    disk: np.ndarray
    cost: np.ndarray
    cost_chi1: np.ndarray
    cost_chi2: np.ndarray

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.cost))  # first index among ties


@dataclass(frozen=True, eq=False)
class SearchResult:
    z0: complex
    z1: complex
    cost0: float
    cost1: float
    chosen_plane: np.ndarray
    chosen_iac: IAC
    cost_history: list
    breakdown: CostBreakdown
    converged: bool
    grid: GridResult | None = None
    order: tuple = (0, 1, 2)
    start: complex | None = None  # refinement start that produced z1, when not z0


@dataclass(frozen=True, eq=False)
class DualQuadric:
    q: np.ndarray


@dataclass(frozen=True, eq=False)
class SearchContext:
    """Immutable pieces shared by all cost evaluations of one calibration."""

    triple: CameraTriple
    cost: CostContext
    order: tuple = (0, 1, 2)


# ---------------------------------------------------------------- grid
def _grid_table(spec: GridSpec):
    n, m = spec.n, spec.m
    j = [0]
    k = [0]
    disk = [True]
    z = [0j]
    ks = np.arange(1, m + 1)
    for jj in range(1, n + 1):
        z.extend((jj / n) * np.exp(2j * np.pi * ks / m))
        j.extend([jj] * m)
        k.extend(ks)
        disk.extend([True] * m)
    for jj in range(1, n):
        z.extend((n / jj) * np.exp(-2j * np.pi * ks / m))
        j.extend([jj] * m)
        k.extend(ks)
        disk.extend([False] * m)
    return np.array(z), np.array(j), np.array(k), np.array(disk)


def sample_grid(spec: GridSpec) -> np.ndarray:
    """The search set: 0, the unit-disk rings and their reflected complement."""
    return _grid_table(spec)[0]


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("SLCV_THREADS", "").strip()
        threads = int(env) if env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, int(threads))


def grid_search(ctx: SearchContext, spec: GridSpec, threads: int | None = None) -> GridResult:
    """Evaluate ``C(z)`` on the whole grid.

    Work is split into fixed-size chunks independent of the thread count, so
    results are bit-identical however many threads run.
    """
    z, j, k, disk = _grid_table(spec)
    chunks = [z[i:i + CHUNK] for i in range(0, len(z), CHUNK)]

    def run(zs):
        c, c1, c2, _ = cost_z_batch(zs, ctx.cost, ctx.triple)
        return c, c1, c2

    nt = min(thread_count(threads), len(chunks))
    if nt == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            parts = list(ex.map(run, chunks))
    cost = np.concatenate([p[0] for p in parts])
    c1 = np.concatenate([p[1] for p in parts])
    c2 = np.concatenate([p[2] for p in parts])
    if not np.any(np.isfinite(cost)):
        raise AllInfeasible("every grid sample is infeasible")
    return GridResult(z, j, k, disk, cost, c1, c2)


def _local_minima(grid: GridResult, count: int) -> list:
    """Indices of up to ``count`` distinct grid minima, best first.

    A sample is kept when no better sample lies within a few grid steps of
    it (distance measured on the Riemann sphere so both halves compare).
    """
    order = np.lexsort((np.arange(len(grid.cost)), grid.cost))
    order = order[np.isfinite(grid.cost[order])]
    z = grid.z
    # stereographic projection to the unit sphere
    d = 1 + np.abs(z) ** 2
    sph = np.stack([2 * z.real / d, 2 * z.imag / d, (np.abs(z) ** 2 - 1) / d], axis=1)
    n = max(grid.j.max(), 1)
    m = max(grid.k.max(), 1)
    radius = 3 * max(1.0 / n, 2 * np.pi / m)
    picked = []
    for i in order:
        if all(np.linalg.norm(sph[i] - sph[p]) > radius for p in picked):
            picked.append(int(i))
            if len(picked) == count:
                break
    return picked


# ---------------------------------------------------------------- refinement
def _cost_scalar(ctx: SearchContext, z: complex) -> float:
    c = cost_z_batch([z], ctx.cost, ctx.triple)[0][0]
    return float(c) if np.isfinite(c) else SENTINEL


def _best_plane(ctx: SearchContext, z: complex):
    out = candidate_planes_batch(ctx.triple, [z])
    if out["status"][0] != OK:
        return None, None
    planes = out["chi"][0]
    costs = c0_batch(planes, ctx.cost)
    i = int(np.argmin(costs))
    return planes[i], float(costs[i])


_IU = np.triu_indices(3)


def _square_pixel_residuals(ctx: SearchContext, z: complex):
    """Smooth residuals (aspect, skew, imaginary part) of every camera's IAC.

    Unlike the cost, skew enters linearly here, so points where only the
    skew constraints are violated are not stationary.  The better of the two
    candidate planes is used; ``None`` when neither is usable.
    """
    out = candidate_planes_batch(ctx.triple, [z])
    if out["status"][0] != OK:
        return None
    omega, feasible = _iacs_batch(out["chi"][0], ctx.cost)
    best = None
    for w, ok in zip(omega, feasible):
        if not ok.all():
            continue
        r = w.real
        d = np.abs(r[:, 0, 0]) + np.abs(r[:, 1, 1])
        aspect = (r[:, 0, 0] - r[:, 1, 1]) / d
        skew = r[:, 0, 1] / np.sqrt(np.abs(r[:, 0, 0] * r[:, 1, 1]) + 1e-300)
        v = np.concatenate([aspect, skew, w.imag[:, _IU[0], _IU[1]].ravel()])
        if best is None or v @ v < best @ best:
            best = v
    return best


def polish(z: complex, ctx: SearchContext, max_evals: int = 200) -> complex:
    """Levenberg-Marquardt on :func:`_square_pixel_residuals` starting at ``z``."""
    n = 8 * len(ctx.cost.cameras)

    def f(x):
        v = _square_pixel_residuals(ctx, complex(x[0], x[1]))
        return np.full(n, 1e3) if v is None or not np.all(np.isfinite(v)) else v

    res = least_squares(f, [z.real, z.imag], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_evals)
    return complex(res.x[0], res.x[1])


def refine(z0: complex, ctx: SearchContext, max_iters: int = 500, grid: GridResult | None = None,
           ftol: float = 1e-12, polish_steps: bool = True) -> SearchResult:
    """Nelder-Mead over ``(Re z, Im z)`` from ``z0``, then an optional smooth polish.

    The polished point replaces the simplex result only when its cost is lower,
    so the returned cost never exceeds the cost at ``z0``.
    """
    z0 = complex(z0)
    c_start = _cost_scalar(ctx, z0)
    history = [c_start]
    z1, c1, converged = z0, c_start, max_iters == 0
    if max_iters > 0:
        edge = 0.02 * max(1.0, abs(z0))
        x0 = np.array([z0.real, z0.imag])
        simplex = np.array([x0, x0 + [edge, 0], x0 + [0, edge]])

        def f(x):
            v = _cost_scalar(ctx, complex(x[0], x[1]))
            history.append(v)
            return v

        res = minimize(
            f, x0, method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxiter": max_iters, "maxfev": 4 * max_iters,
                     "xatol": np.inf, "fatol": ftol},
        )
        converged = bool(res.success)
        if res.fun <= c_start:
            z1, c1 = complex(res.x[0], res.x[1]), float(res.fun)
        if polish_steps:
            zp = polish(z1, ctx)
            cp = _cost_scalar(ctx, zp)
            history.append(cp)
            if cp < c1:
                z1, c1 = zp, cp
    plane, _ = _best_plane(ctx, z1)
    if plane is None:
        raise AllInfeasible("candidate planes undefined at the refined parameter")
    breakdown = c0(plane, ctx.cost)
    first = ctx.order[0]
    try:
        iac = iac_from_plane(plane, first, ctx.cost)
    except Exception:  # the plane is unusable; report it with an empty IAC
        iac = IAC(np.full((3, 3), np.nan + 0j), False, ctx.cost.frames[first])
    return SearchResult(z0, z1, c_start, c1, plane, iac, history, breakdown, converged, grid,
                        ctx.order)


# ---------------------------------------------------------------- pipeline
def _choose_triple(recon: Reconstruction, triple_idx) -> tuple:
    idx = list(triple_idx)
    if len(set(idx)) != 3 or min(idx) < 0 or max(idx) >= len(recon.cameras):
        raise InputError(f"invalid camera triple {triple_idx}")
    i, j, k = idx
    for order in ((i, j, k), (j, k, i), (k, i, j), (i, k, j), (j, i, k), (k, j, i)):
        t = CameraTriple.from_cameras([recon.cameras[a] for a in order])
        if t.generic:
            return order, t
    raise NonGenericConfiguration("no principal plane of the triple is generic")


def make_context(recon: Reconstruction, config: SLCVConfig = SLCVConfig()) -> SearchContext:
    n = len(recon.cameras)
    if n < 4:
        raise UnderConstrained(f"{n} cameras cannot determine the plane at infinity (need >= 4)")
    if n == 4:
        warnings.warn("four cameras: the plane at infinity may not be unique", stacklevel=2)
    order, triple = _choose_triple(recon, config.triple)
    ctx = CostContext(recon.cameras, triple.iso_lines, config.weights)
    return SearchContext(triple, ctx, order)


def search(recon: Reconstruction, config: SLCVConfig = SLCVConfig()) -> SearchResult:
    """Grid search plus refinement (from the ``config.starts`` best distinct grid minima)."""
    ctx = make_context(recon, config)
    grid = grid_search(ctx, config.grid, config.threads)
    starts = _local_minima(grid, max(1, config.starts))
    best = None
    for i in starts:
        res = refine(grid.z[i], ctx, config.max_iters, grid)
        log.debug("start z=%s cost=%g -> z=%s cost=%g", grid.z[i], grid.cost[i], res.z1, res.cost1)
        if best is None or res.cost1 < best.cost1:
            best = res
    # z0 stays the grid argmin (the first start); the argmin is itself a start,
    # so C(z1) <= C(z0) still holds
    first = starts[0]
    return replace(best, z0=complex(grid.z[first]), cost0=float(grid.cost[first]), start=best.z0)


def calibrate_slcv(recon: Reconstruction, config: SLCVConfig = SLCVConfig()) -> UpgradeResult:
    """Euclidean upgrade of a projective reconstruction of square-pixel cameras."""
    res = search(recon, config)
    order = res.order
    diag = {
        "method": "slcv", "z0": res.z0, "z1": res.z1, "cost0": res.cost0, "cost1": res.cost1,
        "start": res.start,
        "grid": (config.grid.n, config.grid.m), "converged": res.converged,
        "triple": order, "evaluations": len(res.cost_history),
    }
    return upgrade(recon, res.chosen_plane, res.chosen_iac, order[0], res.breakdown, diag)


# ---------------------------------------------------------------- baselines
_CYCLIC = np.array([1, 1j, 0])


def _normalized_cameras(recon: Reconstruction) -> np.ndarray:
    cams = []
    for c in recon.cameras:
        p = np.linalg.solve(image_frame(c.width, c.height), c.p)
        cams.append(p / np.linalg.norm(p))
    return np.array(cams)


def selected_lines(recon: Reconstruction, cameras=(0, 1, 2, 3, 4)) -> np.ndarray:
    """First isotropic line of each selected camera."""
    from .geometry import isotropic_lines

    if len(cameras) != 5 or max(cameras) >= len(recon.cameras):
        raise InputError("the transfer cost needs five selected cameras")
    return np.array([isotropic_lines(recon.cameras[i])[0] for i in cameras])


def _transfer_fit(planes: np.ndarray, recon: Reconstruction, lines: np.ndarray):
    """Per-plane, per-camera conics through five transferred cyclic points."""
    cams = _normalized_cameras(recon)
    meets = np.einsum("lij,nj->nli", lines, planes)
    scale = np.linalg.norm(planes, axis=1)
    ok = np.all(np.linalg.norm(meets, axis=2) > 1e-12 * scale[:, None], axis=1)
    x = np.einsum("kab,nlb->nkla", cams, meets)
    xn = np.linalg.norm(x, axis=3, keepdims=True)
    ok = ok[:, None] & np.all(xn[..., 0] > 1e-14, axis=2)
    x = x / np.maximum(xn, 1e-300)
    v = veronese2(x)  # (n, K, 5, 6)
    _, s, vh = np.linalg.svd(v, full_matrices=True)
    ok &= s[..., 4] > 1e-10 * s[..., 0]
    w = conic_from_coefficients(vh[..., -1, :].conj())
    w = w / np.linalg.norm(w, axis=(-2, -1), keepdims=True)
    return w, ok


def _transfer_cost_batch(planes, recon, lines) -> np.ndarray:
    planes = np.atleast_2d(np.asarray(planes, dtype=complex))
    w, ok = _transfer_fit(planes, recon, lines)
    a = np.einsum("i,nkij,j->nk", _CYCLIC, w, _CYCLIC)
    b = np.einsum("i,nkij,j->nk", _CYCLIC.conj(), w, _CYCLIC.conj())
    c = np.abs(a) + np.abs(b)
    c[~ok] = np.inf
    return c.sum(axis=1)


def cyclic_transfer_cost(pi, recon: Reconstruction, lines=None) -> float:
    """Sum over cameras of ``|I^T w_k I| + |conj(I)^T w_k conj(I)|``, with ``w_k``
    the conic through five cyclic points transferred by ``pi``."""
    from .errors import ContainedLine, RankDeficient

    if lines is None:
        lines = selected_lines(recon)
    pi = np.asarray(pi, dtype=complex)
    meets = np.asarray(lines) @ pi
    if np.any(np.linalg.norm(meets, axis=1) <= 1e-12 * np.linalg.norm(pi)):
        raise ContainedLine("a selected line lies in the plane")
    c = _transfer_cost_batch(pi, recon, lines)[0]
    if not np.isfinite(c):
        raise RankDeficient("transferred points do not determine a conic")
    return float(c)


def plane_grid_search_3d(recon: Reconstruction, box, steps: int = 20, refine_nm: bool = False,
                         lines=None, threads: int | None = None) -> np.ndarray:
    """Best plane ``(n, 1)`` over the cell centres of an ``steps^3`` grid in ``box``."""
    box = np.asarray(box, dtype=float).reshape(3, 2)
    if np.any(box[:, 1] < box[:, 0]) or steps < 1:
        raise InputError("invalid search box")
    if lines is None:
        lines = selected_lines(recon)
    axes = [lo + (np.arange(steps) + 0.5) * (hi - lo) / steps for lo, hi in box]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    planes = np.hstack([g, np.ones((len(g), 1))])
    chunks = [planes[i:i + CHUNK] for i in range(0, len(planes), CHUNK)]
    nt = min(thread_count(threads), len(chunks))
    run = lambda p: _transfer_cost_batch(p, recon, lines)  # noqa: E731
    if nt == 1:
        costs = np.concatenate([run(c) for c in chunks])
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            costs = np.concatenate(list(ex.map(run, chunks)))
    if not np.any(np.isfinite(costs)):
        raise AllInfeasible("every plane of the box is infeasible")
    best = planes[int(np.argmin(costs))]
    if refine_nm:
        f = lambda x: min(float(_transfer_cost_batch(np.append(x, 1.0), recon, lines)[0]), SENTINEL)  # noqa: E731
        cell = (box[:, 1] - box[:, 0]) / steps
        res = minimize(f, best[:3], method="Nelder-Mead",
                       options={"initial_simplex": np.vstack([best[:3], best[:3] + np.diag(cell)]),
                                "maxiter": 2000, "xatol": 1e-12, "fatol": 1e-15})
        if res.fun <= f(best[:3]):
            best = np.append(res.x, 1.0)
    return best


def calibrate_grid3d(recon: Reconstruction, box, steps: int = 20, refine_nm: bool = True,
                     threads: int | None = None) -> UpgradeResult:
    """Upgrade using the plane found by the 3D transfer-cost search."""
    lines = selected_lines(recon)
    plane = plane_grid_search_3d(recon, box, steps, refine_nm, lines, threads)
    w, ok = _transfer_fit(plane[None].astype(complex), recon, lines)
    if not ok[0, 0]:
        raise AllInfeasible("chosen plane does not define an IAC for camera 1")
    c = recon.cameras[0]
    iac = IAC(_normalize(w[0, 0]), True, image_frame(c.width, c.height))
    cost = cyclic_transfer_cost(plane, recon, lines)
    return upgrade(recon, plane, iac, 0, None, {"method": "grid3d", "cost": cost, "steps": steps})


def _daq_rows(p: np.ndarray) -> np.ndarray:
    """Linear forms giving ``(p Q p^T)_{ab}`` in the 10 upper-triangular entries of ``Q``."""
    iu, ju = np.triu_indices(4)

    def form(a, b):
        pa, pb = p[a], p[b]
        row = pa[iu] * pb[ju] + pa[ju] * pb[iu]
        return np.where(iu == ju, row / 2, row)

    return np.array([form(0, 1), form(0, 2), form(1, 2), form(0, 0) - form(1, 1)])


def calibrate_daq(recon: Reconstruction, assumed_pp=None) -> UpgradeResult:
    """Linear DAQ estimate assuming square pixels and known principal points."""
    n = len(recon.cameras)
    if assumed_pp is None:
        assumed_pp = [(c.width / 2, c.height / 2) for c in recon.cameras]
    rows = []
    for c, (u0, v0) in zip(recon.cameras, assumed_pp):
        s = (c.width + c.height) / 2
        nrm = np.array([[s, 0, u0], [0, s, v0], [0, 0, 1.0]])
        p = np.linalg.solve(nrm, c.p)
        rows.append(_daq_rows(p / np.linalg.norm(p)))
    a = np.vstack(rows)
    if a.shape[0] < 9:
        raise DegenerateSolution(f"{n} cameras give too few constraints on the dual quadric")
    _, sv, vh = np.linalg.svd(a)
    if sv[-2] <= 1e-10 * sv[0]:
        raise DegenerateSolution("dual quadric is not determined")
    q = np.zeros((4, 4))
    iu, ju = np.triu_indices(4)
    q[iu, ju] = vh[-1]
    q[ju, iu] = vh[-1]
    ev, u = np.linalg.eigh(q)
    if ev.sum() < 0:
        ev = -ev
    order = np.argsort(-ev)  # three largest first, the dropped one last
    ev, u = ev[order], u[:, order]
    sigma = np.abs(ev[:3])
    h_up = u @ np.diag(np.append(np.sqrt(sigma), 1.0))
    h = np.linalg.inv(h_up)
    plane = u[:, 3]
    q_rank3 = (u[:, :3] * ev[:3]) @ u[:, :3].T
    # gauge as in the stratified upgrade: first camera at the origin
    cam1 = decompose_camera(recon.cameras[0].p @ h_up)
    sim = np.eye(4)
    sim[:3, :3] = cam1.r
    sim[:3, 3] = -cam1.r @ cam1.c
    h = sim @ h
    h /= np.linalg.norm(h)
    from .upgrade import reprojection_rms, upgrade_cameras

    cams = upgrade_cameras(recon.cameras, h)
    k1 = cams[0].k
    f1 = image_frame(recon.cameras[0].width, recon.cameras[0].height)
    w = np.linalg.inv(k1 @ k1.T)
    iac = IAC(_normalize((f1.T @ w @ f1).astype(complex)), True, f1)
    rms = None
    if recon.observations is not None and len(recon.observations) and recon.points is not None:
        rms = reprojection_rms(recon, cams, h)
    return UpgradeResult(h, cams, plane, iac, rms, None,
                         {"method": "daq", "dual_quadric": DualQuadric(q_rank3), "singular_values": sv})


def diac_square_pixel_residual(omega_star):
    """Residuals of the two square-pixel identities of a dual IAC, scaled by ``||w*||_F^2``."""
    w = np.asarray(omega_star)
    n2 = np.linalg.norm(w) ** 2
    r1 = w[0, 1] * w[2, 2] - w[0, 2] * w[1, 2]
    r2 = (w[2, 2] * w[0, 0] - w[0, 2] ** 2) - (w[2, 2] * w[1, 1] - w[1, 2] ** 2)
    return float(abs(r1) / n2), float(abs(r2) / n2)
