"""JSON reconstruction/result files and the cost-surface CSV.

Matrices are stored row-major as nested lists; homogeneous vectors are stored
as given (not normalized).  Complex scalars are ``[re, im]`` pairs.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .errors import InputError
from .geometry import ProjectionMatrix
from .recon import Reconstruction
from .simkit import GroundTruth
from .upgrade import MetricCamera, UpgradeResult


def _array(value, shape, what: str) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: not a numeric array") from exc
    if shape is not None and a.shape != shape:
        raise InputError(f"{what}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{what}: non-finite entries")
    return a


def _metric_camera_to_dict(cam: MetricCamera) -> dict:
    return {"K": cam.k.tolist(), "R": cam.r.tolist(), "C": cam.c.tolist()}


def _metric_camera_from_dict(d: dict, what: str) -> MetricCamera:
    try:
        return MetricCamera(_array(d["K"], (3, 3), what + ".K"), _array(d["R"], (3, 3), what + ".R"),
                            _array(d["C"], (3,), what + ".C"))
    except (KeyError, TypeError) as exc:
        raise InputError(f"{what}: needs K, R and C") from exc


# ---------------------------------------------------------------- reconstruction
def ground_truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "cameras": [_metric_camera_to_dict(c) for c in truth.cameras],
        "points": truth.points.tolist(),
        "triplets": np.asarray(truth.triplets).tolist(),
        "plane": truth.plane.tolist(),
        "scramble": truth.scramble.tolist(),
    }


def ground_truth_from_dict(d: dict) -> GroundTruth:
    if not isinstance(d, dict):
        raise InputError("ground_truth must be an object")
    try:
        cams = [_metric_camera_from_dict(c, f"ground_truth.cameras[{i}]") for i, c in enumerate(d["cameras"])]
        points = _array(d["points"], None, "ground_truth.points").reshape(-1, 4)
        triplets = np.array(d.get("triplets", []), dtype=int).reshape(-1, 3)
        plane = _array(d["plane"], (4,), "ground_truth.plane")
        scramble = _array(d["scramble"], (4, 4), "ground_truth.scramble")
    except KeyError as exc:
        raise InputError(f"ground_truth: missing field {exc}") from exc
    return GroundTruth(cams, points, triplets, plane, scramble)


def reconstruction_to_dict(recon: Reconstruction, truth: GroundTruth | None = None) -> dict:
    doc = {"cameras": [{"P": c.p.tolist(), "width": c.width, "height": c.height} for c in recon.cameras]}
    if recon.points is not None:
        doc["points"] = recon.points.tolist()
    if recon.observations is not None:
        doc["observations"] = [
            {"camera": int(o[0]), "point": int(o[1]), "u": float(o[2]), "v": float(o[3])}
            for o in recon.observations
        ]
    if recon.triplets is not None:
        doc["triplets"] = recon.triplets.tolist()
    if truth is not None:
        doc["ground_truth"] = ground_truth_to_dict(truth)
    return doc


def reconstruction_from_dict(doc) -> tuple:
    """Parse a reconstruction document; returns ``(reconstruction, ground_truth_or_None)``."""
    if not isinstance(doc, dict) or not isinstance(doc.get("cameras"), list):
        raise InputError("reconstruction needs a 'cameras' list")
    cams = []
    for i, c in enumerate(doc["cameras"]):
        if not isinstance(c, dict) or "P" not in c:
            raise InputError(f"cameras[{i}] needs a 'P' matrix")
        p = _array(c["P"], (3, 4), f"cameras[{i}].P")
        if np.linalg.matrix_rank(p) < 3:
            raise InputError(f"cameras[{i}].P has rank < 3")
        w, h = float(c.get("width", 1280.0)), float(c.get("height", 960.0))
        if not (w > 0 and h > 0):
            raise InputError(f"cameras[{i}]: image size must be positive")
        cams.append(ProjectionMatrix(p, w, h))
    points = obs = triplets = None
    if "points" in doc:
        points = _array(doc["points"], None, "points").reshape(-1, 4)
    if "observations" in doc:
        try:
            obs = np.array([[o["camera"], o["point"], o["u"], o["v"]] for o in doc["observations"]],
                           dtype=float).reshape(-1, 4)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError("observations need camera, point, u, v") from exc
    if "triplets" in doc:
        triplets = np.array(doc["triplets"], dtype=int).reshape(-1, 3)
    recon = Reconstruction(tuple(cams), points, obs, triplets)
    truth = ground_truth_from_dict(doc["ground_truth"]) if "ground_truth" in doc else None
    return recon, truth


# ---------------------------------------------------------------- result
def _complex(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def result_to_dict(result: UpgradeResult, sigma_mu: float | None = None) -> dict:
    cams = []
    for i, cam in enumerate(result.cameras):
        d = _metric_camera_to_dict(cam)
        if result.breakdown is not None:
            d["cost"] = [_finite(v) for v in result.breakdown.terms[i]]
        cams.append(d)
    diag = result.diagnostics
    search = {}
    for key in ("z0", "z1", "start"):
        if diag.get(key) is not None:
            search[key] = _complex(diag[key])
    for key in ("cost0", "cost1"):
        if key in diag:
            search[key] = _finite(diag[key])
    if "grid" in diag:
        search["grid"] = list(diag["grid"])
    if "triple" in diag:
        search["triple"] = list(diag["triple"])
    if "method" in diag:
        search["method"] = diag["method"]
    return {
        "H": np.asarray(result.h).tolist(),
        "plane": np.asarray(result.plane).tolist(),
        "cameras": cams,
        "metrics": {"rms": result.reprojection_rms, "sigma_mu": sigma_mu},
        "search": search,
    }


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


def result_from_dict(doc) -> UpgradeResult:
    if not isinstance(doc, dict):
        raise InputError("result must be an object")
    try:
        h = _array(doc["H"], (4, 4), "H")
        plane = _array(doc["plane"], (4,), "plane")
        cams = [_metric_camera_from_dict(c, f"cameras[{i}]") for i, c in enumerate(doc["cameras"])]
    except KeyError as exc:
        raise InputError(f"result: missing field {exc}") from exc
    rms = (doc.get("metrics") or {}).get("rms")
    diag = {}
    for key, val in (doc.get("search") or {}).items():
        diag[key] = complex(*val) if key in ("z0", "z1", "start") else val
    return UpgradeResult(h, cams, plane, None, rms, None, diag)


# ---------------------------------------------------------------- files
def load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def dump_json(doc, path: str | None) -> str:
    """Serialize ``doc`` (sorted keys, 2-space indent) to ``path`` or just return it."""
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def read_reconstruction(path: str) -> tuple:
    return reconstruction_from_dict(load_json(path))


def write_reconstruction(path: str | None, recon: Reconstruction, truth: GroundTruth | None = None) -> str:
    return dump_json(reconstruction_to_dict(recon, truth), path)


# ---------------------------------------------------------------- CSV
CSV_HEADER = "j,k,re_z,im_z,disk_flag,cost,cost_chi1,cost_chi2"


def _csv_float(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return repr(v)


def cost_surface_csv(grid) -> str:
    """One row per grid sample, in grid order, with a header and ``\\n`` line ends."""
    lines = [CSV_HEADER]
    for i in range(len(grid.z)):
        z = grid.z[i]
        lines.append(",".join([
            str(int(grid.j[i])), str(int(grid.k[i])), _csv_float(z.real), _csv_float(z.imag),
            str(int(grid.disk[i])), _csv_float(grid.cost[i]), _csv_float(grid.cost_chi1[i]),
            _csv_float(grid.cost_chi2[i]),
        ]))
    return "\n".join(lines) + "\n"
