"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 infeasible or degenerate
geometry.  Settings come from flags, then ``--config`` (a JSON object with the
same names, dashes or underscores), then built-in defaults.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .cost import CostWeights
from .errors import InputError, SLCVError
from .search import (
    GridSpec,
    SLCVConfig,
    calibrate_daq,
    calibrate_grid3d,
    calibrate_slcv,
    grid_search,
    make_context,
)
from .simkit import SceneSpec, make_scene, score

log = logging.getLogger("slcv")

DEFAULTS = {
    "grid": (50, 50),
    "weights": (1.0, 1.0, 1.0, 1.0),
    "method": "slcv",
    "triple": (0, 1, 2),
    "box": None,
    "steps": 20,
    "starts": 3,
    "max_iters": 500,
    "seed": 0,
    "noise": 0.0,
    "cameras": 5,
    "bars": 20,
    "points": 100,
    "pp_offset": (0.0, 40.0),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are input errors (exit 1), not argparse's 2
        self.print_usage(sys.stderr)
        raise InputError(message)


def _ints(n: int):
    def parse(text: str):
        try:
            vals = tuple(int(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated integers: {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated integers: {text!r}")
        return vals
    return parse


def _floats(n: int):
    def parse(text: str):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers: {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers: {text!r}")
        return vals
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slcv", description="Self-calibration of square-pixel cameras.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--output", help="output file (default: stdout)")

    def search_flags(p):
        p.add_argument("--grid", type=_ints(2), metavar="N,M")
        p.add_argument("--weights", type=_floats(4), metavar="G1,G2,G3,G4")
        p.add_argument("--triple", type=_ints(3), metavar="I,J,K")

    p = sub.add_parser("calibrate", help="Euclidean upgrade of a projective reconstruction")
    common(p)
    search_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["slcv", "daq", "grid3d"])
    p.add_argument("--box", type=_floats(6), metavar="XMIN,XMAX,YMIN,YMAX,ZMIN,ZMAX")
    p.add_argument("--steps", type=int, help="grid3d steps per axis")
    p.add_argument("--starts", type=int, help="refinement starts (distinct grid minima)")

    p = sub.add_parser("simulate", help="write a synthetic scene with ground truth")
    common(p)
    p.add_argument("--cameras", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--bars", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--pp-offset", type=_floats(2), metavar="LO,HI",
                   help="principal-point offset range from the image centre (pixels)")

    p = sub.add_parser("cost-surface", help="export the sampled cost as CSV")
    common(p)
    search_flags(p)
    p.add_argument("--input", required=True)

    p = sub.add_parser("evaluate", help="compare results with the ground truth")
    common(p)
    p.add_argument("--input", required=True, action="append", help="result file (repeatable)")
    p.add_argument("--truth", required=True, help="scene file with a ground_truth block")
    return parser


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        doc = io.load_json(args.config)
        if not isinstance(doc, dict):
            raise InputError("config must be a JSON object")
        for key, val in doc.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise InputError(f"unknown config key {key!r}")
            cfg[key] = tuple(val) if isinstance(val, list) else val
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _slcv_config(cfg: dict) -> SLCVConfig:
    try:
        n, m = cfg["grid"]
        return SLCVConfig(grid=GridSpec(int(n), int(m)), weights=CostWeights(*map(float, cfg["weights"])),
                          triple=tuple(int(i) for i in cfg["triple"]), max_iters=int(cfg["max_iters"]),
                          starts=int(cfg["starts"]))
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid search settings: {exc}") from exc


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_calibrate(args) -> int:
    cfg = _settings(args)
    recon, _ = io.read_reconstruction(args.input)
    method = cfg["method"]
    if method == "slcv":
        result = calibrate_slcv(recon, _slcv_config(cfg))
    elif method == "daq":
        result = calibrate_daq(recon)
    elif method == "grid3d":
        if cfg["box"] is None:
            raise InputError("--method grid3d needs --box")
        result = calibrate_grid3d(recon, cfg["box"], int(cfg["steps"]))
    else:
        raise InputError(f"unknown method {method!r}")
    sm = None
    if recon.points is not None and recon.triplets is not None and len(recon.triplets) >= 2:
        from .upgrade import segment_length_stats

        sm = segment_length_stats(recon.points, recon.triplets, result.h)[2]
    doc = io.result_to_dict(result, sm)
    doc["search"]["method"] = method
    _emit(io.dump_json(doc, None), args.output)
    return 0


def cmd_simulate(args) -> int:
    cfg = _settings(args)
    try:
        spec = SceneSpec(n_cameras=int(cfg["cameras"]), noise_sigma=float(cfg["noise"]),
                         seed=int(cfg["seed"]), n_bar_triplets=int(cfg["bars"]),
                         n_points=int(cfg["points"]),
                         pp_offset_range=tuple(float(v) for v in cfg["pp_offset"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(str(exc)) from exc
    truth, recon = make_scene(spec)
    _emit(io.write_reconstruction(None, recon, truth), args.output)
    return 0


def cmd_cost_surface(args) -> int:
    cfg = _settings(args)
    recon, _ = io.read_reconstruction(args.input)
    config = _slcv_config(cfg)
    ctx = make_context(recon, config)
    grid = grid_search(ctx, config.grid)
    _emit(io.cost_surface_csv(grid), args.output)
    return 0


def cmd_evaluate(args) -> int:
    recon, truth = io.read_reconstruction(args.truth)
    if truth is None:
        raise InputError(f"{args.truth} has no ground_truth block")
    report = {}
    lines = [f"{'method':<10} {'focal err %':>12} {'(std)':>9} {'pp err px':>10} {'(std)':>8} "
             f"{'rms px':>9} {'sigma/mu':>9}"]
    for path in args.input:
        result = io.result_from_dict(io.load_json(path))
        s = score(result, truth, recon)
        name = str(result.diagnostics.get("method", path))
        if name in report:
            name = path
        d = s.as_dict()
        d["focal_rel_error_std"] = float(np.std(s.focal_rel_errors))
        report[name] = d
        fmt = lambda v: "-" if v is None else f"{v:.4g}"  # noqa: E731
        lines.append(f"{name:<10} {100 * d['focal_rel_error_mean']:>12.4g} "
                     f"{100 * d['focal_rel_error_std']:>9.3g} {d['pp_error_mean']:>10.4g} "
                     f"{d['pp_error_std']:>8.3g} {fmt(d['rms']):>9} {fmt(d['sigma_mu']):>9}")
    print("\n".join(lines))
    if args.output:
        io.dump_json(report, args.output)
    return 0


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "cost-surface": cmd_cost_surface,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SLCVError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
