"""``tbsd`` command line: simulate, learn, directions, decompose, detect, evaluate, study.

Parameters resolve as built-in default < ``--config`` file < command-line
flag, and every command that writes outputs also writes the resolved
parameters to ``resolved-config.json``.  Exit codes: 0 success, 1 I/O
error, 2 pipeline precondition failure, 3 alarm raised under
``--fail-on-alarm``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly_detect import DetectionParams, anomaly_mask, ssd_baseline_detect, tbsd_detect
from .decompose import low_rank_decompose
from .io import (
    load_basis,
    read_config,
    read_image,
    read_mask,
    save_basis,
    write_component,
    write_json,
    write_mask,
)
from .postprocess import close_regions, evaluate, regions_mask
from .quasi_detect import SamplingConfig, find_directions
from .smooth_basis import SmoothBasis
from .texture_learning import LearnConfig, learn_texture_basis

EXIT_OK, EXIT_IO, EXIT_PIPELINE, EXIT_ALARM = 0, 1, 2, 3

FAMILY_ALIASES = {
    "prior": ("Prior One-direction",),
    "one_direction": ("Non-prior One-direction",),
    "cross": ("Non-prior Crossing",),
    "all": ("Prior One-direction", "Non-prior One-direction", "Non-prior Crossing"),
}


class PipelineError(Exception):
    """A precondition of the pipeline failed; maps to exit code 2."""

    def __init__(self, msg, detail=None):
        super().__init__(msg)
        self.detail = detail


def _pair(text, sep="x"):
    a, b = str(text).lower().split(sep)
    return int(a), int(b)


def _opt_int(text):
    return None if str(text).lower() in ("none", "") else int(text)


def _opt_float(text):
    return None if str(text).lower() in ("none", "") else float(text)


def _flag(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_d, _l, _s = DetectionParams(), LearnConfig(), SamplingConfig()

# key -> (parser, default, help)
PARAMS = {
    "lam": (float, _d.lam, "smoothness weight"),
    "gamma": (float, _d.gamma, "texture sparsity weight"),
    "eta": (float, _d.eta, "anomaly sparsity weight"),
    "iter_times": (int, _d.iter_times, "block-coordinate passes"),
    "phi_bt": (float, _d.phi_bt, "texture/background balance"),
    "phi_a": (float, _d.phi_a, "alarm threshold on the anomaly proportion"),
    "binarize_eps": (float, _d.binarize_eps, "mask threshold on |C_a|"),
    "tile_layers": (int, _d.tile_layers, "1 plain tile grid, 2 adds a half-offset grid"),
    "tile_edge": (str, _d.tile_edge, "edge tiles: 'pad' or 'inside'"),
    "knots": (_opt_int, _l.knots, "B-spline knot intervals per axis (none: automatic)"),
    "degree": (int, _l.degree, "B-spline degree"),
    "K": (int, _l.K, "KNBN emission size"),
    "l": (int, _l.l, "KNBN neighbourhood reach"),
    "patch": (_pair, _l.patch_shape, "texture patch shape HxW"),
    "max_atoms": (_opt_int, _l.max_atoms, "atom cap (none: no cap)"),
    "method": (str, _l.method, "atom extraction: 'svd' or 'mgs'"),
    "q": (float, _l.q, "direction threshold ratio"),
    "shift_radius": (int, _l.shift_radius, "window shift radius around patches"),
    "max_candidates": (int, _l.max_candidates, "cap on candidate windows"),
    "line_count": (int, _s.line_count, "LSERA parallel lines"),
    "line_width": (int, _s.line_width, "LSERA line width"),
    "center_gap": (float, _s.center_gap, "LSERA line gap"),
    "max_rotate": (int, _s.max_rotate, "angular resolution (rotations per half turn)"),
    "high_along": (str, _s.high_along, "which direction carries the larger deviation"),
    "isotropy_ratio": (_opt_float, _s.isotropy_ratio, "peak fallback ratio (none disables)"),
    "dmax": (int, 5, "closing distance for --close"),
    "close": (_flag, False, "close regions before scoring"),
}

GROUPS = {
    "smooth": ("lam", "gamma", "iter_times", "knots", "degree"),
    "sampling": ("line_count", "line_width", "center_gap", "max_rotate", "high_along", "isotropy_ratio", "q"),
    "learn": ("K", "l", "patch", "max_atoms", "method", "shift_radius", "max_candidates"),
    "detect": ("eta", "phi_bt", "phi_a", "binarize_eps", "tile_layers", "tile_edge"),
    "close": ("close", "max_rotate", "dmax"),
}


def _add_params(p, *groups):
    seen = getattr(p, "_tbsd_keys", [])
    for g in groups:
        for key in GROUPS[g]:
            if key in seen:
                continue
            seen.append(key)
            _, default, help_ = PARAMS[key]
            flag = "--" + key.replace("_", "-")
            if key == "close":
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_)
            else:
                p.add_argument(flag, dest=key, default=None, metavar=key.upper(),
                               help=f"{help_} (default {default})")
    p._tbsd_keys = seen


def _read_config_file(path) -> dict:
    if str(path).endswith(".json"):
        with open(path) as fh:
            data = json.load(fh)
        return {k: v for k, v in data.get("params", data).items()}
    return read_config(path)


def resolve(args, keys) -> dict:
    """Defaults, then config-file values, then flags."""
    file_vals = _read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(PARAMS)
    if unknown:
        raise PipelineError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key in keys:
        parse, default, _ = PARAMS[key]
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag if isinstance(flag, bool) else parse(flag)
        elif key in file_vals:
            v = file_vals[key]
            out[key] = parse(v) if isinstance(v, str) else (tuple(v) if isinstance(v, list) else v)
        else:
            out[key] = default
    return out


def _detection_params(cfg) -> DetectionParams:
    return DetectionParams(cfg["lam"], cfg["gamma"], cfg["eta"], cfg["iter_times"], cfg["phi_bt"],
                           cfg["phi_a"], cfg["binarize_eps"], cfg["tile_layers"], cfg["tile_edge"])


def _learn_config(cfg) -> LearnConfig:
    return LearnConfig(cfg["lam"], cfg["gamma"], cfg["iter_times"], cfg["knots"], cfg["degree"], cfg["K"],
                       cfg["l"], tuple(cfg["patch"]), cfg["max_atoms"], cfg["method"], cfg["q"],
                       cfg["shift_radius"], cfg["max_candidates"])


def _sampling(cfg) -> SamplingConfig:
    return SamplingConfig(cfg["line_count"], cfg["line_width"], cfg["center_gap"], cfg["max_rotate"],
                          None, cfg["high_along"], cfg["isotropy_ratio"])


def _keys(*groups):
    out = []
    for g in groups:
        out += [k for k in GROUPS[g] if k not in out]
    return out


def crop_cell(Y, grid, cell):
    """Cell ``(i, j)`` of an ``R x C`` split with floor boundaries."""
    R, C = grid
    i, j = cell
    if not (0 <= i < R and 0 <= j < C):
        raise PipelineError(f"cell {cell} outside a {R}x{C} grid")
    m, n = Y.shape
    return Y[i * m // R : (i + 1) * m // R, j * n // C : (j + 1) * n // C]


def _load_input(args) -> np.ndarray:
    Y = read_image(args.input)
    if getattr(args, "grid", None):
        Y = crop_cell(Y, _pair(args.grid), _pair(args.cell or "0,0", ","))
    return Y


def _write_resolved(out_dir, command, cfg, **paths):
    doc = {"tbsd_version": __version__, "command": command, "params": _jsonable(cfg), "paths": paths}
    write_json(Path(out_dir) / "resolved-config.json", doc)


def _jsonable(cfg):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def _dump(obj):
    print(json.dumps(obj, indent=2))


# -- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .simulate import fixture_suite, write_suite

    names = FAMILY_ALIASES[args.family]
    size = _pair(args.size)
    suite = fixture_suite(args.count, size, args.seed)
    write_suite({k: suite[k] for k in names}, args.out)
    _write_resolved(args.out, "simulate", {"family": args.family, "count": args.count,
                                           "seed": args.seed, "size": list(size)})
    print(f"wrote {len(names)} famil{'y' if len(names) == 1 else 'ies'} to {args.out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = resolve(args, _keys("smooth", "sampling", "learn"))
    Y = _load_input(args)
    directions = None
    if args.directions:
        directions = [float(v) for v in args.directions.split(",")]
    try:
        res = learn_texture_basis(Y, _learn_config(cfg), _sampling(cfg), directions,
                                  provenance=f"{args.input} grid={args.grid} cell={args.cell}")
    except ValueError as exc:
        detail = None
        if "direction" in str(exc):
            dec = low_rank_decompose(Y, SmoothBasis.for_shape(Y.shape, cfg["knots"], cfg["degree"]),
                                     cfg["lam"], cfg["gamma"], cfg["iter_times"])
            detail = find_directions(dec.texture, _sampling(cfg), cfg["q"]).report()
        raise PipelineError(str(exc), detail) from exc
    out = Path(args.out)
    save_basis(out, res.basis)
    report = res.directions.report()
    report.update(n_atoms=res.basis.n_atoms, n_patches=len(res.patches))
    name = out.name[: -len(".tbsd.json")] if out.name.endswith(".tbsd.json") else out.stem
    write_json(out.with_name(name + ".directions.json"), report)
    _write_resolved(out.parent, "learn", cfg, input=str(args.input), grid=args.grid, cell=args.cell,
                    directions=args.directions, basis=str(out))
    print(f"{res.basis.n_atoms} atoms, expansion directions {res.directions.expansion_deg} -> {out}")
    return EXIT_OK


def cmd_directions(args) -> int:
    cfg = resolve(args, _keys("smooth", "sampling"))
    Y = _load_input(args)
    if not args.raw:
        smooth = SmoothBasis.for_shape(Y.shape, cfg["knots"], cfg["degree"])
        Y = low_rank_decompose(Y, smooth, cfg["lam"], cfg["gamma"], cfg["iter_times"]).texture
    _dump(find_directions(Y, _sampling(cfg), cfg["q"]).report())
    return EXIT_OK


def cmd_decompose(args) -> int:
    cfg = resolve(args, _keys("smooth"))
    Y = _load_input(args)
    smooth = SmoothBasis.for_shape(Y.shape, cfg["knots"], cfg["degree"])
    dec = low_rank_decompose(Y, smooth, cfg["lam"], cfg["gamma"], cfg["iter_times"])
    out = Path(args.out_dir)
    scales = {name: write_component(out / f"{name}.png", getattr(dec, name))
              for name in ("background", "texture", "residual")}
    write_json(out / "components.json", scales)
    _write_resolved(out, "decompose", cfg, input=str(args.input), grid=args.grid, cell=args.cell)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = resolve(args, _keys("smooth", "detect", "close"))
    params = _detection_params(cfg)
    Y = _load_input(args)
    smooth = SmoothBasis.for_shape(Y.shape, cfg["knots"], cfg["degree"])
    if args.baseline:
        dec = ssd_baseline_detect(Y, smooth, params)
    else:
        if not args.basis:
            raise PipelineError("detect needs --basis unless --baseline is given")
        dec = tbsd_detect(Y, smooth, load_basis(args.basis), params)
    am = anomaly_mask(dec, params.binarize_eps, params.phi_a)
    out = Path(args.out_dir)
    scales = {name: write_component(out / f"{name}.png", getattr(dec, name))
              for name in ("background", "texture", "anomaly")}
    write_json(out / "components.json", scales)
    write_mask(out / "mask.png", am.mask)
    metrics = {"tpr": None, "fpr": None, "anomaly_proportion": am.proportion, "alarm": am.alarm,
               "params": params.to_dict()}
    if args.truth:
        truth = read_mask(args.truth)
        pred = am.mask
        if cfg["close"]:
            pred = regions_mask(close_regions(pred, cfg["max_rotate"], cfg["dmax"]), pred.shape)
            write_mask(out / "closed.png", pred)
        metrics.update(evaluate(pred, truth).to_dict())
    write_json(out / "metrics.json", metrics)
    _write_resolved(out, "detect", cfg, input=str(args.input), basis=args.basis, truth=args.truth,
                    grid=args.grid, cell=args.cell, baseline=args.baseline)
    print(f"anomaly proportion {am.proportion:.4f}, alarm {am.alarm}")
    if args.fail_on_alarm and am.alarm:
        return EXIT_ALARM
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = resolve(args, _keys("close"))
    pred = read_mask(args.pred)
    truth = read_mask(args.truth)
    if cfg["close"]:
        regions = close_regions(pred, cfg["max_rotate"], cfg["dmax"])
        pred = regions_mask(regions, pred.shape)
        if args.overlay:
            write_mask(args.overlay, pred)
    try:
        report = evaluate(pred, truth).to_dict()
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    report["closed"] = cfg["close"]
    if args.out:
        write_json(args.out, report)
        _write_resolved(Path(args.out).parent, "evaluate", cfg, pred=str(args.pred), truth=str(args.truth))
    _dump(report)
    return EXIT_OK


def cmd_study(args) -> int:
    from .study import run_simulation_study

    cfg = resolve(args, _keys("smooth", "sampling", "learn", "detect"))
    res = run_simulation_study(args.count, _pair(args.size), args.seed, _learn_config(cfg),
                               _detection_params(cfg))
    print(res.table())
    if args.out:
        write_json(Path(args.out) / "study.json", res.to_dict())
        _write_resolved(args.out, "study", cfg, count=args.count, seed=args.seed, size=args.size)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbsd", description="Texture-basis smooth decomposition for anomaly detection.")
    p.add_argument("--version", action="version", version=f"tbsd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def image_args(sp):
        sp.add_argument("--input", required=True, help="input image (PNG, 8 or 16 bit, colour is reduced to luminance)")
        sp.add_argument("--grid", help="split the image into RxC equal parts, e.g. 4x4")
        sp.add_argument("--cell", help="row,col of the part to use with --grid (default 0,0)")
        sp.add_argument("--config", help="flat key = value config file (or a resolved-config.json)")

    sp = sub.add_parser("simulate", help="write the simulation families")
    sp.add_argument("--out", required=True)
    sp.add_argument("--family", choices=sorted(FAMILY_ALIASES), default="all")
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", default="344x351", help="HxW")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("learn", help="learn a texture basis from a defect-free image")
    image_args(sp)
    sp.add_argument("--out", required=True, help="basis file, conventionally *.tbsd.json")
    sp.add_argument("--directions", help="known expansion directions in degrees, comma separated")
    _add_params(sp, "smooth", "sampling", "learn")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("directions", help="print the direction score table as JSON")
    image_args(sp)
    sp.add_argument("--raw", action="store_true", help="sample the image itself, not its texture estimate")
    _add_params(sp, "smooth", "sampling")
    sp.set_defaults(func=cmd_directions)

    sp = sub.add_parser("decompose", help="split a defect-free image into background and texture")
    image_args(sp)
    sp.add_argument("--out-dir", required=True)
    _add_params(sp, "smooth")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("detect", help="detect anomalies in a defect image")
    image_args(sp)
    sp.add_argument("--basis", help="texture basis file from 'tbsd learn'")
    sp.add_argument("--truth", help="ground-truth mask; adds tpr/fpr to metrics.json")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--baseline", action="store_true", help="smooth-plus-sparse baseline without texture")
    sp.add_argument("--fail-on-alarm", action="store_true", help="exit with code 3 when the alarm fires")
    _add_params(sp, "smooth", "detect", "close")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("evaluate", help="score a predicted mask against the truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--out", help="metrics.json path")
    sp.add_argument("--overlay", help="write the closed-region mask here")
    sp.add_argument("--config")
    _add_params(sp, "close")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("study", help="run the three-family simulation study and print a summary table")
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", default="344x351")
    sp.add_argument("--out", help="directory for study.json")
    sp.add_argument("--config")
    _add_params(sp, "smooth", "sampling", "learn", "detect")
    sp.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"tbsd: {exc}", file=sys.stderr)
        if exc.detail is not None:
            print(json.dumps(exc.detail, indent=2), file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"tbsd: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"tbsd: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
