"""Batch command line: fit, render-sg, composite, render-scene, edit, eval, crop, serve.

Every subcommand is a thin composition of module operations.  Exit codes:
0 success, 1 usage error, 2 I/O or file-format error, 3 validation error.
Diagnostics go to stderr; data goes to stdout or to --out paths.  The
ENVLIGHT_THREADS environment variable caps internal worker parallelism
(0 or unset means automatic).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields
from pathlib import Path

from .errors import (
    DimensionError,
    DomainError,
    EnvlightError,
    NotFoundError,
    OptimizationError,
    ParseError,
    ValidationError,
)
from .fitting import FitOptions, fit
from .geometry import EnvMap
from .hdrio import export_png, read_hdr, read_pfm, write_hdr, write_pfm
from .metrics import EvalManifest, extract_views, run_manifest
from .render import RenderConfig, preset_scene, render_scene, tonemap
from .sg import EditOp, apply_edit, parse_lights, relight_composite, render_sg_map, serialize_lights


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run() owns the exit code."""

    def error(self, message):
        raise _UsageError(message)


def _load_env(path: str) -> EnvMap:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".hdr":
        return read_hdr(path)
    raise ValidationError(f"unsupported panorama format {suffix!r} (use .hdr or .pfm)")


def _save_env(path: str, env) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, env)
    elif suffix == ".hdr":
        write_hdr(path, env)
    else:
        raise ValidationError(f"unsupported output format {suffix!r} (use .hdr or .pfm)")


def _parse_triple(text: str, what: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"{what} expects three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise _UsageError(f"{what} expects numbers, got {text!r}") from exc


_FIT_FLAGS = {
    "target_height": ("--target-height", int),
    "blur_sigma": ("--blur-sigma", float),
    "threshold_percentile": ("--threshold-pct", float),
    "init_sigma": ("--init-sigma", float),
    "lambda1": ("--lambda1", float),
    "learning_rate": ("--lr", float),
    "plateau_epochs": ("--plateau-epochs", int),
    "lr_decay_factor": ("--lr-decay", float),
    "max_epochs": ("--max-epochs", int),
    "min_lr": ("--min-lr", float),
    "nms_interval": ("--nms-interval", int),
    "max_lights": ("--max-lights", int),
    "lambda_unit": ("--lambda-unit", float),
    "lambda_neg": ("--lambda-neg", float),
    "lambda_band": ("--lambda-band", float),
    "lambda_sat": ("--lambda-sat", float),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="envlight", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a light set to an HDR panorama")
    p_fit.add_argument("--input", required=True, help="panorama (.hdr or .pfm)")
    p_fit.add_argument("--out", help="output lights JSON (default: stdout)")
    p_fit.add_argument("--trace", help="optional JSON file for per-epoch diagnostics")
    defaults = FitOptions()
    for field in fields(FitOptions):
        flag, kind = _FIT_FLAGS[field.name]
        p_fit.add_argument(flag, type=kind, default=getattr(defaults, field.name))

    p_render = sub.add_parser("render-sg", help="rasterize a light set to a panorama")
    p_render.add_argument("--lights", required=True)
    p_render.add_argument("--height", type=int, default=128)
    p_render.add_argument("--out", required=True)

    p_comp = sub.add_parser("composite", help="add a rendered light map onto a texture")
    p_comp.add_argument("--texture", required=True)
    p_comp.add_argument("--lights", required=True)
    p_comp.add_argument("--out", required=True)

    p_scene = sub.add_parser("render-scene", help="render an evaluation scene under a panorama")
    p_scene.add_argument("--env", required=True)
    p_scene.add_argument("--scene", choices=["spheres9_top", "spheres3_front"], required=True)
    p_scene.add_argument("--out", required=True, help=".png (tonemapped) or .hdr/.pfm (linear)")
    p_scene.add_argument("--width", type=int, default=128)
    p_scene.add_argument("--height", type=int, default=128)
    p_scene.add_argument("--shade-env-height", type=int, default=32)
    p_scene.add_argument("--mirror-depth", type=int, default=2)
    p_scene.add_argument("--exposure", type=float, default=1.0)
    p_scene.add_argument("--gamma", type=float, default=2.2)

    p_edit = sub.add_parser("edit", help="apply one edit to a lights JSON file")
    p_edit.add_argument("--lights", required=True)
    p_edit.add_argument("--op", choices=["add", "remove", "move", "color", "sigma", "scale"], required=True)
    p_edit.add_argument("--id", type=int, help="target light id (non-add ops)")
    p_edit.add_argument("--color", help="r,g,b")
    p_edit.add_argument("--dir", help="x,y,z")
    p_edit.add_argument("--sigma", type=float)
    p_edit.add_argument("--factor", type=float)
    p_edit.add_argument("--out", help="output lights JSON (default: stdout)")

    p_eval = sub.add_parser("eval", help="run an evaluation manifest into a CSV report")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", help="output CSV (default: stdout)")

    p_crop = sub.add_parser("crop", help="extract pinhole views from a panorama")
    p_crop.add_argument("--pano", required=True)
    p_crop.add_argument("--azimuths", default="0,120,240", help="comma-separated degrees")
    p_crop.add_argument("--fov", type=float, default=60.0, help="horizontal fov in degrees")
    p_crop.add_argument("--elevation", type=float, default=0.0)
    p_crop.add_argument("--size", type=int, default=256)
    p_crop.add_argument("--out", required=True, help="output directory")

    p_serve = sub.add_parser("serve", help="run the interactive editing service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--data-dir", help="persist sessions under this directory")
    return parser


_EDIT_KIND = {
    "add": "add",
    "remove": "remove",
    "move": "set_direction",
    "color": "set_color",
    "sigma": "set_bandwidth",
    "scale": "scale_intensity",
}


def _cmd_fit(args) -> int:
    opts = FitOptions(**{name: getattr(args, _FIT_FLAGS[name][0].lstrip("-").replace("-", "_"))
                         for name in _FIT_FLAGS})
    env = _load_env(args.input)
    lights, trace = fit(env, opts)
    text = serialize_lights(lights)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.trace:
        import json

        Path(args.trace).write_text(
            json.dumps(
                {
                    "losses": trace.losses.tolist(),
                    "learning_rates": trace.learning_rates.tolist(),
                    "light_counts": trace.light_counts.tolist(),
                    "termination_reason": trace.termination_reason,
                },
                indent=2,
            )
        )
    print(f"fit: {len(lights)} lights, {len(trace.losses)} epochs, "
          f"terminated by {trace.termination_reason}", file=sys.stderr)
    return 0


def _cmd_render_sg(args) -> int:
    lights = parse_lights(Path(args.lights).read_text())
    _save_env(args.out, render_sg_map(lights, args.height))
    return 0


def _cmd_composite(args) -> int:
    texture = _load_env(args.texture)
    lights = parse_lights(Path(args.lights).read_text())
    light_map = render_sg_map(lights, texture.height)
    _save_env(args.out, relight_composite(texture, light_map))
    return 0


def _cmd_render_scene(args) -> int:
    env = _load_env(args.env)
    cfg = RenderConfig(
        width=args.width,
        height=args.height,
        shade_env_height=args.shade_env_height,
        mirror_depth=args.mirror_depth,
        exposure=args.exposure,
        gamma=args.gamma,
    )
    image = render_scene(env, preset_scene(args.scene), cfg)
    out = Path(args.out)
    if out.suffix.lower() == ".png":
        export_png(tonemap(image, cfg.exposure, cfg.gamma), out)
    elif out.suffix.lower() == ".pfm":
        write_pfm(out, image)
    elif out.suffix.lower() == ".hdr":
        write_hdr(out, image)
    else:
        raise ValidationError(f"unsupported output format {out.suffix!r}")
    return 0


def _cmd_edit(args) -> int:
    lights = parse_lights(Path(args.lights).read_text())
    kind = _EDIT_KIND[args.op]
    op = EditOp(
        kind=kind,
        target=args.id,
        color=_parse_triple(args.color, "--color") if args.color else None,
        direction=_parse_triple(args.dir, "--dir") if args.dir else None,
        sigma=args.sigma,
        factor=args.factor,
    )
    text = serialize_lights(apply_edit(lights, op))
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_eval(args) -> int:
    manifest = EvalManifest.from_json(Path(args.manifest).read_text())
    text = run_manifest(manifest, out_path=args.out)
    if not args.out:
        sys.stdout.write(text)
    return 0


def _cmd_crop(args) -> int:
    pano = _load_env(args.pano)
    azimuths = [float(a) for a in args.azimuths.split(",") if a]
    if not azimuths:
        raise _UsageError("--azimuths must list at least one angle")
    views = extract_views(
        pano, azimuths, elevation_deg=args.elevation, fov_deg=args.fov, out_size=args.size
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.pano).stem
    for az, view in zip(azimuths, views):
        write_hdr(out_dir / f"{stem}_az{az:g}.hdr", view)
    print(f"crop: wrote {len(views)} views to {out_dir}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "render-sg": _cmd_render_sg,
    "composite": _cmd_composite,
    "render-scene": _cmd_render_scene,
    "edit": _cmd_edit,
    "eval": _cmd_eval,
    "crop": _cmd_crop,
    "serve": _cmd_serve,
}


def run(argv) -> int:
    """Parse and execute one command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (OSError, ParseError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, DomainError, DimensionError, NotFoundError, OptimizationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except EnvlightError as exc:  # any remaining structured error
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
