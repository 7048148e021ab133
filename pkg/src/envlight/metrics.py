"""Render-based lighting metrics and the batch evaluation harness.

RMSE, scale-invariant RMSE, and RGB angular error are computed on the HDR
renders; PSNR is computed on the tonemapped renders with peak 1.0 (HDR-domain
PSNR has no peak convention).  The scale for siRMSE is fitted on the
prediction: alpha = <a, b> / <a, a> minimizing ||alpha a - b||.
"""

from __future__ import annotations

import concurrent.futures
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, ParseError, ValidationError
from .geometry import CameraPose, EnvMap, pixel_center_directions, rotation_matrix, sample_envmap
from .hdrio import read_hdr, read_pfm
from .render import RenderConfig, preset_scene, render_scene, tonemap
from .sg import SgSet, parse_lights, render_sg_map

__all__ = [
    "MetricsReport",
    "EvalManifest",
    "ManifestEntry",
    "rmse",
    "si_rmse",
    "rgb_angular",
    "psnr",
    "extract_views",
    "evaluate_pair",
    "run_manifest",
]

CSV_HEADER = "id,rmse,si_rmse,rgb_ang_deg,psnr_db,fid,status"


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")


def rmse(a, b) -> float:
    """Root mean squared error over all pixels and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def si_rmse(a, b) -> float:
    """RMSE after the globally optimal scale is applied to the prediction a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    denom = float(np.sum(a * a))
    alpha = float(np.sum(a * b)) / denom if denom > 0.0 else 0.0
    return rmse(alpha * a, b)


def rgb_angular(a, b) -> float:
    """Mean per-pixel angle in degrees between RGB vectors.

    Pixels where either vector has near-zero norm contribute zero.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    _check_shapes(a, b)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 1e-9) & (nb > 1e-9)
    u = a[ok] / na[ok, None]
    v = b[ok] / nb[ok, None]
    # 2 atan2(|u-v|, |u+v|) is exact at 0 and stable near 0 and pi,
    # unlike arccos of a rounded dot product
    angles = np.zeros(a.shape[0])
    angles[ok] = 2.0 * np.arctan2(
        np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1)
    )
    return float(np.mean(np.degrees(angles)))


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in decibels; identical images give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    si_rmse: float
    rgb_angular_deg: float
    psnr_db: float

    def __post_init__(self):
        if self.rmse < 0.0 or self.si_rmse > self.rmse + 1e-12:
            raise ValidationError(
                f"inconsistent report: rmse={self.rmse} si_rmse={self.si_rmse}"
            )
        if not (0.0 <= self.rgb_angular_deg <= 180.0):
            raise ValidationError(f"angular error out of [0, 180]: {self.rgb_angular_deg}")


def extract_views(
    pano: EnvMap,
    azimuths_deg,
    elevation_deg: float = 0.0,
    fov_deg: float = 60.0,
    out_size: int = 256,
) -> list[np.ndarray]:
    """Pinhole crops of a panorama at the given azimuths.

    Exact inverse of the warp's sampling: each crop pixel center maps to a
    world direction and bilinearly samples the panorama.
    """
    if isinstance(out_size, int):
        out_w = out_h = out_size
    else:
        out_w, out_h = out_size
    if out_w < 1 or out_h < 1:
        raise DomainError(f"crop size must be positive, got {out_size}")
    views = []
    for az in azimuths_deg:
        cam = CameraPose(
            horizontal_fov=math.radians(fov_deg),
            elevation=math.radians(elevation_deg),
            azimuth=math.radians(float(az)),
        )
        rot = rotation_matrix(cam)
        tan_h = math.tan(cam.horizontal_fov / 2.0)
        tan_v = tan_h * out_h / out_w
        xs = (2.0 * (np.arange(out_w) + 0.5) / out_w - 1.0) * tan_h
        ys = (1.0 - 2.0 * (np.arange(out_h) + 0.5) / out_h) * tan_v
        xx, yy = np.meshgrid(xs, ys)
        cam_dirs = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
        cam_dirs /= np.linalg.norm(cam_dirs, axis=-1, keepdims=True)
        world = cam_dirs @ rot.T
        views.append(sample_envmap(pano, world))
    return views


def evaluate_pair(
    gt_env: EnvMap,
    pred_lighting,
    scene_name: str = "spheres9_top",
    cfg: RenderConfig = RenderConfig(width=64, height=64),
) -> MetricsReport:
    """Render both lightings over a preset scene and compare the renders.

    ``pred_lighting`` is an :class:`EnvMap` or an :class:`SgSet` (rendered to
    a map at the ground-truth resolution first).
    """
    if isinstance(pred_lighting, SgSet):
        pred_env = render_sg_map(pred_lighting, gt_env.height)
    else:
        pred_env = pred_lighting
    scene = preset_scene(scene_name)
    gt_render = render_scene(gt_env, scene, cfg)
    pred_render = render_scene(pred_env, scene, cfg)
    return MetricsReport(
        rmse=rmse(pred_render, gt_render),
        si_rmse=si_rmse(pred_render, gt_render),
        rgb_angular_deg=rgb_angular(pred_render, gt_render),
        psnr_db=psnr(
            tonemap(pred_render, cfg.exposure, cfg.gamma),
            tonemap(gt_render, cfg.exposure, cfg.gamma),
        ),
    )


@dataclass(frozen=True)
class ManifestEntry:
    entry_id: str
    gt_env: str
    pred_env: str | None = None
    pred_lights: str | None = None

    def __post_init__(self):
        if (self.pred_env is None) == (self.pred_lights is None):
            raise ValidationError(
                f"entry {self.entry_id!r} needs exactly one of pred_env / pred_lights"
            )
        pred = self.pred_env or self.pred_lights
        if pred == self.gt_env:
            raise ValidationError(f"entry {self.entry_id!r} repeats the same path")


@dataclass(frozen=True)
class EvalManifest:
    scene: str
    entries: tuple[ManifestEntry, ...]
    render: RenderConfig = RenderConfig(width=64, height=64)

    @classmethod
    def from_json(cls, text: str) -> "EvalManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid manifest JSON: {exc.msg}", offset=exc.pos) from exc
        if not isinstance(doc, dict):
            raise ValidationError("manifest must be a JSON object")
        unknown = set(doc) - {"scene", "entries", "render"}
        if unknown:
            raise ValidationError(f"unknown manifest fields: {sorted(unknown)}")
        scene = doc.get("scene", "spheres9_top")
        render_kwargs = doc.get("render", {})
        if not isinstance(render_kwargs, dict):
            raise ValidationError('"render" must be an object of RenderConfig fields')
        cfg = RenderConfig(width=64, height=64) if not render_kwargs else RenderConfig(**render_kwargs)
        raw_entries = doc.get("entries", [])
        if not isinstance(raw_entries, list):
            raise ValidationError('"entries" must be an array')
        entries = []
        for idx, obj in enumerate(raw_entries):
            if not isinstance(obj, dict):
                raise ValidationError(f"entry {idx} must be an object")
            unknown = set(obj) - {"id", "gt_env", "pred_env", "pred_lights"}
            if unknown:
                raise ValidationError(f"entry {idx} has unknown fields: {sorted(unknown)}")
            if "gt_env" not in obj:
                raise ValidationError(f"entry {idx} is missing gt_env")
            entries.append(
                ManifestEntry(
                    entry_id=str(obj.get("id", idx)),
                    gt_env=obj["gt_env"],
                    pred_env=obj.get("pred_env"),
                    pred_lights=obj.get("pred_lights"),
                )
            )
        return cls(scene=scene, entries=tuple(entries), render=cfg)


def _load_env(path: str) -> EnvMap:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    return read_hdr(path)


def _format(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.10g}"


def _worker_count() -> int:
    raw = os.environ.get("ENVLIGHT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(8, os.cpu_count() or 1)
    return max(1, n)


def _evaluate_entry(entry: ManifestEntry, scene: str, cfg: RenderConfig):
    try:
        gt = _load_env(entry.gt_env)
        if entry.pred_lights is not None:
            pred = parse_lights(Path(entry.pred_lights).read_text())
        else:
            pred = _load_env(entry.pred_env)
        report = evaluate_pair(gt, pred, scene, cfg)
        return (report, "ok")
    except (OSError, ParseError) as exc:
        return (None, f"error:io ({exc})")
    except (ValidationError, DimensionError, DomainError) as exc:
        return (None, f"error:validation ({exc})")


def run_manifest(manifest: EvalManifest, out_path=None) -> str:
    """Evaluate every manifest entry into a CSV report.

    One row per entry in manifest order; rows that fail carry an error tag in
    the status column and leave the metric cells empty.  A final ``mean`` row
    averages the successful rows.  The FID column is reserved and always
    ``n/a``.  Output is byte-identical across runs for identical inputs.
    """
    results = []
    if manifest.entries:
        with concurrent.futures.ThreadPoolExecutor(max_workers=_worker_count()) as pool:
            futures = [
                pool.submit(_evaluate_entry, entry, manifest.scene, manifest.render)
                for entry in manifest.entries
            ]
            results = [f.result() for f in futures]

    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    good: list[MetricsReport] = []
    for entry, (report, status) in zip(manifest.entries, results):
        if report is None:
            buf.write(f"{entry.entry_id},,,,,n/a,{status}\n")
        else:
            good.append(report)
            buf.write(
                f"{entry.entry_id},{_format(report.rmse)},{_format(report.si_rmse)},"
                f"{_format(report.rgb_angular_deg)},{_format(report.psnr_db)},n/a,{status}\n"
            )
    if good:
        mean_psnr = (
            math.inf
            if any(math.isinf(r.psnr_db) for r in good)
            else sum(r.psnr_db for r in good) / len(good)
        )
        buf.write(
            "mean,"
            f"{_format(sum(r.rmse for r in good) / len(good))},"
            f"{_format(sum(r.si_rmse for r in good) / len(good))},"
            f"{_format(sum(r.rgb_angular_deg for r in good) / len(good))},"
            f"{_format(mean_psnr)},n/a,ok\n"
        )
    text = buf.getvalue()
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    return text
