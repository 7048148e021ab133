"""Deterministic image-based-lighting renderer for the evaluation scenes.

Spheres on an infinite ground plane, lit by an environment map.  Diffuse
surfaces gather a downsampled copy of the environment with per-direction
sphere occlusion tests (this is what casts shadows); mirrors recurse along
the reflection and terminate into the full-resolution map; glossy surfaces
average a fixed 64-direction cosine-power lobe around the reflection.  No
Monte Carlo anywhere: identical inputs give bit-identical images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotFoundError, ValidationError
from .geometry import EnvMap, pixel_center_directions, resize_env, sample_envmap, solid_angle_map

__all__ = [
    "Material",
    "Sphere",
    "Camera",
    "SceneSpec",
    "RenderConfig",
    "preset_scene",
    "diffuse_irradiance",
    "render_scene",
    "tonemap",
]

_EPS = 1e-6
GLOSSY_SAMPLES = 64


@dataclass(frozen=True)
class Material:
    kind: str  # diffuse | mirror | glossy
    albedo: tuple[float, float, float]
    glossy_exponent: float = 50.0

    def __post_init__(self):
        if self.kind not in {"diffuse", "mirror", "glossy"}:
            raise ValidationError(f"unknown material kind {self.kind!r}")
        albedo = tuple(float(c) for c in self.albedo)
        if any(not (0.0 <= c <= 1.0) for c in albedo):
            raise ValidationError(f"albedo channels must lie in [0, 1], got {albedo}")
        object.__setattr__(self, "albedo", albedo)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: Material

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValidationError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    vertical_fov: float  # radians

    def __post_init__(self):
        if not (0.0 < self.vertical_fov < math.pi):
            raise ValidationError(f"vertical_fov must lie in (0, pi), got {self.vertical_fov}")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "look_at", tuple(float(c) for c in self.look_at))


@dataclass(frozen=True)
class SceneSpec:
    """Spheres resting over an infinite diffuse plane at y = 0."""

    spheres: tuple[Sphere, ...]
    plane_albedo: tuple[float, float, float]
    camera: Camera


@dataclass(frozen=True)
class RenderConfig:
    width: int = 128
    height: int = 128
    shade_env_height: int = 32
    mirror_depth: int = 2
    exposure: float = 1.0
    gamma: float = 2.2

    def __post_init__(self):
        for name in ("width", "height", "shade_env_height", "mirror_depth", "exposure", "gamma"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


_GRAY = (0.8, 0.8, 0.8)


def preset_scene(name: str) -> SceneSpec:
    """Canonical evaluation scenes.

    ``spheres9_top``: a 3x3 grid of diffuse gray spheres (radius 0.8,
    spacing 2.0) seen from straight above.  ``spheres3_front``: one diffuse,
    one mirror, and one glossy sphere of radius 1 in a row, seen from the
    front.  All spheres rest on the ground plane.
    """
    if name == "spheres9_top":
        spheres = tuple(
            Sphere((x, 0.8, z), 0.8, Material("diffuse", _GRAY))
            for z in (-2.0, 0.0, 2.0)
            for x in (-2.0, 0.0, 2.0)
        )
        camera = Camera((0.0, 10.0, 0.0), (0.0, 0.0, 0.0), math.radians(45.0))
        return SceneSpec(spheres, (0.5, 0.5, 0.5), camera)
    if name == "spheres3_front":
        spheres = (
            Sphere((-2.5, 1.0, 0.0), 1.0, Material("diffuse", _GRAY)),
            Sphere((0.0, 1.0, 0.0), 1.0, Material("mirror", (1.0, 1.0, 1.0))),
            Sphere((2.5, 1.0, 0.0), 1.0, Material("glossy", _GRAY, glossy_exponent=50.0)),
        )
        camera = Camera((0.0, 1.5, 6.0), (0.0, 0.0, 0.0), math.radians(45.0))
        return SceneSpec(spheres, (0.5, 0.5, 0.5), camera)
    raise NotFoundError(f"unknown scene preset {name!r}")


def _camera_frame(cam: Camera):
    fwd = np.asarray(cam.look_at) - np.asarray(cam.position)
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ValidationError("camera position and look_at coincide")
    fwd = fwd / norm
    hint = np.array([0.0, 1.0, 0.0])
    if abs(fwd @ hint) > 0.999:  # looking (almost) straight up/down
        hint = np.array([0.0, 0.0, -1.0])
    right = np.cross(fwd, hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    return fwd, right, up


class _ShadingContext:
    """Precomputed gather directions and immutable scene data for one render."""

    def __init__(self, env: EnvMap, scene: SceneSpec, cfg: RenderConfig):
        self.env = env
        self.scene = scene
        self.cfg = cfg
        shade_env = resize_env(env, cfg.shade_env_height)
        h, w = shade_env.height, shade_env.width
        self.gather_dirs = pixel_center_directions(h, w).reshape(-1, 3)
        self.gather_domega = solid_angle_map(h, w).reshape(-1)
        self.gather_radiance = shade_env.data.reshape(-1, 3)
        self.centers = np.array([s.center for s in scene.spheres]).reshape(-1, 3)
        self.radii = np.array([s.radius for s in scene.spheres])

    def occluded(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """True where a ray from ``origin`` along each unit dir hits a sphere."""
        blocked = np.zeros(dirs.shape[0], dtype=bool)
        for c, r in zip(self.centers, self.radii):
            oc = origin - c
            b = dirs @ oc
            disc = b * b - (oc @ oc - r * r)
            ok = disc > 0.0
            if not ok.any():
                continue
            root = np.sqrt(np.where(ok, disc, 0.0))
            t_near = -b - root
            blocked |= ok & (t_near > _EPS)
        return blocked


def diffuse_irradiance(env: EnvMap, normal, occluder_test=None) -> np.ndarray:
    """Cosine-weighted gather of an environment map over a hemisphere.

    Returns the outgoing radiance factor of a white Lambertian surface; the
    caller multiplies by albedo.  ``occluder_test`` takes the (N, 3) gather
    directions and returns a boolean blocked mask.  The cosine quadrature is
    renormalized so an unoccluded constant environment L0 returns exactly L0
    and the result never exceeds the brightest environment value.
    """
    h, w = env.height, env.width
    dirs = pixel_center_directions(h, w).reshape(-1, 3)
    domega = solid_angle_map(h, w).reshape(-1)
    radiance = env.data.reshape(-1, 3)
    return _gather(dirs, domega, radiance, np.asarray(normal, dtype=np.float64), occluder_test)


def _gather(dirs, domega, radiance, normal, occluder_test):
    cos = dirs @ normal
    weights = np.where(cos > 0.0, cos, 0.0) * domega
    denom = float(weights.sum())
    if denom <= 0.0:
        return np.zeros(3)
    if occluder_test is not None:
        blocked = occluder_test(dirs)
        weights = np.where(blocked, 0.0, weights)
    return (weights @ radiance) / denom


def _intersect_nearest(ctx: _ShadingContext, origin: np.ndarray, d: np.ndarray):
    """Nearest hit of a single ray; returns (t, sphere index or -1 for plane)."""
    best_t = math.inf
    best = None
    for idx, (c, r) in enumerate(zip(ctx.centers, ctx.radii)):
        oc = origin - c
        b = float(d @ oc)
        disc = b * b - float(oc @ oc) + r * r
        if disc <= 0.0:
            continue
        root = math.sqrt(disc)
        for t in (-b - root, -b + root):
            if _EPS < t < best_t:
                best_t = t
                best = idx
    if d[1] < -1e-12 and origin[1] > 0.0:
        t = -origin[1] / d[1]
        if _EPS < t < best_t:
            best_t = t
            best = -1
    return (best_t, best) if best is not None else (math.inf, None)


@dataclass
class _Hit:
    point: np.ndarray
    normal: np.ndarray
    material: Material


def _hit_info(ctx: _ShadingContext, origin, d, t, index) -> _Hit:
    point = origin + t * d
    if index == -1:
        return _Hit(point, np.array([0.0, 1.0, 0.0]), Material("diffuse", ctx.scene.plane_albedo))
    sphere = ctx.scene.spheres[index]
    normal = (point - np.asarray(sphere.center)) / sphere.radius
    return _Hit(point, normal, sphere.material)


@dataclass(frozen=True)
class _LobeBasis:
    offsets: np.ndarray  # (GLOSSY_SAMPLES, 2) low-discrepancy unit-square points


def _hammersley(n: int) -> np.ndarray:
    pts = np.zeros((n, 2))
    for i in range(n):
        bits, denom, vdc = i, 1.0, 0.0
        while bits:
            denom *= 2.0
            vdc += (bits & 1) / denom
            bits >>= 1
        pts[i] = ((i + 0.5) / n, vdc)
    return pts


_LOBE = _LobeBasis(_hammersley(GLOSSY_SAMPLES))


def _phong_lobe_dirs(reflection: np.ndarray, exponent: float) -> np.ndarray:
    """Fixed cosine-power distributed directions around a reflection vector."""
    u1 = _LOBE.offsets[:, 0]
    u2 = _LOBE.offsets[:, 1]
    cos_a = u1 ** (1.0 / (exponent + 1.0))
    sin_a = np.sqrt(np.maximum(0.0, 1.0 - cos_a * cos_a))
    phi = 2.0 * math.pi * u2
    hint = np.array([1.0, 0.0, 0.0]) if abs(reflection[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(reflection, hint)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(reflection, t1)
    local = (
        sin_a[:, None] * np.cos(phi)[:, None] * t1
        + sin_a[:, None] * np.sin(phi)[:, None] * t2
        + cos_a[:, None] * reflection
    )
    return local / np.linalg.norm(local, axis=1, keepdims=True)


def _shade_hit(ctx: _ShadingContext, hit: _Hit, d: np.ndarray, depth: int) -> np.ndarray:
    albedo = np.asarray(hit.material.albedo)
    if hit.material.kind == "diffuse":
        origin = hit.point + _EPS * hit.normal
        value = _gather(
            ctx.gather_dirs,
            ctx.gather_domega,
            ctx.gather_radiance,
            hit.normal,
            lambda dirs: ctx.occluded(origin, dirs),
        )
        return albedo * value
    reflection = d - 2.0 * float(d @ hit.normal) * hit.normal
    reflection /= np.linalg.norm(reflection)
    if hit.material.kind == "mirror":
        if depth < ctx.cfg.mirror_depth:
            return albedo * _shade_ray(ctx, hit.point + _EPS * hit.normal, reflection, depth + 1)
        return albedo * sample_envmap(ctx.env, reflection)
    # glossy: average the lobe; below-horizon directions contribute nothing.
    # Lobe rays are terminal for further specular hits (depth pinned at the cap).
    if depth >= ctx.cfg.mirror_depth:
        return albedo * sample_envmap(ctx.env, reflection)
    origin = hit.point + _EPS * hit.normal
    lobe = _phong_lobe_dirs(reflection, hit.material.glossy_exponent)
    total = np.zeros(3)
    for w in lobe:
        if float(w @ hit.normal) <= 0.0:
            continue
        total += _shade_ray(ctx, origin, w, ctx.cfg.mirror_depth)
    return albedo * (total / GLOSSY_SAMPLES)


def _shade_ray(ctx: _ShadingContext, origin: np.ndarray, d: np.ndarray, depth: int) -> np.ndarray:
    t, index = _intersect_nearest(ctx, origin, d)
    if index is None:
        return sample_envmap(ctx.env, d)
    return _shade_hit(ctx, _hit_info(ctx, origin, d, t, index), d, depth)


def render_scene(env: EnvMap, scene: SceneSpec, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Render the scene to a linear-radiance (H, W, 3) image."""
    ctx = _ShadingContext(env, scene, cfg)
    fwd, right, up = _camera_frame(scene.camera)
    origin = np.asarray(scene.camera.position, dtype=np.float64)

    tan_v = math.tan(scene.camera.vertical_fov / 2.0)
    tan_h = tan_v * cfg.width / cfg.height
    xs = (2.0 * (np.arange(cfg.width) + 0.5) / cfg.width - 1.0) * tan_h
    ys = (1.0 - 2.0 * (np.arange(cfg.height) + 0.5) / cfg.height) * tan_v
    image = np.zeros((cfg.height, cfg.width, 3))
    for j in range(cfg.height):
        for i in range(cfg.width):
            d = fwd + xs[i] * right + ys[j] * up
            d = d / np.linalg.norm(d)
            image[j, i] = _shade_ray(ctx, origin, d, 0)
    return image


def tonemap(hdr: np.ndarray, exposure: float = 1.0, gamma: float = 2.2) -> np.ndarray:
    """clamp(exposure * x, 0, 1) ** (1 / gamma), per channel."""
    if gamma <= 0.0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    arr = np.asarray(hdr, dtype=np.float64)
    return np.clip(exposure * arr, 0.0, 1.0) ** (1.0 / gamma)
