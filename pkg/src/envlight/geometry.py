"""Equirectangular panorama geometry: directions, solid angles, warps.

Convention used throughout the package: y is up and the panorama's center
column looks along +z.  A continuous panorama coordinate (u, v), with
u in [0, W] and v in [0, H], maps to azimuth phi = 2*pi*u/W - pi (increasing
eastward, toward +x) and polar angle theta = pi*v/H (0 at the zenith).  The
corresponding unit direction is

    (sin(theta)*sin(phi), cos(theta), sin(theta)*cos(phi))

so (W/2, H/2) is +z, (W/2, 0) is +y, and (3W/4, H/2) is +x.  Pixel (i, j)
covers [i, i+1] x [j, j+1] and is sampled at its center (i+0.5, j+0.5).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, ValidationError

__all__ = [
    "EnvMap",
    "CameraPose",
    "MaskedPano",
    "pixel_to_direction",
    "direction_to_pixel",
    "pixel_center_directions",
    "solid_angle_map",
    "rotation_matrix",
    "warp_image_to_pano",
    "composite_known",
    "sample_envmap",
    "resize_env",
]

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True)
class EnvMap:
    """Equirectangular grid of linear-radiance RGB values, W = 2H.

    The pixel array is copied on construction and frozen; instances are safe
    to share across threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"environment map must be HxWx3, got {arr.shape}")
        h, w = arr.shape[:2]
        if h < 1 or w != 2 * h:
            raise DimensionError(f"environment map needs W = 2H, got {h}x{w}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("environment map contains NaN or Inf")
        if arr.min() < 0.0:
            raise ValidationError("environment map contains negative radiance")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera orientation inside a panorama.

    Angles in radians.  ``horizontal_fov`` must be strictly inside (0, pi);
    elevation tilts the view up for positive values; roll turns it about the
    optical axis.
    """

    horizontal_fov: float
    elevation: float = 0.0
    roll: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.horizontal_fov < math.pi):
            raise DomainError(
                f"horizontal_fov must lie strictly inside (0, pi), got {self.horizontal_fov}"
            )
        if not (-math.pi / 2 < self.elevation < math.pi / 2):
            raise DomainError(f"elevation out of (-pi/2, pi/2): {self.elevation}")
        if not (-math.pi < self.roll <= math.pi):
            raise DomainError(f"roll out of (-pi, pi]: {self.roll}")


@dataclass(frozen=True)
class MaskedPano:
    """Environment map plus a per-pixel observed/unobserved mask."""

    env: EnvMap
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.env.height, self.env.width):
            raise DimensionError(
                f"mask shape {mask.shape} does not match panorama "
                f"{self.env.height}x{self.env.width}"
            )
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)


def pixel_to_direction(u, v, height: int, width: int) -> np.ndarray:
    """Map continuous panorama coordinates to unit directions.

    Accepts scalars or arrays; the result has one more trailing axis of
    length 3.  Coordinates must satisfy 0 <= u <= W and 0 <= v <= H.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u > width) or np.any(v < 0.0) or np.any(v > height):
        raise DomainError("panorama coordinates outside [0, W] x [0, H]")
    phi = 2.0 * np.pi * u / width - np.pi
    theta = np.pi * v / height
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def direction_to_pixel(direction, height: int, width: int):
    """Inverse of :func:`pixel_to_direction`; u wraps modulo W.

    At the poles (x = z = 0) the azimuth is conventionally 0, so u = W/2.
    Raises :class:`DomainError` for (near-)zero vectors.
    """
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm < 1e-12):
        raise DomainError("cannot project a zero direction vector")
    x = d[..., 0] / norm
    y = d[..., 1] / norm
    z = d[..., 2] / norm
    phi = np.arctan2(x, z)
    theta = np.arccos(np.clip(y, -1.0, 1.0))
    u = np.mod((phi + np.pi) / (2.0 * np.pi) * width, width)
    v = theta / np.pi * height
    return u, v


@functools.lru_cache(maxsize=8)
def _cached_center_directions(height: int, width: int) -> np.ndarray:
    cols = np.arange(width, dtype=np.float64) + 0.5
    rows = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(cols, rows)
    dirs = pixel_to_direction(uu, vv, height, width)
    dirs.flags.writeable = False
    return dirs


def pixel_center_directions(height: int, width: int) -> np.ndarray:
    """(H, W, 3) unit directions at every pixel center (read-only, cached)."""
    return _cached_center_directions(int(height), int(width))


def solid_angle_map(height: int, width: int) -> np.ndarray:
    """Per-pixel solid angles in steradians; rows integrate the polar band.

    weight(row v) = (2*pi/W) * (cos(pi*v/H) - cos(pi*(v+1)/H)); the total over
    the map is exactly the sphere area 4*pi.
    """
    if height < 1:
        raise DimensionError(f"height must be >= 1, got {height}")
    if width != 2 * height:
        raise DimensionError(f"solid angle map needs W = 2H, got {height}x{width}")
    v = np.arange(height, dtype=np.float64)
    band = np.cos(np.pi * v / height) - np.cos(np.pi * (v + 1) / height)
    row = (2.0 * np.pi / width) * band
    return np.tile(row[:, None], (1, width))


def rotation_matrix(cam: CameraPose) -> np.ndarray:
    """World-from-camera rotation for a pose.

    The camera starts looking along +z with +y up and is rotated by azimuth
    about +y, then elevation about its x axis (positive tilts the view up),
    then roll about its optical axis, in that order.
    """
    ca, sa = math.cos(cam.azimuth), math.sin(cam.azimuth)
    ce, se = math.cos(cam.elevation), math.sin(cam.elevation)
    cr, sr = math.cos(cam.roll), math.sin(cam.roll)
    ry = np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ce, se], [0.0, -se, ce]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return ry @ rx @ rz


def _bilinear_clamped(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup at pixel-index coordinates, clamped to the edges."""
    h, w = image.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = image[y0, x0] * (1.0 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1.0 - fx) + image[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def warp_image_to_pano(image, cam: CameraPose, pano_height: int) -> MaskedPano:
    """Warp a pinhole image into an otherwise-empty panorama.

    Every panorama pixel whose center direction falls inside the camera
    frustum samples the image bilinearly (principal point at the image
    center, unit pixel aspect); all other pixels are zero and unobserved.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"input image must be non-empty HxWx3, got {img.shape}")
    if pano_height < 16:
        raise DomainError(f"panorama height must be >= 16, got {pano_height}")
    h_img, w_img = img.shape[:2]

    height, width = pano_height, 2 * pano_height
    dirs = pixel_center_directions(height, width).reshape(-1, 3)
    cam_dirs = dirs @ rotation_matrix(cam)  # row-vector form of R^T @ d

    z = cam_dirs[:, 2]
    front = z > 1e-12
    zsafe = np.where(front, z, 1.0)
    xn = cam_dirs[:, 0] / zsafe
    yn = cam_dirs[:, 1] / zsafe
    tan_h = math.tan(cam.horizontal_fov / 2.0)
    tan_v = tan_h * h_img / w_img
    inside = front & (np.abs(xn) <= tan_h) & (np.abs(yn) <= tan_v)

    out = np.zeros((height * width, 3))
    if inside.any():
        col = (xn[inside] / tan_h + 1.0) / 2.0 * w_img
        row = (1.0 - yn[inside] / tan_v) / 2.0 * h_img
        out[inside] = _bilinear_clamped(img, col - 0.5, row - 0.5)
    mask = inside.reshape(height, width)
    if not mask.any():
        raise DomainError("camera frustum covers no panorama pixel centers")
    return MaskedPano(EnvMap(out.reshape(height, width, 3)), mask)


def composite_known(generated: EnvMap, observed: MaskedPano) -> EnvMap:
    """Overlay the observed pixels of a partial panorama onto a generated one."""
    if (generated.height, generated.width) != (observed.env.height, observed.env.width):
        raise DimensionError(
            f"cannot composite {generated.height}x{generated.width} with "
            f"{observed.env.height}x{observed.env.width}"
        )
    out = np.where(observed.mask[..., None], observed.env.data, generated.data)
    return EnvMap(out)


def sample_envmap(env: EnvMap, directions) -> np.ndarray:
    """Bilinear radiance lookup along unit directions.

    Wraps horizontally across the seam and clamps vertically at the poles.
    ``directions`` is (..., 3); the result is (..., 3).
    """
    d = np.asarray(directions, dtype=np.float64)
    u, v = direction_to_pixel(d, env.height, env.width)
    data = env.data
    h, w = env.height, env.width

    sx = u - 0.5
    sy = np.clip(v - 0.5, 0.0, h - 1.0)
    x0 = np.floor(sx)
    fx = (sx - x0)[..., None]
    x0 = np.mod(x0.astype(np.intp), w)
    x1 = np.mod(x0 + 1, w)
    y0 = np.floor(sy).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    fy = (sy - y0)[..., None]
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_env(env: EnvMap, new_height: int) -> EnvMap:
    """Resample a panorama to a new height (width follows as 2H).

    Integer-factor downsampling averages pixel blocks (energy preserving);
    any other ratio falls back to bilinear sampling at the target pixel
    centers with horizontal wraparound.
    """
    if new_height < 1:
        raise DimensionError(f"target height must be >= 1, got {new_height}")
    if new_height == env.height:
        return env
    h_src, w_src = env.height, env.width
    h_dst, w_dst = new_height, 2 * new_height
    if h_src % h_dst == 0:
        f = h_src // h_dst
        blocks = env.data.reshape(h_dst, f, w_dst, f, 3)
        return EnvMap(blocks.mean(axis=(1, 3)))
    cols = (np.arange(w_dst) + 0.5) * (w_src / w_dst)
    rows = (np.arange(h_dst) + 0.5) * (h_src / h_dst)
    uu, vv = np.meshgrid(cols, rows)
    sx = uu - 0.5
    sy = np.clip(vv - 0.5, 0.0, h_src - 1.0)
    x0 = np.floor(sx)
    fx = (sx - x0)[..., None]
    x0 = np.mod(x0.astype(np.intp), w_src)
    x1 = np.mod(x0 + 1, w_src)
    y0 = np.floor(sy).astype(np.intp)
    y1 = np.minimum(y0 + 1, h_src - 1)
    fy = (sy - y0)[..., None]
    data = env.data
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return EnvMap(top * (1.0 - fy) + bot * fy)
