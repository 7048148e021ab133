"""Parametric light sets of isotropic spherical gaussians.

A light is (color, direction, bandwidth); its contribution along a unit
direction w is color * exp(-(1 - w . axis) / sigma^2), and a set sums the
contributions of its lights.  Sets are immutable; edits return new sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NotFoundError, ParseError, ValidationError
from .geometry import EnvMap, pixel_center_directions

__all__ = [
    "MAX_LIGHTS",
    "SIGMA_MAX",
    "SgLight",
    "SgSet",
    "EditOp",
    "make_light",
    "gaussian_kernel",
    "eval_sg",
    "eval_sg_many",
    "render_sg_map",
    "apply_edit",
    "relight_composite",
    "serialize_lights",
    "parse_lights",
]

MAX_LIGHTS = 32
SIGMA_MAX = math.pi
_UNIT_TOL = 1e-9

EDIT_KINDS = frozenset(
    {"add", "remove", "set_color", "set_direction", "set_bandwidth", "scale_intensity"}
)


def _as_float_triple(value, what: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(c) for c in value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what} must be three numbers, got {value!r}") from exc
    return (x, y, z)


@dataclass(frozen=True)
class SgLight:
    """One spherical-gaussian light with a stable integer id.

    ``direction`` must already be unit length; ``sigma`` lies in (0, pi].
    Use :func:`make_light` to build a light from a raw (unnormalized)
    direction.
    """

    id: int
    color: tuple[float, float, float]
    direction: tuple[float, float, float]
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "color", _as_float_triple(self.color, "color"))
        object.__setattr__(self, "direction", _as_float_triple(self.direction, "direction"))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not all(math.isfinite(c) and c >= 0.0 for c in self.color):
            raise ValidationError(f"color channels must be finite and >= 0, got {self.color}")
        norm = math.sqrt(sum(c * c for c in self.direction))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValidationError(f"direction must be unit length, |d| = {norm}")
        if not (math.isfinite(self.sigma) and 0.0 < self.sigma <= SIGMA_MAX):
            raise ValidationError(f"sigma must lie in (0, pi], got {self.sigma}")


def make_light(light_id: int, color, direction, sigma: float) -> SgLight:
    """Build a light, normalizing the direction vector first."""
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,):
        raise ValidationError(f"direction must be a 3-vector, got shape {d.shape}")
    norm = float(np.linalg.norm(d))
    if not math.isfinite(norm) or norm < 1e-12:
        raise ValidationError("direction must be a nonzero finite vector")
    d = d / norm
    return SgLight(light_id, tuple(color), (d[0], d[1], d[2]), sigma)


@dataclass(frozen=True)
class SgSet:
    """Ordered, immutable collection of lights with unique ids."""

    lights: tuple[SgLight, ...] = ()

    def __post_init__(self):
        lights = tuple(self.lights)
        object.__setattr__(self, "lights", lights)
        ids = [l.id for l in lights]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"light ids must be unique, got {ids}")
        if len(lights) > MAX_LIGHTS:
            raise ValidationError(f"at most {MAX_LIGHTS} lights supported, got {len(lights)}")

    def __len__(self) -> int:
        return len(self.lights)

    def __iter__(self):
        return iter(self.lights)

    def get(self, light_id: int) -> SgLight:
        for light in self.lights:
            if light.id == light_id:
                return light
        raise NotFoundError(f"no light with id {light_id}")

    def next_id(self) -> int:
        return max((l.id for l in self.lights), default=-1) + 1


@dataclass(frozen=True)
class EditOp:
    """A single edit against a light set.

    ``kind`` is one of add / remove / set_color / set_direction /
    set_bandwidth / scale_intensity; the payload fields used depend on the
    kind.  Non-add kinds address an existing light by ``target`` id.
    """

    kind: str
    target: int | None = None
    color: tuple[float, float, float] | None = None
    direction: tuple[float, float, float] | None = None
    sigma: float | None = None
    factor: float | None = None

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValidationError(f"unknown edit kind {self.kind!r}")


def gaussian_kernel(omega, axis, sigma: float) -> float:
    """Spherical-gaussian falloff exp(-(1 - w . axis) / sigma^2), in (0, 1]."""
    if not (isinstance(sigma, (int, float)) and math.isfinite(sigma) and sigma > 0.0):
        raise DomainError(f"sigma must be a positive finite scalar, got {sigma}")
    dot = float(np.dot(np.asarray(omega, dtype=np.float64), np.asarray(axis, dtype=np.float64)))
    return math.exp(-(1.0 - dot) / (sigma * sigma))


def _light_arrays(lights: SgSet):
    colors = np.array([l.color for l in lights], dtype=np.float64).reshape(-1, 3)
    axes = np.array([l.direction for l in lights], dtype=np.float64).reshape(-1, 3)
    sigmas = np.array([l.sigma for l in lights], dtype=np.float64)
    return colors, axes, sigmas


def eval_sg_many(lights: SgSet, directions: np.ndarray) -> np.ndarray:
    """Evaluate the mixture at many unit directions; (N, 3) radiance.

    Accumulates per light with elementwise operations so a batch evaluation
    is bit-identical to evaluating directions one at a time.
    """
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((dirs.shape[0], 3))
    for light in lights:
        ax, ay, az = light.direction
        dot = dirs[:, 0] * ax + dirs[:, 1] * ay + dirs[:, 2] * az
        g = np.exp((dot - 1.0) / (light.sigma * light.sigma))
        out += g[:, None] * np.asarray(light.color)
    return out


def eval_sg(lights: SgSet, omega) -> np.ndarray:
    """Radiance of the mixture along a single unit direction."""
    return eval_sg_many(lights, np.asarray(omega, dtype=np.float64).reshape(1, 3))[0]


def render_sg_map(lights: SgSet, height: int) -> EnvMap:
    """Rasterize the mixture into an equirectangular map at pixel centers."""
    if height < 8:
        raise DomainError(f"map height must be >= 8, got {height}")
    dirs = pixel_center_directions(height, 2 * height)
    values = eval_sg_many(lights, dirs.reshape(-1, 3))
    return EnvMap(values.reshape(height, 2 * height, 3))


def apply_edit(lights: SgSet, op: EditOp) -> SgSet:
    """Return a new set with one edit applied; the input is untouched."""
    if op.kind == "add":
        if op.color is None or op.direction is None or op.sigma is None:
            raise ValidationError("add requires color, direction, and sigma")
        new = make_light(lights.next_id(), op.color, op.direction, op.sigma)
        return SgSet(lights.lights + (new,))

    if op.target is None:
        raise ValidationError(f"{op.kind} requires a target light id")
    current = lights.get(op.target)  # raises NotFoundError for unknown ids

    if op.kind == "remove":
        return SgSet(tuple(l for l in lights if l.id != op.target))

    if op.kind == "set_color":
        if op.color is None:
            raise ValidationError("set_color requires a color payload")
        replacement = SgLight(current.id, op.color, current.direction, current.sigma)
    elif op.kind == "set_direction":
        if op.direction is None:
            raise ValidationError("set_direction requires a direction payload")
        replacement = make_light(current.id, current.color, op.direction, current.sigma)
    elif op.kind == "set_bandwidth":
        if op.sigma is None:
            raise ValidationError("set_bandwidth requires a sigma payload")
        replacement = SgLight(current.id, current.color, current.direction, op.sigma)
    else:  # scale_intensity
        if op.factor is None:
            raise ValidationError("scale_intensity requires a factor payload")
        factor = float(op.factor)
        if not (math.isfinite(factor) and factor >= 0.0):
            raise ValidationError(f"intensity factor must be finite and >= 0, got {factor}")
        scaled = tuple(c * factor for c in current.color)
        replacement = SgLight(current.id, scaled, current.direction, current.sigma)

    return SgSet(tuple(replacement if l.id == op.target else l for l in lights))


def relight_composite(texture: EnvMap, light_map: EnvMap) -> EnvMap:
    """Add a light map onto a texture panorama in linear radiance."""
    if (texture.height, texture.width) != (light_map.height, light_map.width):
        raise DimensionError(
            f"texture {texture.height}x{texture.width} does not match "
            f"light map {light_map.height}x{light_map.width}"
        )
    return EnvMap(texture.data + light_map.data)


_LIGHT_KEYS = {"id", "color", "direction", "sigma"}


def serialize_lights(lights: SgSet) -> str:
    """JSON document for a light set; floats survive a round trip bit-exactly."""
    doc = {
        "lights": [
            {
                "id": l.id,
                "color": list(l.color),
                "direction": list(l.direction),
                "sigma": l.sigma,
            }
            for l in lights
        ]
    }
    return json.dumps(doc, indent=2)


def _require_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    return float(value)


def _parse_light_obj(obj) -> SgLight:
    if not isinstance(obj, dict):
        raise ValidationError(f"light entry must be an object, got {type(obj).__name__}")
    unknown = set(obj) - _LIGHT_KEYS
    if unknown:
        raise ValidationError(f"unknown light fields: {sorted(unknown)}")
    missing = _LIGHT_KEYS - set(obj)
    if missing:
        raise ValidationError(f"missing light fields: {sorted(missing)}")
    if isinstance(obj["id"], bool) or not isinstance(obj["id"], int):
        raise ValidationError(f"light id must be an integer, got {obj['id']!r}")
    for key in ("color", "direction"):
        if not (isinstance(obj[key], list) and len(obj[key]) == 3):
            raise ValidationError(f"{key} must be a 3-element array")
    color = tuple(_require_number(c, "color channel") for c in obj["color"])
    direction = tuple(_require_number(c, "direction component") for c in obj["direction"])
    sigma = _require_number(obj["sigma"], "sigma")
    return SgLight(obj["id"], color, direction, sigma)


def parse_lights(text: str) -> SgSet:
    """Parse the light-set JSON document; strict about schema and invariants."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ValidationError("top-level value must be an object")
    unknown = set(doc) - {"lights"}
    if unknown:
        raise ValidationError(f"unknown top-level fields: {sorted(unknown)}")
    if "lights" not in doc or not isinstance(doc["lights"], list):
        raise ValidationError('document must contain a "lights" array')
    return SgSet(tuple(_parse_light_obj(obj) for obj in doc["lights"]))
