"""Recovering a spherical-gaussian light set from an HDR panorama.

Pipeline: resample to a working resolution, blur + percentile-threshold the
luminance, take seam-aware connected components, seed one light per
component, then run full-batch gradient descent on the squared
reconstruction error with a plateau learning-rate schedule, fusing
overlapping lights periodically.  Everything is deterministic: fixed
evaluation order, no stochastic sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .errors import DomainError, ValidationError
from .geometry import LUMA_WEIGHTS, EnvMap, pixel_center_directions, resize_env
from .sg import MAX_LIGHTS, SgLight, SgSet, make_light

__all__ = [
    "FitOptions",
    "FitTrace",
    "SgParams",
    "PlateauSchedule",
    "preprocess",
    "connected_components",
    "init_lights",
    "regularizer",
    "fit_loss",
    "loss_gradient",
    "nms_fuse",
    "fit",
]

SIGMA_SOFT_MIN = 0.05  # bandwidth below this is penalized, not forbidden
SATURATION_LIMIT = 0.9  # color saturation above this is penalized
_CONVERGENCE_WINDOW = 50
_CONVERGENCE_RTOL = 1e-7
# hard safety rails on sigma during optimization, far outside the penalty band
_SIGMA_STEP_FLOOR = 1e-3
_SIGMA_STEP_CEIL = 2.0 * math.pi


@dataclass(frozen=True)
class FitOptions:
    """Knobs of the fitting pipeline with their default operating point."""

    target_height: int = 128
    blur_sigma: float = 3.0
    threshold_percentile: float = 98.5
    init_sigma: float = 0.45
    lambda1: float = 1.0 / 50.0
    learning_rate: float = 5e-4
    plateau_epochs: int = 20
    lr_decay_factor: float = 2.0
    max_epochs: int = 1500
    min_lr: float = 1e-6
    nms_interval: int = 20
    max_lights: int = 32
    lambda_unit: float = 1.0
    lambda_neg: float = 10.0
    lambda_band: float = 1.0
    lambda_sat: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{f.name} must be positive and finite, got {value!r}")
        if not (0.0 < self.threshold_percentile < 100.0):
            raise ValidationError(
                f"threshold_percentile must lie in (0, 100), got {self.threshold_percentile}"
            )
        if self.lr_decay_factor <= 1.0:
            raise ValidationError(
                f"lr_decay_factor must exceed 1, got {self.lr_decay_factor}"
            )
        if self.max_lights > MAX_LIGHTS:
            raise ValidationError(f"max_lights cannot exceed {MAX_LIGHTS}")


@dataclass
class FitTrace:
    """Per-epoch diagnostics of one optimization run.

    ``termination_reason`` is one of converged, max_epochs, lr_floor, or
    aborted_non_finite (the loss overflowed, typically because the input's
    radiance scale makes the default step size unstable; the best parameters
    seen, usually the initialization, are still returned).
    """

    losses: np.ndarray
    learning_rates: np.ndarray
    light_counts: np.ndarray
    termination_reason: str


@dataclass
class SgParams:
    """Raw optimizer state: colors, unnormalized axes, bandwidths, light ids."""

    color: np.ndarray  # (K, 3)
    axis: np.ndarray  # (K, 3), not necessarily unit length
    sigma: np.ndarray  # (K,)
    ids: np.ndarray  # (K,) int

    @classmethod
    def from_set(cls, lights: SgSet) -> "SgParams":
        return cls(
            color=np.array([l.color for l in lights], dtype=np.float64).reshape(-1, 3),
            axis=np.array([l.direction for l in lights], dtype=np.float64).reshape(-1, 3),
            sigma=np.array([l.sigma for l in lights], dtype=np.float64),
            ids=np.array([l.id for l in lights], dtype=np.intp),
        )

    def copy(self) -> "SgParams":
        return SgParams(self.color.copy(), self.axis.copy(), self.sigma.copy(), self.ids.copy())

    @property
    def k(self) -> int:
        return self.color.shape[0]


def _as_params(value) -> SgParams:
    return value if isinstance(value, SgParams) else SgParams.from_set(value)


def preprocess(env: EnvMap, opts: FitOptions = FitOptions()):
    """(luminance, bright-region mask) for a panorama.

    The mask keeps pixels whose blurred luminance strictly exceeds the
    percentile threshold; the blur wraps across the horizontal seam and
    replicates at the poles.  A constant panorama yields an empty mask.
    """
    lum = env.data @ LUMA_WEIGHTS
    blurred = ndimage.gaussian_filter(lum, sigma=opts.blur_sigma, mode=("nearest", "wrap"))
    threshold = np.percentile(blurred, opts.threshold_percentile)
    return lum, blurred > threshold


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of a mask, with column 0 adjacent to column W-1.

    Each component is an (n, 2) array of (row, col) indices in row-major
    order; components are ordered by their first pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DomainError(f"mask must be 2-D, got shape {mask.shape}")
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []

    # union-find over labels to merge blobs touching across the seam
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    height = mask.shape[0]
    left, right = labels[:, 0], labels[:, -1]
    for row in range(height):
        if left[row] == 0:
            continue
        for other in (row - 1, row, row + 1):
            if 0 <= other < height and right[other] != 0:
                union(int(left[row]), int(right[other]))

    merged = {}
    for label in range(1, count + 1):
        merged.setdefault(find(label), []).append(label)
    roots = labels.copy()
    for root, members in merged.items():
        for label in members:
            if label != root:
                roots[labels == label] = root

    components = []
    seen = []
    rows, cols = np.nonzero(mask)
    order = np.argsort(rows * mask.shape[1] + cols, kind="stable")
    for idx in order:
        root = roots[rows[idx], cols[idx]]
        if root not in seen:
            seen.append(root)
    for root in seen:
        r, c = np.nonzero(roots == root)
        components.append(np.column_stack([r, c]))
    return components


def init_lights(env: EnvMap, components: list[np.ndarray], opts: FitOptions = FitOptions()) -> SgSet:
    """Seed one light per component.

    Direction is the luminance-weighted mean of the member pixel-center
    directions (falling back to the peak pixel for degenerate components),
    color is the RGB of the maximum-luminance pixel, and every bandwidth
    starts at ``opts.init_sigma``.  Components are ranked by peak luminance
    and truncated at ``opts.max_lights``.
    """
    if not components:
        raise DomainError("cannot initialize lights from zero components")
    height, width = env.height, env.width
    lum = env.data @ LUMA_WEIGHTS
    dirs = pixel_center_directions(height, width)

    candidates = []
    for comp in components:
        rows, cols = comp[:, 0], comp[:, 1]
        weights = lum[rows, cols]
        peak = int(np.argmax(weights))
        peak_lum = float(weights[peak])
        peak_rgb = env.data[rows[peak], cols[peak]]
        member_dirs = dirs[rows, cols]
        mean = weights @ member_dirs
        norm = float(np.linalg.norm(mean))
        axis = mean / norm if norm > 1e-12 else member_dirs[peak]
        candidates.append((peak_lum, axis, peak_rgb))

    candidates.sort(key=lambda c: -c[0])  # brightest first; stable for ties
    candidates = candidates[: opts.max_lights]
    lights = tuple(
        make_light(i, tuple(rgb), axis, opts.init_sigma)
        for i, (_, axis, rgb) in enumerate(candidates)
    )
    return SgSet(lights)


def regularizer(params, opts: FitOptions = FitOptions()) -> float:
    """Soft penalties keeping raw parameters near the valid region.

    Penalizes axis length away from 1, negative color channels, bandwidths
    outside [0.05, pi], and color saturation above 0.9 (saturation being
    1 - min(c)/max(c), or 0 when max(c) <= 0).
    """
    p = _as_params(params)
    if p.k == 0:
        return 0.0
    norms = np.linalg.norm(p.axis, axis=1)
    reg = opts.lambda_unit * float(np.sum((norms - 1.0) ** 2))
    reg += opts.lambda_neg * float(np.sum(np.minimum(p.color, 0.0) ** 2))
    reg += opts.lambda_band * float(
        np.sum(np.maximum(0.0, p.sigma - math.pi) ** 2)
        + np.sum(np.maximum(0.0, SIGMA_SOFT_MIN - p.sigma) ** 2)
    )
    cmax = p.color.max(axis=1)
    cmin = p.color.min(axis=1)
    sat = np.where(cmax > 0.0, 1.0 - cmin / np.where(cmax > 0.0, cmax, 1.0), 0.0)
    reg += opts.lambda_sat * float(np.sum(np.maximum(0.0, sat - SATURATION_LIMIT) ** 2))
    return reg


def _flatten_env(env: EnvMap):
    dirs = pixel_center_directions(env.height, env.width).reshape(-1, 3)
    return dirs, env.data.reshape(-1, 3)


def _recon(p: SgParams, dirs: np.ndarray):
    """Mixture values at raw parameters; returns (dots, kernels, recon)."""
    dots = dirs @ p.axis.T  # (P, K)
    g = np.exp((dots - 1.0) / (p.sigma * p.sigma))
    return dots, g, g @ p.color


def fit_loss(params, env: EnvMap, opts: FitOptions = FitOptions()) -> float:
    """Scaled squared reconstruction error over every pixel, plus penalties."""
    p = _as_params(params)
    dirs, target = _flatten_env(env)
    if p.k == 0:
        data = float(np.sum(target * target))
    else:
        _, _, recon = _recon(p, dirs)
        diff = recon - target
        data = float(np.sum(diff * diff))
    return opts.lambda1 * data + regularizer(p, opts)


def loss_gradient(params, env: EnvMap, opts: FitOptions = FitOptions()) -> SgParams:
    """Analytic partial derivatives of :func:`fit_loss` w.r.t. raw parameters."""
    p = _as_params(params)
    grads, _ = _loss_and_gradient(p, *_flatten_env(env), opts)
    return grads


def _loss_and_gradient(p: SgParams, dirs, target, opts: FitOptions):
    """Shared loss/gradient evaluation; returns (SgParams gradients, loss)."""
    if p.k == 0:
        loss = opts.lambda1 * float(np.sum(target * target))
        empty = SgParams(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), p.ids.copy())
        return empty, loss

    sig2 = p.sigma * p.sigma
    dots, g, recon = _recon(p, dirs)
    diff = recon - target  # (P, 3)
    data_loss = float(np.sum(diff * diff))

    # d/dc_k: sum_p 2 diff_p * G_pk
    gc = 2.0 * opts.lambda1 * (g.T @ diff)
    # s_pk = diff_p . c_k couples the color into axis/bandwidth derivatives
    s = diff @ p.color.T  # (P, K)
    sg = s * g
    gxi = (2.0 * opts.lambda1 / sig2)[:, None] * (dirs.T @ sg).T
    gsig = (4.0 * opts.lambda1 / (sig2 * p.sigma)) * np.sum(sg * (1.0 - dots), axis=0)

    # penalty terms
    norms = np.linalg.norm(p.axis, axis=1)
    safe = np.where(norms > 1e-12, norms, 1.0)
    gxi += opts.lambda_unit * (2.0 * (norms - 1.0) / safe)[:, None] * p.axis
    gc += opts.lambda_neg * 2.0 * np.minimum(p.color, 0.0)
    gsig += opts.lambda_band * (
        2.0 * np.maximum(0.0, p.sigma - math.pi) - 2.0 * np.maximum(0.0, SIGMA_SOFT_MIN - p.sigma)
    )
    cmax = p.color.max(axis=1)
    cmin = p.color.min(axis=1)
    for k in range(p.k):
        if cmax[k] <= 0.0:
            continue
        sat = 1.0 - cmin[k] / cmax[k]
        if sat <= SATURATION_LIMIT:
            continue
        coeff = 2.0 * opts.lambda_sat * (sat - SATURATION_LIMIT)
        imin = int(np.argmin(p.color[k]))
        imax = int(np.argmax(p.color[k]))
        gc[k, imin] += coeff * (-1.0 / cmax[k])
        gc[k, imax] += coeff * (cmin[k] / (cmax[k] * cmax[k]))

    loss = opts.lambda1 * data_loss + regularizer(p, opts)
    return SgParams(gc, gxi, gsig, p.ids.copy()), loss


def _fuse_params(p: SgParams) -> SgParams:
    """Fuse overlapping lights in place of the weaker one.

    Two lights overlap when 1 - xi_i . xi_j < (sigma_i^2 + sigma_j^2) / 2
    (unit axes).  Pairs are processed by descending combined L1 color mass;
    the survivor is the member with the larger L1 mass, keeps its axis and
    id, absorbs the partner's color, and takes the wider bandwidth.
    """
    color = [c.copy() for c in p.color]
    axis = [a.copy() for a in p.axis]
    sigma = list(p.sigma)
    ids = list(p.ids)

    def unit(vec):
        n = np.linalg.norm(vec)
        return vec / n if n > 1e-12 else vec

    while True:
        k = len(color)
        if k < 2:
            break
        l1 = [float(np.abs(c).sum()) for c in color]
        units = [unit(a) for a in axis]
        best = None
        for i in range(k):
            for j in range(i + 1, k):
                if 1.0 - float(units[i] @ units[j]) < 0.5 * (sigma[i] ** 2 + sigma[j] ** 2):
                    combined = l1[i] + l1[j]
                    if best is None or combined > best[0]:
                        best = (combined, i, j)
        if best is None:
            break
        _, i, j = best
        keep, drop = (i, j) if l1[i] >= l1[j] else (j, i)
        color[keep] = color[keep] + color[drop]
        sigma[keep] = max(sigma[keep], sigma[drop])
        for seq in (color, axis, sigma, ids):
            del seq[drop]
    return SgParams(
        np.array(color).reshape(-1, 3),
        np.array(axis).reshape(-1, 3),
        np.array(sigma, dtype=np.float64),
        np.array(ids, dtype=np.intp),
    )


def nms_fuse(lights: SgSet) -> SgSet:
    """Fuse overlapping lights of a set; total color mass is preserved."""
    if len(lights) < 2:
        return lights
    fused = _fuse_params(SgParams.from_set(lights))
    out = []
    for k in range(fused.k):
        out.append(
            make_light(int(fused.ids[k]), tuple(fused.color[k]), fused.axis[k], fused.sigma[k])
        )
    return SgSet(tuple(out))


class PlateauSchedule:
    """Learning rate that divides by ``factor`` after ``patience``
    consecutive epochs without improvement of the best loss."""

    def __init__(self, initial_lr: float, patience: int, factor: float):
        self.lr = float(initial_lr)
        self.patience = int(patience)
        self.factor = float(factor)
        self.best = math.inf
        self._stall = 0

    def observe(self, loss: float) -> float:
        """Record one epoch's loss; returns the rate to use for its step."""
        if loss < self.best:
            self.best = loss
            self._stall = 0
        else:
            self._stall += 1
            if self._stall >= self.patience:
                self.lr /= self.factor
                self._stall = 0
        return self.lr


def _finalize(p: SgParams) -> SgSet:
    """Project raw parameters onto valid lights, brightest first."""
    lights = []
    for k in range(p.k):
        axis = p.axis[k]
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            continue  # direction collapsed; the light carries no usable signal
        color = np.maximum(p.color[k], 0.0)
        sigma = float(np.clip(p.sigma[k], 1e-6, math.pi))
        lights.append(SgLight(int(p.ids[k]), tuple(color), tuple(axis / norm), sigma))
    lights.sort(key=lambda l: -sum(l.color))
    return SgSet(tuple(lights))


def fit(env: EnvMap, opts: FitOptions = FitOptions()):
    """Fit a light set to a panorama; returns (lights, trace).

    The panorama is resampled to ``opts.target_height`` first.  An empty
    bright mask (for example an all-black panorama) yields an empty set.
    The returned lights are the best parameters seen, normalized, clamped,
    and sorted by descending L1 color mass.
    """
    work = resize_env(env, opts.target_height)
    _, mask = preprocess(work, opts)
    if not mask.any():
        trace = FitTrace(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int), "converged")
        return SgSet(), trace

    components = connected_components(mask)
    params = SgParams.from_set(init_lights(work, components, opts))
    dirs, target = _flatten_env(work)

    schedule = PlateauSchedule(opts.learning_rate, opts.plateau_epochs, opts.lr_decay_factor)
    losses: list[float] = []
    rates: list[float] = []
    counts: list[int] = []
    best_loss = math.inf
    best_params = params.copy()
    reason = "max_epochs"

    for epoch in range(opts.max_epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            grads, loss = _loss_and_gradient(params, dirs, target, opts)
        if not math.isfinite(loss):
            # numeric blow-up (radiance scale vs step size); keep the trace
            # finite and fall back to the best parameters seen
            reason = "aborted_non_finite"
            break
        losses.append(loss)
        counts.append(params.k)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        lr = schedule.observe(loss)
        rates.append(lr)
        if lr < opts.min_lr:
            reason = "lr_floor"
            break
        if (
            epoch >= _CONVERGENCE_WINDOW
            and abs(losses[-1] - losses[-1 - _CONVERGENCE_WINDOW])
            < _CONVERGENCE_RTOL * max(abs(losses[-1 - _CONVERGENCE_WINDOW]), 1e-30)
        ):
            reason = "converged"
            break

        params.color -= lr * grads.color
        params.axis -= lr * grads.axis
        params.sigma -= lr * grads.sigma
        np.clip(params.sigma, _SIGMA_STEP_FLOOR, _SIGMA_STEP_CEIL, out=params.sigma)

        if params.k > 1 and (epoch + 1) % opts.nms_interval == 0:
            params = _fuse_params(params)

    trace = FitTrace(
        np.array(losses), np.array(rates), np.array(counts, dtype=int), reason
    )
    return _finalize(best_params), trace
