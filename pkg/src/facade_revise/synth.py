"""Synthetic facades with ground truth and a corrupted "preliminary" mask.

Each facade is a wall with a grid of framed windows, an optional sky and roof
band and Gaussian pixel noise. ``corrupt`` roughens window outlines, punches
holes into windows and sprinkles false-positive window blobs on the wall,
mimicking the ragged output of a segmentation network.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import raster

FACADE_CLASSES = ("building", "window", "door", "roof", "tree", "sky", "people", "car", "sign")
BUILDING, WINDOW, DOOR, ROOF, TREE, SKY = 0, 1, 2, 3, 4, 5
NUM_CLASSES = len(FACADE_CLASSES)

_STAGE_IMAGE = 1
_STAGE_CORRUPT = 2


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class FacadeSpec:
    width: int = 320
    height: int = 256
    rows: int = 3
    cols: int = 4
    window_w: int = 40
    window_h: int = 48
    margin_left: int = 24
    margin_top: int = 44
    spacing_x: int = 32
    spacing_y: int = 28
    frame: int = 2
    sky_height: int = 16
    roof_height: int = 10
    wall_color: tuple = (186, 160, 132)
    frame_color: tuple = (60, 54, 50)
    glass_color: tuple = (70, 76, 88)
    sky_color: tuple = (200, 220, 240)
    roof_color: tuple = (120, 70, 60)
    noise_sigma: float = 4.0
    shear: float = 0.0  # horizontal shear of windows; leaves ground truth non-rectangular

    def validate(self):
        if self.window_w < 8 or self.window_h < 8:
            raise SynthError("windows must be at least 8x8")
        if 2 * self.frame >= min(self.window_w, self.window_h):
            raise SynthError("frame too thick for the window size")
        right = self.margin_left + self.cols * self.window_w + (self.cols - 1) * self.spacing_x
        bottom = self.margin_top + self.rows * self.window_h + (self.rows - 1) * self.spacing_y
        if self.rows < 1 or self.cols < 1 or self.margin_left < 0:
            raise SynthError("grid needs at least one window and non-negative margins")
        if right > self.width or bottom > self.height:
            raise SynthError("window grid overflows the image")
        if self.margin_top < self.sky_height + self.roof_height:
            raise SynthError("window grid overlaps the sky/roof bands")
        shear_px = abs(self.shear) * self.window_h / 2
        if self.margin_left - shear_px < 0 or right + shear_px > self.width:
            raise SynthError("sheared windows overflow the image")
        for c in (self.wall_color, self.frame_color, self.glass_color, self.sky_color, self.roof_color):
            if len(c) != 3 or min(c) < 0 or max(c) > 255:
                raise SynthError("colors must be RGB triples in [0, 255]")
        if self.noise_sigma < 0:
            raise SynthError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class CorruptionParams:
    amplitude: int = 3
    dropout: float = 0.05
    blob_count: int = 2
    blob_radius: int = 4
    seed: int = 0
    smoothness: float = 2.0  # correlation length of the outline jitter, pixels

    def validate(self):
        if self.amplitude < 0:
            raise SynthError("amplitude must be >= 0")
        if not 0 <= self.dropout < 1:
            raise SynthError("dropout must lie in [0, 1)")
        if self.blob_count < 0 or self.blob_radius < 0:
            raise SynthError("blob settings must be non-negative")


def _rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stage]))


def window_rects(spec: FacadeSpec) -> list[tuple[int, int, int, int]]:
    """Inclusive (top, bottom, left, right) of every window, row-major."""
    out = []
    for i in range(spec.rows):
        top = spec.margin_top + i * (spec.window_h + spec.spacing_y)
        for j in range(spec.cols):
            left = spec.margin_left + j * (spec.window_w + spec.spacing_x)
            out.append((top, top + spec.window_h - 1, left, left + spec.window_w - 1))
    return out


def generate(spec: FacadeSpec = FacadeSpec(), seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Render ``(image, ground_truth_mask)``; image is float64 RGB in [0, 255]."""
    spec.validate()
    h, w = spec.height, spec.width
    img = np.empty((h, w, 3))
    img[:] = spec.wall_color
    mask = np.full((h, w), BUILDING, dtype=np.uint8)
    if spec.sky_height:
        img[:spec.sky_height] = spec.sky_color
        mask[:spec.sky_height] = SKY
    if spec.roof_height:
        img[spec.sky_height:spec.sky_height + spec.roof_height] = spec.roof_color
        mask[spec.sky_height:spec.sky_height + spec.roof_height] = ROOF
    yy, xx = np.mgrid[0:h, 0:w]
    f = spec.frame
    for top, bottom, left, right in window_rects(spec):
        r0, r1 = top, bottom + 1
        sub_y = yy[r0:r1]
        x_unsheared = xx[r0:r1] - spec.shear * (sub_y - 0.5 * (top + bottom))
        outer = (x_unsheared >= left - 0.5) & (x_unsheared < right + 0.5)
        inner = (outer & (x_unsheared >= left + f - 0.5) & (x_unsheared < right - f + 0.5)
                 & (sub_y >= top + f) & (sub_y <= bottom - f))
        block = img[r0:r1]
        block[outer] = spec.frame_color
        block[inner] = spec.glass_color
        mask[r0:r1][outer] = WINDOW
    if spec.noise_sigma > 0:
        img = img + _rng(seed, _STAGE_IMAGE).normal(0.0, spec.noise_sigma, img.shape)
    return np.clip(img, 0, 255), mask


def _jitter(rng, n, amplitude, smoothness):
    if amplitude == 0:
        return np.zeros(n, dtype=np.int64)
    noise = rng.standard_normal(n + 8)
    if smoothness > 0:
        noise = gaussian_filter1d(noise, smoothness)
    noise = noise[4:-4]
    noise = noise / (noise.std() + 1e-12)
    return np.clip(np.round(noise * amplitude / 2.0), -amplitude, amplitude).astype(np.int64)


def corrupt(gt: np.ndarray, params: CorruptionParams = CorruptionParams(),
            window_class: int = WINDOW, fill_class: int = BUILDING) -> np.ndarray:
    """Degrade a ground-truth mask into a plausible preliminary prediction."""
    params.validate()
    gt = raster.as_mask(gt)
    rng = _rng(params.seed, _STAGE_CORRUPT)
    out = gt.copy()
    h, w = gt.shape
    a = params.amplitude
    windows = raster.connected_components(gt == window_class)
    for comp in windows:
        top, bottom, left, right = comp.bounding_rect
        r0, r1 = max(top - a, 0), min(bottom + a, h - 1)
        c0, c1 = max(left - a, 0), min(right + a, w - 1)
        # positive offsets move a side inwards
        d_top = _jitter(rng, c1 - c0 + 1, a, params.smoothness)
        d_bot = _jitter(rng, c1 - c0 + 1, a, params.smoothness)
        d_left = _jitter(rng, r1 - r0 + 1, a, params.smoothness)
        d_right = _jitter(rng, r1 - r0 + 1, a, params.smoothness)
        yy, xx = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        region = ((yy >= top + d_top[None, :]) & (yy <= bottom - d_bot[None, :])
                  & (xx >= left + d_left[:, None]) & (xx <= right - d_right[:, None]))
        out[comp.rows, comp.cols] = fill_class
        out[r0:r1 + 1, c0:c1 + 1][region] = window_class
    if params.dropout > 0:
        drop = (out == window_class) & (gt == window_class) & (rng.random(gt.shape) < params.dropout)
        out[drop] = fill_class
    if params.blob_count > 0 and params.blob_radius > 0:
        rad = params.blob_radius
        keep_out = raster.dilate(gt == window_class, radius=rad + a + 2, iterations=1)
        candidates = np.flatnonzero(((gt == fill_class) & ~keep_out).ravel())
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(params.blob_count):
            if candidates.size == 0:
                break
            idx = candidates[rng.integers(candidates.size)]
            cy, cx = divmod(int(idx), w)
            disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
            out[disk & (gt == fill_class)] = window_class
    return out


def window_iou(gt: np.ndarray, pred: np.ndarray, window_class: int = WINDOW) -> float:
    g = gt == window_class
    p = pred == window_class
    union = (g | p).sum()
    return float((g & p).sum() / union) if union else 1.0


def spec_to_dict(spec) -> dict:
    return asdict(spec)
