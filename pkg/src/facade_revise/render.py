"""Overlay and debug drawings for qualitative inspection."""
from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .raster import to_grayscale

# building, window, door, roof, tree, sky, people, car, sign
CLASS_COLORS = np.array([
    (128, 128, 128), (230, 25, 75), (245, 130, 48), (145, 30, 180), (60, 180, 75),
    (70, 200, 240), (255, 225, 25), (0, 0, 128), (240, 50, 230),
], dtype=np.float64)


def colorize(mask: np.ndarray) -> np.ndarray:
    idx = np.asarray(mask, dtype=np.int64) % len(CLASS_COLORS)
    return CLASS_COLORS[idx].astype(np.uint8)


def overlay(image: np.ndarray, mask: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    out = (1.0 - alpha) * img + alpha * colorize(mask)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def draw_segments(image: np.ndarray, segments, color=(255, 0, 0), width: int = 1) -> np.ndarray:
    gray = np.clip(np.round(to_grayscale(image)), 0, 255).astype(np.uint8)
    canvas = Image.fromarray(gray).convert("RGB")
    pen = ImageDraw.Draw(canvas)
    for s in segments:
        x1, y1, x2, y2 = s.as_tuple() if hasattr(s, "as_tuple") else s
        pen.line([(x1, y1), (x2, y2)], fill=color, width=width)
    return np.asarray(canvas)


def draw_rectangles(image: np.ndarray, rects, color=(0, 255, 0)) -> np.ndarray:
    canvas = Image.fromarray(np.asarray(image, dtype=np.uint8))
    pen = ImageDraw.Draw(canvas)
    for top, bottom, left, right in rects:
        pen.rectangle([(left, top), (right, bottom)], outline=color)
    return np.asarray(canvas)
