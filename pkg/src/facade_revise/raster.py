"""Image and mask containers, PNG I/O, smoothing, morphology and labeling.

Images are plain float64 numpy arrays of shape (H, W) or (H, W, 3) holding
intensities in [0, 255]. Label masks are uint8 arrays of shape (H, W) whose
values are class indices. Binary masks are bool arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectedComponent:
    id: int
    pixel_count: int
    bounding_rect: tuple[int, int, int, int]  # top, bottom, left, right (inclusive)
    rows: np.ndarray
    cols: np.ndarray

    @property
    def pixels(self) -> np.ndarray:
        return np.stack([self.rows, self.cols], axis=1)


def as_image(data) -> np.ndarray:
    """Validate and return a float64 image array."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise RasterError(f"unsupported image shape {img.shape}")
    if img.size == 0:
        raise RasterError("empty image")
    if not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 255:
        raise RasterError("intensities must be finite and within [0, 255]")
    return img


def as_mask(data, num_classes: int | None = None) -> np.ndarray:
    mask = np.asarray(data)
    if mask.ndim != 2 or mask.size == 0:
        raise RasterError(f"label mask must be a non-empty 2-D array, got shape {mask.shape}")
    if mask.dtype.kind == "f":
        if not np.all(mask == np.round(mask)):
            raise RasterError("label mask holds non-integer values")
    if mask.min() < 0:
        raise RasterError("negative class index in mask")
    if num_classes is not None and mask.max() >= num_classes:
        raise RasterError(f"mask value {int(mask.max())} out of range for {num_classes} classes")
    return mask.astype(np.uint8)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    raise RasterError(f"unsupported channel count for shape {img.shape}")


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise RasterError(f"kernel size must be odd and >= 1, got {size}")
    if not sigma > 0:
        raise RasterError(f"sigma must be positive, got {sigma}")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, kernel: int, sigma: float) -> np.ndarray:
    """Blur with a normalized, sampled ``kernel`` x ``kernel`` Gaussian.

    The 2-D kernel is the outer product of two normalized 1-D kernels, so it is
    applied separably. Borders are handled by edge replication.
    """
    k = gaussian_kernel1d(kernel, sigma)
    img = np.asarray(img, dtype=np.float64)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _square(radius: int) -> np.ndarray:
    if radius < 1:
        raise RasterError(f"radius must be >= 1, got {radius}")
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def erode(mask: np.ndarray, radius: int = 1, iterations: int = 1) -> np.ndarray:
    if iterations < 1:
        raise RasterError("iterations must be >= 1")
    return ndimage.binary_erosion(
        np.asarray(mask, dtype=bool), structure=_square(radius), iterations=iterations, border_value=0
    )


def dilate(mask: np.ndarray, radius: int = 1, iterations: int = 1) -> np.ndarray:
    if iterations < 1:
        raise RasterError("iterations must be >= 1")
    return ndimage.binary_dilation(
        np.asarray(mask, dtype=bool), structure=_square(radius), iterations=iterations, border_value=0
    )


def opening(mask: np.ndarray, radius: int = 1, iterations: int = 2) -> np.ndarray:
    return dilate(erode(mask, radius, iterations), radius, iterations)


def label(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label foreground components; ids start at 1 in row-major order of first pixel."""
    if connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    else:
        raise RasterError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=structure)
    return labels, n


def connected_components(mask: np.ndarray, connectivity: int = 4) -> list[ConnectedComponent]:
    labels, n = label(mask, connectivity)
    out = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        rr, cc = np.nonzero(labels[sl] == i)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        rect = (sl[0].start, sl[0].stop - 1, sl[1].start, sl[1].stop - 1)
        out.append(ConnectedComponent(id=len(out), pixel_count=len(rr), bounding_rect=rect, rows=rr, cols=cc))
    return out


# -- PNG and palette I/O ----------------------------------------------------

def load_png(path) -> np.ndarray:
    """Load an 8-bit gray or RGB PNG as a float64 image array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "I;16", "I"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise RasterError(f"cannot decode image {path}: {exc}") from exc
    return arr.astype(np.float64)


def save_png(path, img: np.ndarray) -> None:
    """Save an image (values rounded and clipped to 8 bit) or a uint8 mask."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(Path(path), format="PNG")


def load_mask(path, num_classes: int | None = None) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "P"):
                raise RasterError(f"mask {path} must be single-channel 8-bit, got mode {im.mode}")
            arr = np.array(im)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise RasterError(f"cannot decode mask {path}: {exc}") from exc
    return as_mask(arr, num_classes)


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(as_mask(mask)).save(Path(path), format="PNG")


def load_palette(path) -> dict[str, int]:
    """Read ``{"classes": [{"name": ..., "index": ...}, ...]}``; indices must be dense from 0."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        entries = doc["classes"]
        palette = {str(e["name"]): int(e["index"]) for e in entries}
    except (KeyError, TypeError) as exc:
        raise RasterError(f"malformed palette {path}") from exc
    if sorted(palette.values()) != list(range(len(entries))):
        raise RasterError(f"palette indices in {path} must be dense from 0")
    return palette


def save_palette(path, names) -> None:
    doc = {"classes": [{"name": n, "index": i} for i, n in enumerate(names)]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
