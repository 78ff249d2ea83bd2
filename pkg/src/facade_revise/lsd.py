"""Line segment detection by gradient region growing with a-contrario validation.

The detector follows the classic design: the image is optionally
Gaussian-subsampled, a 2x2 gradient is computed at pixel corners, pixels are
visited by decreasing gradient magnitude and grown into regions of
level-line-aligned neighbours, each region is approximated by its inertial
rectangle, and the rectangle is accepted when its number of false alarms
(NFA) under a binomial noise model is at most ``nfa_epsilon``.

Output coordinates use pixel centres: pixel ``(row, col)`` sits at
``(x=col, y=row)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .raster import RasterError

NOTDEF = -1024.0
_USED = 1
_NOTUSED = 0


@dataclass(frozen=True)
class LsdParams:
    angle_tolerance: float = math.radians(22.5)
    gradient_threshold: float | None = None  # None -> 2 / sin(angle_tolerance)
    nfa_epsilon: float = 1.0
    scale: float = 0.8
    sigma_scale: float = 0.6
    density_threshold: float = 0.7
    n_bins: int = 1024

    def __post_init__(self):
        if not 0 < self.angle_tolerance < math.pi / 2:
            raise ValueError("angle_tolerance must lie in (0, pi/2)")
        if not self.nfa_epsilon > 0:
            raise ValueError("nfa_epsilon must be positive")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")

    @property
    def rho(self) -> float:
        if self.gradient_threshold is not None:
            return self.gradient_threshold
        return 2.0 / math.sin(self.angle_tolerance)


@dataclass(frozen=True)
class LineSegment:
    x1: float
    y1: float
    x2: float
    y2: float
    width: float = 1.0
    log_nfa: float = field(default=float("inf"), compare=False)

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    @property
    def angle(self) -> float:
        """Undirected direction in (-pi/2, pi/2]."""
        return normalize_angle(math.atan2(self.y2 - self.y1, self.x2 - self.x1))

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def normalize_angle(a: float) -> float:
    a = math.fmod(a, math.pi)
    if a <= -math.pi / 2:
        a += math.pi
    elif a > math.pi / 2:
        a -= math.pi
    return a


@dataclass
class GradientField:
    magnitude: np.ndarray
    level_line_angle: np.ndarray
    valid: np.ndarray

    @property
    def gradient_angle(self) -> np.ndarray:
        """Direction of the intensity gradient, in (-pi, pi]."""
        a = self.level_line_angle - np.pi / 2
        return np.where(a <= -np.pi, a + 2 * np.pi, a)


def image_gradient(gray: np.ndarray, threshold: float = LsdParams().rho) -> GradientField:
    """2x2 finite-difference gradient located at pixel corners.

    Entry ``[y, x]`` describes the block ``gray[y:y+2, x:x+2]``; the last row
    and column have no block and are flagged invalid.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise RasterError("image_gradient needs a single-channel image")
    h, w = gray.shape
    mag = np.zeros((h, w))
    ang = np.full((h, w), NOTDEF)
    a = gray[:-1, :-1]
    b = gray[:-1, 1:]
    c = gray[1:, :-1]
    d = gray[1:, 1:]
    com1 = d - a
    com2 = b - c
    gx = com1 + com2
    gy = com1 - com2
    m = np.sqrt((gx * gx + gy * gy) / 4.0)
    mag[:-1, :-1] = m
    valid = np.zeros((h, w), dtype=bool)
    valid[:-1, :-1] = m > threshold
    ang[:-1, :-1] = np.where(valid[:-1, :-1], np.arctan2(gx, -gy), NOTDEF)
    return GradientField(magnitude=mag, level_line_angle=ang, valid=valid)


# -- compiled core ----------------------------------------------------------

@njit(cache=True)
def _gaussian_sampler(img, scale, sigma_scale):
    h, w = img.shape
    nw = int(math.ceil(w * scale))
    nh = int(math.ceil(h * scale))
    sigma = sigma_scale / scale if scale < 1.0 else sigma_scale
    hk = int(math.ceil(sigma * math.sqrt(2.0 * 3.0 * math.log(10.0))))
    n = 1 + 2 * hk
    kern = np.empty(n)
    aux = np.empty((h, nw))
    for x in range(nw):
        xx = x / scale
        xc = int(math.floor(xx + 0.5))
        mean = hk + xx - xc
        s = 0.0
        for i in range(n):
            v = (i - mean) / sigma
            kern[i] = math.exp(-0.5 * v * v)
            s += kern[i]
        for i in range(n):
            kern[i] /= s
        for y in range(h):
            acc = 0.0
            for i in range(n):
                j = xc - hk + i
                while j < 0:
                    j += 2 * w
                while j >= 2 * w:
                    j -= 2 * w
                if j >= w:
                    j = 2 * w - 1 - j
                acc += img[y, j] * kern[i]
            aux[y, x] = acc
    out = np.empty((nh, nw))
    for y in range(nh):
        yy = y / scale
        yc = int(math.floor(yy + 0.5))
        mean = hk + yy - yc
        s = 0.0
        for i in range(n):
            v = (i - mean) / sigma
            kern[i] = math.exp(-0.5 * v * v)
            s += kern[i]
        for i in range(n):
            kern[i] /= s
        for x in range(nw):
            acc = 0.0
            for i in range(n):
                j = yc - hk + i
                while j < 0:
                    j += 2 * h
                while j >= 2 * h:
                    j -= 2 * h
                if j >= h:
                    j = 2 * h - 1 - j
                acc += aux[j, x] * kern[i]
            out[y, x] = acc
    return out


@njit(cache=True)
def _isaligned(ang, theta, prec):
    if ang == NOTDEF:
        return False
    t = theta - ang
    if t < 0.0:
        t = -t
    if t > 1.5 * math.pi:
        t -= 2.0 * math.pi
        if t < 0.0:
            t = -t
    return t <= prec


@njit(cache=True)
def _angle_diff_signed(a, b):
    a -= b
    while a <= -math.pi:
        a += 2.0 * math.pi
    while a > math.pi:
        a -= 2.0 * math.pi
    return a


@njit(cache=True)
def _log10_nfa(n, k, p, log_nt):
    """-log10(NFA) of k aligned points out of n, with tail truncation."""
    if n == 0 or k == 0:
        return -log_nt
    if n == k:
        return -log_nt - n * math.log10(p)
    p_term = p / (1.0 - p)
    log1term = (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
                + k * math.log(p) + (n - k) * math.log(1.0 - p))
    term = math.exp(log1term)
    if term == 0.0:
        if k > n * p:
            return -log1term / math.log(10.0) - log_nt
        return -log_nt
    bin_tail = term
    tolerance = 0.1
    for i in range(k + 1, n + 1):
        bin_term = (n - i + 1) / i
        mult_term = bin_term * p_term
        term *= mult_term
        bin_tail += term
        if bin_term < 1.0:
            err = term * ((1.0 - mult_term ** (n - i + 1)) / (1.0 - mult_term) - 1.0)
            if err < tolerance * abs(-math.log10(bin_tail) - log_nt) * bin_tail:
                break
    return -math.log10(bin_tail) - log_nt


@njit(cache=True)
def _rect_counts(rec, angles):
    """Count pixels (n) and aligned pixels (k) whose centres lie in the rectangle."""
    h, w = angles.shape
    x1 = rec[0]
    y1 = rec[1]
    x2 = rec[2]
    y2 = rec[3]
    half = rec[4] / 2.0
    dx = rec[8]
    dy = rec[9]
    theta = rec[7]
    prec = rec[10]
    length = (x2 - x1) * dx + (y2 - y1) * dy
    cx0 = x1 - dy * half
    cy0 = y1 + dx * half
    cx1 = x2 - dy * half
    cy1 = y2 + dx * half
    cx2 = x2 + dy * half
    cy2 = y2 - dx * half
    cx3 = x1 + dy * half
    cy3 = y1 - dx * half
    xmin = min(min(cx0, cx1), min(cx2, cx3))
    xmax = max(max(cx0, cx1), max(cx2, cx3))
    n = 0
    k = 0
    xs = max(int(math.ceil(xmin)), 0)
    xe = min(int(math.floor(xmax)), w - 1)
    for x in range(xs, xe + 1):
        ylo = -1e300
        yhi = 1e300
        # along-axis slab: 0 <= (x-x1)*dx + (y-y1)*dy <= length
        b = (x - x1) * dx - y1 * dy
        if abs(dy) < 1e-12:
            if b < -1e-9 or b > length + 1e-9:
                continue
        else:
            t0 = (0.0 - b) / dy
            t1 = (length - b) / dy
            ylo = max(ylo, min(t0, t1))
            yhi = min(yhi, max(t0, t1))
        # across-axis slab: -half <= -(x-x1)*dy + (y-y1)*dx <= half
        b = -(x - x1) * dy - y1 * dx
        if abs(dx) < 1e-12:
            if b < -half - 1e-9 or b > half + 1e-9:
                continue
        else:
            t0 = (-half - b) / dx
            t1 = (half - b) / dx
            ylo = max(ylo, min(t0, t1))
            yhi = min(yhi, max(t0, t1))
        ys = max(int(math.ceil(ylo - 1e-9)), 0)
        ye = min(int(math.floor(yhi + 1e-9)), h - 1)
        for y in range(ys, ye + 1):
            n += 1
            if _isaligned(angles[y, x], theta, prec):
                k += 1
    return n, k


@njit(cache=True)
def _rect_nfa(rec, angles, log_nt):
    n, k = _rect_counts(rec, angles)
    return _log10_nfa(n, k, rec[11], log_nt)


@njit(cache=True)
def _region_grow(x0, y0, angles, used, reg_x, reg_y, prec):
    reg_x[0] = x0
    reg_y[0] = y0
    size = 1
    reg_angle = angles[y0, x0]
    sumdx = math.cos(reg_angle)
    sumdy = math.sin(reg_angle)
    used[y0, x0] = _USED
    h, w = angles.shape
    i = 0
    while i < size:
        cx = reg_x[i]
        cy = reg_y[i]
        for yy in range(cy - 1, cy + 2):
            if yy < 0 or yy >= h:
                continue
            for xx in range(cx - 1, cx + 2):
                if xx < 0 or xx >= w:
                    continue
                if used[yy, xx] != _USED and _isaligned(angles[yy, xx], reg_angle, prec):
                    used[yy, xx] = _USED
                    reg_x[size] = xx
                    reg_y[size] = yy
                    size += 1
                    a = angles[yy, xx]
                    sumdx += math.cos(a)
                    sumdy += math.sin(a)
                    reg_angle = math.atan2(sumdy, sumdx)
        i += 1
    return size, reg_angle


@njit(cache=True)
def _region2rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p):
    x = 0.0
    y = 0.0
    s = 0.0
    for i in range(size):
        wgt = modgrad[reg_y[i], reg_x[i]]
        x += reg_x[i] * wgt
        y += reg_y[i] * wgt
        s += wgt
    x /= s
    y /= s
    ixx = 0.0
    iyy = 0.0
    ixy = 0.0
    for i in range(size):
        wgt = modgrad[reg_y[i], reg_x[i]]
        ixx += (reg_y[i] - y) * (reg_y[i] - y) * wgt
        iyy += (reg_x[i] - x) * (reg_x[i] - x) * wgt
        ixy -= (reg_x[i] - x) * (reg_y[i] - y) * wgt
    lam = 0.5 * (ixx + iyy - math.sqrt((ixx - iyy) * (ixx - iyy) + 4.0 * ixy * ixy))
    if abs(ixx) > abs(iyy):
        theta = math.atan2(lam - ixx, ixy)
    else:
        theta = math.atan2(ixy, lam - iyy)
    if abs(_angle_diff_signed(theta, reg_angle)) > prec:
        theta += math.pi
    dx = math.cos(theta)
    dy = math.sin(theta)
    l_min = 0.0
    l_max = 0.0
    w_min = 0.0
    w_max = 0.0
    for i in range(size):
        l = (reg_x[i] - x) * dx + (reg_y[i] - y) * dy
        wd = -(reg_x[i] - x) * dy + (reg_y[i] - y) * dx
        if l > l_max:
            l_max = l
        if l < l_min:
            l_min = l
        if wd > w_max:
            w_max = wd
        if wd < w_min:
            w_min = wd
    rec = np.empty(12)
    rec[0] = x + l_min * dx
    rec[1] = y + l_min * dy
    rec[2] = x + l_max * dx
    rec[3] = y + l_max * dy
    rec[4] = max(w_max - w_min, 1.0)
    rec[5] = x
    rec[6] = y
    rec[7] = theta
    rec[8] = dx
    rec[9] = dy
    rec[10] = prec
    rec[11] = p
    return rec


@njit(cache=True)
def _density(size, rec):
    length = math.hypot(rec[2] - rec[0], rec[3] - rec[1])
    return size / (length * rec[4]) if length > 0 else size / rec[4]


@njit(cache=True)
def _reduce_region_radius(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, density_th):
    density = _density(size, rec)
    if density >= density_th:
        return True, size, rec
    xc = float(reg_x[0])
    yc = float(reg_y[0])
    rad = max(math.hypot(xc - rec[0], yc - rec[1]), math.hypot(xc - rec[2], yc - rec[3]))
    while density < density_th:
        rad *= 0.75
        i = 0
        while i < size:
            if math.hypot(xc - reg_x[i], yc - reg_y[i]) > rad:
                used[reg_y[i], reg_x[i]] = _NOTUSED
                reg_x[i] = reg_x[size - 1]
                reg_y[i] = reg_y[size - 1]
                size -= 1
            else:
                i += 1
        if size < 2:
            return False, size, rec
        rec = _region2rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p)
        density = _density(size, rec)
    return True, size, rec


@njit(cache=True)
def _refine(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, angles, density_th):
    density = _density(size, rec)
    if density >= density_th:
        return True, size, reg_angle, rec
    xc = float(reg_x[0])
    yc = float(reg_y[0])
    ang_c = angles[reg_y[0], reg_x[0]]
    s = 0.0
    s_sum = 0.0
    n = 0
    for i in range(size):
        used[reg_y[i], reg_x[i]] = _NOTUSED
        if math.hypot(xc - reg_x[i], yc - reg_y[i]) < rec[4]:
            ang_d = _angle_diff_signed(angles[reg_y[i], reg_x[i]], ang_c)
            s += ang_d
            s_sum += ang_d * ang_d
            n += 1
    mean_angle = s / n
    tau = 2.0 * math.sqrt(max((s_sum - 2.0 * mean_angle * s) / n + mean_angle * mean_angle, 0.0))
    size, reg_angle = _region_grow(reg_x[0], reg_y[0], angles, used, reg_x, reg_y, tau)
    if size < 2:
        return False, size, reg_angle, rec
    rec = _region2rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p)
    density = _density(size, rec)
    if density < density_th:
        ok, size, rec = _reduce_region_radius(reg_x, reg_y, size, modgrad, reg_angle, prec, p,
                                              rec, used, density_th)
        return ok, size, reg_angle, rec
    return True, size, reg_angle, rec


@njit(cache=True)
def _rect_improve(rec, angles, log_nt, log_eps):
    delta = 0.5
    delta_2 = delta / 2.0
    log_nfa = _rect_nfa(rec, angles, log_nt)
    if log_nfa > log_eps:
        return log_nfa, rec
    # finer precision
    r = rec.copy()
    for _ in range(5):
        r[11] /= 2.0
        r[10] = r[11] * math.pi
        v = _rect_nfa(r, angles, log_nt)
        if v > log_nfa:
            log_nfa = v
            rec = r.copy()
    if log_nfa > log_eps:
        return log_nfa, rec
    # narrower
    r = rec.copy()
    for _ in range(5):
        if r[4] - delta >= 0.5:
            r[4] -= delta
            v = _rect_nfa(r, angles, log_nt)
            if v > log_nfa:
                rec = r.copy()
                log_nfa = v
    if log_nfa > log_eps:
        return log_nfa, rec
    # shave one side, then the other
    for sgn in (1.0, -1.0):
        r = rec.copy()
        for _ in range(5):
            if r[4] - delta >= 0.5:
                r[0] += -r[9] * delta_2 * sgn
                r[1] += r[8] * delta_2 * sgn
                r[2] += -r[9] * delta_2 * sgn
                r[3] += r[8] * delta_2 * sgn
                r[4] -= delta
                v = _rect_nfa(r, angles, log_nt)
                if v > log_nfa:
                    rec = r.copy()
                    log_nfa = v
        if log_nfa > log_eps:
            return log_nfa, rec
    # finer precision again
    r = rec.copy()
    for _ in range(5):
        r[11] /= 2.0
        r[10] = r[11] * math.pi
        v = _rect_nfa(r, angles, log_nt)
        if v > log_nfa:
            log_nfa = v
            rec = r.copy()
    return log_nfa, rec


@njit(cache=True)
def _lsd_core(angles, modgrad, order, prec, p, log_eps, density_th, log_nt):
    h, w = angles.shape
    used = np.zeros((h, w), dtype=np.uint8)
    reg_x = np.empty(h * w, dtype=np.int64)
    reg_y = np.empty(h * w, dtype=np.int64)
    min_reg_size = int(-log_nt / math.log10(p))
    cap = 64
    out = np.empty((cap, 7))
    count = 0
    for idx in order:
        y = idx // w
        x = idx - y * w
        if used[y, x] != _NOTUSED or angles[y, x] == NOTDEF:
            continue
        size, reg_angle = _region_grow(x, y, angles, used, reg_x, reg_y, prec)
        if size < min_reg_size:
            continue
        rec = _region2rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p)
        ok, size, reg_angle, rec = _refine(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec,
                                          used, angles, density_th)
        if not ok:
            continue
        log_nfa, rec = _rect_improve(rec, angles, log_nt, log_eps)
        if log_nfa <= log_eps:
            continue
        if count == cap:
            cap *= 2
            grown = np.empty((cap, 7))
            grown[:count] = out[:count]
            out = grown
        out[count, 0] = rec[0]
        out[count, 1] = rec[1]
        out[count, 2] = rec[2]
        out[count, 3] = rec[3]
        out[count, 4] = rec[4]
        out[count, 5] = log_nfa
        out[count, 6] = rec[10]
        count += 1
    return out[:count]


# -- public API -------------------------------------------------------------

def pixel_order(grad: GradientField, n_bins: int = 1024) -> np.ndarray:
    """Flat indices of valid pixels by decreasing (binned) magnitude, ties in raster order."""
    flat_valid = np.flatnonzero(grad.valid.ravel())
    if flat_valid.size == 0:
        return flat_valid.astype(np.int64)
    mags = grad.magnitude.ravel()[flat_valid]
    max_grad = mags.max()
    bins = np.minimum((mags * (n_bins / max_grad)).astype(np.int64), n_bins - 1)
    key = (n_bins - 1 - bins).astype(np.uint16)
    return flat_valid[np.argsort(key, kind="stable")].astype(np.int64)


def _canonical(x1, y1, x2, y2):
    if (x2, y2) < (x1, y1):
        return x2, y2, x1, y1
    return x1, y1, x2, y2


def detect_lines(gray: np.ndarray, params: LsdParams | None = None) -> list[LineSegment]:
    params = params or LsdParams()
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise RasterError("detect_lines needs a single-channel image")
    if min(gray.shape) < 16:
        raise RasterError(f"image too small for line detection: {gray.shape}")
    scale = params.scale
    work = _gaussian_sampler(np.ascontiguousarray(gray), scale, params.sigma_scale) if scale != 1.0 else gray
    grad = image_gradient(work, params.rho)
    h, w = work.shape
    prec = params.angle_tolerance
    p = prec / math.pi
    log_nt = 5.0 * (math.log10(w) + math.log10(h)) / 2.0 + math.log10(11.0)
    log_eps = -math.log10(params.nfa_epsilon)
    order = pixel_order(grad, params.n_bins)
    raw = _lsd_core(grad.level_line_angle, grad.magnitude, order, prec, p, log_eps,
                    params.density_threshold, log_nt)
    segs = []
    for x1, y1, x2, y2, width, log_nfa, _ in raw:
        # gradient cell (x, y) is centred at (x + 0.5, y + 0.5) on the sampled grid
        x1, y1, x2, y2 = ((v + 0.5) / scale for v in (x1, y1, x2, y2))
        if x1 == x2 and y1 == y2:
            continue
        x1, y1, x2, y2 = _canonical(float(x1), float(y1), float(x2), float(y2))
        segs.append(LineSegment(x1, y1, x2, y2, float(width / scale), float(log_nfa)))
    segs.sort(key=lambda s: (-s.length, s.x1, s.y1, s.x2, s.y2))
    return segs


def segments_to_array(segments) -> np.ndarray:
    if isinstance(segments, np.ndarray):
        return segments.astype(np.float64, copy=False).reshape(-1, 4)
    if len(segments) == 0:
        return np.zeros((0, 4))
    return np.array([s.as_tuple() if isinstance(s, LineSegment) else tuple(s) for s in segments],
                    dtype=np.float64).reshape(-1, 4)


def segments_to_json(segments) -> dict:
    return {"segments": [[float(v) for v in s.as_tuple()] for s in segments]}


def save_segments(path, segments) -> None:
    with open(Path(path), "w") as fh:
        json.dump(segments_to_json(segments), fh)


def load_segments(path) -> list[LineSegment]:
    with open(Path(path)) as fh:
        doc = json.load(fh)
    try:
        rows = doc["segments"]
        segs = [LineSegment(*(float(v) for v in row)) for row in rows if len(row) == 4]
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterError(f"malformed segment file {path}") from exc
    if len(segs) != len(rows):
        raise RasterError(f"malformed segment file {path}: rows must have four coordinates")
    return segs
