"""Line acquisition, filtering and revision of predicted window regions.

Windows in the preliminary mask are split into instances; each instance's
bounding rectangle (the anchor) collects at most one detected line segment
per edge, and anchors with all four edges filled are replaced in the mask by
the rectangle the four segments describe.

Anchors are ``(top, bottom, left, right)`` in pixel-centre coordinates. The
top edge is the line ``y = top``, the left edge ``x = left``, and so on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import raster
from .lsd import LineSegment, LsdParams, detect_lines, segments_to_array

EDGES = ("top", "bottom", "left", "right")
_EDGE_ORIENTATION = {"top": 0.0, "bottom": 0.0, "left": math.pi / 2, "right": math.pi / 2}


class LafrError(ValueError):
    pass


@dataclass(frozen=True)
class LafrParams:
    delta: float = 20.0
    theta: float = 0.1  # radians
    window_class: int = 1
    replacement_class: int | None = None
    blur: tuple = ((5, 5.0), (3, 5.0))
    morphology_radius: int = 1
    morphology_iterations: int = 2
    min_component_area: int = 30
    overlap_ratio: float = 0.3  # <= 0 disables the projection-overlap gate
    connectivity: int = 4
    fill_holes: bool = True  # close enclosed holes before the opening
    integration: str = "rect"  # or "quad": corners from pairwise line intersections

    def __post_init__(self):
        if not self.delta > 0:
            raise LafrError("delta must be positive")
        if not 0 < self.theta < math.pi / 4:
            raise LafrError("theta must lie in (0, pi/4) radians")
        if self.window_class < 0:
            raise LafrError("window_class must be a class index")
        if self.integration not in ("rect", "quad"):
            raise LafrError(f"unknown integration mode {self.integration!r}")


@dataclass
class WindowInstance:
    id: int
    component: raster.ConnectedComponent
    anchor: tuple[int, int, int, int]
    # window pixels cleared on revision: the component plus the ragged
    # pixels the opening stripped from it
    support_rows: np.ndarray = field(repr=False)
    support_cols: np.ndarray = field(repr=False)


@dataclass
class EdgeAssignment:
    anchor_id: int
    slots: dict = field(default_factory=lambda: {e: None for e in EDGES})
    integrated: tuple | None = None
    corners: np.ndarray | None = field(default=None, repr=False)

    @property
    def complete(self) -> bool:
        return all(self.slots[e] is not None for e in EDGES)

    def segment_index(self, edge: str) -> int | None:
        slot = self.slots[edge]
        return None if slot is None else slot[0]

    def to_dict(self) -> dict:
        return {
            "anchor_id": self.anchor_id,
            "edges": {
                e: None if self.slots[e] is None
                else {"segment": int(self.slots[e][0]), "distance": float(self.slots[e][1])}
                for e in EDGES
            },
            "integrated": None if self.integrated is None else [float(v) for v in self.integrated],
        }


@dataclass
class RevisionResult:
    revised: np.ndarray
    instances: list
    assignments: list
    segments: list
    stats: dict

    def to_report(self) -> dict:
        anchors = []
        for inst, asg in zip(self.instances, self.assignments):
            d = asg.to_dict()
            d["anchor"] = [int(v) for v in inst.anchor]
            d["area"] = int(inst.component.pixel_count)
            anchors.append(d)
        return {"stats": self.stats, "anchors": anchors, "num_segments": len(self.segments)}


# -- instance acquisition ---------------------------------------------------

def acquire_instances(mask: np.ndarray, params: LafrParams = LafrParams(),
                      num_classes: int | None = None) -> list[WindowInstance]:
    mask = np.asarray(mask)
    if num_classes is not None and params.window_class >= num_classes:
        raise LafrError(f"window class {params.window_class} not below class count {num_classes}")
    binary = mask == params.window_class
    if not binary.any():
        return []
    if params.fill_holes:
        binary = ndimage.binary_fill_holes(binary)
    if params.morphology_iterations > 0:
        opened = raster.opening(binary, params.morphology_radius, params.morphology_iterations)
    else:
        opened = binary
    comps = [c for c in raster.connected_components(opened, params.connectivity)
             if c.pixel_count >= params.min_component_area]
    comps = [c for c in comps
             if c.bounding_rect[0] < c.bounding_rect[1] and c.bounding_rect[2] < c.bounding_rect[3]]
    if not comps:
        return []
    labels = np.zeros(mask.shape, dtype=np.int32)
    for i, c in enumerate(comps, start=1):
        labels[c.rows, c.cols] = i
    reach = params.morphology_radius * params.morphology_iterations
    stripped = binary & ~opened
    if reach > 0 and stripped.any():
        # smallest label within reach wins
        top_id = len(comps) + 1
        key = np.where(labels > 0, top_id - labels, 0)
        best = ndimage.maximum_filter(key, size=2 * reach + 1, mode="constant", cval=0)
        owner = np.where(stripped & (best > 0), top_id - best, 0)
    else:
        owner = np.zeros(mask.shape, dtype=np.int64)
    h, w = mask.shape
    out = []
    for i, c in enumerate(comps, start=1):
        top, bottom, left, right = c.bounding_rect
        r0, r1 = max(top - reach, 0), min(bottom + reach + 1, h)
        c0, c1 = max(left - reach, 0), min(right + reach + 1, w)
        er, ec = np.nonzero(owner[r0:r1, c0:c1] == i)
        rows = np.concatenate([c.rows, er + r0])
        cols = np.concatenate([c.cols, ec + c0])
        out.append(WindowInstance(id=i - 1, component=c, anchor=c.bounding_rect,
                                  support_rows=rows, support_cols=cols))
    return out


# -- filtering --------------------------------------------------------------

def _angle_gap(seg_angle, orientation):
    d = np.mod(np.abs(seg_angle - orientation), np.pi)
    return np.minimum(d, np.pi - d)


def edge_angle_gap(anchor, segment: LineSegment, edge: str) -> float:
    if segment.length == 0:
        raise LafrError("degenerate (zero-length) segment")
    return float(_angle_gap(segment.angle, _EDGE_ORIENTATION[edge]))


def edge_distance(anchor, segment: LineSegment, edge: str, overlap_ratio: float = 0.3) -> float:
    """Perpendicular distance from the segment midpoint to the edge line.

    Returns ``inf`` when the segment's projection onto the edge axis covers less
    than ``overlap_ratio`` of the edge length.
    """
    if segment.length == 0:
        raise LafrError("degenerate (zero-length) segment")
    dist, _ = edge_tables(anchor, segments_to_array([segment]), overlap_ratio)
    return float(dist[0, EDGES.index(edge)])


def edge_tables(anchor, segs: np.ndarray, overlap_ratio: float = 0.3):
    """Distance and angle-gap tables of shape (J, 4) over EDGES for every segment."""
    top, bottom, left, right = (float(v) for v in anchor)
    segs = np.asarray(segs, dtype=np.float64).reshape(-1, 4)
    x1, y1, x2, y2 = segs.T
    mx = 0.5 * (x1 + x2)
    my = 0.5 * (y1 + y2)
    dist = np.stack([np.abs(my - top), np.abs(my - bottom), np.abs(mx - left), np.abs(mx - right)], axis=1)
    if overlap_ratio > 0:
        ox = np.minimum(np.maximum(x1, x2), right) - np.maximum(np.minimum(x1, x2), left)
        oy = np.minimum(np.maximum(y1, y2), bottom) - np.maximum(np.minimum(y1, y2), top)
        h_ok = ox >= overlap_ratio * (right - left)
        v_ok = oy >= overlap_ratio * (bottom - top)
        dist[~h_ok, 0:2] = np.inf
        dist[~v_ok, 2:4] = np.inf
    ang = np.arctan2(y2 - y1, x2 - x1)
    gap_h = _angle_gap(ang, 0.0)
    gap_v = _angle_gap(ang, np.pi / 2)
    gap = np.stack([gap_h, gap_h, gap_v, gap_v], axis=1)
    return dist, gap


def assign_segments(anchor, segments, params: LafrParams = LafrParams(), anchor_id: int = 0) -> EdgeAssignment:
    """Pick at most one segment per anchor edge.

    Each segment competes for the edge pair matching its orientation class
    (top/bottom when nearer horizontal) and, within the pair, for the edge
    whose line is nearer its midpoint. Candidates beyond ``delta`` or
    ``theta`` are dropped; each edge keeps the minimum-distance survivor,
    ties going to the longer segment, then the lower index.
    """
    if isinstance(anchor, WindowInstance):
        anchor_id = anchor.id
        anchor = anchor.anchor
    segs = segments_to_array(segments)
    asg = EdgeAssignment(anchor_id=anchor_id)
    if len(segs) == 0:
        return asg
    dist, gap = edge_tables(anchor, segs, params.overlap_ratio)
    lengths = np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])
    horizontal = gap[:, 0] <= gap[:, 2]
    edge_idx = np.where(horizontal,
                        np.where(dist[:, 0] <= dist[:, 1], 0, 1),
                        np.where(dist[:, 2] <= dist[:, 3], 2, 3))
    rows = np.arange(len(segs))
    d = dist[rows, edge_idx]
    g = gap[rows, edge_idx]
    keep = (g <= params.theta) & (d <= params.delta) & (lengths > 0)
    for e, name in enumerate(EDGES):
        cand = np.flatnonzero(keep & (edge_idx == e))
        if cand.size == 0:
            continue
        # lexsort: last key is primary
        best = cand[np.lexsort((cand, -lengths[cand], d[cand]))[0]]
        asg.slots[name] = (int(best), float(d[best]))
    return asg


def _line_intersection(p, q):
    (x1, y1, x2, y2), (x3, y3, x4, y4) = p, q
    den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
    if abs(den) < 1e-12:
        return None
    a = x1 * y2 - y1 * x2
    b = x3 * y4 - y3 * x4
    return ((a * (x3 - x4) - (x1 - x2) * b) / den, (a * (y3 - y4) - (y1 - y2) * b) / den)


def integrate(assignment: EdgeAssignment, segments, mode: str = "rect"):
    """Fuse four assigned segments into a revision rectangle.

    Returns ``(top, bottom, left, right)`` or ``None`` when an edge is blank or
    the result is degenerate. With ``mode="quad"`` the corner points from
    pairwise line intersections are stored on ``assignment.corners`` and the
    returned rectangle is their bounding box.
    """
    if not assignment.complete:
        assignment.integrated = None
        return None
    segs = segments_to_array(segments)
    t, b, l, r = (segs[assignment.segment_index(e)] for e in EDGES)
    top = 0.5 * (t[1] + t[3])
    bottom = 0.5 * (b[1] + b[3])
    left = 0.5 * (l[0] + l[2])
    right = 0.5 * (r[0] + r[2])
    rect = (float(top), float(bottom), float(left), float(right))
    if top >= bottom or left >= right:
        rect = None
    if rect is not None and mode == "quad":
        corners = [_line_intersection(t, l), _line_intersection(t, r),
                   _line_intersection(b, r), _line_intersection(b, l)]
        if any(c is None for c in corners):
            rect = None
        else:
            quad = np.array(corners)
            assignment.corners = quad
            rect = (float(quad[:, 1].min()), float(quad[:, 1].max()),
                    float(quad[:, 0].min()), float(quad[:, 0].max()))
    assignment.integrated = rect
    return rect


# -- revision ---------------------------------------------------------------

def _ring_class(mask, rows, cols, window_class, fallback):
    h, w = mask.shape
    r0, r1 = max(rows.min() - 1, 0), min(rows.max() + 2, h)
    c0, c1 = max(cols.min() - 1, 0), min(cols.max() + 2, w)
    region = np.zeros((r1 - r0 + 2, c1 - c0 + 2), dtype=bool)
    region[rows - r0 + 1, cols - c0 + 1] = True
    grown = np.zeros_like(region)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            grown[1:-1, 1:-1] |= region[1 + dy:region.shape[0] - 1 + dy, 1 + dx:region.shape[1] - 1 + dx]
    ring = (grown & ~region)[1:-1, 1:-1]
    vals = mask[r0:r1, c0:c1][ring]
    vals = vals[vals != window_class]
    if vals.size == 0:
        return fallback
    return int(np.argmax(np.bincount(vals)))


def rect_pixels(rect, shape) -> tuple[slice, slice]:
    """Slices covering pixels whose centres fall inside ``rect`` (clipped)."""
    top, bottom, left, right = rect
    h, w = shape
    r0 = max(int(math.ceil(top)), 0)
    r1 = min(int(math.floor(bottom)), h - 1)
    c0 = max(int(math.ceil(left)), 0)
    c1 = min(int(math.floor(right)), w - 1)
    return slice(r0, max(r1 + 1, r0)), slice(c0, max(c1 + 1, c0))


def _quad_pixels(corners, shape):
    top, bottom = corners[:, 1].min(), corners[:, 1].max()
    left, right = corners[:, 0].min(), corners[:, 0].max()
    rs, cs = rect_pixels((top, bottom, left, right), shape)
    yy, xx = np.mgrid[rs, cs]
    inside = np.ones(yy.shape, dtype=bool)
    sign = None
    for i in range(4):
        (ax, ay), (bx, by) = corners[i], corners[(i + 1) % 4]
        cross = (bx - ax) * (yy - ay) - (by - ay) * (xx - ax)
        if sign is None:
            sign = np.sign((bx - ax) * (corners[(i + 2) % 4][1] - ay) - (by - ay) * (corners[(i + 2) % 4][0] - ax))
        inside &= cross * sign >= -1e-9
    return yy[inside], xx[inside]


def revise(mask: np.ndarray, instances, assignments, params: LafrParams = LafrParams()) -> RevisionResult:
    mask = np.asarray(mask)
    if len(instances) != len(assignments):
        raise LafrError("assignments must correspond one-to-one with instances")
    for inst in instances:
        top, bottom, left, right = inst.anchor
        if bottom >= mask.shape[0] or right >= mask.shape[1]:
            raise LafrError("instance lies outside the mask; dimension mismatch")
    out = mask.copy()
    fallback = params.replacement_class if params.replacement_class is not None else 0
    revised_ids = [i for i, a in enumerate(assignments) if a.integrated is not None]
    for i in revised_ids:
        inst = instances[i]
        fill = _ring_class(mask, inst.support_rows, inst.support_cols, params.window_class, fallback)
        out[inst.support_rows, inst.support_cols] = fill
    covered = np.zeros(mask.shape, dtype=np.int32)
    for i in revised_ids:
        asg = assignments[i]
        if params.integration == "quad" and asg.corners is not None:
            rr, cc = _quad_pixels(asg.corners, mask.shape)
            out[rr, cc] = params.window_class
            covered[rr, cc] += 1
        else:
            rs, cs = rect_pixels(asg.integrated, mask.shape)
            out[rs, cs] = params.window_class
            covered[rs, cs] += 1
    stats = {
        "total": len(instances),
        "revised": len(revised_ids),
        "discarded": len(instances) - len(revised_ids),
        "complete_edges": sum(1 for a in assignments if a.complete),
        "overlap_pixels": int((covered > 1).sum()),
        "edge_fill": [{e: assignments[i].slots[e] is not None for e in EDGES} for i in range(len(assignments))],
    }
    return RevisionResult(revised=out, instances=list(instances), assignments=list(assignments),
                          segments=[], stats=stats)


def acquire_lines(image: np.ndarray, params: LafrParams = LafrParams(),
                  lsd_params: LsdParams | None = None) -> list[LineSegment]:
    """Grayscale, apply the configured Gaussian blurs in sequence, detect segments."""
    gray = raster.to_grayscale(image)
    for kernel, sigma in params.blur:
        gray = raster.gaussian_blur(gray, kernel, sigma)
    return detect_lines(gray, lsd_params)


def run_lafr(image: np.ndarray, preliminary: np.ndarray, params: LafrParams = LafrParams(),
             lsd_params: LsdParams | None = None, segments=None,
             num_classes: int | None = None) -> RevisionResult:
    image = np.asarray(image)
    preliminary = np.asarray(preliminary)
    if image.shape[:2] != preliminary.shape:
        raise LafrError(f"image {image.shape[:2]} and mask {preliminary.shape} differ in size")
    instances = acquire_instances(preliminary, params, num_classes)
    if segments is None:
        segments = acquire_lines(image, params, lsd_params) if instances else []
    segs = segments_to_array(segments)
    assignments = []
    for inst in instances:
        asg = assign_segments(inst, segs, params)
        integrate(asg, segs, params.integration)
        assignments.append(asg)
    result = revise(preliminary, instances, assignments, params)
    result.segments = list(segments)
    return result
