import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import assign as brute_assign
from facade_revise import lafr
from facade_revise.lafr import LafrParams, assign_segments, integrate, revise, run_lafr
from facade_revise.lsd import LineSegment
from facade_revise.synth import CorruptionParams, FacadeSpec, corrupt, generate

ANCHOR = (10, 40, 10, 50)


def frame(top, bottom, left, right, pad=2):
    """Four segments hugging a rectangle, slightly longer than its sides."""
    return [
        LineSegment(left - pad, top, right + pad, top),
        LineSegment(left - pad, bottom, right + pad, bottom),
        LineSegment(left, top - pad, left, bottom + pad),
        LineSegment(right, top - pad, right, bottom + pad),
    ]


def test_distance_and_gap_by_hand():
    s = LineSegment(12, 8, 48, 8)
    assert lafr.edge_distance(ANCHOR, s, "top") == pytest.approx(2.0)
    assert lafr.edge_angle_gap(ANCHOR, s, "top") == pytest.approx(0.0)
    assert lafr.edge_angle_gap(ANCHOR, s, "left") == pytest.approx(math.pi / 2)


def test_far_segment_rejected():
    asg = assign_segments(ANCHOR, [LineSegment(12, 100, 48, 100)])
    assert all(v is None for v in asg.slots.values())


def test_nearer_segment_wins():
    segs = [LineSegment(12, 17, 48, 17), LineSegment(12, 13, 48, 13)]
    asg = assign_segments(ANCHOR, segs)
    assert asg.slots["top"] == (1, pytest.approx(3.0))
    assert asg.slots["bottom"] is None


def test_tie_goes_to_longer_then_lower_index():
    segs = [LineSegment(20, 12, 40, 12), LineSegment(12, 8, 48, 8), LineSegment(12, 12, 48, 12)]
    assert assign_segments(ANCHOR, segs).segment_index("top") == 1


def test_empty_segments():
    asg = assign_segments(ANCHOR, [])
    assert asg.slots == {e: None for e in lafr.EDGES}
    assert integrate(asg, []) is None


def test_steep_segment_outside_theta():
    # 0.2 rad off horizontal, beyond the 0.1 rad default
    dy = 36 * math.tan(0.2)
    asg = assign_segments(ANCHOR, [LineSegment(12, 10 - dy / 2, 48, 10 + dy / 2)])
    assert asg.slots["top"] is None


def test_tilted_top_averages_endpoints():
    segs = frame(*ANCHOR)
    segs[0] = LineSegment(8, 9, 52, 11)
    asg = assign_segments(ANCHOR, segs)
    assert integrate(asg, segs) == pytest.approx((10.0, 40.0, 10.0, 50.0))


def test_integration_from_framing_segments():
    anchor = (12, 28, 17, 38)
    segs = frame(10, 30, 15, 40)
    asg = assign_segments(anchor, segs)
    assert asg.complete
    assert integrate(asg, segs) == pytest.approx((10, 30, 15, 40))


def test_blank_edge_gives_none():
    segs = frame(*ANCHOR)[:3]
    asg = assign_segments(ANCHOR, segs)
    assert not asg.complete
    assert integrate(asg, segs) is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(*[st.integers(0, 60)] * 4), max_size=12),
       st.tuples(st.integers(0, 20), st.integers(25, 50), st.integers(0, 20), st.integers(25, 60)))
def test_assignment_matches_brute_force(raw, anchor):
    want = brute_assign(anchor, raw, 20.0, 0.1)
    got = assign_segments(anchor, np.array(raw, dtype=float).reshape(-1, 4))
    for e in lafr.EDGES:
        if want[e] is None:
            assert got.slots[e] is None
        else:
            assert got.slots[e][0] == want[e][0]
            assert got.slots[e][1] == pytest.approx(want[e][1], abs=1e-12)


def block_mask(shape=(60, 80), rect=(15, 40, 20, 60), cls=1, bg=0):
    m = np.full(shape, bg, dtype=np.uint8)
    t, b, l, r = rect
    m[t:b + 1, l:r + 1] = cls
    return m


def test_no_instances_no_change():
    m = np.zeros((40, 40), np.uint8)
    res = run_lafr(np.zeros((40, 40)), m, segments=[])
    assert np.array_equal(res.revised, m)
    assert res.stats["total"] == 0


def test_ragged_window_snapped_to_lines():
    m = block_mask()
    m[15, 20:30] = 0
    m[30:35, 60] = 0
    m[41, 25:35] = 1  # one-row overhang
    segs = frame(14.5, 40.5, 19.5, 60.5)
    res = run_lafr(np.zeros(m.shape), m, segments=segs)
    assert np.array_equal(res.revised, block_mask(rect=(15, 40, 20, 60)))


def test_cleared_pixels_take_ring_class():
    m = np.full((60, 80), 5, np.uint8)
    m[10:50, 10:70] = 0
    m[20:35, 25:55] = 1
    res = run_lafr(np.zeros(m.shape), m, segments=frame(21.5, 33.5, 26.5, 53.5))
    assert set(np.unique(res.revised[20:35, 25:55])) == {0, 1}
    assert (res.revised == 5).sum() == (m == 5).sum()


def test_two_blocks_revised_independently():
    m = block_mask(shape=(60, 120), rect=(10, 40, 10, 40))
    m[10:41, 70:101] = 1
    segs = frame(11.5, 39.5, 11.5, 39.5) + frame(9.5, 41.5, 69.5, 101.5)
    res = run_lafr(np.zeros(m.shape), m, segments=segs)
    assert res.stats["revised"] == 2
    want = np.zeros_like(m)
    want[12:40, 12:40] = 1
    want[10:42, 70:102] = 1
    assert np.array_equal(res.revised, want)


def test_thin_bridge_split_by_opening():
    m = block_mask(shape=(60, 120), rect=(10, 40, 10, 40))
    m[10:41, 60:91] = 1
    m[25:27, 41:60] = 1
    inst = lafr.acquire_instances(m)
    assert len(inst) == 2


def test_window_class_out_of_range():
    with pytest.raises(lafr.LafrError):
        lafr.acquire_instances(np.zeros((10, 10), np.uint8), LafrParams(window_class=9), num_classes=9)


def test_shape_mismatch():
    with pytest.raises(lafr.LafrError):
        run_lafr(np.zeros((10, 12)), np.zeros((10, 10), np.uint8))


def test_theta_validation():
    with pytest.raises(lafr.LafrError):
        LafrParams(theta=1.0)


def facade(seed):
    img, gt = generate(FacadeSpec(), seed)
    pred = corrupt(gt, CorruptionParams(seed=seed))
    return img, gt, pred


@pytest.mark.parametrize("seed", range(3))
def test_changes_stay_local(seed):
    img, _, pred = facade(seed)
    res = run_lafr(img, pred)
    allowed = pred == 1
    for asg in res.assignments:
        if asg.integrated is not None:
            allowed[lafr.rect_pixels(asg.integrated, pred.shape)] = True
    assert not ((res.revised != pred) & ~allowed).any()


def test_blank_edge_anchor_untouched():
    img, _, pred = facade(1)
    res = run_lafr(img, pred)
    blank = [i for i, a in enumerate(res.assignments) if not a.complete]
    assert blank  # the corruption blobs have no frame to snap to
    for i in blank:
        t, b, l, r = res.instances[i].anchor
        others = np.zeros(pred.shape, bool)
        for a in res.assignments:
            if a.integrated is not None:
                others[lafr.rect_pixels(a.integrated, pred.shape)] = True
        box = (slice(t, b + 1), slice(l, r + 1))
        same = res.revised[box] == pred[box]
        assert same[~others[box]].all()


def test_exact_rectangles_are_a_fixed_point():
    img, gt = generate(FacadeSpec(), 2)
    once = run_lafr(img, gt).revised
    assert np.array_equal(once, gt)
    assert np.array_equal(run_lafr(img, once).revised, once)


def test_larger_thresholds_never_unfill():
    img, _, pred = facade(3)
    segs = lafr.acquire_lines(img)
    grid = [(2.0, 0.02), (8.0, 0.05), (20.0, 0.1), (40.0, 0.3), (60.0, 0.5)]
    fills = [run_lafr(img, pred, LafrParams(delta=d, theta=t), segments=segs).stats["edge_fill"]
             for d, t in grid]
    for small, big in zip(fills, fills[1:]):
        for a, b in zip(small, big):
            assert all(b[e] for e in lafr.EDGES if a[e])


def test_deterministic():
    img, _, pred = facade(4)
    a = run_lafr(img, pred)
    b = run_lafr(img.copy(), pred.copy())
    assert np.array_equal(a.revised, b.revised)
    assert a.to_report() == b.to_report()


def test_quad_mode_on_axis_aligned_frame():
    m = block_mask()
    segs = frame(14.5, 40.5, 19.5, 60.5)
    rect = run_lafr(np.zeros(m.shape), m, segments=segs).revised
    quad = run_lafr(np.zeros(m.shape), m, LafrParams(integration="quad"), segments=segs)
    assert np.array_equal(quad.revised, rect)
    assert quad.assignments[0].corners.shape == (4, 2)


def test_report_is_json_ready():
    import json
    img, _, pred = facade(0)
    rep = run_lafr(img, pred).to_report()
    json.dumps(rep)
    assert rep["stats"]["total"] == len(rep["anchors"])


def test_two_small_blocks_keep_their_bounds():
    m = np.zeros((30, 40), np.uint8)
    m[5:15, 5:13] = 1
    m[5:15, 16:24] = 1
    inst = lafr.acquire_instances(m)
    assert [i.anchor for i in inst] == [(5, 14, 5, 12), (5, 14, 16, 23)]
