import numpy as np
import pytest

from facade_revise import raster, synth
from facade_revise.lsd import detect_lines
from facade_revise.synth import CorruptionParams, FacadeSpec, corrupt, generate


def test_component_count_matches_grid():
    _, gt = generate(FacadeSpec(rows=2, cols=3))
    assert len(raster.connected_components(gt == synth.WINDOW)) == 6


def test_each_window_gives_lines():
    spec = FacadeSpec(rows=1, cols=1, width=120, height=120, margin_left=40, margin_top=36, noise_sigma=0)
    img, _ = generate(spec)
    top, bottom, left, right = synth.window_rects(spec)[0]
    segs = detect_lines(raster.to_grayscale(img))
    near = [s for s in segs
            if left - 4 <= s.midpoint[0] <= right + 4 and top - 4 <= s.midpoint[1] <= bottom + 4]
    assert len(near) >= 4


def test_generate_is_seeded():
    a = generate(FacadeSpec(), 5)
    b = generate(FacadeSpec(), 5)
    c = generate(FacadeSpec(), 6)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])
    assert np.array_equal(a[1], c[1])


def test_zero_corruption_is_identity():
    _, gt = generate()
    out = corrupt(gt, CorruptionParams(amplitude=0, dropout=0, blob_count=0))
    assert np.array_equal(out, gt)


@pytest.mark.parametrize("seed", range(5))
def test_corrupted_windows_overlap_moderately(seed):
    _, gt = generate(FacadeSpec(), seed)
    pred = corrupt(gt, CorruptionParams(seed=seed))
    for t, b, l, r in synth.window_rects(FacadeSpec()):
        box = (slice(t - 4, b + 5), slice(l - 4, r + 5))
        iou = synth.window_iou(gt[box], pred[box])
        assert 0.55 <= iou <= 0.95


def test_corruption_only_near_windows_or_blobs():
    _, gt = generate()
    params = CorruptionParams(blob_count=0)
    pred = corrupt(gt, params)
    near = raster.dilate(gt == synth.WINDOW, radius=params.amplitude)
    assert not ((pred != gt) & ~near).any()


def test_class_range():
    _, gt = generate()
    pred = corrupt(gt)
    assert gt.max() < synth.NUM_CLASSES and pred.max() < synth.NUM_CLASSES
    assert set(np.unique(gt)) == {synth.BUILDING, synth.WINDOW, synth.ROOF, synth.SKY}


def test_invalid_spec():
    with pytest.raises(synth.SynthError):
        generate(FacadeSpec(window_w=4))
