from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from facade_revise import vit
from facade_revise.vit import LayerWeights, VitConfig

DATA = Path(__file__).parent / "data"
SMALL = VitConfig(patch=16, dim=32, layers=2, heads=4, decoder_layers=1, decoder_heads=4,
                  num_classes=4, seed=7)


def golden_image():
    yy, xx = np.mgrid[0:64, 0:64]
    img = np.stack([(xx * 4) % 256, (yy * 4) % 256, ((xx + yy) * 2) % 256], -1).astype(float)
    img[20:44, 16:40] = 30
    return img


def identity_layer(d):
    eye, z = np.eye(d), np.zeros(d)
    return LayerWeights(np.ones(d), z, eye, z, eye, z, eye, z, eye, z,
                        np.ones(d), z, np.zeros((d, 4 * d)), np.zeros(4 * d), np.zeros((4 * d, d)), z)


def test_patch_count_448():
    img = np.zeros((448, 448, 3))
    assert vit.patchify(img, 16).shape == (784, 768)


def test_patchify_roundtrip():
    img = np.random.default_rng(0).random((32, 48, 3))
    p = vit.patchify(img, 16)
    assert np.array_equal(vit.unpatchify(p, 32, 48, 16, 3), img)
    assert np.array_equal(p[1].reshape(16, 16, 3), img[:16, 16:32])


def test_indivisible_image():
    with pytest.raises(vit.VitError):
        vit.patchify(np.zeros((30, 32, 3)), 16)


def test_single_token_attends_to_itself():
    lw = identity_layer(4)
    x = np.array([[1.0, -2.0, 0.5, 3.0]])
    out, att = vit.msa(x, lw, heads=2, return_attention=True)
    assert np.allclose(att, 1.0)
    assert np.allclose(out, x)


def test_attention_rows_sum_to_one():
    w = vit.init_weights(SMALL, 16)
    s = np.random.default_rng(1).normal(size=(16, 32))
    _, att = vit.msa(s, w.encoder[0], SMALL.heads, return_attention=True)
    assert np.abs(att.sum(-1) - 1).max() <= 1e-6


def test_two_token_attention_by_hand():
    lw = identity_layer(2)
    s = np.eye(2)
    a = np.exp(1 / np.sqrt(2)) / (np.exp(1 / np.sqrt(2)) + 1)
    out = vit.msa(s, lw, heads=1)
    assert np.allclose(out, [[a, 1 - a], [1 - a, a]], atol=1e-12)
    assert a == pytest.approx(0.66976, abs=1e-5)


def test_zero_layers_is_identity():
    s = np.random.default_rng(2).normal(size=(5, 8))
    assert np.array_equal(vit.encoder_forward(s, [], 2), s)


def test_patch_permutation_equivariance():
    cfg = SMALL
    img = golden_image()
    w = vit.init_weights(cfg, 16)
    s0 = vit.embed(img, w, cfg, use_pos=False)
    perm = np.random.default_rng(3).permutation(16)
    a = vit.decode_mask(vit.encoder_forward(s0, w.encoder, cfg.heads), w, cfg)[perm]
    b = vit.decode_mask(vit.encoder_forward(s0[perm], w.encoder, cfg.heads), w, cfg)
    assert np.abs(a - b).max() <= 1e-5


def test_decoder_scores_by_hand():
    cfg = VitConfig(dim=2, heads=1, decoder_heads=1, decoder_layers=0, num_classes=2)
    w = vit.WeightSet(patch_w=None, patch_b=None, pos=None, decoder=[],
                      class_tokens=np.array([[1.0, 1.0], [0.0, -1.0]]))
    s = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.array_equal(vit.decode_mask(s, w, cfg), [[1.0, 0.0], [2.0, -2.0]])


def test_single_class_mask_is_zero():
    cfg = VitConfig(dim=16, heads=2, decoder_heads=2, num_classes=1, layers=1, decoder_layers=1)
    m = vit.segment_forward(np.zeros((32, 32, 3)), cfg)
    assert m.shape == (32, 32) and not m.any()


def probe_derivative(cfg, img, i, j):
    """(central difference, complex-step derivative) of sum(scores) w.r.t. patch_w[i, j]."""
    w = vit.init_weights(cfg, (img.shape[0] // cfg.patch) * (img.shape[1] // cfg.patch))

    def f(step):
        pw = w.patch_w.astype(complex if np.iscomplexobj(step) else float)
        pw[i, j] += step
        return np.sum(vit.patch_scores(img, cfg, replace(w, patch_w=pw)))

    h = 1e-5
    fd = (f(h) - f(-h)) / (2 * h)
    exact = f(1e-30j).imag / 1e-30
    return fd, exact


def test_finite_difference_matches_complex_step():
    rng = np.random.default_rng(5)
    img = golden_image()
    for _ in range(5):
        i, j = int(rng.integers(768)), int(rng.integers(SMALL.dim))
        fd, exact = probe_derivative(SMALL, img, i, j)
        assert abs(fd - exact) <= 1e-3 * abs(exact)


def test_upsample_constant_and_centres():
    grid = np.full((2, 3, 1), 4.0)
    assert np.allclose(vit.upsample_bilinear(grid, 8, 12), 4.0)
    g = np.arange(4.0).reshape(1, 4, 1)
    up = vit.upsample_bilinear(g, 1, 8)[0, :, 0]
    assert np.allclose(up, [0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3])


def test_seeded_weights_repeat():
    a = vit.init_weights(SMALL, 16)
    b = vit.init_weights(SMALL, 16)
    assert np.array_equal(a.encoder[1].wq, b.encoder[1].wq)
    assert not np.array_equal(a.encoder[0].wq, a.encoder[1].wq)


def test_golden_mask():
    want = np.load(DATA / "vit_golden_64.npy")
    assert np.array_equal(vit.segment_forward(golden_image(), SMALL), want)


def test_pos_table_size_checked():
    w = vit.init_weights(SMALL, 4)
    with pytest.raises(vit.VitError):
        vit.segment_forward(golden_image(), SMALL, w)


def test_bad_head_split():
    with pytest.raises(vit.VitError):
        VitConfig(dim=30, heads=4)
