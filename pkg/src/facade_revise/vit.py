"""Seeded-weight forward pass of a Segmenter-style ViT encoder / mask decoder.

No training happens here; weights are drawn from a scaled normal (std 0.02)
so the branch can be run end to end and its algebra checked. All ops are
written to accept complex input as well, which lets callers take exact
complex-step derivatives of the forward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .raster import to_grayscale

# (dim, layers, heads) of the usual ViT sizes
PRESETS = {
    "tiny": (192, 12, 3),
    "small": (384, 12, 6),
    "base": (768, 12, 12),
    "large": (1024, 24, 16),
}


class VitError(ValueError):
    pass


@dataclass(frozen=True)
class VitConfig:
    patch: int = 16
    dim: int = 64
    layers: int = 2
    heads: int = 4
    decoder_layers: int = 2
    decoder_heads: int = 8
    num_classes: int = 9
    seed: int = 0
    mlp_ratio: int = 4
    channels: int = 3
    init_std: float = 0.02

    def __post_init__(self):
        if self.patch < 1:
            raise VitError("patch size must be positive")
        if self.dim % self.heads or self.dim % self.decoder_heads:
            raise VitError(f"dim {self.dim} must be divisible by encoder and decoder head counts")
        if self.num_classes < 1:
            raise VitError("need at least one class")

    @classmethod
    def preset(cls, name: str, **kw) -> "VitConfig":
        dim, layers, heads = PRESETS[name]
        return cls(dim=dim, layers=layers, heads=heads, **kw)


@dataclass
class LayerWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class WeightSet:
    patch_w: np.ndarray  # (P*P*C, D)
    patch_b: np.ndarray
    pos: np.ndarray  # (N, D)
    encoder: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    class_tokens: np.ndarray = None  # (K, D)


def _layer(rng, dim, hidden, std) -> LayerWeights:
    def nrm(*shape):
        return rng.normal(0.0, std, shape)
    return LayerWeights(
        ln1_g=np.ones(dim), ln1_b=np.zeros(dim),
        wq=nrm(dim, dim), bq=np.zeros(dim),
        wk=nrm(dim, dim), bk=np.zeros(dim),
        wv=nrm(dim, dim), bv=np.zeros(dim),
        wo=nrm(dim, dim), bo=np.zeros(dim),
        ln2_g=np.ones(dim), ln2_b=np.zeros(dim),
        w1=nrm(dim, hidden), b1=np.zeros(hidden),
        w2=nrm(hidden, dim), b2=np.zeros(dim),
    )


def init_weights(config: VitConfig, num_patches: int) -> WeightSet:
    """Deterministic weights; every tensor group has its own seed stream."""
    def rng(*key):
        return np.random.default_rng(np.random.SeedSequence([config.seed, *key]))
    d = config.dim
    hidden = config.mlp_ratio * d
    std = config.init_std
    p2c = config.patch * config.patch * config.channels
    return WeightSet(
        patch_w=rng(0).normal(0.0, std, (p2c, d)),
        patch_b=np.zeros(d),
        pos=rng(1, num_patches).normal(0.0, std, (num_patches, d)),
        encoder=[_layer(rng(2, i), d, hidden, std) for i in range(config.layers)],
        decoder=[_layer(rng(3, i), d, hidden, std) for i in range(config.decoder_layers)],
        class_tokens=rng(4).normal(0.0, std, (config.num_classes, d)),
    )


# -- ops --------------------------------------------------------------------

def patchify(img: np.ndarray, patch: int) -> np.ndarray:
    """(H, W, C) -> (N, P*P*C), patches in row-major order, channel-last inside."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if h % patch or w % patch:
        raise VitError(f"image {h}x{w} not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    x = img.reshape(gh, patch, gw, patch, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(gh * gw, patch * patch * c)


def unpatchify(patches: np.ndarray, height: int, width: int, patch: int, channels: int) -> np.ndarray:
    gh, gw = height // patch, width // patch
    x = np.asarray(patches).reshape(gh, gw, patch, patch, channels).transpose(0, 2, 1, 3, 4)
    return x.reshape(height, width, channels)


def layer_norm(x, gain, bias, eps=1e-6):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def softmax(x, axis=-1):
    shift = np.max(np.real(x), axis=axis, keepdims=True)
    e = np.exp(x - shift)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def msa(tokens, lw: LayerWeights, heads: int, return_attention: bool = False):
    """Multi-head self-attention: softmax(Q K^T / sqrt(d)) V per head, then output projection."""
    x = tokens
    if not np.all(np.isfinite(x)):
        raise VitError("non-finite input to attention")
    n, dim = x.shape
    d = dim // heads
    q = (x @ lw.wq + lw.bq).reshape(n, heads, d).transpose(1, 0, 2)
    k = (x @ lw.wk + lw.bk).reshape(n, heads, d).transpose(1, 0, 2)
    v = (x @ lw.wv + lw.bv).reshape(n, heads, d).transpose(1, 0, 2)
    att = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(d), axis=-1)
    out = (att @ v).transpose(1, 0, 2).reshape(n, dim) @ lw.wo + lw.bo
    if return_attention:
        return out, att
    return out


def mlp(x, lw: LayerWeights):
    return gelu(x @ lw.w1 + lw.b1) @ lw.w2 + lw.b2


def transformer_layer(s, lw: LayerWeights, heads: int):
    a = msa(layer_norm(s, lw.ln1_g, lw.ln1_b), lw, heads) + s
    return mlp(layer_norm(a, lw.ln2_g, lw.ln2_b), lw) + a


def encoder_forward(s0, layers, heads: int):
    s = s0
    for i, lw in enumerate(layers):
        s = transformer_layer(s, lw, heads)
        if not np.all(np.isfinite(s)):
            raise VitError(f"non-finite activations after encoder layer {i}")
    return s


def decode_mask(s_l, weights: WeightSet, config: VitConfig):
    """Patch-by-class scores: run the decoder on [patches; class tokens], then s . z^T."""
    n = s_l.shape[0]
    if s_l.shape[1] != config.dim:
        raise VitError("token width does not match config.dim")
    x = np.concatenate([s_l, weights.class_tokens], axis=0)
    for lw in weights.decoder:
        x = transformer_layer(x, lw, config.decoder_heads)
    s_lm, z_m = x[:n], x[n:]
    return s_lm @ z_m.T


def _interp_matrix(src: int, dst: int) -> np.ndarray:
    """Linear interpolation weights (dst x src) with half-pixel centres, edges clamped."""
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    m = np.zeros((dst, src))
    m[np.arange(dst), lo] += 1.0 - frac
    m[np.arange(dst), hi] += frac
    return m


def upsample_bilinear(grid, height: int, width: int):
    """(h, w, K) -> (height, width, K)."""
    ry = _interp_matrix(grid.shape[0], height)
    rx = _interp_matrix(grid.shape[1], width)
    return np.einsum("Yy,yxk,Xx->YXk", ry, grid, rx)


def prepare_input(img: np.ndarray, channels: int = 3) -> np.ndarray:
    """Grayscale replicated to ``channels`` planes, scaled to [0, 1]."""
    gray = to_grayscale(np.asarray(img, dtype=np.float64)) / 255.0
    return np.repeat(gray[:, :, None], channels, axis=2)


def embed(img: np.ndarray, weights: WeightSet, config: VitConfig, use_pos: bool = True):
    x = patchify(prepare_input(img, config.channels), config.patch)
    s0 = x @ weights.patch_w + weights.patch_b
    return s0 + weights.pos if use_pos else s0


def patch_scores(img: np.ndarray, config: VitConfig, weights: WeightSet | None = None):
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h % config.patch or w % config.patch:
        raise VitError(f"image {h}x{w} not divisible by patch size {config.patch}")
    n = (h // config.patch) * (w // config.patch)
    if weights is None:
        weights = init_weights(config, n)
    elif weights.pos.shape[0] != n:
        raise VitError(f"positional table has {weights.pos.shape[0]} rows, image gives {n} patches")
    s0 = embed(img, weights, config)
    s_l = encoder_forward(s0, weights.encoder, config.heads)
    return decode_mask(s_l, weights, config)


def segment_forward(img: np.ndarray, config: VitConfig = VitConfig(),
                    weights: WeightSet | None = None, return_scores: bool = False):
    img = np.asarray(img)
    h, w = img.shape[:2]
    scores = patch_scores(img, config, weights)
    grid = scores.reshape(h // config.patch, w // config.patch, config.num_classes)
    pixel_scores = upsample_bilinear(grid, h, w)
    mask = np.argmax(pixel_scores, axis=-1).astype(np.uint8)
    if return_scores:
        return mask, pixel_scores
    return mask
