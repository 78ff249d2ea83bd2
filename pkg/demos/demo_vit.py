# Toy ViT segmenter: shapes, attention and a seeded forward pass.
# The weights are random, so the mask is structure, not semantics.
import numpy as np

from facade_revise import synth, vit

cfg = vit.VitConfig(patch=16, dim=64, layers=2, heads=4, num_classes=synth.NUM_CLASSES, seed=0)
img, _ = synth.generate(synth.FacadeSpec(width=320, height=256))

x = vit.patchify(vit.prepare_input(img), cfg.patch)
print("patches:", x.shape)          # (16 * 20, 16 * 16 * 3)
print("448x448 gives", vit.patchify(np.zeros((448, 448, 3)), 16).shape[0], "tokens")

w = vit.init_weights(cfg, x.shape[0])
s0 = vit.embed(img, w, cfg)
_, att = vit.msa(vit.layer_norm(s0, w.encoder[0].ln1_g, w.encoder[0].ln1_b), w.encoder[0], cfg.heads,
                 return_attention=True)
print("attention:", att.shape, "row sums within", np.abs(att.sum(-1) - 1).max())

# Without positional embeddings the encoder cannot tell patch order
plain = vit.embed(img, w, cfg, use_pos=False)
perm = np.random.default_rng(1).permutation(len(plain))
a = vit.encoder_forward(plain, w.encoder, cfg.heads)[perm]
b = vit.encoder_forward(plain[perm], w.encoder, cfg.heads)
print("permutation equivariance error:", np.abs(a - b).max())

mask, scores = vit.segment_forward(img, cfg, w, return_scores=True)
print("pixel scores:", scores.shape, "classes used:", np.unique(mask))

# Same seed, same mask
print("repeatable:", np.array_equal(mask, vit.segment_forward(img, cfg)))
