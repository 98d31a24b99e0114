"""
Texture probability maps
========================

The metric adapts per region: texture-like areas are compared by local
statistics, structure-like areas by local pattern. This script renders
the per-stage texture probabilities for a composite image whose left
half is flat gray and whose right half is dense noise, then prints the
mean probability per side.
"""

import os
import sys

import numpy as np

from adists.backbone import Backbone, synthetic_archive
from adists.images import encode_gray
from adists.synthetic import composite_half_noise
from adists.texture import default_params, emit_probability_maps

out_dir = sys.argv[1] if len(sys.argv) > 1 else "texture_maps_out"
os.makedirs(out_dir, exist_ok=True)

backbone = Backbone(synthetic_archive(seed=0))
params = default_params()

rng = np.random.default_rng(5)
img = composite_half_noise(rng, 128)

maps = emit_probability_maps(img, backbone, params)
for stage, p in maps:
    h, w = p.shape
    if w >= 2:
        left = float(p[:, : w // 2].mean()) / 255.0
        right = float(p[:, w // 2 :].mean()) / 255.0
        print(f"stage {stage} ({h}x{w}): p(texture) left {left:.2f} right {right:.2f}")
    else:
        # deep-stage windows cover the whole map; one value per image
        print(f"stage {stage} ({h}x{w}): p(texture) {float(p.mean()) / 255.0:.2f}")
    encode_gray(p, os.path.join(out_dir, f"p_stage{stage}.png"))
print(f"wrote {len(maps)} maps to {out_dir}/")
