"""
Scoring an image pair
=====================

Walks the full scoring path once: build the seeded backbone, make a
reference crop and a few distorted versions, and compare metric values.
"""

import numpy as np

from adists.backbone import Backbone, synthetic_archive
from adists.metrics import adists, adists_reference_weighted, dists, mse, msssim_mean
from adists.metrics import DistsWeights
from adists.synthetic import add_noise, box_blur, natural_crop
from adists.texture import default_params

# the backbone is deterministic in the seed, so scores reproduce exactly
backbone = Backbone(synthetic_archive(seed=0))
params = default_params()

rng = np.random.default_rng(0)
x = natural_crop(rng, 96)

candidates = {
    "identical": x.copy(),
    "light noise": add_noise(rng, x, 0.03),
    "heavy noise": add_noise(rng, x, 0.15),
    "blurred": box_blur(x),
}

uniform = DistsWeights.uniform(backbone.config.channel_counts)

print(f"{'distortion':<12} {'mse':>10} {'msssim':>8} {'dists':>8} {'adists':>8} {'ref-w':>8}")
for name, y in candidates.items():
    px, py = backbone.extract(x), backbone.extract(y)
    row = (
        float(mse(x, y)),
        float(msssim_mean(x, y)),
        float(dists(px, py, uniform)),
        float(adists(x, y, backbone, params)),
        float(adists_reference_weighted(x, y, backbone, params)),
    )
    print(f"{name:<12} {row[0]:>10.6f} {row[1]:>8.4f} {row[2]:>8.4f} {row[3]:>8.4f} {row[4]:>8.4f}")

# the adaptive score decomposes over stages; deeper stages see coarser detail
score = adists(x, candidates["heavy noise"], backbone, params)
print("\nper-stage mean similarity for the heavy-noise pair:")
for key, val in score.breakdown.items():
    print(f"  {key}: {val:.4f}")
