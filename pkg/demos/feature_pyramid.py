"""
Inside the feature pyramid
==========================
"""

import numpy as np

from adists.backbone import Backbone, synthetic_archive, receptive_field
from adists.synthetic import natural_crop

backbone = Backbone(synthetic_archive(seed=0))

rng = np.random.default_rng(1)
x = natural_crop(rng, 128)
pyr = backbone.extract(x)

# stage 0 is the image itself; each later stage halves the grid
print("stage  shape            range(l99)  support  jump")
for i in range(6):
    feat = np.asarray(pyr[i])
    if i == 0:
        support, jump = 1, 1
    else:
        support, jump = receptive_field(i)
    print(
        f"{i:>5}  {str(feat.shape):<16} {float(pyr.ranges[i]):>9.3f}  "
        f"{support:>7}  {jump:>4}"
    )

counts = pyr.channel_counts
print(f"\nchannel totals {counts} -> N = {sum(counts)} similarity terms")

# features are rectified: nothing below zero anywhere in the stack
for i in range(1, 6):
    assert np.asarray(pyr[i]).min() >= 0.0
print("all conv stages nonnegative (rectified units)")

# rectangular input works too; sides round up independently at each pool
wide = backbone.extract(natural_crop(rng, 96)[:, :64, :])
print("\nrectangular 64x96 input ->", [tuple(np.asarray(wide[i]).shape) for i in range(6)])
