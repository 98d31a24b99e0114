"""
Fitting the texture classifier
==============================

Generates a labeled patch corpus, fits the per-stage logistic
classifiers on the dispersion feature, and saves the parameters to a
plain-text file that scoring can reload.

A small corpus keeps this quick; the packaged defaults were fitted the
same way at about five times this size.
"""

import sys

from adists.backbone import Backbone, synthetic_archive
from adists.synthetic import generate_corpus
from adists.texture import fit_classifier_detailed, load_params, save_params

out_path = sys.argv[1] if len(sys.argv) > 1 else "fitted_params.txt"

backbone = Backbone(synthetic_archive(seed=0))

per_class = {16: 40, 32: 40, 64: 30, 128: 16, 256: 8}
corpus = generate_corpus(seed=3, per_class=per_class)
print(f"corpus: {len(corpus.records)} patches over sizes {sorted(per_class)}")

params, report = fit_classifier_detailed(corpus, backbone)

print("\nstage   w          b          train acc   n")
for stage in range(6):
    r = report[stage]
    print(
        f"{stage:>5}   {params.w[stage]:>9.3f}  {params.b[stage]:>9.3f}"
        f"   {r['accuracy']:>9.3f}   {r['n']:>3}"
    )

save_params(params, out_path)
reloaded = load_params(out_path)
assert reloaded.w == params.w and reloaded.b == params.b
print(f"\nsaved to {out_path} and reloaded identically")
