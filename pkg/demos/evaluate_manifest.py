"""
Correlating scores with opinion data
====================================

Builds a small graded dataset on disk (five references, four noise
levels each, opinion score = -sigma), then runs the batch evaluator and
prints rank and fitted linear correlations.
"""

import os
import tempfile

import numpy as np

from adists.backbone import Backbone, synthetic_archive
from adists.evaluation import EvalConfig, load_manifest, run_eval
from adists.images import encode_image
from adists.synthetic import add_noise, natural_crop
from adists.texture import default_params

backbone = Backbone(synthetic_archive(seed=0))
params = default_params()

with tempfile.TemporaryDirectory() as root:
    rows = ["ref,dist,score"]
    for i in range(5):
        rng = np.random.default_rng(300 + i)
        x = natural_crop(rng, 64)
        encode_image(x, os.path.join(root, f"ref{i}.png"))
        for sigma in (0.02, 0.05, 0.1, 0.2):
            name = f"img{i}_{sigma}.png"
            encode_image(add_noise(rng, x, sigma), os.path.join(root, name))
            rows.append(f"ref{i}.png,{name},{-sigma}")
    manifest_path = os.path.join(root, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")

    manifest = load_manifest(manifest_path)
    print(f"{len(manifest.records)} records, mode {manifest.mode}")

    for metric in ("mse", "adists"):
        cfg = EvalConfig(metric=metric, backbone=backbone, params=params, resize=0)
        report = run_eval(manifest, cfg)
        o = report["overall"]
        print(
            f"{metric:>7}: srcc {o['srcc']:.4f}  krcc {o['krcc']:.4f}  "
            f"plcc {o['plcc']:.4f}  ({report['runtime_sec']:.1f}s)"
        )
