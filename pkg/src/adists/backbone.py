"""Fixed five-stage convolutional feature extractor (VGG16 topology through
conv5) with per-filter l2 re-normalization and l2-pooling between stages.

The pyramid prepends the raw input image as stage 0, so metrics that sum
over stages see six entries with channel counts (3, 64, 128, 256, 512, 512).
Features are tapped after the last ReLU of each stage; pooling happens
after the tap for stages 1-4.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .archive import WeightArchive

__all__ = [
    "VGG16_STAGES",
    "BackboneConfig",
    "FeaturePyramid",
    "Backbone",
    "renormalize_filters",
    "extract_pyramid",
    "receptive_field",
    "synthetic_archive",
]

# (out_channels, convolutions) per stage; kernels are all 3x3.
VGG16_STAGES = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])

CALIBRATION_ENTRY = "calib.l99"


@dataclass(frozen=True)
class BackboneConfig:
    stage_specs: tuple = VGG16_STAGES
    renormalize: bool = True

    def __post_init__(self):
        if len(self.stage_specs) != 5:
            raise ValueError("BackboneConfig: exactly 5 stages expected")

    @property
    def channel_counts(self):
        """Per-pyramid-stage channels, stage 0 (the image) included."""
        return (3,) + tuple(c for c, _ in self.stage_specs)


@dataclass
class FeaturePyramid:
    """stages[0] is the raw input image; stages[1..] are feature maps.
    `ranges` carries the per-stage activation scale used by SSIM-style
    stabilizers (stage 0 pinned at 1 for [0,1] images)."""

    stages: list = field(default_factory=list)
    ranges: np.ndarray = field(default_factory=lambda: np.ones(6))

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i):
        return self.stages[i]

    @property
    def channel_counts(self):
        return tuple(ag.value_of(s).shape[0] for s in self.stages)


def _conv_names(config=BackboneConfig()):
    names = []
    for s, (_, n_convs) in enumerate(config.stage_specs, start=1):
        for l in range(1, n_convs + 1):
            names.append(f"conv{s}_{l}")
    return names


def renormalize_filters(weights):
    """Scale every filter to unit l2 norm, dividing its bias by the same
    norm so the unit's response geometry is preserved. Non-conv entries
    pass through untouched."""
    out = WeightArchive()
    scales = {}
    for name, arr in weights.items():
        if name.endswith(".weight") and name.startswith("conv"):
            norms = np.sqrt((arr.astype(np.float64) ** 2).sum(axis=(1, 2, 3)))
            if np.any(norms == 0.0):
                raise ValueError(f"renormalize_filters: zero-norm filter in {name}")
            scales[name[: -len(".weight")]] = norms
            out.add(name, arr / norms[:, None, None, None].astype(arr.dtype))
        else:
            out.add(name, arr)
    # rebuild to rescale biases while keeping entry order
    final = WeightArchive()
    for name, arr in out.items():
        if name.endswith(".bias") and name[: -len(".bias")] in scales:
            final.add(name, arr / scales[name[: -len(".bias")]].astype(arr.dtype))
        else:
            final.add(name, arr)
    return final


class Backbone:
    """Loaded, immutable feature extractor.

    Weights are validated against the topology at construction and held in
    the requested dtype (float64 by default; float32 halves extraction
    time when gradients are not needed).
    """

    def __init__(self, weights, config=BackboneConfig(), dtype=np.float64):
        if config.renormalize:
            weights = renormalize_filters(weights)
        self.config = config
        self.dtype = np.dtype(dtype)
        self.layers = []
        in_c = 3
        for s, (out_c, n_convs) in enumerate(config.stage_specs, start=1):
            stage_layers = []
            for l in range(1, n_convs + 1):
                w = self._entry(weights, f"conv{s}_{l}.weight", (out_c, in_c, 3, 3))
                b = self._entry(weights, f"conv{s}_{l}.bias", (out_c,))
                stage_layers.append((w, b))
                in_c = out_c
            self.layers.append(stage_layers)
        self.mean = self._entry(weights, "input.mean", (3,)).reshape(3, 1, 1)
        std = self._entry(weights, "input.std", (3,)).reshape(3, 1, 1)
        if np.any(std <= 0):
            raise ValueError("Backbone: input.std entries must be positive")
        self.std = std
        self.stage_ranges = self._load_ranges(weights)

    def _entry(self, weights, name, shape):
        arr = weights.get(name)
        if arr is None:
            raise KeyError(f"Backbone: archive missing entry {name!r}")
        if arr.shape != shape:
            raise ValueError(
                f"Backbone: entry {name!r} has shape {arr.shape}, expected {shape}"
            )
        return arr.astype(self.dtype)

    def _load_ranges(self, weights):
        """Per-stage activation scales for SSIM constants: stage 0 is
        pinned at 1 (images live in [0,1]); stages 1..5 come from the
        archive's calibration entry when present, else 1."""
        ranges = np.ones(6)
        calib = weights.get(CALIBRATION_ENTRY)
        if calib is not None:
            flat = calib.astype(np.float64).reshape(-1)
            if flat.size == 6:
                flat = flat[1:]
            if flat.size != 5:
                raise ValueError(
                    f"Backbone: {CALIBRATION_ENTRY} must hold 5 or 6 values, "
                    f"got {calib.shape}"
                )
            if np.any(~np.isfinite(flat)) or np.any(flat <= 0):
                raise ValueError(f"Backbone: {CALIBRATION_ENTRY} values must be positive")
            ranges[1:] = flat
        return ranges

    def extract(self, image, last_stage=5):
        """Feature pyramid of a (3, H, W) image in [0, 1].

        `image` may be a plain array or an autograd Node; the traced path
        records every op for reverse-mode differentiation. `last_stage`
        truncates the pyramid (patch-level fitting uses shallow prefixes).
        """
        img_v = ag.value_of(image)
        if img_v.ndim != 3 or img_v.shape[0] != 3:
            raise ValueError(f"extract: expected (3, H, W), got {img_v.shape}")
        if not 1 <= last_stage <= 5:
            raise ValueError(f"extract: last_stage must be in 1..5, got {last_stage}")
        h, w = img_v.shape[1:]
        min_side = 2 ** last_stage
        if h < min_side or w < min_side:
            raise ValueError(
                f"extract: image {h}x{w} too small for {last_stage} stages "
                f"(needs at least {min_side}x{min_side})"
            )
        if not isinstance(image, ag.Node) and img_v.dtype != self.dtype:
            image = img_v.astype(self.dtype)

        mean = self.mean.astype(self.dtype)
        std = self.std.astype(self.dtype)
        x = (image - mean) / std
        stages = [image]
        for s in range(last_stage):
            for w_f, b_f in self.layers[s]:
                x = ag.relu(ag.conv2d(x, w_f, b_f, stride=1, padding=1))
            stages.append(x)
            if s + 1 < last_stage:
                x = ag.l2_pool(x)
        return FeaturePyramid(stages, ranges=self.stage_ranges.copy())


def extract_pyramid(image, backbone, last_stage=5):
    return backbone.extract(image, last_stage)


def receptive_field(stage):
    """Analytic (support, jump) of a stage's units in input pixels:
    `support` is the diameter of one unit's input footprint, `jump` the
    input-pixel distance between adjacent units of the stage."""
    if not 1 <= stage <= 5:
        raise ValueError(f"receptive_field: stage must be 1..5, got {stage}")
    support, jump = 1, 1
    for s, (_, n_convs) in enumerate(VGG16_STAGES, start=1):
        support += 2 * jump * n_convs  # n 3x3 convs, stride 1
        if s == stage:
            return support, jump
        support += 2 * jump  # 3x3 pooling kernel
        jump *= 2
    raise AssertionError


def synthetic_archive(seed=0, calibrate=True, config=BackboneConfig()):
    """Random weight archive for tests.

    Filters are Gaussian; biases are set per unit so that the unit stays
    positive on a probe batch (0.5th percentile of the probe response
    plus a fraction of a standard deviation). That keeps almost every
    unit responsive and, more importantly, keeps the feature response
    locally smooth: derivative probes with steps around 1e-3 land on the
    same activation branch they started on. Archives with zero-centered
    biases scatter branch flips densely enough that central differences
    at that step size carry a few-permille noise floor no matter how
    exact the traced gradient is. The margin is kept lean because a
    large common pedestal in the features drowns the spatial dispersion
    contrast that the texture classifier feeds on.

    With calibrate=True the per-stage 99th-percentile activations over a
    few probe images are stored so metric constants get matching scales.
    """
    rng = np.random.default_rng(seed)
    archive = WeightArchive()
    prng = np.random.default_rng(seed + 0x5EED)
    probes = [smooth_random_image(prng, 48), prng.uniform(0.0, 1.0, (3, 48, 48))]
    mean = IMAGENET_MEAN.reshape(3, 1, 1)
    std = IMAGENET_STD.reshape(3, 1, 1)
    feats = [(p - mean) / std for p in probes]
    in_c = 3
    for s, (out_c, n_convs) in enumerate(config.stage_specs, start=1):
        for l in range(1, n_convs + 1):
            fan_in = in_c * 9
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_c, in_c, 3, 3))
            norms = np.sqrt((w ** 2).sum(axis=(1, 2, 3)))
            wn = w / norms[:, None, None, None]
            zs = [ag.conv2d(f, wn, np.zeros(out_c), padding=1) for f in feats]
            zcat = np.concatenate([z.reshape(out_c, -1) for z in zs], axis=1)
            floor = np.maximum(-np.percentile(zcat, 0.5, axis=1), 0.0)
            margin = rng.uniform(0.15, 0.45, out_c) * zcat.std(axis=1)
            # stored bias is pre-renormalization, so scale by the filter norm
            b = (floor + margin) * norms
            archive.add(f"conv{s}_{l}.weight", w)
            archive.add(f"conv{s}_{l}.bias", b)
            feats = [ag.relu(z + (b / norms)[:, None, None]) for z in zs]
            in_c = out_c
        if s < len(config.stage_specs):
            feats = [ag.l2_pool(f) for f in feats]
    archive.add("input.mean", IMAGENET_MEAN)
    archive.add("input.std", IMAGENET_STD)
    if calibrate:
        bb = Backbone(archive, config)
        percentiles = np.zeros((3, 5))
        for i in range(3):
            img = smooth_random_image(rng, 64)
            pyr = bb.extract(img)
            for s in range(1, 6):
                percentiles[i, s - 1] = np.percentile(np.abs(pyr[s]), 99)
        calib = np.concatenate([[1.0], np.maximum(percentiles.mean(axis=0), 1e-3)])
        archive.add(CALIBRATION_ENTRY, calib)
    return archive


def smooth_random_image(rng, side):
    """Band-limited random RGB image in [0, 1]: white noise pushed through
    a few box blurs, then range-normalized. Stands in for natural crops."""
    img = rng.random((3, side, side))
    k = np.ones(5) / 5.0
    for _ in range(2):
        img = np.apply_along_axis(lambda m: np.convolve(m, k, mode="same"), 1, img)
        img = np.apply_along_axis(lambda m: np.convolve(m, k, mode="same"), 2, img)
    lo, hi = img.min(), img.max()
    return ((img - lo) / (hi - lo + 1e-12)).astype(np.float64)
