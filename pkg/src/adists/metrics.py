"""The metric family: MSE, windowed SSIM and its spatial mean, an
LPIPS-form feature distance, DISTS with global statistics, and the
adaptively pooled variant that weights the SSIM luminance factor by
texture probability and the structure factor by its complement at every
window position and scale.

Scores are distances except the SSIM mean: 0 means identical for mse,
lpips_distance, dists and adists; msssim_mean is 1 for identical inputs.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .local_stats import WindowSpec, windowed_stats
from .texture import (
    DISPERSION_C,
    combine_min,
    dispersion_index,
    texture_probability,
)

__all__ = [
    "MetricConfig",
    "MetricScore",
    "DistsWeights",
    "LpipsWeights",
    "mse",
    "ssim_factors",
    "ssim_local",
    "msssim_mean",
    "lpips_distance",
    "dists",
    "adists",
    "adists_reference_weighted",
    "adists_reference",
    "adists_score_raw",
    "load_dists_weights",
    "load_lpips_weights",
]

POOLING_MODES = ("min_combination", "reference_weighted")

_NORM_EPS = 1e-10  # channel-vector normalization floor for the LPIPS form


@dataclass(frozen=True)
class MetricConfig:
    """SSIM stabilizers are quoted for unit dynamic range; feature stages
    scale them by the squared per-stage range from the pyramid."""

    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    c: float = DISPERSION_C
    window: WindowSpec = WindowSpec()
    pooling_mode: str = "min_combination"
    stages: tuple = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0 or self.c <= 0:
            raise ValueError("MetricConfig: c1, c2, c must be positive")
        if self.pooling_mode not in POOLING_MODES:
            raise ValueError(
                f"MetricConfig: pooling_mode must be one of {POOLING_MODES}"
            )
        if not self.stages or sorted(set(self.stages)) != list(self.stages):
            raise ValueError("MetricConfig: stages must be sorted and unique")
        if any(s not in range(6) for s in self.stages):
            raise ValueError("MetricConfig: stages must lie in 0..5")


@dataclass
class MetricScore:
    value: float
    metric: str
    breakdown: dict = None
    note: str = ""

    def __float__(self):
        return float(self.value)


# -- simple metrics ----------------------------------------------------------

def mse_raw(x, y):
    d = x - y
    return ag.mean_all(d * d)


def mse(x, y):
    xv, yv = ag.value_of(x), ag.value_of(y)
    if xv.shape != yv.shape:
        raise ValueError(f"mse: shape mismatch {xv.shape} vs {yv.shape}")
    return MetricScore(float(ag.value_of(mse_raw(x, y))), "mse")


def ssim_factors(stats, c1, c2):
    """Luminance factor l and structure factor s per window position."""
    mx, my = stats.mu_x, stats.mu_y
    l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    s = (2.0 * stats.cov_xy + c2) / (stats.var_x + stats.var_y + c2)
    return l, s


def ssim_local(stats, c1, c2):
    l, s = ssim_factors(stats, c1, c2)
    return l * s


def msssim_raw(x, y, config):
    stats = windowed_stats(x, y, config.window)
    return ag.mean_all(ssim_local(stats, config.c1, config.c2))


def msssim_mean(x, y, config=MetricConfig()):
    """Spatial and channel mean of windowed SSIM on images in [0, 1]."""
    xv, yv = ag.value_of(x), ag.value_of(y)
    if xv.shape != yv.shape:
        raise ValueError(f"msssim_mean: shape mismatch {xv.shape} vs {yv.shape}")
    return MetricScore(float(ag.value_of(msssim_raw(x, y, config))), "ssim")


# -- feature-space weight tables ----------------------------------------------

@dataclass
class LpipsWeights:
    """Per-stage nonnegative channel weights, stages 1..5."""

    w: list
    source: str = "archive"

    def __post_init__(self):
        if len(self.w) != 5:
            raise ValueError("LpipsWeights: five stages expected")
        self.w = [np.asarray(a, dtype=np.float64).reshape(-1) for a in self.w]
        if any(np.any(a < 0) for a in self.w):
            raise ValueError("LpipsWeights: weights must be nonnegative")

    @classmethod
    def uniform(cls, channel_counts):
        return cls([np.ones(c) for c in channel_counts[1:]], source="uniform")


@dataclass
class DistsWeights:
    """Nonnegative stage/channel weight pair (alpha for the luminance
    factor, beta for structure), stages 0..5, normalized to total 1."""

    alpha: list
    beta: list
    source: str = "archive"

    def __post_init__(self):
        if len(self.alpha) != 6 or len(self.beta) != 6:
            raise ValueError("DistsWeights: six stages expected")
        self.alpha = [np.asarray(a, dtype=np.float64).reshape(-1) for a in self.alpha]
        self.beta = [np.asarray(a, dtype=np.float64).reshape(-1) for a in self.beta]
        for a, b in zip(self.alpha, self.beta):
            if a.shape != b.shape:
                raise ValueError("DistsWeights: alpha/beta shape mismatch")
            if np.any(a < 0) or np.any(b < 0):
                raise ValueError("DistsWeights: weights must be nonnegative")
        total = sum(float(a.sum() + b.sum()) for a, b in zip(self.alpha, self.beta))
        if total <= 0:
            raise ValueError("DistsWeights: all-zero weight table")
        self.alpha = [a / total for a in self.alpha]
        self.beta = [b / total for b in self.beta]

    @classmethod
    def uniform(cls, channel_counts):
        return cls(
            [np.ones(c) for c in channel_counts],
            [np.ones(c) for c in channel_counts],
            source="uniform",
        )


def load_lpips_weights(archive, channel_counts):
    """Archive entries "lpips.w.1".."lpips.w.5"; uniform fallback when the
    archive is None or carries no table."""
    names = [f"lpips.w.{i}" for i in range(1, 6)]
    if archive is None or not any(archive.get(n) is not None for n in names):
        return LpipsWeights.uniform(channel_counts)
    tables = []
    for n, c in zip(names, channel_counts[1:]):
        arr = archive.get(n)
        if arr is None:
            raise ValueError(f"lpips weights: archive missing {n}")
        if arr.size != c:
            raise ValueError(f"lpips weights: {n} has {arr.size} entries, expected {c}")
        tables.append(arr)
    return LpipsWeights(tables)


def load_dists_weights(archive, channel_counts):
    """Archive entries "dists.alpha.0".."dists.beta.5"; uniform fallback."""
    a_names = [f"dists.alpha.{i}" for i in range(6)]
    b_names = [f"dists.beta.{i}" for i in range(6)]
    present = any(
        archive is not None and archive.get(n) is not None
        for n in a_names + b_names
    )
    if not present:
        return DistsWeights.uniform(channel_counts)
    alpha, beta = [], []
    for an, bn, c in zip(a_names, b_names, channel_counts):
        a, b = archive.get(an), archive.get(bn)
        if a is None or b is None:
            raise ValueError(f"dists weights: archive missing {an} or {bn}")
        if a.size != c or b.size != c:
            raise ValueError(f"dists weights: stage table size mismatch at {an}")
        alpha.append(a)
        beta.append(b)
    return DistsWeights(alpha, beta)


# -- feature-space metrics -----------------------------------------------------

def _check_pyramids(px, py):
    if len(px) != len(py):
        raise ValueError("pyramids: stage count mismatch")
    for i, (a, b) in enumerate(zip(px.stages, py.stages)):
        if ag.value_of(a).shape != ag.value_of(b).shape:
            raise ValueError(
                f"pyramids: stage {i} shape mismatch "
                f"{ag.value_of(a).shape} vs {ag.value_of(b).shape}"
            )


def lpips_distance(px, py, weights):
    """Weighted MSE between channel-unit-normalized features, stages 1..5."""
    _check_pyramids(px, py)
    total = 0.0
    breakdown = {}
    for i in range(1, 6):
        x, y = np.asarray(px[i]), np.asarray(py[i])
        w = weights.w[i - 1]
        if w.size != x.shape[0]:
            raise ValueError(
                f"lpips_distance: stage {i} weight table has {w.size} entries, "
                f"features have {x.shape[0]} channels"
            )
        xn = x / np.sqrt((x * x).sum(axis=0, keepdims=True) + _NORM_EPS)
        yn = y / np.sqrt((y * y).sum(axis=0, keepdims=True) + _NORM_EPS)
        per_channel = ((xn - yn) ** 2).mean(axis=(1, 2))
        stage = float((w * per_channel).sum())
        breakdown[f"stage_{i}"] = stage
        total += stage
    note = "uniform-weight variant" if weights.source == "uniform" else ""
    return MetricScore(total, "lpips", breakdown=breakdown, note=note)


def _global_stats(x, y):
    """Whole-map per-channel moments: means, population variances, covariance."""
    mx = x.mean(axis=(1, 2))
    my = y.mean(axis=(1, 2))
    xc = x - mx[:, None, None]
    yc = y - my[:, None, None]
    vx = (xc * xc).mean(axis=(1, 2))
    vy = (yc * yc).mean(axis=(1, 2))
    cov = (xc * yc).mean(axis=(1, 2))
    return mx, my, vx, vy, cov


def dists(px, py, weights, config=MetricConfig()):
    """1 - sum_ij (alpha_ij * l_ij + beta_ij * s_ij) with l, s computed
    from global (whole-map) statistics per stage and channel."""
    _check_pyramids(px, py)
    total = 0.0
    breakdown = {}
    for i in range(6):
        x, y = np.asarray(px[i]), np.asarray(py[i])
        a, b = weights.alpha[i], weights.beta[i]
        if a.size != x.shape[0]:
            raise ValueError(
                f"dists: stage {i} weight table has {a.size} entries, "
                f"features have {x.shape[0]} channels"
            )
        scale = float(px.ranges[i]) ** 2
        c1, c2 = config.c1 * scale, config.c2 * scale
        mx, my, vx, vy, cov = _global_stats(x, y)
        l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
        s = (2.0 * cov + c2) / (vx + vy + c2)
        stage = float((a * l + b * s).sum())
        breakdown[f"stage_{i}"] = stage
        total += stage
    note = "uniform-weight variant" if weights.source == "uniform" else ""
    return MetricScore(1.0 - total, "dists", breakdown=breakdown, note=note)


# -- adaptively pooled metric ---------------------------------------------------

@dataclass
class RefSide:
    """Precomputed reference half of the adaptive metric: feature pyramid
    and texture probabilities of the pristine image. Reused across many
    distorted candidates (finite differences, descent iterations)."""

    pyramid: object
    probs: object
    backbone: object
    params: object
    config: MetricConfig
    n_total: int
    constants: list  # per pyramid stage (c1_i, c2_i)


def adists_reference(x_img, backbone, params, config=None):
    config = config or MetricConfig()
    params.check_compatible(config.window, config.c)
    pyr = backbone.extract(ag.value_of(x_img))
    gamma = dispersion_index(pyr, config.window, config.c)
    probs = texture_probability(gamma, params)
    counts = pyr.channel_counts
    n_total = int(sum(counts[i] for i in config.stages))
    constants = [
        (config.c1 * float(r) ** 2, config.c2 * float(r) ** 2) for r in pyr.ranges
    ]
    return RefSide(pyr, probs, backbone, params, config, n_total, constants)


def adists_score_raw(ref, y, reference_weighted=False):
    """Score a distorted image (array or autograd node) against a
    precomputed reference side. Returns the scalar score (node when y is
    traced) and stashes no state."""
    config = ref.config
    y_pyr = ref.backbone.extract(y)
    if reference_weighted:
        p_tilde = ref.probs  # constants with respect to y
    else:
        gamma_y = dispersion_index(y_pyr, config.window, config.c)
        p_y = texture_probability(gamma_y, ref.params)
        p_tilde = combine_min(ref.probs, p_y)

    total = 0.0
    contribs = {}
    for i in config.stages:
        x_i, y_i = ref.pyramid[i], y_pyr[i]
        c1, c2 = ref.constants[i]
        stats = windowed_stats(x_i, y_i, config.window)
        l, s = ssim_factors(stats, c1, c2)
        p = p_tilde.p[i]
        ph, pw = ag.value_of(p).shape
        p = ag.reshape(p, (1, ph, pw))
        term = p * l + (1.0 - p) * s
        contrib = ag.sum_all(ag.mean_spatial(term))
        contribs[i] = contrib
        total = contrib + total
    score = 1.0 - total / float(ref.n_total)
    return score, contribs


def _adists_metric(x_img, y_img, backbone, params, config):
    xv, yv = ag.value_of(x_img), ag.value_of(y_img)
    if xv.shape != yv.shape:
        raise ValueError(f"adists: shape mismatch {xv.shape} vs {yv.shape}")
    frozen = config.pooling_mode == "reference_weighted"
    ref = adists_reference(x_img, backbone, params, config)
    score, contribs = adists_score_raw(ref, y_img, reference_weighted=frozen)
    counts = ref.pyramid.channel_counts
    breakdown = {
        f"stage_{i}": float(ag.value_of(c)) / counts[i] for i, c in contribs.items()
    }
    name = "adists-ref-weighted" if frozen else "adists"
    return MetricScore(float(ag.value_of(score)), name, breakdown=breakdown)


def adists(x_img, y_img, backbone, params, config=None):
    """Adaptive structure/texture similarity; 0 = identical, larger is
    worse. Texture probabilities of the two images combine by minimum."""
    config = config or MetricConfig()
    if config.pooling_mode != "min_combination":
        raise ValueError("adists: config.pooling_mode must be min_combination")
    return _adists_metric(x_img, y_img, backbone, params, config)


def adists_reference_weighted(x_img, y_img, backbone, params, config=None):
    """Variant for optimization: pooling weights come from the reference
    alone, so they are constants of any descent on the distorted image."""
    config = replace(config or MetricConfig(), pooling_mode="reference_weighted")
    return _adists_metric(x_img, y_img, backbone, params, config)


def metric_evaluator(metric, x_ref, backbone=None, params=None, config=None):
    """(value_fn, grad_fn) for repeated evaluations against one reference.

    The reference side (pyramid, texture probabilities) is computed once;
    value_fn(y) -> float runs the plain forward, grad_fn(y) ->
    (float, array) records a tape and runs reverse mode. Supported:
    mse, msssim, adists, adists_reference_weighted.
    """
    x_ref = np.asarray(ag.value_of(x_ref), dtype=np.float64)

    if metric == "mse":
        forward = lambda y: mse_raw(x_ref, y)
    elif metric == "msssim":
        cfg = config or MetricConfig()
        forward = lambda y: msssim_raw(x_ref, y, cfg)
    elif metric in ("adists", "adists_reference_weighted"):
        ref = adists_reference(x_ref, backbone, params, config)
        frozen = metric == "adists_reference_weighted"

        def forward(y):
            score, _ = adists_score_raw(ref, y, reference_weighted=frozen)
            return score
    else:
        raise ValueError(f"metric {metric!r} has no evaluator")

    def value_fn(y):
        return float(ag.value_of(forward(np.asarray(y, dtype=np.float64))))

    def grad_fn(y):
        tape = ag.Tape()
        y_node = tape.input(y)
        out = forward(y_node)
        return float(out.value), tape.gradient(out, y_node)

    return value_fn, grad_fn
