"""Adaptive structure/texture image quality assessment.

A full-reference metric that classifies every window of a feature pyramid
as texture or structure and pools SSIM-style luminance and structure
factors under those weights, plus the supporting cast: a from-scratch
VGG16 forward pass with l2-pooling, sliding-window statistics, a texture
classifier with its fitting routine, reverse-mode gradients, reference
recovery, and a correlation/2AFC evaluation harness.
"""

from .archive import ArchiveError, WeightArchive, load_archive, save_archive
from .autograd import Tape, finite_diff_samples, grad_metric
from .backbone import (
    Backbone,
    BackboneConfig,
    FeaturePyramid,
    extract_pyramid,
    receptive_field,
    renormalize_filters,
    synthetic_archive,
)
from .evaluation import (
    EvalConfig,
    EvalError,
    EvalManifest,
    NonlinearFitParams,
    TwoAfcRecord,
    krcc,
    load_manifest,
    plcc,
    run_eval,
    srcc,
    two_afc_score,
)
from .images import decode_image, encode_gray, encode_image
from .local_stats import LocalStatistics, WindowSpec, windowed_moments, windowed_stats
from .metrics import (
    DistsWeights,
    LpipsWeights,
    MetricConfig,
    MetricScore,
    adists,
    adists_reference,
    adists_reference_weighted,
    adists_score_raw,
    dists,
    load_dists_weights,
    load_lpips_weights,
    lpips_distance,
    metric_evaluator,
    mse,
    msssim_mean,
    ssim_factors,
    ssim_local,
)
from .recovery import RecoveryReport, psnr, recover_reference
from .texture import (
    DispersionMap,
    LogisticParams,
    PatchCorpus,
    TextureProbabilityMaps,
    combine_min,
    dispersion_index,
    emit_probability_maps,
    fit_classifier,
    fit_classifier_detailed,
    load_corpus_manifest,
    load_params,
    save_params,
    texture_probability,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
