"""Structure/texture discrimination on feature pyramids.

The dispersion index gamma is the windowed variance-to-mean ratio of
feature responses, averaged across channels; texture regions are
under-dispersed (small gamma), localized structure over-dispersed. A
per-stage one-dimensional logistic classifier turns gamma into a texture
probability map. Classifier parameters are fitted on labeled patches,
one stage per nominal patch size.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .local_stats import WindowSpec, windowed_moments

__all__ = [
    "DISPERSION_C",
    "SIZE_TO_STAGE",
    "PATCH_SIZES",
    "DispersionMap",
    "LogisticParams",
    "TextureProbabilityMaps",
    "PatchRecord",
    "PatchCorpus",
    "dispersion_index",
    "texture_probability",
    "combine_min",
    "fit_classifier",
    "fit_classifier_detailed",
    "patch_gamma",
    "emit_probability_maps",
    "load_params",
    "save_params",
    "default_params",
    "load_corpus_manifest",
]

DISPERSION_C = 1e-6

PATCH_SIZES = (16, 32, 64, 128, 256)

# Nominal patch size -> pyramid stage whose receptive field matches it.
# Stage 0 (raw pixels) trains on the size-32 patches.
SIZE_TO_STAGE = {16: 1, 32: 2, 64: 3, 128: 4, 256: 5}

LABELS = ("structure", "texture")


@dataclass
class DispersionMap:
    """Channel-averaged variance-to-mean ratio per stage; (H'_i, W'_i)."""

    gamma: list
    c: float = DISPERSION_C


@dataclass
class TextureProbabilityMaps:
    """Per-stage texture probabilities p in [0, 1]; q = 1 - p on demand."""

    p: list

    def q(self, i):
        return 1.0 - self.p[i]


@dataclass(frozen=True)
class LogisticParams:
    """Per-stage (w, b) of p = expit(w * gamma + b), with the window and
    dispersion stabilizer recorded at fit time."""

    w: tuple
    b: tuple
    window: WindowSpec = WindowSpec()
    c: float = DISPERSION_C

    def __post_init__(self):
        if len(self.w) != 6 or len(self.b) != 6:
            raise ValueError("LogisticParams: six stages expected")
        if not all(np.isfinite(self.w)) or not all(np.isfinite(self.b)):
            raise ValueError("LogisticParams: parameters must be finite")

    def check_compatible(self, window, c):
        """Scoring must run under the fit-time window and stabilizer."""
        if (window.height, window.width, window.stride) != (
            self.window.height,
            self.window.width,
            self.window.stride,
        ):
            raise ValueError(
                f"params fitted with window "
                f"{self.window.height}x{self.window.width}/{self.window.stride}, "
                f"got {window.height}x{window.width}/{window.stride}"
            )
        if abs(c - self.c) > 1e-12:
            raise ValueError(f"params fitted with c={self.c!r}, got c={c!r}")


@dataclass
class PatchRecord:
    patch: np.ndarray  # (3, size, size) in [0, 1]
    label: str
    size: int


@dataclass
class PatchCorpus:
    records: list = field(default_factory=list)

    def add(self, patch, label, size):
        if label not in LABELS:
            raise ValueError(f"PatchCorpus: label must be one of {LABELS}, got {label!r}")
        if size not in PATCH_SIZES:
            raise ValueError(f"PatchCorpus: size must be one of {PATCH_SIZES}, got {size}")
        patch = np.asarray(patch)
        if patch.shape != (3, size, size):
            raise ValueError(
                f"PatchCorpus: patch shape {patch.shape} does not match "
                f"declared size {size}"
            )
        self.records.append(PatchRecord(patch, label, size))

    def __len__(self):
        return len(self.records)


def _stage_gamma(feat, window, c):
    """gamma map of one pyramid stage: per-channel var/(mu+c), averaged
    over channels. feat: (C, H, W) array or node -> (H', W')."""
    mu, var = windowed_moments(feat, window)
    ratio = var / (mu + c)
    cmean = ag.channel_mean(ratio)
    return cmean


def _stage0_gamma(image, window, c):
    """Stage-0 gamma on the luminance of the raw image (channel average
    first, then variance-to-mean of the single luminance map)."""
    lum = ag.channel_mean(image)
    h, w = ag.value_of(lum).shape
    lum = ag.reshape(lum, (1, h, w))
    mu, var = windowed_moments(lum, window)
    gamma = var / (mu + c)
    gh, gw = ag.value_of(gamma).shape[1:]
    return ag.reshape(gamma, (gh, gw))


def dispersion_index(pyramid, window=WindowSpec(), c=DISPERSION_C):
    """Per-stage dispersion maps of a feature pyramid (stage 0 included)."""
    if c <= 0:
        raise ValueError(f"dispersion_index: c must be positive, got {c}")
    gamma = [_stage0_gamma(pyramid[0], window, c)]
    for i in range(1, len(pyramid)):
        gamma.append(_stage_gamma(pyramid[i], window, c))
    return DispersionMap(gamma=gamma, c=c)


def texture_probability(gamma, params):
    """Elementwise logistic p = expit(w * gamma + b), per stage."""
    if len(gamma.gamma) > len(params.w):
        raise ValueError(
            f"texture_probability: {len(gamma.gamma)} stages but params "
            f"cover {len(params.w)}"
        )
    p = [
        ag.expit(params.w[i] * g + params.b[i])
        for i, g in enumerate(gamma.gamma)
    ]
    return TextureProbabilityMaps(p=p)


def combine_min(p_x, p_y):
    """Elementwise minimum of two probability-map sets. Under the tie
    convention of autograd.minimum, gradients route to p_x on ties."""
    if len(p_x.p) != len(p_y.p):
        raise ValueError("combine_min: stage count mismatch")
    out = []
    for a, b in zip(p_x.p, p_y.p):
        if ag.value_of(a).shape != ag.value_of(b).shape:
            raise ValueError(
                f"combine_min: shape mismatch {ag.value_of(a).shape} vs "
                f"{ag.value_of(b).shape}"
            )
        out.append(ag.minimum(a, b))
    return TextureProbabilityMaps(p=out)


# -- fitting ----------------------------------------------------------------

_L2_PENALTY = 1e-4
_GRAD_TOL = 1e-8
_MAX_ITER = 10_000


def patch_gamma(patch, backbone, stage, c=DISPERSION_C):
    """Scalar dispersion of a whole patch at one stage: the window covers
    the entire stage-level feature map, so the statistics map is 1x1."""
    if stage == 0:
        h, w = patch.shape[1:]
        g = _stage0_gamma(patch.astype(backbone.dtype), WindowSpec(h, w), c)
        return float(ag.value_of(g)[0, 0])
    pyr = backbone.extract(patch, last_stage=stage)
    feat = pyr[stage]
    h, w = ag.value_of(feat).shape[1:]
    g = _stage_gamma(feat, WindowSpec(h, w), c)
    return float(ag.value_of(g)[0, 0])


def _fit_logistic_1d(gamma, labels):
    """Newton descent on mean binary cross-entropy with a small l2 penalty
    on the weight (keeps separable data finite). Returns (w, b, info)."""
    g = np.asarray(gamma, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if g.size != y.size or g.size == 0:
        raise ValueError("logistic fit: empty or mismatched data")
    if y.min() == y.max():
        raise ValueError("logistic fit: single-class data")

    from scipy.special import expit

    theta = np.zeros(2)  # (w, b)

    def loss(t):
        z = t[0] * g + t[1]
        return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * _L2_PENALTY * t[0] ** 2)

    trace = [loss(theta)]
    for _ in range(_MAX_ITER):
        z = theta[0] * g + theta[1]
        p = expit(z)
        r = p - y
        grad = np.array([np.mean(r * g) + _L2_PENALTY * theta[0], np.mean(r)])
        if np.linalg.norm(grad) < _GRAD_TOL:
            break
        s = p * (1.0 - p)
        h11 = np.mean(s * g * g) + _L2_PENALTY
        h12 = np.mean(s * g)
        h22 = np.mean(s)
        hess = np.array([[h11, h12], [h12, h22]])
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(2), grad)
        except np.linalg.LinAlgError:
            step = grad
        # Armijo backtracking keeps the loss trace non-increasing
        t = 1.0
        base = trace[-1]
        slope = float(grad @ step)
        while t > 1e-12:
            cand = theta - t * step
            cl = loss(cand)
            if cl <= base - 1e-4 * t * slope:
                theta = cand
                trace.append(cl)
                break
            t *= 0.5
        else:
            break
    z = theta[0] * g + theta[1]
    acc = float(np.mean((z > 0) == (y > 0.5)))
    return theta[0], theta[1], {"loss_trace": trace, "accuracy": acc, "n": g.size}


def _corpus_gammas(corpus, backbone, c):
    """Per-stage (gamma values, labels) from size-matched patches."""
    per_stage = {i: ([], []) for i in range(6)}
    for rec in corpus.records:
        stage = SIZE_TO_STAGE[rec.size]
        targets = [stage] if rec.size != 32 else [0, stage]
        for s in targets:
            gs, ys = per_stage[s]
            gs.append(patch_gamma(rec.patch, backbone, s, c))
            ys.append(1.0 if rec.label == "texture" else 0.0)
    return per_stage


def fit_classifier_detailed(corpus, backbone, window=WindowSpec(), c=DISPERSION_C):
    """Fit all six stage classifiers; returns (LogisticParams, report).

    The report maps stage -> {accuracy, n, loss_trace}. The window is not
    used during fitting (patch-level gamma covers the whole map); it is
    recorded in the params so scoring can verify its configuration.
    """
    if len(corpus) == 0:
        raise ValueError("fit_classifier: empty corpus")
    labels = {r.label for r in corpus.records}
    if len(labels) < 2:
        raise ValueError("fit_classifier: corpus must contain both classes")
    per_stage = _corpus_gammas(corpus, backbone, c)
    w, b, report = [], [], {}
    for s in range(6):
        gs, ys = per_stage[s]
        if not gs:
            raise ValueError(f"fit_classifier: no patches map to stage {s}")
        ws, bs, info = _fit_logistic_1d(gs, ys)
        w.append(ws)
        b.append(bs)
        report[s] = info
    params = LogisticParams(w=tuple(w), b=tuple(b), window=window, c=c)
    return params, report


def fit_classifier(corpus, backbone, window=WindowSpec(), c=DISPERSION_C):
    params, _ = fit_classifier_detailed(corpus, backbone, window, c)
    return params


def emit_probability_maps(image, backbone, params):
    """Texture probability maps of one image, rendered 8-bit
    (0 = structure, 255 = texture); returns a list of (stage, uint8 map)."""
    pyr = backbone.extract(image)
    gamma = dispersion_index(pyr, params.window, params.c)
    probs = texture_probability(gamma, params)
    out = []
    for i, p in enumerate(probs.p):
        arr = ag.value_of(p)
        out.append((i, np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)))
    return out


# -- params file -------------------------------------------------------------

def save_params(params, path):
    """Key-value text; float repr round-trips exactly."""
    lines = ["# texture classifier parameters"]
    for i in range(6):
        lines.append(f"stage_{i}.w = {float(params.w[i])!r}")
        lines.append(f"stage_{i}.b = {float(params.b[i])!r}")
    lines.append(f"window.height = {params.window.height}")
    lines.append(f"window.width = {params.window.width}")
    lines.append(f"window.stride = {params.window.stride}")
    lines.append(f"c = {float(params.c)!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_params(text):
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"params file: line {lineno} is not key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in kv:
            raise ValueError(f"params file: duplicate key {key!r}")
        kv[key] = val
    expected = {f"stage_{i}.{f}" for i in range(6) for f in ("w", "b")}
    expected |= {"window.height", "window.width", "window.stride", "c"}
    missing = expected - kv.keys()
    if missing:
        raise ValueError(f"params file: missing keys {sorted(missing)}")
    unknown = kv.keys() - expected
    if unknown:
        raise ValueError(f"params file: unknown keys {sorted(unknown)}")
    try:
        w = tuple(float(kv[f"stage_{i}.w"]) for i in range(6))
        b = tuple(float(kv[f"stage_{i}.b"]) for i in range(6))
        window = WindowSpec(
            int(kv["window.height"]), int(kv["window.width"]), int(kv["window.stride"])
        )
        c = float(kv["c"])
    except ValueError as e:
        raise ValueError(f"params file: {e}") from None
    return LogisticParams(w=w, b=b, window=window, c=c)


def load_params(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_params(f.read())


def default_params():
    """Packaged per-stage parameters, fitted on the seed-0 patch corpus
    against the seed-0 backbone."""
    from importlib import resources

    ref = resources.files("adists").joinpath("data/default_params.txt")
    return parse_params(ref.read_text(encoding="utf-8"))


# -- corpus manifest ----------------------------------------------------------

def load_corpus_manifest(path, root=None):
    """CSV with header path,label,size; paths resolve relative to `root`
    (default: the manifest's directory)."""
    import os

    from .images import decode_image

    root = root if root is not None else os.path.dirname(os.path.abspath(path))
    corpus = PatchCorpus()
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != [
            "path",
            "label",
            "size",
        ]:
            raise ValueError(
                f"corpus manifest: header must be path,label,size, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            p = row["path"].strip()
            full = p if os.path.isabs(p) else os.path.join(root, p)
            corpus.add(decode_image(full), row["label"].strip(), int(row["size"]))
    if len(corpus) == 0:
        raise ValueError("corpus manifest: no records")
    return corpus
