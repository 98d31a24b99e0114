"""Database-driven metric evaluation.

Manifests are UTF-8 CSV with a required header: ref,dist,score[,subset]
for MOS mode, ref,dist0,dist1,r[,subset] for 2AFC mode. Correlations
follow the usual protocol: predictions are oriented so higher means
better before correlating (distance metrics are negated), PLCC is the
Pearson correlation after a four-parameter monotone logistic fit, rank
correlations use average ranks (Spearman) and tau-b (Kendall).
"""

import csv
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from . import metrics as M
from .images import decode_image
from .tensor import resize_bicubic

__all__ = [
    "EvalError",
    "EvalManifest",
    "NonlinearFitParams",
    "TwoAfcRecord",
    "EvalConfig",
    "plcc",
    "plcc_detailed",
    "srcc",
    "krcc",
    "two_afc_score",
    "load_manifest",
    "run_eval",
]

FIT_FORM = "f(s) = (a-b)/(1+exp(-(s-c)/|d|)) + b"

_N_STARTS = 8


class EvalError(ValueError):
    """Degenerate or unusable evaluation inputs."""


@dataclass(frozen=True)
class NonlinearFitParams:
    a: float
    b: float
    c: float
    d: float
    form: str = FIT_FORM

    def __call__(self, s):
        z = np.clip(-(np.asarray(s, dtype=np.float64) - self.c) / abs(self.d), -500, 500)
        return (self.a - self.b) / (1.0 + np.exp(z)) + self.b


@dataclass(frozen=True)
class TwoAfcRecord:
    r: float  # human vote ratio for the first candidate
    d0: float  # metric distance of candidate 0 to the reference
    d1: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"TwoAfcRecord: r must be in [0,1], got {self.r}")


@dataclass
class EvalManifest:
    mode: str  # "mos" | "2afc"
    records: list  # dicts with resolved paths and score fields
    path: str = ""


def _logistic4(theta, s):
    a, b, c, d = theta
    z = np.clip(-(s - c) / max(abs(d), 1e-12), -500.0, 500.0)
    return (a - b) / (1.0 + np.exp(z)) + b


def _fit_candidates(pred, mos, seed):
    """Start points for the four-parameter fit: data-driven heuristics,
    seeded jitter, and a near-affine candidate built from the ordinary
    least-squares line (a very flat logistic tracks the line over the
    observed range, so the optimized fit can never lose to raw Pearson)."""
    rng = np.random.default_rng(seed)
    s_mu, s_sd = float(np.mean(pred)), float(np.std(pred))
    m_lo, m_hi = float(np.min(mos)), float(np.max(mos))
    base = np.array([m_hi, m_lo, s_mu, max(s_sd / 4.0, 1e-6)])
    candidates = [base, np.array([m_lo, m_hi, s_mu, max(s_sd / 4.0, 1e-6)])]
    for _ in range(_N_STARTS - 2):
        jitter = rng.normal(1.0, 0.3, size=4)
        candidates.append(base * jitter + rng.normal(0.0, 0.1, size=4))
    slope, intercept = np.polyfit(pred, mos, 1)
    d = 1e3 * max(s_sd, 1e-6)
    b = slope * s_mu + intercept - 2.0 * d * slope
    a = b + 4.0 * d * slope
    candidates.append(np.array([a, b, s_mu, d]))
    return candidates


def _fit_logistic4(pred, mos, seed=0):
    """Least-squares fit over the multi-start candidates; returns
    (params, fitted values, fallback flag)."""
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    best = None
    for theta0 in _fit_candidates(pred, mos, seed):
        # the raw candidate itself participates: optimization only improves
        for theta in (theta0,):
            sse = float(np.sum((_logistic4(theta, pred) - mos) ** 2))
            if best is None or sse < best[0]:
                best = (sse, theta)
        try:
            res = optimize.least_squares(
                lambda t: _logistic4(t, pred) - mos, theta0, max_nfev=2000
            )
        except Exception:
            continue
        sse = float(2.0 * res.cost)
        if sse < best[0]:
            best = (sse, res.x)
    if best is None:
        return None, pred, True
    theta = best[1]
    fitted = _logistic4(theta, pred)
    if float(np.std(fitted)) == 0.0:
        return None, pred, True
    params = NonlinearFitParams(*(float(v) for v in theta))
    return params, fitted, False


def _check_pair(pred, mos, n_min=2):
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.shape != mos.shape or pred.ndim != 1:
        raise EvalError("correlation inputs must be equal-length vectors")
    if pred.size < n_min:
        raise EvalError(f"need at least {n_min} records, got {pred.size}")
    if float(np.std(pred)) == 0.0 or float(np.std(mos)) == 0.0:
        raise EvalError("degenerate (constant) inputs: correlation undefined")
    return pred, mos


def plcc_detailed(pred, mos, seed=0):
    """(plcc, fit params or None, fell_back_to_raw_pearson)"""
    pred, mos = _check_pair(pred, mos, n_min=5)
    params, fitted, fallback = _fit_logistic4(pred, mos, seed)
    if fallback:
        return float(stats.pearsonr(pred, mos).statistic), None, True
    return float(stats.pearsonr(fitted, mos).statistic), params, False


def plcc(pred, mos, seed=0):
    """Pearson correlation after the four-parameter monotone fit."""
    return plcc_detailed(pred, mos, seed)[0]


def srcc(pred, mos):
    """Spearman rank correlation, average ranks on ties."""
    pred, mos = _check_pair(pred, mos)
    v = stats.spearmanr(pred, mos).statistic
    if np.isnan(v):
        raise EvalError("srcc undefined for these inputs")
    return float(v)


def krcc(pred, mos):
    """Kendall rank correlation, tau-b tie handling."""
    pred, mos = _check_pair(pred, mos)
    v = stats.kendalltau(pred, mos).statistic
    if np.isnan(v):
        raise EvalError("krcc undefined for these inputs")
    return float(v)


def two_afc_score(records):
    """Mean of r*rhat + (1-r)*(1-rhat) where rhat prefers the candidate
    with the smaller distance; exact ties earn 0.5 expected credit."""
    if not records:
        raise EvalError("two_afc_score: empty record list")
    credit = 0.0
    for rec in records:
        if rec.d0 < rec.d1:
            rhat = 1.0
        elif rec.d0 > rec.d1:
            rhat = 0.0
        else:
            rhat = 0.5
        credit += rec.r * rhat + (1.0 - rec.r) * (1.0 - rhat)
    return credit / len(records)


# -- manifests -----------------------------------------------------------------

_MOS_COLS = ("ref", "dist", "score")
_AFC_COLS = ("ref", "dist0", "dist1", "r")


def load_manifest(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise EvalError("manifest: empty file") from None
        if tuple(header) in (_MOS_COLS, _MOS_COLS + ("subset",)):
            mode, cols = "mos", header
        elif tuple(header) in (_AFC_COLS, _AFC_COLS + ("subset",)):
            mode, cols = "2afc", header
        else:
            raise EvalError(
                f"manifest: header must be {','.join(_MOS_COLS)}[,subset] or "
                f"{','.join(_AFC_COLS)}[,subset], got {header}"
            )
        root = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            p = p.strip()
            return p if os.path.isabs(p) else os.path.join(root, p)

        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise EvalError(f"manifest: line {lineno} has {len(row)} fields")
            rec = dict(zip(cols, (c.strip() for c in row)))
            try:
                if mode == "mos":
                    rec["score"] = float(rec["score"])
                else:
                    rec["r"] = float(rec["r"])
            except ValueError:
                raise EvalError(f"manifest: line {lineno}: bad numeric field") from None
            for key in ("ref", "dist", "dist0", "dist1"):
                if key in rec:
                    rec[key] = resolve(rec[key])
            rec.setdefault("subset", "")
            records.append(rec)
    if len(records) < 2:
        raise EvalError("manifest: need at least 2 records")
    return EvalManifest(mode=mode, records=records, path=path)


# -- end-to-end evaluation -------------------------------------------------------

@dataclass
class EvalConfig:
    metric: str = "adists"
    backbone: object = None
    params: object = None
    weights_archive: object = None  # optional DISTS/LPIPS tables
    metric_config: object = None
    resize: int = 256  # short side; 0 disables
    threads: int = 1
    seed: int = 0


_FEATURE_METRICS = ("lpips", "dists", "adists")


class _Scorer:
    """Per-record scoring with a reference-side cache. Distances from
    feature metrics reuse the reference pyramid across records that share
    a reference image."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.mcfg = cfg.metric_config or M.MetricConfig()
        self.higher_is_better = cfg.metric == "ssim"
        if cfg.metric in _FEATURE_METRICS and cfg.backbone is None:
            raise EvalError(f"metric {cfg.metric!r} needs a backbone")
        self._ref_cache = {}
        self._img_cache = {}
        self._lock = threading.Lock()
        self._weights = None
        if cfg.metric == "dists":
            self._weights = M.load_dists_weights(
                cfg.weights_archive, cfg.backbone.config.channel_counts
            )
        elif cfg.metric == "lpips":
            self._weights = M.load_lpips_weights(
                cfg.weights_archive, cfg.backbone.config.channel_counts
            )

    def _load(self, path):
        with self._lock:
            if path in self._img_cache:
                return self._img_cache[path]
        img = decode_image(path)
        if self.cfg.resize:
            img = resize_bicubic(img, self.cfg.resize)
        with self._lock:
            self._img_cache[path] = img
        return img

    def _ref_side(self, path):
        with self._lock:
            cached = self._ref_cache.get(path)
        if cached is not None:
            return cached
        img = self._load(path)
        if self.cfg.metric == "adists":
            side = M.adists_reference(img, self.cfg.backbone, self.cfg.params, self.mcfg)
        else:
            side = self.cfg.backbone.extract(img)
        with self._lock:
            self._ref_cache[path] = side
        return side

    def score_pair(self, ref_path, dist_path):
        y = self._load(dist_path)
        if self.cfg.metric == "mse":
            return M.mse(self._load(ref_path), y).value
        if self.cfg.metric == "ssim":
            return M.msssim_mean(self._load(ref_path), y, self.mcfg).value
        if self.cfg.metric == "adists":
            ref = self._ref_side(ref_path)
            frozen = self.mcfg.pooling_mode == "reference_weighted"
            score, _ = M.adists_score_raw(ref, y, reference_weighted=frozen)
            return float(score)
        px = self._ref_side(ref_path)
        py = self.cfg.backbone.extract(y)
        if self.cfg.metric == "dists":
            return M.dists(px, py, self._weights, self.mcfg).value
        if self.cfg.metric == "lpips":
            return M.lpips_distance(px, py, self._weights).value
        raise EvalError(f"unknown metric {self.cfg.metric!r}")


def _map_records(fn, records, threads):
    if threads <= 1:
        return [fn(r) for r in records]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, records))


def _correlations(pred, mos, seed):
    """Correlation block for one (sub)set of records, degeneracy-flagged."""
    try:
        value_plcc, fit_params, fallback = plcc_detailed(pred, mos, seed)
        block = {
            "plcc": value_plcc,
            "srcc": srcc(pred, mos),
            "krcc": krcc(pred, mos),
            "degenerate": False,
            "fit_fallback": fallback,
        }
        if fit_params is not None:
            block["fit"] = {
                "a": fit_params.a,
                "b": fit_params.b,
                "c": fit_params.c,
                "d": fit_params.d,
                "form": fit_params.form,
            }
        return block
    except EvalError as e:
        return {
            "plcc": None,
            "srcc": None,
            "krcc": None,
            "degenerate": True,
            "reason": str(e),
        }


def run_eval(manifest, cfg=EvalConfig(), cache_path=None):
    """Score every manifest record, aggregate per subset and overall.

    Unreadable records are skipped, logged in the report's `failures`
    list, and still counted in `n_total`. Returns the report dict; when
    `cache_path` is set, per-record scores are also written as CSV."""
    if isinstance(manifest, str):
        manifest = load_manifest(manifest)
    scorer = _Scorer(cfg)
    t0 = time.perf_counter()
    failures = []

    def safe(fn, rec, idx):
        try:
            return fn(rec)
        except Exception as e:
            failures.append(
                {"index": idx, "ref": rec.get("ref", ""), "error": f"{type(e).__name__}: {e}"}
            )
            return None

    if manifest.mode == "mos":
        rows = _map_records(
            lambda ir: safe(lambda r: scorer.score_pair(r["ref"], r["dist"]), ir[1], ir[0]),
            list(enumerate(manifest.records)),
            cfg.threads,
        )
        scored = [
            (rec, s) for rec, s in zip(manifest.records, rows) if s is not None
        ]
        sign = 1.0 if scorer.higher_is_better else -1.0
        subsets = {}
        for rec, s in scored:
            subsets.setdefault(rec["subset"], []).append((sign * s, rec["score"]))
        report_subsets = {}
        for tag in sorted(subsets):
            pred, mos = zip(*subsets[tag])
            block = _correlations(np.array(pred), np.array(mos), cfg.seed)
            block["n"] = len(pred)
            report_subsets[tag or "(all)"] = block
        pred = np.array([sign * s for _, s in scored])
        mos = np.array([rec["score"] for rec, _ in scored])
        overall = _correlations(pred, mos, cfg.seed) if len(scored) >= 2 else {
            "degenerate": True,
            "reason": "fewer than 2 scored records",
        }
        overall["n"] = len(scored)
        cache_rows = [
            ("ref", "dist", "score", "subset")
        ] + [
            (rec["ref"], rec["dist"], repr(s), rec["subset"]) for rec, s in scored
        ]
    else:
        def afc(rec):
            d0 = scorer.score_pair(rec["ref"], rec["dist0"])
            d1 = scorer.score_pair(rec["ref"], rec["dist1"])
            if scorer.higher_is_better:
                d0, d1 = -d0, -d1
            return d0, d1

        rows = _map_records(
            lambda ir: safe(afc, ir[1], ir[0]),
            list(enumerate(manifest.records)),
            cfg.threads,
        )
        scored = [(rec, d) for rec, d in zip(manifest.records, rows) if d is not None]
        subsets = {}
        for rec, (d0, d1) in scored:
            subsets.setdefault(rec["subset"], []).append(
                TwoAfcRecord(rec["r"], d0, d1)
            )
        report_subsets = {}
        for tag in sorted(subsets):
            report_subsets[tag or "(all)"] = {
                "two_afc": two_afc_score(subsets[tag]),
                "n": len(subsets[tag]),
            }
        all_records = [r for recs in subsets.values() for r in recs]
        overall = {
            "two_afc": two_afc_score(all_records) if all_records else None,
            "n": len(all_records),
        }
        cache_rows = [
            ("ref", "dist0", "dist1", "d0", "d1", "r", "subset")
        ] + [
            (rec["ref"], rec["dist0"], rec["dist1"], repr(d0), repr(d1),
             repr(rec["r"]), rec["subset"])
            for rec, (d0, d1) in scored
        ]

    report = {
        "metric": cfg.metric,
        "mode": manifest.mode,
        "manifest": manifest.path,
        "orientation": "higher-better" if scorer.higher_is_better else "distance (negated for correlation)",
        "n_total": len(manifest.records),
        "n_scored": len(scored),
        "n_failed": len(failures),
        "overall": overall,
        "subsets": report_subsets,
        "failures": failures,
        "runtime_sec": time.perf_counter() - t0,
    }
    if cache_path:
        with open(cache_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerows(cache_rows)
    return report
