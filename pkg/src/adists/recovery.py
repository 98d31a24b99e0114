"""Reference recovery: projected gradient descent on a metric from a
degraded initialization back toward the pristine image. A usability probe
for the metric's gradients, not a restoration algorithm.

The iterate stays in [0, 1] (projection after each step); step sizes
backtrack under an Armijo condition on the projection arc and grow again
after accepted steps. The similarity-oriented SSIM mean is descended as
1 - score so every metric id minimizes toward zero.
"""

from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from .synthetic import box_blur

__all__ = ["RecoveryReport", "recover_reference", "psnr"]

_ARMIJO_C = 1e-4
_STEP_GROWTH = 2.0
_STEP_MAX = 1e4
_STEP_MIN = 1e-12
_MAX_LINE_FAILURES = 20

# loss = transform(metric value); similarity scores invert so descent
# always means approaching the reference
_LOSS_TRANSFORMS = {"msssim": (lambda v: 1.0 - v, -1.0)}


def psnr(x, y):
    """Peak signal-to-noise ratio for unit dynamic range, in dB."""
    err = float(np.mean((np.asarray(x, dtype=np.float64) - y) ** 2))
    if err == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(err))


@dataclass
class RecoveryReport:
    trace: list = field(default_factory=list)  # (step, metric value, psnr)
    final: np.ndarray = None
    converged: bool = False
    aborted: bool = False
    message: str = ""

    @property
    def metric_values(self):
        return [v for _, v, _ in self.trace]

    @property
    def psnr_values(self):
        return [p for _, _, p in self.trace]


def _initial_image(init, x_ref, rng):
    if isinstance(init, np.ndarray):
        if init.shape != x_ref.shape:
            raise ValueError("recover_reference: init image shape mismatch")
        return np.clip(init.astype(np.float64), 0.0, 1.0)
    if init == "noise":
        return rng.random(x_ref.shape)
    if init in ("blur", "blurred-copy"):
        return np.clip(box_blur(x_ref, passes=4, k=5), 0.0, 1.0)
    raise ValueError(f"recover_reference: unknown init {init!r}")


def recover_reference(
    x_ref,
    init="blur",
    metric="adists",
    steps=2000,
    step_size=1.0,
    backbone=None,
    params=None,
    config=None,
    seed=0,
    stop_psnr_gain=None,
    stop_metric=1e-12,
):
    """Drive metric(x_ref, y) down from the initialization; returns the
    trace of accepted steps. `stop_psnr_gain` ends the run early once the
    PSNR improvement over the initialization reaches the given dB."""
    x_ref = np.asarray(x_ref, dtype=np.float64)
    rng = np.random.default_rng(seed)
    y = _initial_image(init, x_ref, rng)

    value_fn, grad_fn = M.metric_evaluator(metric, x_ref, backbone, params, config)
    transform, sign = _LOSS_TRANSFORMS.get(metric, (lambda v: v, 1.0))

    raw, grad = grad_fn(y)
    loss = transform(raw)
    grad = sign * grad
    psnr0 = psnr(x_ref, y)
    report = RecoveryReport(trace=[(0, raw, psnr0)], final=y)
    if loss <= stop_metric:
        report.converged = True
        report.message = "already at the reference"
        return report

    t = float(step_size)
    consecutive_failures = 0
    for k in range(1, steps + 1):
        accepted = False
        while t >= _STEP_MIN:
            y_new = np.clip(y - t * grad, 0.0, 1.0)
            move = y_new - y
            move_sq = float((move * move).sum())
            if move_sq == 0.0:
                break
            raw_new = value_fn(y_new)
            loss_new = transform(raw_new)
            if loss_new <= loss - _ARMIJO_C * move_sq / t:
                y, loss, raw = y_new, loss_new, raw_new
                _, grad = grad_fn(y)
                grad = sign * grad
                report.trace.append((k, raw, psnr(x_ref, y)))
                t = min(t * _STEP_GROWTH, _STEP_MAX)
                accepted = True
                consecutive_failures = 0
                break
            t *= 0.5
        if not accepted:
            consecutive_failures += 1
            t = max(t, 1e-6)  # retry from a workable scale after a dead stall
            if consecutive_failures >= _MAX_LINE_FAILURES:
                report.final = y
                report.aborted = True
                report.message = f"line search stalled at step {k}"
                return report
            continue
        if loss <= stop_metric:
            report.message = "metric reached zero"
            report.converged = True
            break
        if stop_psnr_gain is not None and report.trace[-1][2] - psnr0 >= stop_psnr_gain:
            report.message = f"psnr gain {report.trace[-1][2] - psnr0:.2f} dB"
            report.converged = True
            break
    report.final = y
    return report
