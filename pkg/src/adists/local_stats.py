"""Sliding-window first and second moments over feature maps.

Windows are axis-aligned boxes applied in valid mode (no padding): every
window lies entirely inside the map. A window larger than the map in some
dimension clamps to the map extent in that dimension, producing a single
output position there. Variances are population variances (divide by the
window area) and are clamped at zero.

Sums are computed with integral images after subtracting the per-channel
map mean; the centering cancels exactly in variances and covariances and
is added back to the means, but keeps the cumulative sums small enough
that the cancellation error of the four-corner difference stays benign.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag

__all__ = ["WindowSpec", "LocalStatistics", "windowed_stats", "windowed_moments"]


@dataclass(frozen=True)
class WindowSpec:
    """Box window geometry: height x width, applied with the given stride."""

    height: int = 21
    width: int = 21
    stride: int = 1

    def __post_init__(self):
        for name in ("height", "width", "stride"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"WindowSpec.{name} must be a positive int, got {v!r}")

    def clamped(self, h, w):
        """Effective (height, width) on an h x w map."""
        return min(self.height, h), min(self.width, w)


@dataclass
class LocalStatistics:
    """Per-window moments of a pair of maps; each field is (C, H', W')."""

    mu_x: object
    mu_y: object
    var_x: object
    var_y: object
    cov_xy: object
    window: tuple


def _channel_mean_keepdims(x):
    m = ag.mean_spatial(x)
    c = ag.value_of(x).shape[0]
    return ag.reshape(m, (c, 1, 1))


def windowed_stats(x, y, spec=WindowSpec()):
    """Windowed means, variances and covariance of two aligned maps.

    x, y: (C, H, W) arrays or autograd nodes with identical shapes.
    """
    xv, yv = ag.value_of(x), ag.value_of(y)
    if xv.shape != yv.shape:
        raise ValueError(f"windowed_stats: shape mismatch {xv.shape} vs {yv.shape}")
    if xv.ndim != 3:
        raise ValueError(f"windowed_stats: expected (C, H, W), got {xv.shape}")
    _, h, w = xv.shape
    wh, ww = spec.clamped(h, w)
    n = float(wh * ww)

    mx = _channel_mean_keepdims(x)
    my = _channel_mean_keepdims(y)
    xc = x - mx
    yc = y - my

    def win_mean(m):
        return ag.stride_slice(ag.box_sum(m, wh, ww), spec.stride, spec.stride) / n

    sx = win_mean(xc)
    sy = win_mean(yc)
    sxx = win_mean(xc * xc)
    syy = win_mean(yc * yc)
    sxy = win_mean(xc * yc)

    return LocalStatistics(
        mu_x=sx + mx,
        mu_y=sy + my,
        var_x=ag.relu(sxx - sx * sx),
        var_y=ag.relu(syy - sy * sy),
        cov_xy=sxy - sx * sy,
        window=(wh, ww),
    )


def windowed_moments(x, spec=WindowSpec()):
    """Windowed mean and variance of a single map: returns (mu, var)."""
    xv = ag.value_of(x)
    if xv.ndim != 3:
        raise ValueError(f"windowed_moments: expected (C, H, W), got {xv.shape}")
    _, h, w = xv.shape
    wh, ww = spec.clamped(h, w)
    n = float(wh * ww)

    mx = _channel_mean_keepdims(x)
    xc = x - mx
    sx = ag.stride_slice(ag.box_sum(xc, wh, ww), spec.stride, spec.stride) / n
    sxx = ag.stride_slice(ag.box_sum(xc * xc, wh, ww), spec.stride, spec.stride) / n
    return sx + mx, ag.relu(sxx - sx * sx)
