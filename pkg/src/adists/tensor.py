"""Dense tensor kernels: 2-D convolution, ReLU, L2 pooling, bicubic resize.

All functions operate on numpy arrays in channels-first layout (C, H, W)
and are pure: inputs are never mutated. Computation preserves the input
dtype except where noted; accumulation inside box/integral sums is always
float64.
"""

import numpy as np

__all__ = [
    "conv2d",
    "relu",
    "l2_pool",
    "resize_bicubic",
    "L2_POOL_KERNEL",
    "L2_POOL_EPS",
    "check_finite",
]

# Hann-taper low-pass window for L2 pooling: outer product of the nonzero
# taps of a length-3 Hann-style window, normalized to sum 1.
_HANN_TAP = np.array([0.25, 0.5, 0.25], dtype=np.float64)
L2_POOL_KERNEL = np.outer(_HANN_TAP, _HANN_TAP)

# Epsilon inside the square root of l2_pool; keeps the root differentiable
# at zero activation.
L2_POOL_EPS = 1e-12

# im2col tiles are capped at this many column elements so large images do
# not materialize multi-hundred-MB scratch buffers.
_COL_BUDGET = 1 << 23


def check_finite(name, *arrays):
    """Raise ValueError if any array contains NaN or Inf."""
    for a in arrays:
        if not np.isfinite(a).all():
            raise ValueError(f"{name}: input contains NaN or Inf values")


def _im2col(xp, kh, kw, stride, rows):
    """Gather conv patches for output rows `rows` (a range) of a padded
    (C, Hp, Wp) input into a (C*kh*kw, len(rows)*W_out) matrix."""
    c, _, wp = xp.shape
    w_out = (wp - kw) // stride + 1
    cols = np.empty((c, kh, kw, len(rows), w_out), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            sub = xp[:, i : i + rows.stop * stride - stride + 1 : stride,
                     j : j + w_out * stride - stride + 1 : stride]
            cols[:, i, j] = sub[:, rows.start : rows.stop]
    return cols.reshape(c * kh * kw, len(rows) * w_out)


def conv2d(x, filters, bias=None, stride=1, padding=0):
    """Cross-correlate a (C_in, H, W) input with (C_out, C_in, kH, kW)
    filters, add bias, using zero padding.

    Output spatial size is floor((H + 2*padding - kH)/stride) + 1 per axis.
    """
    x = np.asarray(x)
    filters = np.asarray(filters)
    if x.ndim != 3 or filters.ndim != 4:
        raise ValueError("conv2d: expected (C,H,W) input and (O,C,kH,kW) filters")
    c_in, h, w = x.shape
    c_out, c_f, kh, kw = filters.shape
    if c_f != c_in:
        raise ValueError(
            f"conv2d: filter in-channels ({c_f}) do not match input channels ({c_in})"
        )
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(
            f"conv2d: kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding}x{w + 2 * padding}"
        )
    check_finite("conv2d", x, filters)

    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if padding:
        xp = np.zeros((c_in, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, padding : padding + h, padding : padding + w] = x
    else:
        xp = x

    wmat = filters.reshape(c_out, c_in * kh * kw)
    out = np.empty((c_out, h_out, w_out), dtype=np.result_type(x, filters))
    tile = max(1, min(h_out, _COL_BUDGET // max(1, c_in * kh * kw * w_out)))
    for r0 in range(0, h_out, tile):
        rows = range(r0, min(r0 + tile, h_out))
        cols = _im2col(xp, kh, kw, stride, rows)
        out[:, rows.start : rows.stop] = (wmat @ cols).reshape(
            c_out, len(rows), w_out
        )
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (c_out,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
        check_finite("conv2d", bias)
        out += bias[:, None, None]
    return out


def conv2d_input_grad(grad_out, filters, in_shape, stride=1, padding=0):
    """Adjoint of conv2d with respect to its input (filters held fixed).

    Scatters grad_out back through the patch gather; the transpose of the
    im2col + GEMM forward pass.
    """
    c_in, h, w = in_shape
    c_out, _, kh, kw = filters.shape
    _, h_out, w_out = grad_out.shape
    wmat = filters.reshape(c_out, c_in * kh * kw)
    gxp = np.zeros((c_in, h + 2 * padding, w + 2 * padding), dtype=grad_out.dtype)
    gcols = (wmat.T @ grad_out.reshape(c_out, h_out * w_out)).reshape(
        c_in, kh, kw, h_out, w_out
    )
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + h_out * stride : stride,
                j : j + w_out * stride : stride] += gcols[:, i, j]
    if padding:
        return gxp[:, padding : padding + h, padding : padding + w]
    return gxp


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x), 0)


def _blur_down(x, kernel, stride, padding):
    """Depthwise correlate (C,H,W) with a 2-D kernel, stride/padding as in
    conv2d. Channels share the kernel."""
    c, h, w = x.shape
    kh, kw = kernel.shape
    if padding:
        xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, padding : padding + h, padding : padding + w] = x
    else:
        xp = x
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((c, h_out, w_out), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * xp[:, i : i + h_out * stride : stride,
                                     j : j + w_out * stride : stride]
    return out


def _blur_down_transpose(g, kernel, stride, padding, in_shape):
    """Adjoint of _blur_down."""
    c, h, w = in_shape
    kh, kw = kernel.shape
    _, h_out, w_out = g.shape
    gxp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + h_out * stride : stride,
                j : j + w_out * stride : stride] += kernel[i, j] * g
    if padding:
        return gxp[:, padding : padding + h, padding : padding + w]
    return gxp


def _pool_mass(h, w, kernel, stride, padding, dtype):
    """In-bounds kernel mass at each pooled position; used to renormalize
    the window near borders so a constant map pools to the same constant."""
    ones = np.ones((1, h, w), dtype=dtype)
    return _blur_down(ones, kernel, stride, padding)[0]


def l2_pool(x, kernel=None, stride=2, eps=L2_POOL_EPS):
    """Downsample by blurring squared responses and taking the square root.

    The window is renormalized by its in-bounds mass at each position, so
    the effective low-pass weights always sum to 1 (borders included).
    Output spatial size is ceil(H/stride) x ceil(W/stride).
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError("l2_pool: expected (C,H,W) input")
    check_finite("l2_pool", x)
    if kernel is None:
        kernel = L2_POOL_KERNEL
    kernel = np.asarray(kernel, dtype=x.dtype)
    kh, kw = kernel.shape
    c, h, w = x.shape
    if h < 1 or w < 1:
        raise ValueError("l2_pool: empty input")
    padding = (kh - 1) // 2
    mass = _pool_mass(h, w, kernel, stride, padding, x.dtype)
    u = _blur_down(x * x, kernel, stride, padding)
    return np.sqrt(u / mass + eps)


def _cubic_weights(t, a=-0.5):
    """Keys cubic kernel evaluated at |t|."""
    at = np.abs(t)
    w = np.zeros_like(at)
    m1 = at <= 1
    m2 = (at > 1) & (at < 2)
    w[m1] = (a + 2) * at[m1] ** 3 - (a + 3) * at[m1] ** 2 + 1
    w[m2] = a * at[m2] ** 3 - 5 * a * at[m2] ** 2 + 8 * a * at[m2] - 4 * a
    return w


def _resize_axis(x, axis, n_out):
    """Separable bicubic resample of one spatial axis (center-aligned)."""
    n_in = x.shape[axis]
    if n_out == n_in:
        return x
    scale = n_in / n_out
    # source coordinate of each output sample, half-pixel centers
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    idx = base[None, :] + np.arange(-1, 3)[:, None]        # (4, n_out)
    weights = _cubic_weights(np.arange(-1, 3)[:, None] - frac[None, :])
    weights /= weights.sum(axis=0, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    moved = np.moveaxis(x, axis, -1)
    out = np.zeros(moved.shape[:-1] + (n_out,), dtype=x.dtype)
    for k in range(4):
        out += weights[k] * moved[..., idx[k]]
    return np.moveaxis(out, -1, axis)


def resize_bicubic(image, target_short_side):
    """Resize so the smaller spatial dimension equals `target_short_side`,
    preserving aspect ratio (rounded to nearest integer). Keys bicubic
    kernel with a = -0.5."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError("resize_bicubic: expected (C,H,W) image")
    c, h, w = image.shape
    if h < 1 or w < 1:
        raise ValueError("resize_bicubic: degenerate zero-sized image")
    if target_short_side < 1:
        raise ValueError("resize_bicubic: target side must be positive")
    check_finite("resize_bicubic", image)
    short = min(h, w)
    h_out = int(round(h * target_short_side / short))
    w_out = int(round(w * target_short_side / short))
    if min(h_out, w_out) != target_short_side:  # guard rounding drift
        if h <= w:
            h_out = target_short_side
        else:
            w_out = target_short_side
    out = _resize_axis(image, 1, h_out)
    out = _resize_axis(out, 2, w_out)
    return out
