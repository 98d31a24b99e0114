"""Reverse-mode differentiation for the metric graph.

A Tape records primitive operations as they execute; each Node stores its
forward value, its parents, a replay thunk, and an adjoint closure. The
public functions in this module (conv2d, relu, l2_pool, box_sum, sqrt,
expit, minimum, reductions, arithmetic via operator overloads) dispatch on
their arguments: plain numpy arrays run the plain kernels with no
recording, Node arguments extend the tape. Metric forward code is written
once against these functions and works for both cases.

Subgradient conventions: relu'(0) = 0; minimum(a, b) routes the gradient
to the smaller argument and to `a` on ties. Finite-difference checks must
exclude samples adjacent to these kinks; `finite_diff_samples` flags them
with probe-only self-checks, see its docstring for the exact rule.
"""

import numpy as np
from scipy.special import expit as _expit

from . import tensor as T

__all__ = [
    "Tape",
    "Node",
    "is_node",
    "value_of",
    "grad_metric",
    "finite_diff_samples",
]


def is_node(x):
    return isinstance(x, Node)


def value_of(x):
    """Forward value of a Node, or the array itself."""
    return x.value if isinstance(x, Node) else x


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    """One recorded value in the computation graph."""

    __slots__ = ("tape", "value", "parents", "_forward", "_backward", "idx")

    # make ndarray <op> Node defer to the reflected Node operator instead
    # of broadcasting the Node as an object array
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, tape, value, parents, forward, backward):
        self.tape = tape
        self.value = np.asarray(value)
        self.parents = parents
        self._forward = forward
        self._backward = backward
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return _binary(self, other, np.add, lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _binary_r(other, self, np.subtract, lambda g, a, b: (g, -g))

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda g, a, b: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(
            self, other, np.divide, lambda g, a, b: (g / b, -g * a / (b * b))
        )

    def __rtruediv__(self, other):
        return _binary_r(
            other, self, np.divide, lambda g, a, b: (g / b, -g * a / (b * b))
        )

    def __neg__(self):
        return _unary(self, np.negative, lambda g, x, y: -g)

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is recorded")
        return self * self


def _record(tape, value, parents, forward, backward):
    return Node(tape, value, parents, forward, backward)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Node):
            return a.tape
    return None


def _unary(x, fn, vjp):
    """vjp(grad, x_value, out_value) -> grad_x"""
    xv = value_of(x)
    out = fn(xv)
    if not isinstance(x, Node):
        return out
    return _record(
        x.tape,
        out,
        (x,),
        lambda vals: fn(vals[0]),
        lambda g, node: (_unbroadcast(vjp(g, node.parents[0].value, node.value),
                                      node.parents[0].shape),),
    )


def _binary(a, b, fn, vjp):
    av, bv = value_of(a), value_of(b)
    out = fn(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out
    parents = tuple(p for p in (a, b) if isinstance(p, Node))

    def forward(vals):
        it = iter(vals)
        x = next(it) if isinstance(a, Node) else av
        y = next(it) if isinstance(b, Node) else bv
        return fn(x, y)

    def backward(g, node):
        ga, gb = vjp(g, np.asarray(value_of(a)), np.asarray(value_of(b)))
        grads = []
        if isinstance(a, Node):
            grads.append(_unbroadcast(np.asarray(ga, dtype=np.float64), a.shape))
        if isinstance(b, Node):
            grads.append(_unbroadcast(np.asarray(gb, dtype=np.float64), b.shape))
        return tuple(grads)

    return _record(tape, out, parents, forward, backward)


def _binary_r(a, b, fn, vjp):
    # a is a constant, b is the node; keeps operand order for fn(a, b)
    return _binary(a, b, fn, vjp)


# -- primitive functions ---------------------------------------------------

def sqrt(x):
    return _unary(x, np.sqrt, lambda g, xv, yv: g / (2.0 * yv))


def expit(x):
    return _unary(x, _expit, lambda g, xv, yv: g * yv * (1.0 - yv))


def relu(x):
    return _unary(x, T.relu, lambda g, xv, yv: g * (xv > 0))


def minimum(a, b):
    """Elementwise min; gradient follows the smaller argument, ties go to a."""
    def vjp(g, av, bv):
        take_b = bv < av
        return g * ~take_b, g * take_b

    return _binary(a, b, np.minimum, vjp)


def mean_all(x):
    def vjp(g, xv, yv):
        return np.full_like(xv, g / xv.size)

    return _unary(x, np.mean, vjp)


def sum_all(x):
    def vjp(g, xv, yv):
        return np.full_like(xv, g)

    return _unary(x, np.sum, vjp)


def mean_spatial(x):
    """Mean over the trailing two axes: (C, H, W) -> (C,)."""
    def fn(xv):
        return xv.mean(axis=(-2, -1))

    def vjp(g, xv, yv):
        n = xv.shape[-1] * xv.shape[-2]
        return np.broadcast_to((g / n)[..., None, None], xv.shape).copy()

    return _unary(x, fn, vjp)


def channel_mean(x):
    """Mean over the leading axis: (C, H, W) -> (H, W)."""
    def fn(xv):
        return xv.mean(axis=0)

    def vjp(g, xv, yv):
        return np.broadcast_to(g / xv.shape[0], xv.shape).copy()

    return _unary(x, fn, vjp)


def reshape(x, shape):
    xv = value_of(x)
    if not isinstance(x, Node):
        return xv.reshape(shape)
    old = x.shape
    return _record(
        x.tape,
        xv.reshape(shape),
        (x,),
        lambda vals: vals[0].reshape(shape),
        lambda g, node: (g.reshape(old),),
    )


def stride_slice(x, sh, sw):
    """Subsample the trailing two axes with the given strides."""
    xv = value_of(x)
    if sh == 1 and sw == 1:
        return x
    if not isinstance(x, Node):
        return xv[..., ::sh, ::sw]

    def backward(g, node):
        full = np.zeros(node.parents[0].shape, dtype=np.float64)
        full[..., ::sh, ::sw] = g
        return (full,)

    return _record(
        x.tape,
        xv[..., ::sh, ::sw],
        (x,),
        lambda vals: vals[0][..., ::sh, ::sw],
        backward,
    )


def _box_sum_raw(x, wh, ww):
    """Valid-mode window sums over the trailing two axes. Accumulates in
    float64 regardless of input dtype."""
    x64 = np.asarray(x, dtype=np.float64)
    c = np.cumsum(np.cumsum(x64, axis=-2), axis=-1)
    pad = [(0, 0)] * (x64.ndim - 2) + [(1, 0), (1, 0)]
    c = np.pad(c, pad)
    out = (
        c[..., wh:, ww:]
        - c[..., :-wh, ww:]
        - c[..., wh:, :-ww]
        + c[..., :-wh, :-ww]
    )
    return out.astype(np.asarray(x).dtype, copy=False)


def _box_scatter(g, wh, ww):
    """Adjoint of _box_sum_raw: spreads each window sum back over its
    window (full-mode box sum)."""
    pad = [(0, 0)] * (g.ndim - 2) + [(wh - 1, wh - 1), (ww - 1, ww - 1)]
    return _box_sum_raw(np.pad(g, pad), wh, ww)


def box_sum(x, wh, ww):
    """Sliding-window sum, window (wh, ww), stride 1, no padding."""
    xv = value_of(x)
    if xv.shape[-2] < wh or xv.shape[-1] < ww:
        raise ValueError(
            f"box_sum: window {wh}x{ww} larger than map "
            f"{xv.shape[-2]}x{xv.shape[-1]}"
        )
    if not isinstance(x, Node):
        return _box_sum_raw(xv, wh, ww)
    return _record(
        x.tape,
        _box_sum_raw(xv, wh, ww),
        (x,),
        lambda vals: _box_sum_raw(vals[0], wh, ww),
        lambda g, node: (_box_scatter(g, wh, ww),),
    )


def conv2d(x, filters, bias=None, stride=1, padding=0):
    """conv2d over a possibly-traced input; filters and bias are constants
    of the graph (the metric is differentiated with respect to images, not
    weights)."""
    if not isinstance(x, Node):
        return T.conv2d(x, filters, bias, stride, padding)
    out = T.conv2d(x.value, filters, bias, stride, padding)
    in_shape = x.shape
    return _record(
        x.tape,
        out,
        (x,),
        lambda vals: T.conv2d(vals[0], filters, bias, stride, padding),
        lambda g, node: (
            T.conv2d_input_grad(g, filters, in_shape, stride, padding),
        ),
    )


def _blur_down_node(x, kernel, stride, padding):
    out = T._blur_down(x.value, kernel, stride, padding)
    in_shape = x.shape
    return _record(
        x.tape,
        out,
        (x,),
        lambda vals: T._blur_down(vals[0], kernel, stride, padding),
        lambda g, node: (
            T._blur_down_transpose(g, kernel, stride, padding, in_shape),
        ),
    )


def l2_pool(x, kernel=None, stride=2, eps=T.L2_POOL_EPS):
    if not isinstance(x, Node):
        return T.l2_pool(x, kernel, stride, eps)
    if kernel is None:
        kernel = T.L2_POOL_KERNEL
    kernel = np.asarray(kernel, dtype=x.value.dtype)
    padding = (kernel.shape[0] - 1) // 2
    c, h, w = x.shape
    mass = T._pool_mass(h, w, kernel, stride, padding, x.value.dtype)
    u = _blur_down_node(x * x, kernel, stride, padding)
    return sqrt(u / mass + eps)


# -- tape ------------------------------------------------------------------

class Tape:
    """Execution record of one differentiable forward pass."""

    def __init__(self):
        self.nodes = []

    def input(self, value):
        """Register a leaf the gradient can be taken with respect to."""
        return Node(self, np.asarray(value, dtype=np.float64), (), None, None)

    def replay(self):
        """Re-execute every recorded op from the leaves; returns the list
        of recomputed values (same order as recording)."""
        values = []
        for node in self.nodes:
            if node._forward is None:
                values.append(node.value)
            else:
                values.append(node._forward([values[p.idx] for p in node.parents]))
        return values

    def gradient(self, output, wrt):
        """d output / d wrt, reverse accumulation. `output` must be scalar."""
        if output.value.ndim != 0:
            raise ValueError("gradient: output node must be scalar")
        grads = {output.idx: np.asarray(1.0)}
        for node in reversed(self.nodes[: output.idx + 1]):
            if node.idx == wrt.idx:
                g = grads.get(node.idx)  # keep the answer in the dict
            else:
                g = grads.pop(node.idx, None)
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(np.asarray(g, dtype=np.float64), node)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                acc = grads.get(parent.idx)
                grads[parent.idx] = pg if acc is None else acc + pg
        g = grads.get(wrt.idx)
        if g is None:
            return np.zeros_like(wrt.value)
        return np.asarray(g, dtype=np.float64).reshape(wrt.shape)


# -- metric gradients -------------------------------------------------------

_GRAD_METRICS = ("mse", "msssim", "adists", "adists_reference_weighted")


def grad_metric(metric, x_ref, y, backbone=None, params=None, config=None):
    """Gradient of a metric with respect to the distorted image `y`.

    Supported metrics: mse, msssim, adists, adists_reference_weighted.
    Returns (score, gradient) with gradient shaped like y. For repeated
    gradients against one reference use metrics.metric_evaluator, which
    caches the reference side.
    """
    from . import metrics

    if metric not in _GRAD_METRICS:
        raise ValueError(
            f"metric {metric!r} has no gradient support "
            f"(available: {', '.join(_GRAD_METRICS)})"
        )
    _, grad_fn = metrics.metric_evaluator(metric, x_ref, backbone, params, config)
    return grad_fn(y)


def finite_diff_samples(f, y, pixels, h=1e-3, tol=1e-3):
    """Central finite differences of scalar f at selected flat pixel
    indices of y, with a per-sample reliability verdict.

    Returns (numeric, kink_flags). A sample is flagged when the probe
    cannot certify a first derivative to tol at this step size, for
    either of the two reasons a central difference goes wrong:

    - the step-invariant part of its one-sided disagreement exceeds
      1.2*tol on the check scale: a nonsmooth event inside the stencil
      (a relu or min branch flip, or the variance clamp). The one-sided
      slopes of a smooth function disagree by |f''|*h, which halves with
      the step, while a derivative jump contributes its full size at any
      step; extrapolating the spreads measured at h and h/2 isolates the
      jump. Its contribution to the central estimate is bounded by half
      the disagreement.
    - halving the step moves the central estimate by more than 0.25*tol
      on the same scale: curvature terms dominate at this step size (the
      move is 3/4 of the quadratic truncation error).

    The check scale is max(|central|, rms of all sampled centrals). Both
    symptoms are measured from probe values only, so a wrong analytic
    gradient cannot hide behind the exclusions. Comparisons against
    `numeric` should skip flagged samples: there the probe itself is
    known to be off by more than the tolerance, and across a kink the
    two sides legitimately disagree while the convention picks a branch.
    """
    y = np.asarray(y, dtype=np.float64)
    f0 = f(y)
    numeric = np.empty(len(pixels))
    jump = np.empty(len(pixels))
    halved = np.empty(len(pixels))
    flat = y.reshape(-1)

    def probe(p, step):
        yp = flat.copy()
        yp[p] += step
        return f(yp.reshape(y.shape))

    for i, p in enumerate(pixels):
        fp, fm = probe(p, h), probe(p, -h)
        fp2, fm2 = probe(p, h / 2), probe(p, -h / 2)
        numeric[i] = (fp - fm) / (2.0 * h)
        halved[i] = (fp2 - fm2) / h
        spread_h = abs((fp - f0) / h - (f0 - fm) / h)
        spread_h2 = abs((fp2 - f0) / (h / 2) - (f0 - fm2) / (h / 2))
        jump[i] = 2.0 * spread_h2 - spread_h
    rms = float(np.sqrt(np.mean(numeric ** 2)))
    scale = np.maximum(np.abs(numeric), max(rms, 1e-12))
    kink = (jump > 1.2 * tol * scale) | (np.abs(numeric - halved) > 0.25 * tol * scale)
    return numeric, kink
