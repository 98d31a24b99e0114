"""Seeded generators for test imagery.

Nothing here ships quality judgments: these routines exist so the test
suite, the demos and the default classifier parameters never depend on
downloaded datasets. Texture patches are spatially homogeneous repeated
or stochastic patterns; structure patches are isolated edges, corners or
bars on flat ground. Natural crops mix low-frequency shading, a few soft
edges and mild grain.
"""

import numpy as np

from .texture import PATCH_SIZES, PatchCorpus

__all__ = [
    "texture_patch",
    "structure_patch",
    "generate_corpus",
    "natural_crop",
    "composite_half_noise",
    "add_noise",
    "box_blur",
]


def _to_rgb(gray):
    return np.repeat(gray[None, :, :], 3, axis=0)


def texture_patch(rng, size):
    """Spatially homogeneous micro-pattern filling the whole patch.

    Amplitudes are kept small relative to structure contrasts so the two
    classes are statistically distinct at every scale, not just visually.
    """
    base = rng.uniform(0.45, 0.62)
    amp = rng.uniform(0.06, 0.14)
    kind = rng.integers(0, 3)
    if kind == 0:
        # tiled random micro-pattern with per-pixel jitter
        k = int(rng.integers(2, 6))
        tile = rng.uniform(-1.0, 1.0, size=(k, k))
        reps = -(-size // k)
        g = np.tile(tile, (reps, reps))[:size, :size]
        g = g + rng.normal(0.0, 0.08, size=(size, size))
    elif kind == 1:
        # dense independent grain
        g = rng.uniform(-1.0, 1.0, size=(size, size))
    else:
        # high-frequency plaid
        yy, xx = np.mgrid[0:size, 0:size] / size
        fx, fy = rng.uniform(size / 4.0, size / 2.0, size=2)
        ph = rng.uniform(0.0, 2.0 * np.pi, size=2)
        g = np.sin(2 * np.pi * fx * xx + ph[0]) * np.sin(2 * np.pi * fy * yy + ph[1])
        g = g + rng.normal(0.0, 0.1, size=(size, size))
    patch = base + amp * g
    return _to_rgb(np.clip(patch, 0.02, 0.98))


def structure_patch(rng, size):
    """Piecewise-flat ground with isolated high-contrast edges, corners,
    or bars. Small patches carry one boundary; larger ones carry several,
    so boundary energy stays visible to the coarse stages."""
    delta = rng.uniform(0.45, 0.75) * rng.choice([-1.0, 1.0])
    bg = rng.uniform(0.05 + max(0.0, -delta), 0.95 - max(0.0, delta))
    fg = bg + delta
    yy, xx = np.mgrid[0:size, 0:size] / size - 0.5
    g = np.full((size, size), bg)
    n_marks = {16: 1, 32: 1, 64: 3, 128: 4}.get(size, 6)
    for _ in range(n_marks):
        theta = rng.uniform(0.0, np.pi)
        d = np.cos(theta) * xx + np.sin(theta) * yy - rng.uniform(-0.2, 0.2)
        # thin bars vanish under deep pooling, keep them a small-size archetype
        kind = rng.integers(0, 3 if size < 64 else 2)
        if kind == 0:
            mask = d > 0
        elif kind == 1:
            theta2 = theta + rng.uniform(np.pi / 4, 3 * np.pi / 4)
            d2 = np.cos(theta2) * xx + np.sin(theta2) * yy - rng.uniform(-0.2, 0.2)
            mask = (d > 0) & (d2 > 0)
        else:
            mask = np.abs(d) < rng.uniform(1.5, 4.0) / size
        if mask.any():
            g[mask] = fg if np.mean(g[mask] == fg) < 0.5 else bg
    g = g + rng.normal(0.0, 0.004, size=(size, size))
    return _to_rgb(np.clip(g, 0.0, 1.0))


def generate_corpus(seed=0, per_class=None):
    """Labeled patch corpus over the declared sizes. `per_class` maps
    size -> patches per class (default tuned for suite runtime: the large
    sizes dominate feature-extraction cost)."""
    per_class = per_class or {16: 150, 32: 150, 64: 150, 128: 90, 256: 60}
    rng = np.random.default_rng(seed)
    corpus = PatchCorpus()
    for size in PATCH_SIZES:
        n = per_class.get(size, 0)
        for _ in range(n):
            corpus.add(texture_patch(rng, size), "texture", size)
        for _ in range(n):
            corpus.add(structure_patch(rng, size), "structure", size)
    return corpus


def natural_crop(rng, side):
    """Band-limited color image with shading, soft edges and light grain."""
    yy, xx = np.mgrid[0:side, 0:side] / side
    img = np.full((3, side, side), 0.5)
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 4.0, size=2)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        pattern = np.cos(2 * np.pi * (fx * xx + fy * yy) + ph)
        gains = rng.uniform(-0.22, 0.22, size=3)
        img = img + gains[:, None, None] * pattern[None]
    for _ in range(2):
        theta = rng.uniform(0.0, np.pi)
        d = np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)
        d = d - rng.uniform(-0.2, 0.2)
        ramp = 1.0 / (1.0 + np.exp(-d * side / rng.uniform(1.0, 3.0)))
        gains = rng.uniform(-0.25, 0.25, size=3)
        img = img + gains[:, None, None] * ramp[None]
    img = img + rng.normal(0.0, 0.01, size=img.shape)
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / (hi - lo + 1e-12)


def composite_half_noise(rng, side):
    """Left half flat gray, right half dense noise texture."""
    img = np.full((3, side, side), 0.5)
    img[:, :, side // 2 :] = 0.5 + 0.35 * rng.uniform(
        -1.0, 1.0, size=(3, side, side - side // 2)
    )
    img = img + rng.normal(0.0, 0.002, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def add_noise(rng, img, sigma):
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)


def box_blur(img, passes=4, k=5):
    """Separable box blur with reflect padding (no border dimming)."""
    out = np.asarray(img, dtype=np.float64)
    r = k // 2
    kern = np.ones(k) / k
    for _ in range(passes):
        p = np.pad(out, ((0, 0), (r, r), (0, 0)), mode="reflect")
        out = np.apply_along_axis(lambda m: np.convolve(m, kern, mode="valid"), 1, p)
        p = np.pad(out, ((0, 0), (0, 0), (r, r)), mode="reflect")
        out = np.apply_along_axis(lambda m: np.convolve(m, kern, mode="valid"), 2, p)
    return out
