import numpy as np

from adists.synthetic import (
    add_noise,
    box_blur,
    composite_half_noise,
    generate_corpus,
    natural_crop,
)


def test_generate_corpus_counts_and_balance():
    per_class = {16: 3, 32: 2, 64: 1}
    corpus = generate_corpus(seed=1, per_class=per_class)
    assert len(corpus) == 2 * (3 + 2 + 1)
    by_label = {"texture": 0, "structure": 0}
    for rec in corpus.records:
        by_label[rec.label] += 1
        assert rec.patch.shape == (3, rec.size, rec.size)
    assert by_label["texture"] == by_label["structure"]


def test_generate_corpus_deterministic():
    a = generate_corpus(seed=2, per_class={16: 2})
    b = generate_corpus(seed=2, per_class={16: 2})
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.patch, rb.patch)


def test_box_blur_preserves_mean_and_range():
    rng = np.random.default_rng(0)
    x = rng.random((3, 24, 24))
    y = box_blur(x, passes=2, k=5)
    assert y.shape == x.shape
    # reflect padding keeps total mass, no border dimming
    assert abs(y.mean() - x.mean()) < 5e-3
    assert np.std(y) < np.std(x)


def test_add_noise_clips():
    rng = np.random.default_rng(1)
    x = np.full((3, 10, 10), 0.98)
    y = add_noise(rng, x, 0.2)
    assert y.max() <= 1.0 and y.min() >= 0.0
    assert not np.array_equal(x, y)


def test_composite_half_noise_layout():
    rng = np.random.default_rng(2)
    img = composite_half_noise(rng, 32)
    left = img[:, :, :16]
    right = img[:, :, 16:]
    assert np.std(left) < 0.01
    assert np.std(right) > 0.1


def test_natural_crop_stays_interior():
    rng = np.random.default_rng(3)
    for _ in range(5):
        img = natural_crop(rng, 48)
        assert img.min() >= 0.04 and img.max() <= 0.96
