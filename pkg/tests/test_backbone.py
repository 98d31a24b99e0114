import numpy as np
import pytest

from adists.archive import WeightArchive
from adists.backbone import (
    Backbone,
    BackboneConfig,
    extract_pyramid,
    receptive_field,
    renormalize_filters,
    smooth_random_image,
    synthetic_archive,
)


def test_archive_entry_names(archive):
    names = set(archive.names())
    # thirteen conv layers: 2 + 2 + 3 + 3 + 3
    per_stage = {1: 2, 2: 2, 3: 3, 4: 3, 5: 3}
    for stage, layers in per_stage.items():
        for layer in range(1, layers + 1):
            assert f"conv{stage}_{layer}.weight" in names
            assert f"conv{stage}_{layer}.bias" in names
    assert len([n for n in names if n.endswith(".weight")]) == 13
    assert {"input.mean", "input.std", "calib.l99"} <= names


def test_synthetic_archive_deterministic():
    a = synthetic_archive(seed=3, calibrate=False)
    b = synthetic_archive(seed=3, calibrate=False)
    assert a.to_bytes() == b.to_bytes()
    c = synthetic_archive(seed=4, calibrate=False)
    assert a.to_bytes() != c.to_bytes()


def test_calibration_ranges(archive):
    cal = archive["calib.l99"]
    assert cal.shape == (6,)
    assert cal[0] == 1.0
    assert np.all(cal[1:] > 0)


def test_renormalize_filters_unit_norm():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(8, 4, 3, 3)) * 5.0
    b = rng.normal(size=8) * 3.0
    raw = WeightArchive().add("conv1_1.weight", w).add("conv1_1.bias", b)
    out = renormalize_filters(raw)
    wn = out["conv1_1.weight"].astype(np.float64)
    bn = out["conv1_1.bias"].astype(np.float64)
    norms = np.sqrt((wn ** 2).sum(axis=(1, 2, 3)))
    assert np.max(np.abs(norms - 1.0)) < 1e-6
    # bias scales by the same factor, so pre-activation signs are preserved
    orig = np.sqrt((w.astype(np.float32).astype(np.float64) ** 2).sum(axis=(1, 2, 3)))
    assert np.max(np.abs(bn - b.astype(np.float32) / orig)) < 1e-6


def test_renormalize_passes_other_entries_through():
    raw = WeightArchive().add("calib.l99", np.ones(6)).add("other.bias", np.ones(2))
    out = renormalize_filters(raw)
    assert np.array_equal(out["calib.l99"], np.ones(6, dtype=np.float32))
    assert np.array_equal(out["other.bias"], np.ones(2, dtype=np.float32))


def test_renormalize_rejects_zero_filter():
    raw = WeightArchive()
    raw.add("conv1_1.weight", np.zeros((2, 3, 3, 3)))
    raw.add("conv1_1.bias", np.zeros(2))
    with pytest.raises(ValueError, match="zero-norm"):
        renormalize_filters(raw)


def test_pyramid_shapes(backbone):
    rng = np.random.default_rng(1)
    x = rng.random((3, 48, 48))
    pyr = backbone.extract(x)
    assert len(pyr) == 6
    assert pyr.channel_counts == (3, 64, 128, 256, 512, 512)
    assert sum(pyr.channel_counts) == 1475
    sides = [np.asarray(pyr[i]).shape[1] for i in range(6)]
    assert sides == [48, 48, 24, 12, 6, 3]


def test_pyramid_on_rectangular_input(backbone):
    rng = np.random.default_rng(2)
    x = rng.random((3, 40, 56))
    pyr = backbone.extract(x)
    assert np.asarray(pyr[0]).shape == (3, 40, 56)
    assert np.asarray(pyr[2]).shape == (128, 20, 28)
    assert np.asarray(pyr[5]).shape == (512, 3, 4)


def test_pyramid_ranges_match_calibration(backbone, archive):
    rng = np.random.default_rng(3)
    pyr = backbone.extract(rng.random((3, 32, 32)))
    assert pyr.ranges[0] == 1.0
    assert np.allclose(pyr.ranges[1:], archive["calib.l99"].astype(np.float64)[1:])


def test_extract_truncates(backbone):
    rng = np.random.default_rng(4)
    x = rng.random((3, 32, 32))
    pyr = extract_pyramid(x, backbone, last_stage=2)
    assert len(pyr) == 3
    full = backbone.extract(x)
    assert np.allclose(np.asarray(pyr[2]), np.asarray(full[2]))


def test_few_dead_units(backbone):
    # the generator places biases so probe-scale inputs stay active
    rng = np.random.default_rng(5)
    x = rng.uniform(0.0, 1.0, (3, 48, 48))
    pyr = backbone.extract(x)
    for i in range(1, 6):
        feat = np.asarray(pyr[i])
        dead = np.mean(feat.max(axis=(1, 2)) == 0.0)
        assert dead < 0.05, f"stage {i}: {dead:.0%} dead channels"


def test_features_nonnegative_after_relu(backbone):
    rng = np.random.default_rng(6)
    pyr = backbone.extract(rng.random((3, 32, 32)))
    for i in range(1, 6):
        assert np.asarray(pyr[i]).min() >= 0.0


def test_extract_validates_input(backbone):
    with pytest.raises(ValueError):
        backbone.extract(np.zeros((1, 32, 32)))
    with pytest.raises(ValueError):
        backbone.extract(np.zeros((3, 16, 16)))  # too small for 5 halvings
    with pytest.raises(ValueError):
        backbone.extract(np.zeros((3, 32, 32)), last_stage=0)
    bad = np.zeros((3, 32, 32))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        backbone.extract(bad)


def test_backbone_rejects_incomplete_archive():
    a = WeightArchive()
    a.add("conv1_1.weight", np.ones((64, 3, 3, 3), dtype=np.float32))
    a.add("conv1_1.bias", np.zeros(64, dtype=np.float32))
    with pytest.raises(KeyError, match="conv1_2"):
        Backbone(a)


def test_backbone_rejects_wrong_shapes(archive):
    busted = WeightArchive()
    for name, arr in archive.items():
        if name == "conv1_1.weight":
            busted.add(name, arr[:, :2])  # wrong in-channels
        else:
            busted.add(name, arr)
    with pytest.raises(ValueError, match="conv1_1"):
        Backbone(busted)


def test_float32_backbone_close_to_float64(archive):
    rng = np.random.default_rng(8)
    x = rng.random((3, 32, 32))
    hi = Backbone(archive).extract(x)
    lo = Backbone(archive, dtype=np.float32).extract(x)
    for i in range(6):
        a, b = np.asarray(hi[i]), np.asarray(lo[i])
        denom = max(1.0, float(np.abs(a).max()))
        assert np.max(np.abs(a - b)) / denom < 1e-4


def test_receptive_field_grows():
    supports = []
    for stage in range(1, 6):
        support, jump = receptive_field(stage)
        assert jump == 2 ** (stage - 1)
        supports.append(support)
    assert all(a < b for a, b in zip(supports, supports[1:]))
    with pytest.raises(ValueError):
        receptive_field(0)


def test_smooth_random_image_range():
    rng = np.random.default_rng(7)
    img = smooth_random_image(rng, 48)
    assert img.shape == (3, 48, 48)
    assert img.min() >= 0.0 and img.max() <= 1.0
    # smoothness: neighboring pixels stay close
    d = np.abs(np.diff(img, axis=2)).mean()
    assert d < 0.08


def test_config_validation():
    assert BackboneConfig().channel_counts == (3, 64, 128, 256, 512, 512)
    with pytest.raises(ValueError):
        BackboneConfig(stage_specs=((64, 2),))
