import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfp.core import TRIMAP_BG, TRIMAP_FG, TRIMAP_UNKNOWN, composite
from lfp.datagen import (
    ALPHA_EPS,
    AugmentConfig,
    BgAsset,
    FgAsset,
    augment,
    fg_regions_to_unknown,
    make_training_sample,
    synth_trimap,
    synthetic_background,
    synthetic_foreground,
)
from lfp.errors import ConfigError, DataError, ParameterError

from oracles import erode_oracle

TINY_AUG = AugmentConfig(crop_sizes=(64,), trimap_kernel_range=(3, 9))


def test_synth_trimap_constant_alpha_is_all_fg():
    t = synth_trimap(np.ones((16, 16)), 5, 7)
    assert (t == TRIMAP_FG).all()
    t = synth_trimap(np.zeros((16, 16)), 5, 7)
    assert (t == TRIMAP_BG).all()


def test_synth_trimap_identity_kernels_on_hard_alpha():
    rng = np.random.default_rng(0)
    alpha = (rng.random((20, 20)) < 0.5).astype(np.float64)
    t = synth_trimap(alpha, 1, 1)
    assert not (t == TRIMAP_UNKNOWN).any()
    np.testing.assert_array_equal(t == TRIMAP_FG, alpha == 1.0)


def test_synth_trimap_disc_vs_morphology_oracle():
    yy, xx = np.mgrid[0:32, 0:32]
    alpha = (np.hypot(yy - 16, xx - 16) <= 8).astype(np.float64)
    t = synth_trimap(alpha, 5, 5)
    fg = erode_oracle((alpha >= 1 - ALPHA_EPS).astype(np.uint8), 5)
    bg = erode_oracle((alpha <= ALPHA_EPS).astype(np.uint8), 5)
    want = np.full((32, 32), TRIMAP_UNKNOWN, np.uint8)
    want[fg == 1] = TRIMAP_FG
    want[bg == 1] = TRIMAP_BG
    np.testing.assert_array_equal(t, want)


def test_synth_trimap_rejects_bad_kernels():
    for ek, dk in ((2, 3), (3, 4), (0, 3), (3, -1)):
        with pytest.raises(ParameterError):
            synth_trimap(np.ones((8, 8)), ek, dk)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 3, 5]), st.sampled_from([5, 7, 9]))
def test_synth_trimap_fg_shrinks_with_kernel(seed, k1, k2):
    rng = np.random.default_rng(seed)
    alpha = np.clip(rng.random((24, 24)) * 1.4 - 0.2, 0, 1)
    fg1 = synth_trimap(alpha, k1, 3) == TRIMAP_FG
    fg2 = synth_trimap(alpha, k2, 3) == TRIMAP_FG
    assert (fg2 <= fg1).all()
    bg1 = synth_trimap(alpha, 3, k1) == TRIMAP_BG
    bg2 = synth_trimap(alpha, 3, k2) == TRIMAP_BG
    assert (bg2 <= bg1).all()


def test_fg_to_unknown_endpoint_probs():
    rng = np.random.default_rng(1)
    t = synth_trimap((np.arange(64).reshape(8, 8) > 40).astype(float), 1, 1)
    np.testing.assert_array_equal(fg_regions_to_unknown(t, 0.0, rng), t)
    flipped = fg_regions_to_unknown(t, 1.0, rng)
    assert not (flipped == TRIMAP_FG).any()
    assert ((t == TRIMAP_FG) <= (flipped == TRIMAP_UNKNOWN)).all()


def test_fg_to_unknown_frequency_monte_carlo():
    rng = np.random.default_rng(123)
    t = np.full((4, 4), TRIMAP_FG, np.uint8)
    flips = sum(
        not (fg_regions_to_unknown(t, 0.5, rng) == TRIMAP_FG).any()
        for _ in range(1000)
    )
    assert abs(flips / 1000 - 0.5) < 0.05


def _asset(rng, size=48):
    return synthetic_foreground(rng, size)


def test_augment_identity_draw_is_noop():
    rng = np.random.default_rng(2)
    asset = _asset(rng)
    out = augment(asset, np.random.default_rng(0), TINY_AUG.identity())
    np.testing.assert_allclose(out.color, asset.color, atol=1e-6)
    np.testing.assert_allclose(out.alpha, asset.alpha, atol=1e-6)


def test_augment_grayscale_makes_channels_equal():
    rng = np.random.default_rng(3)
    asset = _asset(rng)
    cfg = TINY_AUG.identity()
    cfg.grayscale_prob = 1.0
    out = augment(asset, np.random.default_rng(0), cfg)
    np.testing.assert_allclose(out.color[..., 0], out.color[..., 1], atol=1e-12)
    np.testing.assert_allclose(out.color[..., 0], out.color[..., 2], atol=1e-12)


def test_augment_gamma_on_constant_image():
    cfg = TINY_AUG.identity()
    cfg.gamma_range = (2.0, 2.0)
    asset = FgAsset(color=np.full((16, 16, 3), 0.5), alpha=np.ones((16, 16)))
    out = augment(asset, np.random.default_rng(0), cfg)
    np.testing.assert_allclose(out.color, 0.25, atol=1e-12)


def test_augment_preserves_range_and_alpha_geometry():
    rng = np.random.default_rng(4)
    for seed in range(5):
        out = augment(_asset(rng), np.random.default_rng(seed), TINY_AUG)
        assert out.color.min() >= 0 and out.color.max() <= 1
        assert out.alpha.min() >= 0 and out.alpha.max() <= 1
        assert out.color.shape[:2] == out.alpha.shape


def test_make_training_sample_geometry_and_roundtrip():
    rng = np.random.default_rng(5)
    fg = synthetic_foreground(rng, 96)
    bg = synthetic_background(rng, 160)
    sample, context, ctx_alpha = make_training_sample(fg, bg, np.random.default_rng(7), TINY_AUG)
    s = sample.alpha.shape[0]
    assert s == 64
    assert context.image.shape == (2 * s, 2 * s, 3)
    assert ctx_alpha.shape == (2 * s, 2 * s)

    # inner patch is the exact central window of the context patch
    c0 = s // 2
    np.testing.assert_array_equal(context.image[c0:c0 + s, c0:c0 + s], sample.image)
    np.testing.assert_array_equal(context.trimap[c0:c0 + s, c0:c0 + s], sample.trimap)
    np.testing.assert_array_equal(ctx_alpha[c0:c0 + s, c0:c0 + s], sample.alpha)

    # compositing round trip
    recon = composite(sample.fg, sample.bg, sample.alpha)
    np.testing.assert_allclose(recon, sample.image, atol=1e-6)


def test_make_training_sample_trimap_label_consistency():
    rng = np.random.default_rng(6)
    for seed in range(4):
        sample, _, _ = make_training_sample(
            synthetic_foreground(rng, 96), synthetic_background(rng, 160),
            np.random.default_rng(seed), TINY_AUG)
        fg_px = sample.trimap == TRIMAP_FG
        bg_px = sample.trimap == TRIMAP_BG
        assert (sample.alpha[fg_px] >= 1 - ALPHA_EPS).all()
        assert (sample.alpha[bg_px] <= ALPHA_EPS).all()


def test_make_training_sample_corner_crop_pad_oracle():
    # blob pinned to the top-left corner forces the crop there
    yy, xx = np.mgrid[0:160, 0:160]
    alpha = np.clip((20.0 - np.hypot(yy, xx)) / 6.0, 0, 1)
    fg = FgAsset(color=np.full((160, 160, 3), 0.8), alpha=alpha)
    bg = BgAsset(image=np.full((160, 160, 3), 0.1))
    cfg = TINY_AUG.identity()
    cfg.fg_to_unknown_prob = 0.0
    sample, context, _ = make_training_sample(fg, bg, np.random.default_rng(3), cfg)
    g = context.geometry
    assert (g.inner_x, g.inner_y) == (0, 0)
    s = g.inner_side
    # oracle: pad widths recomputed from window offsets vs image bounds
    want = (max(0, -(g.inner_x - s // 2)), max(0, -(g.inner_y - s // 2)),
            max(0, g.inner_x + 3 * s // 2 - g.image_w),
            max(0, g.inner_y + 3 * s // 2 - g.image_h))
    assert g.pad == want == (s // 2, s // 2, 0, 0)


def test_make_training_sample_deterministic_per_seed():
    rng = np.random.default_rng(8)
    fg = synthetic_foreground(rng, 96)
    bg = synthetic_background(rng, 160)
    a1 = make_training_sample(fg, bg, np.random.default_rng(42), TINY_AUG)
    a2 = make_training_sample(fg, bg, np.random.default_rng(42), TINY_AUG)
    np.testing.assert_array_equal(a1[0].image, a2[0].image)
    np.testing.assert_array_equal(a1[0].trimap, a2[0].trimap)
    np.testing.assert_array_equal(a1[1].image, a2[1].image)
    np.testing.assert_array_equal(a1[2], a2[2])


def test_make_training_sample_rejects_empty_fg():
    fg = FgAsset(color=np.zeros((32, 32, 3)), alpha=np.zeros((32, 32)))
    bg = BgAsset(image=np.zeros((64, 64, 3)))
    with pytest.raises(DataError):
        make_training_sample(fg, bg, np.random.default_rng(0), TINY_AUG)


def test_folder_assets_layouts(tmp_path):
    from lfp.core import save_alpha, save_image
    from lfp.datagen import FolderAssets, generate_samples

    rng = np.random.default_rng(9)
    root = tmp_path / "assets"
    for sub in ("fg", "alpha", "bg"):
        (root / sub).mkdir(parents=True)
    for name in ("a", "b"):
        asset = synthetic_foreground(rng, 72)
        save_image(root / "fg" / f"{name}.png", asset.color)
        save_alpha(root / "alpha" / f"{name}.png", asset.alpha)
    save_image(root / "bg" / "back.png", synthetic_background(rng, 144).image)

    assets = FolderAssets(root)
    assert len(assets) == 2 and len(assets.backgrounds) == 1
    fg = assets.load_fg(0)
    assert fg.color.shape[:2] == fg.alpha.shape

    out = tmp_path / "gen"
    records = generate_samples(out, 2, TINY_AUG, assets=assets, seed=0)
    assert len(records) == 2
    assert (out / "000001_trimap.png").exists()

    # manifest pins an explicit subset
    import json

    (root / "manifest.json").write_text(json.dumps(
        {"pairs": [{"fg": "b.png", "alpha": "b.png"}], "backgrounds": ["back.png"]}))
    assert len(FolderAssets(root)) == 1

    with pytest.raises(DataError):
        FolderAssets(tmp_path / "nope")


def test_augment_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(crop_sizes=(63,))
    with pytest.raises(ConfigError):
        AugmentConfig(trimap_kernel_range=(0, 5))
    with pytest.raises(ConfigError):
        AugmentConfig(trimap_kernel_range=(7, 5))
    with pytest.raises(ConfigError):
        AugmentConfig(fg_to_unknown_prob=1.5)
