import numpy as np
import pytest
import torch

from lfp.core import TRIMAP_BG, TRIMAP_FG, TRIMAP_UNKNOWN, Sample, composite
from lfp.errors import ConfigError, MattingWarning, ParameterError
from lfp.losses import (
    LossConfig,
    alpha_loss,
    composite_loss,
    fb_composite_loss,
    fb_laplacian_loss,
    fb_reconstruction_loss,
    laplacian_loss,
    laplacian_pyramid,
    matting_loss,
    propagating_loss,
    reconstruct_pyramid,
    targets_from_sample,
    weighted_alpha_loss,
)

CODES = np.array([TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG], dtype=np.uint8)


def exact_sample(rng, h=8, w=8):
    fg = rng.random((h, w, 3))
    bg = rng.random((h, w, 3))
    alpha = rng.random((h, w))
    trimap = CODES[rng.integers(0, 3, size=(h, w))]
    trimap[0, 0], trimap[0, 1], trimap[0, 2] = TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG
    return Sample(image=composite(fg, bg, alpha), trimap=trimap,
                  alpha=alpha, fg=fg, bg=bg)


def targets64(sample):
    return targets_from_sample(sample, dtype=torch.float64)


def fd_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar fn() w.r.t. tensor x (mutated in place)."""
    g = torch.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        fp = fn().item()
        flat[i] = orig - eps
        fm = fn().item()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_err(ad, fd):
    denom = torch.maximum(torch.maximum(ad.abs(), fd.abs()),
                          torch.full_like(ad, 1e-8))
    return ((ad - fd).abs() / denom).max().item()


def check_grad(loss_fn, x, tol=1e-4):
    xr = x.clone().requires_grad_(True)
    loss_fn(xr).backward()
    ad = xr.grad.clone()
    fd = fd_grad(lambda: loss_fn(x), x)
    assert max_rel_err(ad, fd) < tol


# -- propagating loss --------------------------------------------------------

def test_propagating_loss_identity_and_arithmetic():
    rng = np.random.default_rng(0)
    gt = torch.from_numpy(rng.random((6, 6)))
    unknown = torch.zeros(6, 6, dtype=torch.bool)
    unknown[2, 2] = unknown[3, 3] = True
    assert propagating_loss(gt, gt, unknown).item() == 0.0
    pred = gt.clone()
    pred[2, 2] += 0.2
    pred[3, 3] -= 0.4
    assert abs(propagating_loss(pred, gt, unknown).item() - 0.3) < 1e-12


def test_propagating_loss_masked_sum_oracle():
    rng = np.random.default_rng(1)
    pred = torch.from_numpy(rng.random((8, 8)))
    gt = torch.from_numpy(rng.random((8, 8)))
    unknown = torch.from_numpy(rng.random((8, 8)) < 0.4)
    want, n = 0.0, 0
    for y in range(8):
        for x in range(8):
            if unknown[y, x]:
                want += abs(pred[y, x].item() - gt[y, x].item())
                n += 1
    assert abs(propagating_loss(pred, gt, unknown).item() - want / n) < 1e-12


def test_propagating_loss_empty_mask_warns_zero():
    x = torch.rand(4, 4, dtype=torch.float64)
    with pytest.warns(MattingWarning):
        out = propagating_loss(x, x + 0.5, torch.zeros(4, 4, dtype=torch.bool))
    assert out.item() == 0.0


# -- weighted alpha loss -----------------------------------------------------

def test_weighted_alpha_small_region_is_plain_mae():
    rng = np.random.default_rng(2)
    a = torch.from_numpy(rng.random((10, 10)))
    gt = torch.from_numpy(rng.random((10, 10)))
    unknown = torch.from_numpy(rng.random((10, 10)) < 0.5)
    got = weighted_alpha_loss(a, gt, unknown, gamma=5.0e4)
    want = (a - gt).abs()[unknown].mean()
    assert torch.allclose(got, want, atol=1e-12)


def test_weighted_alpha_clamp_kicks_in_at_4x_gamma():
    # |U| = 400, gamma = 100 -> weight exactly 2
    a = torch.zeros(20, 20, dtype=torch.float64)
    gt = torch.full((20, 20), 0.25, dtype=torch.float64)
    unknown = torch.ones(20, 20, dtype=torch.bool)
    got = weighted_alpha_loss(a, gt, unknown, gamma=100.0)
    assert abs(got.item() - 2.0 * 0.25) < 1e-12
    assert LossConfig().gamma == 5.0e4


def test_weighted_alpha_gradient():
    rng = np.random.default_rng(3)
    gt = torch.from_numpy(rng.random((8, 8)))
    unknown = torch.from_numpy(rng.random((8, 8)) < 0.6)
    x = torch.from_numpy(rng.random((8, 8)) + 2.0)  # keep |x-gt| away from 0
    check_grad(lambda a: weighted_alpha_loss(a, gt, unknown, 20.0), x)


# -- composite loss ----------------------------------------------------------

def test_composite_loss_zero_at_gt_and_single_pixel():
    rng = np.random.default_rng(4)
    s = exact_sample(rng)
    t = targets64(s)
    a = torch.from_numpy(s.alpha)
    assert composite_loss(a, t.image, t.fg, t.bg, t.unknown).item() < 1e-12

    fg = torch.ones(3, 4, 4, dtype=torch.float64)
    bg = torch.zeros(3, 4, 4, dtype=torch.float64)
    alpha_gt = torch.full((4, 4), 0.5, dtype=torch.float64)
    image = alpha_gt.unsqueeze(0) * fg + (1 - alpha_gt.unsqueeze(0)) * bg
    unknown = torch.zeros(4, 4, dtype=torch.bool)
    unknown[1, 2] = True
    delta = 0.125
    pred = alpha_gt.clone()
    pred[1, 2] += delta
    got = composite_loss(pred, image, fg, bg, unknown)
    assert abs(got.item() - 3 * delta) < 1e-12


def test_composite_loss_recomposition_oracle():
    rng = np.random.default_rng(5)
    s = exact_sample(rng)
    t = targets64(s)
    pred = torch.from_numpy(rng.random((8, 8)))
    got = composite_loss(pred, t.image, t.fg, t.bg, t.unknown).item()
    want, n = 0.0, 0
    for y in range(8):
        for x in range(8):
            if t.unknown[y, x]:
                n += 1
                for c in range(3):
                    r = pred[y, x] * t.fg[c, y, x] + (1 - pred[y, x]) * t.bg[c, y, x]
                    want += abs(r.item() - t.image[c, y, x].item())
    assert abs(got - want / n) < 1e-12


def test_composite_loss_gradient():
    rng = np.random.default_rng(6)
    s = exact_sample(rng)
    t = targets64(s)
    x = torch.from_numpy(rng.random((8, 8)) + 1.5)
    check_grad(lambda a: composite_loss(a, t.image, t.fg, t.bg, t.unknown), x)


# -- laplacian pyramid -------------------------------------------------------

def test_pyramid_constant_input():
    x = torch.full((16, 16), 0.3, dtype=torch.float64)
    levels = laplacian_pyramid(x, 4)
    assert len(levels) == 5
    for band in levels[:-1]:
        assert band.abs().max().item() < 1e-14
    assert torch.allclose(levels[-1], torch.full_like(levels[-1], 0.3), atol=1e-14)


def test_pyramid_reconstruction_roundtrip():
    rng = np.random.default_rng(7)
    for shape in ((16, 16), (3, 20, 28), (1, 1, 10, 14)):
        x = torch.from_numpy(rng.random(shape))
        levels = laplacian_pyramid(x, 3)
        recon = reconstruct_pyramid(levels)
        assert (recon.squeeze() - x.squeeze()).abs().max().item() < 1e-6


def test_pyramid_rejects_too_small_input():
    with pytest.raises(ParameterError):
        laplacian_pyramid(torch.zeros(8, 8), 4)
    assert LossConfig().pyramid_levels == 4


def test_laplacian_loss_identity_and_symmetry():
    rng = np.random.default_rng(8)
    x = torch.from_numpy(rng.random((16, 16)))
    y = torch.from_numpy(rng.random((16, 16)))
    assert laplacian_loss(x, x, 4).item() == 0.0
    assert abs(laplacian_loss(x, y, 4).item() - laplacian_loss(y, x, 4).item()) < 1e-14


def test_laplacian_loss_constant_offset_hits_residual_only():
    rng = np.random.default_rng(9)
    x = torch.from_numpy(rng.random((16, 16)))
    d = 0.21
    y = x + d
    j = 4
    px, py = laplacian_pyramid(x, j), laplacian_pyramid(y, j)
    for a, b in zip(px[:-1], py[:-1]):
        # band-pass levels cancel to machine precision
        assert (a - b).abs().max().item() < 1e-14
    assert torch.allclose(py[-1] - px[-1], torch.full_like(px[-1], d), atol=1e-12)
    assert abs(laplacian_loss(x, y, j).item() - (2 ** j) * d) < 1e-10


def test_laplacian_loss_gradient():
    rng = np.random.default_rng(10)
    y = torch.from_numpy(rng.random((8, 8)))
    x = torch.from_numpy(rng.random((8, 8)) + 1.5)
    check_grad(lambda a: laplacian_loss(a, y, 3), x)


# -- alpha loss and fb losses ------------------------------------------------

def small_cfg():
    return LossConfig(pyramid_levels=3)


def test_alpha_loss_zero_at_gt_and_component_sum():
    rng = np.random.default_rng(11)
    s = exact_sample(rng)
    t = targets64(s)
    total, parts = alpha_loss(torch.from_numpy(s.alpha), t, small_cfg())
    assert total.item() < 1e-12

    pred = torch.from_numpy(rng.random((8, 8)))
    total, parts = alpha_loss(pred, t, small_cfg())
    comp_sum = parts["alpha_weighted"] + parts["alpha_composite"] + parts["alpha_laplacian"]
    assert total.item() == comp_sum.item()


def test_alpha_loss_gradient():
    rng = np.random.default_rng(12)
    s = exact_sample(rng)
    t = targets64(s)
    x = torch.from_numpy(rng.random((8, 8)) + 1.5)
    check_grad(lambda a: alpha_loss(a, t, small_cfg())[0], x)


def test_fb_reconstruction_identity_and_single_pixel():
    rng = np.random.default_rng(13)
    s = exact_sample(rng)
    t = targets64(s)
    assert fb_reconstruction_loss(t.fg, t.bg, t).item() == 0.0

    t2 = targets_from_sample(exact_sample(rng), dtype=torch.float64)
    t2.fg_or_unknown = torch.zeros(8, 8, dtype=torch.bool)
    t2.fg_or_unknown[2, 3] = True
    t2.bg_or_unknown = torch.zeros(8, 8, dtype=torch.bool)
    fg = t2.fg.clone()
    fg[0, 2, 3] += 0.1
    with pytest.warns(MattingWarning):
        got = fb_reconstruction_loss(fg, t2.bg, t2)
    assert abs(got.item() - 0.1) < 1e-12


def test_fb_reconstruction_masked_sum_oracle():
    rng = np.random.default_rng(14)
    s = exact_sample(rng)
    t = targets64(s)
    fg = torch.from_numpy(rng.random((3, 8, 8)))
    bg = torch.from_numpy(rng.random((3, 8, 8)))
    got = fb_reconstruction_loss(fg, bg, t).item()
    want = 0.0
    for mask, pred, gt in ((t.fg_or_unknown, fg, t.fg), (t.bg_or_unknown, bg, t.bg)):
        acc, n = 0.0, 0
        for y in range(8):
            for x in range(8):
                if mask[y, x]:
                    n += 1
                    acc += sum(abs(pred[c, y, x].item() - gt[c, y, x].item()) for c in range(3))
        want += acc / n
    assert abs(got - want) < 1e-12


def test_fb_composite_identity_endpoint_and_oracle():
    rng = np.random.default_rng(15)
    s = exact_sample(rng)
    t = targets64(s)
    assert fb_composite_loss(t.fg, t.bg, t).item() < 1e-12

    # alpha_gt = 1 at the only unknown pixel -> contribution |F - I| there
    t1 = targets64(exact_sample(rng))
    t1.alpha = torch.ones(8, 8, dtype=torch.float64)
    t1.unknown = torch.zeros(8, 8, dtype=torch.bool)
    t1.unknown[4, 4] = True
    fg = torch.from_numpy(rng.random((3, 8, 8)))
    bg = torch.from_numpy(rng.random((3, 8, 8)))
    want = (fg[:, 4, 4] - t1.image[:, 4, 4]).abs().sum()
    assert torch.allclose(fb_composite_loss(fg, bg, t1), want, atol=1e-12)

    got = fb_composite_loss(fg, bg, t).item()
    alpha = t.alpha.unsqueeze(0)
    per_pixel = ((alpha * fg + (1 - alpha) * bg) - t.image).abs().sum(0)
    assert abs(got - per_pixel[t.unknown].mean().item()) < 1e-12


def test_fb_laplacian_identity_and_sum():
    rng = np.random.default_rng(16)
    s = exact_sample(rng)
    t = targets64(s)
    assert fb_laplacian_loss(t.fg, t.bg, t, 3).item() == 0.0
    fg = torch.from_numpy(rng.random((3, 8, 8)))
    bg = torch.from_numpy(rng.random((3, 8, 8)))
    got = fb_laplacian_loss(fg, bg, t, 3)
    want = laplacian_loss(fg, t.fg, 3) + laplacian_loss(bg, t.bg, 3)
    assert got.item() == want.item()


def test_fb_losses_gradients():
    rng = np.random.default_rng(17)
    s = exact_sample(rng)
    t = targets64(s)
    fg = torch.from_numpy(rng.random((3, 8, 8)) + 1.5)
    bg = torch.from_numpy(rng.random((3, 8, 8)) - 2.5)
    check_grad(lambda f: fb_reconstruction_loss(f, bg, t), fg)
    check_grad(lambda b: fb_reconstruction_loss(fg, b, t), bg)
    check_grad(lambda f: fb_composite_loss(f, bg, t), fg)
    check_grad(lambda f: fb_laplacian_loss(f, bg, t, 3), fg)


# -- full matting loss -------------------------------------------------------

def test_matting_loss_zero_at_perfect_prediction():
    rng = np.random.default_rng(18)
    s = exact_sample(rng)
    t = targets64(s)
    total, parts = matting_loss(torch.from_numpy(s.alpha), t.fg, t.bg, t, small_cfg())
    assert total.item() < 1e-12
    assert all(v.item() < 1e-12 for v in parts.values())


def test_matting_loss_lambda_fb_zero_reduces_to_alpha_loss():
    rng = np.random.default_rng(19)
    s = exact_sample(rng)
    t = targets64(s)
    pred = torch.from_numpy(rng.random((8, 8)))
    fg = torch.from_numpy(rng.random((3, 8, 8)))
    bg = torch.from_numpy(rng.random((3, 8, 8)))
    cfg = LossConfig(lambda_fb=0.0, pyramid_levels=3)
    total, _ = matting_loss(pred, fg, bg, t, cfg)
    assert total.item() == alpha_loss(pred, t, cfg)[0].item()


def test_matting_loss_component_identities_exact():
    rng = np.random.default_rng(20)
    s = exact_sample(rng)
    t = targets64(s)
    pred = torch.from_numpy(rng.random((8, 8)))
    fg = torch.from_numpy(rng.random((3, 8, 8)))
    bg = torch.from_numpy(rng.random((3, 8, 8)))
    cfg = LossConfig(pyramid_levels=3)
    total, p = matting_loss(pred, fg, bg, t, cfg)
    assert p["fb_total"].item() == (p["fb_reconstruction"] + p["fb_composite"]
                                    + p["fb_laplacian"]).item()
    assert total.item() == (cfg.lambda_alpha * p["alpha_total"]
                            + cfg.lambda_fb * p["fb_total"]).item()


def test_matting_loss_full_gradient():
    rng = np.random.default_rng(21)
    s = exact_sample(rng)
    t = targets64(s)
    cfg = small_cfg()
    alpha = torch.from_numpy(rng.random((8, 8)) + 1.5)
    fg = torch.from_numpy(rng.random((3, 8, 8)) + 1.5)
    bg = torch.from_numpy(rng.random((3, 8, 8)) - 2.0)
    check_grad(lambda a: matting_loss(a, fg, bg, t, cfg)[0], alpha)
    check_grad(lambda f: matting_loss(alpha, f, bg, t, cfg)[0], fg)
    check_grad(lambda b: matting_loss(alpha, fg, b, t, cfg)[0], bg)


def test_l1_terms_scale_linearly_in_residual():
    rng = np.random.default_rng(22)
    s = exact_sample(rng)
    t = targets64(s)
    resid_a = torch.from_numpy(rng.random((8, 8)))
    resid_f = torch.from_numpy(rng.random((3, 8, 8)))
    base_w = weighted_alpha_loss(t.alpha + resid_a, t.alpha, t.unknown, 1e9).item()
    base_r = fb_reconstruction_loss(t.fg + resid_f, t.bg, t).item()
    for k in (0.5, 2.0):
        got_w = weighted_alpha_loss(t.alpha + k * resid_a, t.alpha, t.unknown, 1e9).item()
        got_r = fb_reconstruction_loss(t.fg + k * resid_f, t.bg, t).item()
        assert abs(got_w - k * base_w) < 1e-10
        assert abs(got_r - k * base_r) < 1e-10


def test_loss_config_validation():
    with pytest.raises(ConfigError):
        LossConfig(lambda_alpha=-1)
    with pytest.raises(ConfigError):
        LossConfig(gamma=0)
    with pytest.raises(ConfigError):
        LossConfig(composite_region="everywhere")
