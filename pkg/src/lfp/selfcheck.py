"""Property/oracle self-test suite behind `lfp check`.

Each check returns a CheckResult whose detail string is deterministic
given the configured seed, so two identically-seeded runs write
byte-identical logs (timings go to stdout only, never into the log).
"""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .core import TRIMAP_BG, TRIMAP_FG, TRIMAP_UNKNOWN, composite
from .cspp import CsppConfig
from .datagen import make_training_sample, synthetic_background, synthetic_foreground
from .inference import InferenceConfig, run_tiled
from .kernels import edt_sq
from .losses import (
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
from .metrics import evaluate as evaluate_metrics
from .model import ContextMattingNet, NetworkTileModel, to_network_input
from .propagating import PropagatingConfig
from .training import (
    Checkpoint,
    TrainConfig,
    enable_determinism,
    initialize_parameters,
    parameter_hashes,
    synthetic_training_set,
    train_three_stage,
)

CODES = np.array([TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG], dtype=np.uint8)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    @property
    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crashed check is a failed check
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name=name, passed=passed, detail=detail,
                       seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 1. Loss gradient suite.
# ---------------------------------------------------------------------------

def _fd_grad(fn, x, eps=1e-6):
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


def _grad_rel_err(loss_fn, x):
    xr = x.clone().requires_grad_(True)
    loss_fn(xr).backward()
    ad = xr.grad
    fd = _fd_grad(lambda: loss_fn(x), x)
    denom = torch.maximum(torch.maximum(ad.abs(), fd.abs()), torch.full_like(ad, 1e-8))
    return ((ad - fd).abs() / denom).max().item()


def check_loss_gradients():
    rng = np.random.default_rng(0)
    from .core import Sample

    fg = rng.random((8, 8, 3))
    bg = rng.random((8, 8, 3))
    alpha_gt = rng.random((8, 8))
    trimap = CODES[rng.integers(0, 3, (8, 8))]
    trimap[0, :3] = (TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG)
    sample = Sample(image=composite(fg, bg, alpha_gt), trimap=trimap,
                    alpha=alpha_gt, fg=fg, bg=bg)
    t = targets_from_sample(sample, torch.float64)
    cfg = LossConfig(pyramid_levels=3)  # 8 px = 2^3, the deepest pyramid there

    alpha = torch.from_numpy(rng.random((8, 8)) + 1.5)
    fgp = torch.from_numpy(rng.random((3, 8, 8)) + 1.5)
    bgp = torch.from_numpy(rng.random((3, 8, 8)) - 2.0)
    gt = torch.from_numpy(rng.random((8, 8)))
    unknown = t.unknown

    cases = {
        "propagating": (lambda a: propagating_loss(a, gt, unknown), alpha),
        "weighted_alpha": (lambda a: weighted_alpha_loss(a, t.alpha, unknown, 20.0), alpha),
        "composite": (lambda a: composite_loss(a, t.image, t.fg, t.bg, unknown), alpha),
        "laplacian": (lambda a: laplacian_loss(a, t.alpha, 3), alpha),
        "alpha_total": (lambda a: alpha_loss(a, t, cfg)[0], alpha),
        "fb_reconstruction": (lambda f: fb_reconstruction_loss(f, bgp, t), fgp),
        "fb_composite": (lambda f: fb_composite_loss(f, bgp, t), fgp),
        "fb_laplacian": (lambda f: fb_laplacian_loss(f, bgp, t, 3), fgp),
        "matting_total_alpha": (lambda a: matting_loss(a, fgp, bgp, t, cfg)[0], alpha),
        "matting_total_fg": (lambda f: matting_loss(alpha, f, bgp, t, cfg)[0], fgp),
        "matting_total_bg": (lambda b: matting_loss(alpha, fgp, b, t, cfg)[0], bgp),
    }
    worst_name, worst = "", 0.0
    for name, (fn, x) in cases.items():
        err = _grad_rel_err(fn, x)
        if err > worst:
            worst_name, worst = name, err
    ok = worst < 1e-4
    return ok, f"max rel err {worst:.3e} ({worst_name}) over {len(cases)} losses, tol 1e-4"


# ---------------------------------------------------------------------------
# 2. Long-range propagation.
# ---------------------------------------------------------------------------

def conv_path_reach(cfg: PropagatingConfig) -> int:
    """Conservative influence radius (context px) of the conv-only path
    from an input pixel to the tapped decoder features."""
    f = cfg.input_downsample_factor
    reach = f  # bicubic kernel support
    stride = f
    reach += stride  # stem 3x3
    stride *= 2
    reach += stride  # max pool 3x3
    stride *= 2
    for st, dil, blocks in zip(cfg.stage_strides, cfg.stage_dilations, cfg.blocks_per_stage):
        for b in range(blocks):
            for _ in range(cfg.convs_per_block):
                reach += stride * dil
            if b == 0:
                stride *= st
    for _ in range(cfg.feature_tap_level + 1):
        reach += stride  # decoder conv
        reach += stride  # bilinear 2x support
        stride //= 2
    return reach


def _rf_probe_cfg(variant: str) -> PropagatingConfig:
    return PropagatingConfig(
        stem_width=8, stage_widths=(8, 8, 8, 8), blocks_per_stage=(1, 1, 1, 1),
        convs_per_block=1, stage_dilations=(1, 1, 1, 1),
        norm="none", activation="none", weight_standardization=False,
        bottleneck=CsppConfig(variant=variant, grids=(1, 2), aspp_rates=(1, 2),
                              fuse_channels=8, norm="none", activation="none",
                              weight_standardization=False),
        decoder_widths=(8, 8, 8, 8))


def _center_output_delta(net, ctx_img, ctx_tri, inner_img, inner_tri):
    inner = to_network_input(inner_img, inner_tri, torch.float64)
    with torch.no_grad():
        base, _ = net(inner, to_network_input(ctx_img, ctx_tri, torch.float64))
        poked_img = ctx_img.copy()
        poked_img[0, 0] = 25.0
        poked, _ = net(inner, to_network_input(poked_img, ctx_tri, torch.float64))
    c = inner_tri.shape[0] // 2
    delta = 0.0
    for field in ("alpha", "fg", "bg"):
        a = getattr(base, field)[0, :, c, c]
        b = getattr(poked, field)[0, :, c, c]
        delta = max(delta, (a - b).abs().max().item())
    return delta


def check_long_range_propagation(app_cfg):
    rng = np.random.default_rng(1)

    def scene(side):
        img = rng.random((side, side, 3))
        tri = CODES[rng.integers(0, 3, (side, side))]
        return img, tri

    # (a) stock tiny-preset network, context 128: cspp must reach the center
    torch.manual_seed(0)
    tiny = ContextMattingNet(replace(app_cfg.propagating,
                                     bottleneck=replace(app_cfg.propagating.bottleneck,
                                                        variant="cspp")),
                             app_cfg.matting).double()
    initialize_parameters(tiny, 0)
    ctx_img, ctx_tri = scene(128)
    inner_img = ctx_img[32:96, 32:96]
    inner_tri = ctx_tri[32:96, 32:96]
    tiny_delta = _center_output_delta(tiny, ctx_img, ctx_tri, inner_img, inner_tri)

    # (b) locality-probe configuration (conv path provably short): the
    # corner pixel must move the center with cspp and not at all without.
    # Only the propagating branch is stripped of norm/activation; the
    # matting branch keeps its standard blocks, since an unperturbed tap
    # crop leaves it bitwise identical regardless of internals.
    ctx_img2, ctx_tri2 = scene(512)
    inner_img2 = ctx_img2[128:384, 128:384]
    inner_tri2 = ctx_tri2[128:384, 128:384]
    deltas = {}
    for variant in ("cspp", "none"):
        pcfg = _rf_probe_cfg(variant)
        reach = conv_path_reach(pcfg)
        if variant == "none" and reach >= 128:
            return False, f"probe conv path reach {reach} px not < 128 px separation"
        torch.manual_seed(7)
        mat = replace(app_cfg.matting, context_channels=8)
        net = ContextMattingNet(pcfg, mat).double()
        initialize_parameters(net, 7)
        deltas[variant] = _center_output_delta(net, ctx_img2, ctx_tri2,
                                               inner_img2, inner_tri2)
    ok = tiny_delta > 1e-9 and deltas["cspp"] > 1e-9 and deltas["none"] == 0.0
    return ok, (f"tiny cspp delta {tiny_delta:.3e} (>1e-9), probe cspp "
                f"{deltas['cspp']:.3e} (>1e-9), probe none {deltas['none']:.1e} (==0)")


# ---------------------------------------------------------------------------
# 3. Crop-and-stitch exactness.
# ---------------------------------------------------------------------------

class _BlurTileModel:
    """Translation-equivariant dummy: 3x3 box blur of the channel mean."""

    def predict_tile(self, inner_image, inner_trimap, context_image, context_trimap):
        plane = context_image.mean(axis=2)
        blurred = np.zeros_like(plane)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                blurred += np.roll(np.roll(plane, dy, 0), dx, 1)
        blurred /= 9.0
        s = inner_trimap.shape[0]
        c0 = s // 2
        return blurred[c0:c0 + s, c0:c0 + s], inner_image, inner_image


def check_crop_stitch():
    from scipy import ndimage

    rng = np.random.default_rng(2)
    cfg = InferenceConfig(inner_side=64, skip_known_tiles=False)
    model = _BlurTileModel()
    worst = 0.0
    for _ in range(20):
        h = int(rng.integers(40, 220))
        w = int(rng.integers(40, 220))
        image = rng.random((h, w, 3))
        trimap = CODES[rng.integers(0, 3, (h, w))]
        got, _, _ = run_tiled(image, trimap, model, cfg, clamp=False)
        want = ndimage.uniform_filter(image.mean(axis=2), size=3, mode="mirror")
        worst = max(worst, np.abs(got - want).max())
    return worst < 1e-6, f"max |tiled - whole| {worst:.3e} over 20 sizes, tol 1e-6"


# ---------------------------------------------------------------------------
# 4. Distance analyzer.
# ---------------------------------------------------------------------------

def check_distance_transform():
    from .analysis import dataset_distance_stats

    rng = np.random.default_rng(3)
    exact = 0
    for _ in range(50):
        tri = CODES[rng.integers(0, 3, (32, 32))]
        tri[0, 0], tri[-1, -1] = TRIMAP_FG, TRIMAP_BG
        for code in (TRIMAP_FG, TRIMAP_BG):
            mask = (tri == code).astype(np.uint8)
            got = np.sqrt(edt_sq(mask))
            ys, xs = np.nonzero(mask)
            yy, xx = np.mgrid[0:32, 0:32]
            d2 = (yy[..., None] - ys) ** 2 + (xx[..., None] - xs) ** 2
            want = np.sqrt(d2.min(axis=-1).astype(np.float64))
            if np.array_equal(got, want):
                exact += 1

    samples = []
    pooled = {k: [] for k in ("fg_unknown_to_fg", "fg_unknown_to_bg",
                              "bg_unknown_to_fg", "bg_unknown_to_bg")}
    for _ in range(3):
        tri = CODES[rng.integers(0, 3, (24, 24))]
        tri[0, 0], tri[-1, -1] = TRIMAP_FG, TRIMAP_BG
        alpha = rng.random((24, 24))
        samples.append((tri, alpha))
        unknown = tri == TRIMAP_UNKNOWN
        d_fg = np.sqrt(edt_sq((tri == TRIMAP_FG).astype(np.uint8)))
        d_bg = np.sqrt(edt_sq((tri == TRIMAP_BG).astype(np.uint8)))
        fgish = unknown & (alpha >= 0.5)
        bgish = unknown & (alpha < 0.5)
        pooled["fg_unknown_to_fg"].append(d_fg[fgish])
        pooled["fg_unknown_to_bg"].append(d_bg[fgish])
        pooled["bg_unknown_to_fg"].append(d_fg[bgish])
        pooled["bg_unknown_to_bg"].append(d_bg[bgish])
    stats = dataset_distance_stats(samples)
    cdf_ok = all(np.array_equal(stats.curves[k], np.sort(np.concatenate(v)))
                 for k, v in pooled.items())
    ok = exact == 100 and cdf_ok
    return ok, f"{exact}/100 transforms exactly match brute force; pooled CDF == sort oracle: {cdf_ok}"


# ---------------------------------------------------------------------------
# 5. Compositing round trips + metrics at ground truth.
# ---------------------------------------------------------------------------

def check_compositing_roundtrip(app_cfg):
    rng = np.random.default_rng(4)
    aug = app_cfg.datagen
    worst = 0.0
    metrics_ok = True
    for _ in range(8):
        fg = synthetic_foreground(rng, size=max(aug.crop_sizes))
        bg = synthetic_background(rng, size=2 * max(aug.crop_sizes))
        sample, _, _ = make_training_sample(fg, bg, rng, aug)
        recon = composite(sample.fg, sample.bg, sample.alpha)
        worst = max(worst, np.abs(recon - sample.image).max())
        r = evaluate_metrics(sample.alpha, sample.alpha, sample.trimap)
        metrics_ok &= (r.sad, r.mse, r.grad, r.conn) == (0.0, 0.0, 0.0, 0.0)
    ok = worst < 1e-6 and metrics_ok
    return ok, (f"max recomposition error {worst:.3e} over 8 samples (tol 1e-6); "
                f"metrics(gt, gt) all zero: {metrics_ok}")


# ---------------------------------------------------------------------------
# 6. Weighted-loss clamp.
# ---------------------------------------------------------------------------

def check_weighted_loss_clamp():
    alpha = torch.zeros(20, 20, dtype=torch.float64)
    gt = torch.full((20, 20), 0.5, dtype=torch.float64)
    unknown = torch.ones(20, 20, dtype=torch.bool)
    big = weighted_alpha_loss(alpha, gt, unknown, gamma=100.0).item()  # |U|=400
    ok1 = big == 2.0 * 0.5

    small_mask = torch.zeros(20, 20, dtype=torch.bool)
    small_mask[:5, :20] = True  # |U| = 100 = gamma
    small = weighted_alpha_loss(alpha, gt, small_mask, gamma=100.0).item()
    ok2 = small == 0.5
    return ok1 and ok2, (f"weight at |U|=4*gamma: {big / 0.5:.1f} (want 2.0); "
                         f"weight at |U|=gamma: {small / 0.5:.1f} (want 1.0)")


# ---------------------------------------------------------------------------
# 7. Laplacian pyramid.
# ---------------------------------------------------------------------------

def check_laplacian_pyramid():
    rng = np.random.default_rng(5)
    x = torch.from_numpy(rng.random((32, 32)))
    recon_err = (reconstruct_pyramid(laplacian_pyramid(x, 4)).squeeze() - x).abs().max().item()
    self_loss = laplacian_loss(x, x, 4).item()
    d = 0.21
    offset_err = abs(laplacian_loss(x, x + d, 4).item() - (2 ** 4) * d)
    bands_equal = all(
        (a - b).abs().max().item() < 1e-12
        for a, b in zip(laplacian_pyramid(x, 4)[:-1], laplacian_pyramid(x + d, 4)[:-1]))
    ok = recon_err < 1e-6 and self_loss == 0.0 and offset_err < 1e-9 and bands_equal
    return ok, (f"reconstruction err {recon_err:.3e} (tol 1e-6); Lap(x,x)={self_loss}; "
                f"offset-at-level-J err {offset_err:.3e}; bands cancel: {bands_equal}")


# ---------------------------------------------------------------------------
# 8. Training smoke.
# ---------------------------------------------------------------------------

def check_training_smoke(app_cfg, out_dir=None):
    # full-scale optimizer settings with the learning rate scaled x100
    # for the tiny 200-step run (1e-5 -> 1e-3), recorded in the checkpoint;
    # fixture seeds are pinned so the smoke scenario is identical in any run
    cfg = TrainConfig(lr=1.0e-3, weight_decay=1.0e-5, betas=(0.5, 0.999),
                      stage_epochs=(30, 30, 140), seed=0, deterministic=True)
    loss_cfg = app_cfg.losses
    units = synthetic_training_set(1, app_cfg.datagen, seed=1)
    torch.manual_seed(0)
    net = ContextMattingNet(app_cfg.propagating, app_cfg.matting)
    initialize_parameters(net, 0)

    def mean_lm():
        u = units[0]
        with torch.no_grad():
            out, _ = net(to_network_input(u.sample.image, u.sample.trimap),
                         to_network_input(u.context_image, u.context_trimap))
            t = targets_from_sample(u.sample)
            return matting_loss(out.alpha[0, 0], out.fg[0], out.bg[0], t, loss_cfg)[0].item()

    initial = mean_lm()
    frozen_ok = True
    for stage, epochs in enumerate(cfg.stage_epochs, start=1):
        masked = TrainConfig(lr=cfg.lr, weight_decay=cfg.weight_decay, betas=cfg.betas,
                             stage_epochs=tuple(e if i + 1 == stage else 0
                                                for i, e in enumerate(cfg.stage_epochs)),
                             seed=cfg.seed, deterministic=cfg.deterministic)
        from .training import stage_trainable_names

        before = parameter_hashes(net)
        train_three_stage(units, net, masked, loss_cfg=loss_cfg)
        after = parameter_hashes(net)
        trainable = stage_trainable_names(net, stage)
        for name in before:
            if name not in trainable and after[name] != before[name]:
                frozen_ok = False
    final = mean_lm()
    if out_dir is not None:
        ckpt = Checkpoint.from_model(net, config={"preset": app_cfg.preset,
                                                  "lr_scale": 100.0},
                                     stage=3, step=200)
        ckpt.save(Path(out_dir) / "check_smoke.ckpt")
    ratio = final / initial
    ok = ratio < 0.20 and frozen_ok
    return ok, (f"L_m {initial:.4f} -> {final:.4f} after 200 steps "
                f"(ratio {ratio:.3f}, want < 0.20); frozen sets intact: {frozen_ok}")


# ---------------------------------------------------------------------------
# 9. Ablation plumbing.
# ---------------------------------------------------------------------------

def check_ablation_grid(app_cfg):
    rng = np.random.default_rng(6)
    image = rng.random((128, 128, 3))
    trimap = CODES[rng.integers(0, 3, (128, 128))]
    outputs = {}
    for variant in ("none", "nonlocal", "aspp", "cspp"):
        pcfg = replace(app_cfg.propagating,
                       bottleneck=replace(app_cfg.propagating.bottleneck, variant=variant))
        torch.manual_seed(9)
        net = ContextMattingNet(pcfg, app_cfg.matting)
        initialize_parameters(net, 9)
        alpha, _, _ = run_tiled(image, trimap, NetworkTileModel(net),
                                InferenceConfig(inner_side=64), clamp=False)
        outputs[variant] = alpha
    names = list(outputs)
    distinct = all(np.abs(outputs[a] - outputs[b]).max() > 1e-9
                   for i, a in enumerate(names) for b in names[i + 1:])

    sizes = {}
    pcfg = app_cfg.propagating
    torch.manual_seed(9)
    net = ContextMattingNet(pcfg, app_cfg.matting)
    initialize_parameters(net, 9)
    for side in (64, 128):
        alpha, _, _ = run_tiled(image, trimap, NetworkTileModel(net),
                                InferenceConfig(inner_side=side), clamp=False)
        sizes[side] = alpha
    sizes_distinct = np.abs(sizes[64] - sizes[128]).max() > 1e-9
    ok = distinct and sizes_distinct
    return ok, (f"4 bottleneck variants pairwise distinct: {distinct}; "
                f"inner sizes 64 vs 128 distinct: {sizes_distinct}")


# ---------------------------------------------------------------------------
# 10. Determinism.
# ---------------------------------------------------------------------------

def check_determinism(app_cfg):
    blobs = []
    alphas = []
    for _ in range(2):
        units = synthetic_training_set(2, app_cfg.datagen, seed=app_cfg.seed + 1)
        torch.manual_seed(app_cfg.seed)
        net = ContextMattingNet(app_cfg.propagating, app_cfg.matting)
        initialize_parameters(net, app_cfg.seed)
        cfg = TrainConfig(lr=1e-3, stage_epochs=(1, 1, 1), seed=app_cfg.seed)
        ckpt = train_three_stage(units, net, cfg, loss_cfg=app_cfg.losses)
        blobs.append(pickle.dumps(ckpt.params))
        rng = np.random.default_rng(0)
        image = rng.random((96, 96, 3))
        trimap = CODES[rng.integers(0, 3, (96, 96))]
        alpha, _, _ = run_tiled(image, trimap, NetworkTileModel(net),
                                InferenceConfig(inner_side=64))
        alphas.append(alpha)
    same_ckpt = blobs[0] == blobs[1]
    same_alpha = np.array_equal(alphas[0], alphas[1])
    return same_ckpt and same_alpha, (f"repeated training byte-identical: {same_ckpt}; "
                                      f"repeated inference bit-identical: {same_alpha}")


# ---------------------------------------------------------------------------
# Runner.
# ---------------------------------------------------------------------------

CHECKS = (
    "loss_gradients",
    "long_range_propagation",
    "crop_stitch_exactness",
    "distance_transform",
    "compositing_roundtrip",
    "weighted_loss_clamp",
    "laplacian_pyramid",
    "training_smoke",
    "ablation_grid",
    "determinism",
)


def run_all(app_cfg, out_dir, checks=CHECKS) -> list[CheckResult]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enable_determinism(app_cfg.seed)
    table = {
        "loss_gradients": lambda: check_loss_gradients(),
        "long_range_propagation": lambda: check_long_range_propagation(app_cfg),
        "crop_stitch_exactness": lambda: check_crop_stitch(),
        "distance_transform": lambda: check_distance_transform(),
        "compositing_roundtrip": lambda: check_compositing_roundtrip(app_cfg),
        "weighted_loss_clamp": lambda: check_weighted_loss_clamp(),
        "laplacian_pyramid": lambda: check_laplacian_pyramid(),
        "training_smoke": lambda: check_training_smoke(app_cfg, out),
        "ablation_grid": lambda: check_ablation_grid(app_cfg),
        "determinism": lambda: check_determinism(app_cfg),
    }
    results = [_timed(name, table[name]) for name in checks]
    log = "".join(r.line + "\n" for r in results)
    (out / "check.log").write_text(log)
    return results
