"""Unified command line: generate / analyze / train / infer / eval / check.

Every command writes the fully-resolved configuration next to its outputs
so any run can be reproduced from its artifacts plus the seed. Errors map
to stable exit codes (see README).
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .config import AppConfig, parse_config, write_config_echo
from .errors import ConfigError, GeometryError, MattingError


def _load_config(ctx) -> AppConfig:
    opts = ctx.obj
    cfg = parse_config(path=opts["config"], preset=opts["preset"],
                       overrides=opts["overrides"], seed=opts["seed"])
    if os.environ.get("LFP_DETERMINISTIC") == "1":
        cfg.training.deterministic = True
    return cfg


def _run(ctx, body):
    try:
        return body(_load_config(ctx))
    except MattingError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


@click.group()
@click.option("--config", type=click.Path(path_type=Path), default=None,
              help="TOML configuration file.")
@click.option("--preset", type=click.Choice(["tiny", "small", "paper"]), default=None,
              help="Named model scale (default: tiny, or the file's preset).")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override one configuration key, e.g. --set inference.overlap=16.")
@click.option("--seed", type=int, default=None, help="Global random seed.")
@click.pass_context
def main(ctx, config, preset, overrides, seed):
    """Trimap-based image matting with long-range context propagation."""
    ctx.obj = {"config": config, "preset": preset, "overrides": overrides,
               "seed": seed}


@main.command()
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=8, show_default=True)
@click.option("--data", type=click.Path(path_type=Path), default=None,
              help="Asset directory (fg/, alpha/, bg/); synthetic assets if omitted.")
@click.pass_context
def generate(ctx, out, count, data):
    """Emit training samples as PNG triples plus JSON sidecars."""

    def body(cfg):
        from .datagen import FolderAssets, generate_samples

        assets = FolderAssets(data) if data else None
        records = generate_samples(out, count, cfg.datagen, assets=assets,
                                   seed=cfg.seed)
        write_config_echo(cfg, out)
        click.echo(f"wrote {len(records)} samples to {out}")

    _run(ctx, body)


@main.command()
@click.option("--dataset", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_json", required=True, type=click.Path(path_type=Path))
@click.option("--plot", "plot_png", type=click.Path(path_type=Path), default=None)
@click.pass_context
def analyze(ctx, dataset, out_json, plot_png):
    """Distance statistics of unknown pixels to the known regions."""

    def body(cfg):
        from .analysis import dataset_distance_stats, load_analysis_pairs, plot_stats

        pairs = load_analysis_pairs(dataset)
        stats = dataset_distance_stats(pairs, threshold=cfg.analysis.threshold,
                                       percentiles=cfg.analysis.percentiles)
        out_json.parent.mkdir(parents=True, exist_ok=True)
        stats.save_json(out_json)
        if plot_png:
            plot_stats(stats, plot_png, erf_marker=cfg.analysis.erf_marker_px)
        write_config_echo(cfg, out_json.parent)
        click.echo(f"analyzed {stats.n_samples} samples "
                   f"({stats.n_skipped} skipped) -> {out_json}")

    _run(ctx, body)


@main.command()
@click.option("--data", type=click.Path(path_type=Path), default=None,
              help="Asset directory; synthetic data when omitted.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--synthetic-count", default=8, show_default=True,
              help="Synthetic training units when --data is omitted.")
@click.option("--init-checkpoint", type=click.Path(path_type=Path), default=None)
@click.pass_context
def train(ctx, data, out, synthetic_count, init_checkpoint):
    """Pretrain the context branch, then run the three-stage schedule."""

    def body(cfg):
        import torch

        from .config import resolved_dict
        from .datagen import FolderAssets, make_training_sample
        from .model import ContextMattingNet
        from .training import (
            Checkpoint,
            MetricsLog,
            initialize_parameters,
            pretrain_propagating,
            synthetic_training_set,
            train_three_stage,
            unit_from_generated,
        )

        out.mkdir(parents=True, exist_ok=True)
        if data:
            assets = FolderAssets(data)
            rng = np.random.default_rng(cfg.seed)
            units = []
            for i in range(len(assets)):
                fg = assets.load_fg(i)
                bg = assets.load_bg(int(rng.integers(len(assets.backgrounds))))
                units.append(unit_from_generated(
                    *make_training_sample(fg, bg, rng, cfg.datagen)))
        else:
            units = synthetic_training_set(synthetic_count, cfg.datagen, seed=cfg.seed)

        torch.manual_seed(cfg.seed)
        net = ContextMattingNet(cfg.propagating, cfg.matting)
        initialize_parameters(net, cfg.seed)
        snapshot = resolved_dict(cfg)
        if init_checkpoint:
            Checkpoint.load(init_checkpoint).load_into(net)
        log = MetricsLog(out / "metrics.jsonl")
        tc = cfg.training
        if init_checkpoint is None and tc.pretrain_epochs > 0:
            pretrain_propagating(units, net, tc, log=log, config_snapshot=snapshot)
        ckpt = train_three_stage(units, net, tc, loss_cfg=cfg.losses, log=log,
                                 config_snapshot=snapshot, out_dir=out)
        ckpt.save(out / "model.ckpt")
        write_config_echo(cfg, out)
        click.echo(f"trained {ckpt.step} steps -> {out / 'model.ckpt'}")

    _run(ctx, body)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(path_type=Path))
@click.option("--trimap", "trimap_path", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_alpha", required=True, type=click.Path(path_type=Path))
@click.option("--fg", "out_fg", type=click.Path(path_type=Path), default=None)
@click.option("--bg", "out_bg", type=click.Path(path_type=Path), default=None)
@click.option("--tta", is_flag=True, default=False)
@click.option("--tile", type=int, default=None, help="Inner tile side (px).")
@click.option("--overlap", type=int, default=None)
@click.pass_context
def infer(ctx, image_path, trimap_path, ckpt_path, out_alpha, out_fg, out_bg,
          tta, tile, overlap):
    """Crop-and-stitch inference on one image/trimap pair."""

    def body(cfg):
        import torch

        from .config import build_config
        from .core import load_image, load_trimap, save_alpha, save_image
        from .inference import run_tiled, run_tta
        from .model import ContextMattingNet, NetworkTileModel
        from .training import Checkpoint

        image = load_image(image_path)
        trimap = load_trimap(trimap_path)
        if image.shape[:2] != trimap.shape:
            raise GeometryError(f"image {image.shape[:2]} vs trimap {trimap.shape}")
        ckpt = Checkpoint.load(ckpt_path)
        if ckpt.config:
            cfg = build_config(ckpt.config)
        icfg = cfg.inference
        if tile is not None:
            icfg.inner_side = tile
        if overlap is not None:
            icfg.overlap = overlap
        icfg.__post_init__()
        torch.manual_seed(cfg.seed)
        net = ContextMattingNet(cfg.propagating, cfg.matting)
        ckpt.load_into(net)
        model = NetworkTileModel(net)
        alpha, fg, bg = run_tiled(image, trimap, model, icfg)
        if tta or icfg.tta:
            alpha = run_tta(image, trimap, model, icfg)
        out_alpha.parent.mkdir(parents=True, exist_ok=True)
        save_alpha(out_alpha, alpha)
        if out_fg:
            save_image(out_fg, fg)
        if out_bg:
            save_image(out_bg, bg)
        write_config_echo(cfg, out_alpha.parent)
        click.echo(f"wrote {out_alpha}")

    _run(ctx, body)


@main.command(name="eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path(path_type=Path))
@click.option("--gt", "gt_dir", required=True, type=click.Path(path_type=Path))
@click.option("--trimaps", "tri_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_json", required=True, type=click.Path(path_type=Path))
@click.pass_context
def eval_cmd(ctx, pred_dir, gt_dir, tri_dir, out_json):
    """SAD / MSE / Grad / Conn over matching prediction/gt/trimap stems."""

    def body(cfg):
        from .core import load_alpha, load_trimap
        from .errors import DataError
        from .metrics import evaluate

        preds = sorted(Path(pred_dir).glob("*.png"))
        if not preds:
            raise DataError(f"no predictions under {pred_dir}")
        per_image = {}
        for p in preds:
            gt_path = Path(gt_dir) / p.name
            tri_path = Path(tri_dir) / p.name
            if not gt_path.exists() or not tri_path.exists():
                raise DataError(f"missing gt or trimap for {p.name}")
            report = evaluate(load_alpha(p), load_alpha(gt_path), load_trimap(tri_path))
            per_image[p.stem] = report.to_dict()
        means = {k: float(np.mean([r[k] for r in per_image.values()]))
                 for k in ("sad", "mse", "grad", "conn")}
        out_json.parent.mkdir(parents=True, exist_ok=True)
        out_json.write_text(json.dumps({"per_image": per_image, "mean": means},
                                       indent=2, sort_keys=True))
        write_config_echo(cfg, out_json.parent)
        click.echo(f"evaluated {len(per_image)} images -> {out_json}")

    _run(ctx, body)


@main.command()
@click.option("--out", type=click.Path(path_type=Path), default=Path("check_out"),
              show_default=True)
@click.option("--only", multiple=True, help="Run a subset of checks by name.")
@click.pass_context
def check(ctx, out, only):
    """Run the gradient/oracle property suite; exit 0 iff everything passes."""

    def body(cfg):
        from .selfcheck import CHECKS, run_all

        names = tuple(only) if only else CHECKS
        unknown = set(names) - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}; available: {list(CHECKS)}")
        results = run_all(cfg, out, checks=names)
        for r in results:
            click.echo(f"{r.line}  [{r.seconds:.1f}s]")
        write_config_echo(cfg, out)
        if not all(r.passed for r in results):
            sys.exit(1)
        click.echo(f"all {len(results)} checks passed; log at {out / 'check.log'}")

    _run(ctx, body)


if __name__ == "__main__":
    main()
