"""Optimizer contract, staged training schedule, and checkpointing.

Training runs in three stages after the context branch is pretrained on
its own alpha loss: (1) the matting branch alone against frozen context
features, (2) both decoders and heads with a reinitialized optimizer,
(3) the whole network, again with a fresh optimizer. Parameters outside
a stage's trainable set are verified unchanged by hashing.

Checkpoints are a pickled container of named float arrays plus the
optimizer state and a config snapshot; identical runs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .blocks import WSConv2d
from .errors import ConfigError, DataError
from .losses import LossConfig, matting_loss, propagating_loss, targets_from_sample
from .model import ContextMattingNet, to_network_input

CHECKPOINT_FORMAT = "lfp-checkpoint-1"

STAGE2_TRAINABLE_PREFIXES = (
    "propagating.decoder",
    "propagating.alpha_head",
    "matting.context_proj",
    "matting.ppm",
    "matting.ppm_fuse",
    "matting.decoder",
    "matting.head",
)


@dataclass
class TrainConfig:
    lr: float = 1.0e-5
    weight_decay: float = 1.0e-5
    betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 1
    stage_epochs: tuple[int, int, int] = (35, 10, 5)
    pretrain_epochs: int = 1
    propagating_loss_weight: float = 1.0
    seed: int = 0
    checkpoint_every: int = 1  # epochs
    log_every: int = 1  # steps
    deterministic: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("training.lr must be positive")
        if any(e < 0 for e in self.stage_epochs):
            raise ConfigError("training.stage_epochs must be non-negative")
        if self.batch_size != 1:
            raise ConfigError("training.batch_size is fixed to 1")


# ---------------------------------------------------------------------------
# Initialization and determinism.
# ---------------------------------------------------------------------------

def enable_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def initialize_parameters(model: nn.Module, seed: int) -> nn.Module:
    """Fan-in scaled random init for convolutions, unit norms, zero offsets."""
    torch.manual_seed(seed)
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, WSConv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.GroupNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return model


# ---------------------------------------------------------------------------
# Checkpoints.
# ---------------------------------------------------------------------------

def _to_numpy_tree(obj):
    if isinstance(obj, torch.Tensor):
        return {"__tensor__": True, "data": obj.detach().cpu().numpy()}
    if isinstance(obj, dict):
        return {k: _to_numpy_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        t = [_to_numpy_tree(v) for v in obj]
        return t if isinstance(obj, list) else tuple(t)
    return obj


def _from_numpy_tree(obj):
    if isinstance(obj, dict):
        if obj.get("__tensor__") is True:
            return torch.from_numpy(np.array(obj["data"]))
        return {k: _from_numpy_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        t = [_from_numpy_tree(v) for v in obj]
        return t if isinstance(obj, list) else tuple(t)
    return obj


@dataclass
class Checkpoint:
    params: dict  # name -> np.ndarray
    optimizer: dict | None
    config: dict
    stage: int
    step: int

    def save(self, path) -> None:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "params": self.params,
            "optimizer": self.optimizer,
            "config": self.config,
            "stage": self.stage,
            "step": self.step,
        }
        Path(path).write_bytes(pickle.dumps(payload, protocol=4))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = pickle.loads(Path(path).read_bytes())
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        return cls(params=payload["params"], optimizer=payload["optimizer"],
                   config=payload["config"], stage=payload["stage"],
                   step=payload["step"])

    @classmethod
    def from_model(cls, net: nn.Module, optimizer=None, config=None,
                   stage: int = 0, step: int = 0) -> "Checkpoint":
        params = {k: v.detach().cpu().numpy().copy()
                  for k, v in net.state_dict().items()}
        opt_state = _to_numpy_tree(optimizer.state_dict()) if optimizer else None
        return cls(params=params, optimizer=opt_state, config=config or {},
                   stage=stage, step=step)

    def load_into(self, net: nn.Module) -> None:
        state = {k: torch.from_numpy(np.array(v)) for k, v in self.params.items()}
        net.load_state_dict(state)

    def restore_optimizer(self, optimizer) -> None:
        if self.optimizer is None:
            raise DataError("checkpoint carries no optimizer state")
        optimizer.load_state_dict(_from_numpy_tree(self.optimizer))


def parameter_hashes(net: nn.Module) -> dict[str, str]:
    return {name: hashlib.sha256(p.detach().cpu().numpy().tobytes()).hexdigest()
            for name, p in net.named_parameters()}


# ---------------------------------------------------------------------------
# Training units and loops.
# ---------------------------------------------------------------------------

@dataclass
class TrainingUnit:
    """One precomputed training example (inner sample + 2x context)."""

    sample: object  # core.Sample
    context_image: np.ndarray
    context_trimap: np.ndarray
    context_alpha: np.ndarray


def unit_from_generated(sample, context_pair, context_alpha) -> TrainingUnit:
    return TrainingUnit(sample=sample, context_image=context_pair.image,
                        context_trimap=context_pair.trimap,
                        context_alpha=context_alpha)


def synthetic_training_set(count: int, aug_cfg, seed: int = 0) -> list[TrainingUnit]:
    from .datagen import make_training_sample, synthetic_background, synthetic_foreground

    rng = np.random.default_rng(seed)
    units = []
    size = max(aug_cfg.crop_sizes)
    for _ in range(count):
        fg = synthetic_foreground(rng, size=size)
        bg = synthetic_background(rng, size=2 * size)
        units.append(unit_from_generated(*make_training_sample(fg, bg, rng, aug_cfg)))
    return units


def make_optimizer(params, cfg: TrainConfig):
    return torch.optim.RAdam(params, lr=cfg.lr, betas=cfg.betas,
                             weight_decay=cfg.weight_decay)


class MetricsLog:
    """JSON-lines sink for per-step loss breakdowns."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        if self.path:
            self.path.write_text("")

    def write(self, record: dict) -> None:
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def _unit_tensors(unit: TrainingUnit, dtype):
    from .core import TRIMAP_UNKNOWN

    inner = to_network_input(unit.sample.image, unit.sample.trimap, dtype)
    context = to_network_input(unit.context_image, unit.context_trimap, dtype)
    targets = targets_from_sample(unit.sample, dtype)
    ctx_alpha = torch.from_numpy(np.asarray(unit.context_alpha, np.float64)).to(dtype)
    ctx_unknown = torch.from_numpy(unit.context_trimap == TRIMAP_UNKNOWN)
    return inner, context, targets, ctx_alpha, ctx_unknown


def train_step(net: ContextMattingNet, unit: TrainingUnit, optimizer,
               loss_cfg: LossConfig, cfg: TrainConfig, with_propagating_loss: bool,
               dtype=torch.float32):
    inner, context, targets, ctx_alpha, ctx_unknown = _unit_tensors(unit, dtype)
    out, ctx_out = net(inner, context)
    total, parts = matting_loss(out.alpha[0, 0], out.fg[0], out.bg[0],
                                targets, loss_cfg)
    if with_propagating_loss and ctx_out is not None:
        lp = propagating_loss(ctx_out.context_alpha[0, 0], ctx_alpha, ctx_unknown)
        total = total + cfg.propagating_loss_weight * lp
        parts = dict(parts, propagating=lp)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return float(total.item()), {k: float(v.item()) for k, v in parts.items()}


def pretrain_propagating(units, net: ContextMattingNet, cfg: TrainConfig,
                         log: MetricsLog | None = None, config_snapshot=None,
                         dtype=torch.float32, epochs: int | None = None) -> Checkpoint:
    """Optimize the context-alpha loss only; the matting branch is untouched."""
    if not units:
        raise DataError("pretraining dataset is empty")
    if cfg.deterministic:
        enable_determinism(cfg.seed)
    epochs = cfg.pretrain_epochs if epochs is None else epochs
    for p in net.parameters():
        p.requires_grad_(False)
    for p in net.propagating.parameters():
        p.requires_grad_(True)
    optimizer = make_optimizer(list(net.propagating.parameters()), cfg)
    step = 0
    for epoch in range(epochs):
        for unit in units:
            _, context, _, ctx_alpha, ctx_unknown = _unit_tensors(unit, dtype)
            ctx_out = net.propagating(context)
            loss = propagating_loss(ctx_out.context_alpha[0, 0], ctx_alpha, ctx_unknown)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            if log and step % cfg.log_every == 0:
                log.write({"phase": "pretrain", "epoch": epoch, "step": step,
                           "propagating": float(loss.item())})
    for p in net.parameters():
        p.requires_grad_(True)
    return Checkpoint.from_model(net, optimizer, config_snapshot, stage=0, step=step)


def stage_trainable_names(net: ContextMattingNet, stage: int) -> set[str]:
    names = [n for n, _ in net.named_parameters()]
    if stage == 1:
        picked = {n for n in names if n.startswith("matting.")}
    elif stage == 2:
        picked = {n for n in names if n.startswith(STAGE2_TRAINABLE_PREFIXES)}
    elif stage == 3:
        picked = set(names)
    else:
        raise ConfigError(f"unknown training stage {stage}")
    if not picked:
        raise ConfigError(f"stage {stage} trainable filter matched no parameters")
    return picked


def train_three_stage(units, net: ContextMattingNet, cfg: TrainConfig,
                      loss_cfg: LossConfig | None = None,
                      log: MetricsLog | None = None, config_snapshot=None,
                      dtype=torch.float32, out_dir=None) -> Checkpoint:
    """Staged schedule; the optimizer is reinitialized between stages."""
    if not units:
        raise DataError("training dataset is empty")
    loss_cfg = loss_cfg or LossConfig()
    if cfg.deterministic:
        enable_determinism(cfg.seed)
    step = 0
    ckpt = Checkpoint.from_model(net, None, config_snapshot, stage=0, step=0)
    for stage, epochs in enumerate(cfg.stage_epochs, start=1):
        trainable = stage_trainable_names(net, stage)
        params = []
        for name, p in net.named_parameters():
            p.requires_grad_(name in trainable)
            if name in trainable:
                params.append(p)
        optimizer = make_optimizer(params, cfg)  # fresh moments every stage
        if stage == 1:
            net.propagating.eval()  # frozen inference mode supplies features
        else:
            net.propagating.train()
        net.matting.train()
        with_lp = stage >= 2 and cfg.propagating_loss_weight > 0
        for epoch in range(epochs):
            for unit in units:
                total, parts = train_step(net, unit, optimizer, loss_cfg, cfg,
                                          with_propagating_loss=with_lp, dtype=dtype)
                step += 1
                if log and step % cfg.log_every == 0:
                    log.write({"phase": "train", "stage": stage, "epoch": epoch,
                               "step": step, "total": total, **parts})
            if out_dir and (epoch + 1) % cfg.checkpoint_every == 0:
                Checkpoint.from_model(net, optimizer, config_snapshot, stage,
                                      step).save(Path(out_dir) / f"stage{stage}_epoch{epoch + 1}.ckpt")
        ckpt = Checkpoint.from_model(net, optimizer, config_snapshot, stage, step)
    for p in net.parameters():
        p.requires_grad_(True)
    return ckpt
