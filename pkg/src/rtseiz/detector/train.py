"""SGD training loop with step-decay learning rate and light augmentation."""
from __future__ import annotations

import copy
import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .losses import BCKG, SEIZ, ClassWeights, LabeledImages, weighted_loss_batch
from .model import MiniResNet, images_to_tensor

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 8
    lr: float = 0.01
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    crop_scale: tuple[float, float] = (0.8, 1.0)
    crop_ratio: tuple[float, float] = (3 / 4, 4 / 3)
    flip_prob: float = 0.5
    two_term_loss: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 for batch norm")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    accuracy: float
    lr: float


@dataclass
class TrainResult:
    model: MiniResNet
    history: list[EpochLog] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_weighted_loss", "train_accuracy"])
            for row in self.history:
                writer.writerow([row.epoch, f"{row.mean_loss:.6f}", f"{row.accuracy:.6f}"])


def random_resized_crop(x: torch.Tensor, gen: torch.Generator,
                        scale=(0.8, 1.0), ratio=(3 / 4, 4 / 3)) -> torch.Tensor:
    """Crop a random area fraction / aspect ratio of a [1, h, w] image and resize back."""
    _, h, w = x.shape
    area = h * w
    for _ in range(10):
        target = area * float(torch.empty(1).uniform_(scale[0], scale[1], generator=gen))
        log_r = torch.empty(1).uniform_(math.log(ratio[0]), math.log(ratio[1]), generator=gen)
        r = math.exp(float(log_r))
        cw = int(round(math.sqrt(target * r)))
        ch = int(round(math.sqrt(target / r)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(torch.randint(0, h - ch + 1, (1,), generator=gen))
            left = int(torch.randint(0, w - cw + 1, (1,), generator=gen))
            break
    else:
        ch, cw, top, left = h, w, 0, 0
    crop = x[:, top:top + ch, left:left + cw]
    if (ch, cw) == (h, w):
        return crop
    return F.interpolate(crop[None], size=(h, w), mode="bilinear", align_corners=False)[0]


def augment(batch: torch.Tensor, cfg: TrainConfig, gen: torch.Generator) -> torch.Tensor:
    out = []
    for x in batch:
        x = random_resized_crop(x, gen, cfg.crop_scale, cfg.crop_ratio)
        if float(torch.rand(1, generator=gen)) < cfg.flip_prob:
            x = torch.flip(x, dims=[2])
        out.append(x)
    return torch.stack(out)


def train(model: MiniResNet, data: LabeledImages, weights: ClassWeights,
          cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Train ``model`` in place; returns it with the per-epoch loss/accuracy log.

    The learning rate starts at ``cfg.lr`` and is multiplied by ``lr_gamma``
    every ``lr_step_epochs`` epochs. Shuffling and augmentation draw from
    generators seeded by ``cfg.seed`` so reruns are bit-identical.
    """
    result = TrainResult(model)
    if cfg.epochs <= 0:
        return result
    if len(data) == 0:
        raise ValueError("no training data")
    present = set(np.unique(data.labels).tolist())
    if present != {BCKG, SEIZ}:
        warnings.warn(f"training data contains only class(es) {sorted(present)}", stacklevel=2)

    dtype = next(model.parameters()).dtype
    images = images_to_tensor(data.images, dtype)
    labels = torch.from_numpy(data.labels)
    opt = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum,
                          weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.lr_step_epochs, gamma=cfg.lr_gamma)
    gen = torch.Generator().manual_seed(cfg.seed)

    model.train()
    for epoch in range(1, cfg.epochs + 1):
        lr = opt.param_groups[0]["lr"]
        order = torch.randperm(len(data), generator=gen)
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                # batch norm needs more than one sample per batch
                continue
            x = augment(images[idx], cfg, gen)
            y = labels[idx]
            logits = model(x)
            loss = weighted_loss_batch(logits, y, weights, cfg.two_term_loss)
            if not torch.isfinite(loss):
                model.eval()
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start} (lr={lr:g})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(idx)
            correct += int((logits.argmax(1) == y).sum())
        seen = len(order) - (len(order) % cfg.batch_size == 1)
        result.history.append(EpochLog(epoch, total_loss / seen, correct / seen, lr))
        log.info("epoch %d  loss %.4f  acc %.4f  lr %g", epoch, total_loss / seen, correct / seen, lr)
        sched.step()
    model.eval()
    return result


def clone(model: MiniResNet) -> MiniResNet:
    return copy.deepcopy(model)
