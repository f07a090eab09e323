"""Class weighting, the weighted cross-entropy and background subsampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

BCKG, SEIZ = 0, 1
LABELS = ("bckg", "seiz")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainSetStats:
    n_seiz: int
    n_bckg: int

    def __post_init__(self):
        if self.n_seiz < 0 or self.n_bckg < 0:
            raise ValueError("class counts must be non-negative")

    @property
    def n_total(self) -> int:
        return self.n_seiz + self.n_bckg

    @classmethod
    def from_labels(cls, labels) -> "TrainSetStats":
        labels = np.asarray(labels)
        return cls(n_seiz=int(np.sum(labels == SEIZ)), n_bckg=int(np.sum(labels == BCKG)))


@dataclass(frozen=True)
class ClassWeights:
    w_bckg: float
    w_seiz: float

    def as_tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.tensor([self.w_bckg, self.w_seiz], dtype=dtype)

    def for_label(self, label: int) -> float:
        return self.w_seiz if label == SEIZ else self.w_bckg


def class_weights(stats: TrainSetStats) -> ClassWeights:
    """Each class is weighted by the share of the *other* class."""
    if stats.n_total <= 0:
        raise ValueError("cannot weight an empty training set")
    return ClassWeights(w_bckg=stats.n_seiz / stats.n_total, w_seiz=stats.n_bckg / stats.n_total)


def _label_index(label) -> int:
    if isinstance(label, str):
        return LABELS.index(label)
    return int(label)


def weighted_loss(p, label, w: ClassWeights, two_term: bool = False) -> float:
    """Weighted cross-entropy of one probability pair ``(p_bckg, p_seiz)``.

    By default only the true class contributes: ``w[label] * -log p[label]``.
    ``two_term=True`` sums the weighted log-loss against both class indices
    regardless of the label.
    """
    p_b, p_s = (max(float(v), PROB_FLOOR) for v in p)
    if two_term:
        return w.w_bckg * -math.log(p_b) + w.w_seiz * -math.log(p_s)
    if _label_index(label) == SEIZ:
        return w.w_seiz * -math.log(p_s)
    return w.w_bckg * -math.log(p_b)


def weighted_loss_batch(logits: torch.Tensor, labels: torch.Tensor, w: ClassWeights,
                        two_term: bool = False) -> torch.Tensor:
    """Mean of the per-sample weighted loss over a batch of logits."""
    logp = F.log_softmax(logits, dim=1)
    wt = w.as_tensor(logits.dtype)
    if two_term:
        return -(logp * wt).sum(dim=1).mean()
    return -(wt[labels] * logp.gather(1, labels[:, None])[:, 0]).mean()


@dataclass
class LabeledImages:
    images: np.ndarray  # uint8 [n, height, width]
    labels: np.ndarray  # int64 [n], BCKG or SEIZ

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or len(self.images) != len(self.labels):
            raise ValueError("images must be [n, h, w] with one label per image")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "LabeledImages":
        return LabeledImages(self.images[idx], self.labels[idx])

    @property
    def stats(self) -> TrainSetStats:
        return TrainSetStats.from_labels(self.labels)


def subsample_background(data: LabeledImages, fraction: float = 0.2, seed: int = 0) -> LabeledImages:
    """Keep every seizure sample and a seeded random share of background samples.

    Exactly ``round(fraction * n_bckg)`` (half rounding up) background samples
    survive, drawn without replacement; original order is preserved.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    bckg = np.flatnonzero(data.labels == BCKG)
    keep = int(math.floor(fraction * len(bckg) + 0.5))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(bckg, size=keep, replace=False) if keep < len(bckg) else bckg
    mask = data.labels != BCKG
    mask[chosen] = True
    return data.subset(np.flatnonzero(mask))
