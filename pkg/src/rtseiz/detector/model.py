"""Reduced-width residual network with the ResNet-18 block layout."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class MiniResNetConfig:
    input_size: int = 256
    stem_channels: int = 8
    layer_widths: tuple[int, int, int, int] = (8, 16, 32, 64)
    num_classes: int = 2
    seed: int = 0
    stem_kernel: int = 7
    stem_stride: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) != 4:
            raise ValueError("layer_widths needs exactly 4 entries")
        if min(self.layer_widths) <= 0 or self.stem_channels <= 0:
            raise ValueError("channel widths must be positive")
        if self.num_classes != 2:
            raise ValueError("only binary bckg/seiz classification is supported")
        if self.input_size <= 0 or self.stem_kernel <= 0 or self.stem_stride <= 0:
            raise ValueError("input size, stem kernel and stem stride must be positive")


def conv3x3(cin: int, cout: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, stride, 1, bias=False)


class BasicBlock(nn.Module):
    """conv-bn-relu-conv-bn plus shortcut, then relu.

    When the block changes resolution or width the shortcut is a downsample
    block (1x1 strided conv + bn) instead of the identity.
    """

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = conv3x3(cin, cout, stride)
        self.bn1 = nn.BatchNorm2d(cout, eps=BN_EPS, momentum=BN_MOMENTUM)
        self.conv2 = conv3x3(cout, cout)
        self.bn2 = nn.BatchNorm2d(cout, eps=BN_EPS, momentum=BN_MOMENTUM)
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False),
                nn.BatchNorm2d(cout, eps=BN_EPS, momentum=BN_MOMENTUM),
            )

    def shortcut(self, x: torch.Tensor) -> torch.Tensor:
        return x if self.downsample is None else self.downsample(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class MiniResNet(nn.Module):
    def __init__(self, cfg: MiniResNetConfig):
        super().__init__()
        self.cfg = cfg
        k = cfg.stem_kernel
        self.conv1 = nn.Conv2d(1, cfg.stem_channels, k, cfg.stem_stride, k // 2, bias=False)
        self.bn1 = nn.BatchNorm2d(cfg.stem_channels, eps=BN_EPS, momentum=BN_MOMENTUM)
        self.maxpool = nn.MaxPool2d(3, 2, 1)
        layers = []
        cin = cfg.stem_channels
        for i, width in enumerate(cfg.layer_widths):
            stride = 1 if i == 0 else 2
            layers.append(nn.Sequential(BasicBlock(cin, width, stride), BasicBlock(width, width)))
            cin = width
        self.layer1, self.layer2, self.layer3, self.layer4 = layers
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(cin, cfg.num_classes)

    def blocks(self) -> list[BasicBlock]:
        return [b for layer in (self.layer1, self.layer2, self.layer3, self.layer4) for b in layer]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.maxpool(F.relu(self.bn1(self.conv1(x))))
        x = self.layer4(self.layer3(self.layer2(self.layer1(x))))
        return self.fc(torch.flatten(self.avgpool(x), 1))

    def predict(self, image) -> tuple[float, float]:
        """(p_bckg, p_seiz) for one grayscale image (uint8 array or GrayscaleImage)."""
        probs = predict_proba(self, [image])
        return float(probs[0, 0]), float(probs[0, 1])


def build_mini_resnet(cfg: MiniResNetConfig = MiniResNetConfig()) -> MiniResNet:
    """Construct the network with seeded weight initialisation.

    Convolutions get He-normal weights, batch-norm starts at unit scale and
    zero shift, and the classifier uses the torch default init, all drawn
    from a private generator so global RNG state is left alone.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = MiniResNet(cfg)
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
    model.eval()
    return model


def images_to_tensor(images, dtype=torch.float32) -> torch.Tensor:
    """uint8 [n, h, w] (or a list of images) -> [n, 1, h, w] in [-1, 1]."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        arr = images
    else:
        arr = np.stack([getattr(im, "pixels", im) for im in images])
    t = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)
    return (t / 127.5 - 1.0)[:, None]


@torch.no_grad()
def predict_proba(model: nn.Module, images) -> np.ndarray:
    """[n, 2] softmax probabilities in eval mode, no augmentation."""
    was_training = model.training
    model.eval()
    try:
        dtype = next(model.parameters()).dtype
        probs = F.softmax(model(images_to_tensor(images, dtype)), dim=1)
    finally:
        model.train(was_training)
    return probs.double().numpy()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
