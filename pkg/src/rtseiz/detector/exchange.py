"""Flat binary model files (magic ``MRSN``).

Layout, all little-endian::

    b"MRSN"  u32 version (=1)
    u32 input_size  u32 stem_channels  u32 widths[4]  u32 num_classes
    i64 seed  u32 stem_kernel  u32 stem_stride
    u64 n_values
    f32 values[n_values]

``values`` are the tensors of ``state_dict()`` in module registration order
(stem conv, stem bn, layer1..layer4 blocks: conv1, bn1, conv2, bn2,
downsample conv, downsample bn; then fc weight, fc bias), each flattened in
C order. Batch-norm tensors appear as weight, bias, running_mean,
running_var; the integer ``num_batches_tracked`` counters are not stored.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from .model import MiniResNet, MiniResNetConfig, build_mini_resnet

MAGIC = b"MRSN"
VERSION = 1
_HEADER = struct.Struct("<4sI I I 4I I q I I Q")


class ModelFormatError(ValueError):
    pass


def _tensors(model: MiniResNet):
    for name, t in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue
        yield name, t


def model_to_bytes(model: MiniResNet) -> bytes:
    cfg = model.cfg
    flat = np.concatenate([t.detach().cpu().double().numpy().ravel() for _, t in _tensors(model)])
    header = _HEADER.pack(MAGIC, VERSION, cfg.input_size, cfg.stem_channels, *cfg.layer_widths,
                          cfg.num_classes, cfg.seed, cfg.stem_kernel, cfg.stem_stride, flat.size)
    return header + flat.astype("<f4").tobytes()


def model_from_bytes(blob: bytes) -> MiniResNet:
    if len(blob) < _HEADER.size:
        raise ModelFormatError("model file truncated in header")
    (magic, version, input_size, stem, w1, w2, w3, w4, n_cls, seed, kernel, stride,
     n_values) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    cfg = MiniResNetConfig(input_size, stem, (w1, w2, w3, w4), n_cls, seed, kernel, stride)
    model = build_mini_resnet(cfg)
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if values.size != n_values:
        raise ModelFormatError(f"expected {n_values} values, found {values.size}")
    state = model.state_dict()
    off = 0
    for name, t in _tensors(model):
        n = t.numel()
        if off + n > values.size:
            raise ModelFormatError("model file has fewer values than its config needs")
        state[name] = torch.from_numpy(values[off:off + n].astype(np.float32).reshape(t.shape))
        off += n
    if off != values.size:
        raise ModelFormatError(f"{values.size - off} trailing values do not fit the config")
    model.load_state_dict(state)
    model.eval()
    return model


def save_model(model: MiniResNet, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> MiniResNet:
    return model_from_bytes(Path(path).read_bytes())
