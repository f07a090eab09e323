"""Posterior sequences and window-stream inference."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import predict_proba


@dataclass(frozen=True)
class PosteriorSequence:
    """Seizure probability per window, with windows ``stride_sec`` apart."""

    start_sec: tuple[float, ...]
    p_seiz: tuple[float, ...]
    stride_sec: float
    _tol: float = field(default=1e-6, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start_sec", tuple(float(t) for t in self.start_sec))
        object.__setattr__(self, "p_seiz", tuple(float(p) for p in self.p_seiz))
        if len(self.start_sec) != len(self.p_seiz):
            raise ValueError("one start time per posterior")
        if not self.stride_sec > 0:
            raise ValueError("stride must be positive")
        for p in self.p_seiz:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"posterior {p} outside [0, 1]")
        steps = np.diff(self.start_sec)
        if len(steps) and np.max(np.abs(steps - self.stride_sec)) > self._tol:
            raise ValueError("start times must increase by exactly one stride")

    def __len__(self) -> int:
        return len(self.p_seiz)

    @classmethod
    def uniform(cls, p_seiz: Sequence[float], stride_sec: float, t0: float = 0.0) -> "PosteriorSequence":
        return cls(tuple(t0 + i * stride_sec for i in range(len(p_seiz))), tuple(p_seiz), stride_sec)

    def entries(self) -> list[tuple[float, float]]:
        return list(zip(self.start_sec, self.p_seiz))


def infer_stream(model, windows: Iterable, stride_sec: float, batch_size: int = 1,
                 time_offset_sec: float = 0.0) -> PosteriorSequence:
    """One seizure posterior per window image, order preserved.

    ``windows`` yields objects with ``pixels`` and ``start_sec`` (GrayscaleImage).
    ``time_offset_sec`` shifts every start time, e.g. to centre the decision
    inside the window.
    """
    windows = list(windows)
    starts = [w.start_sec + time_offset_sec for w in windows]
    probs: list[float] = []
    for i in range(0, len(windows), max(1, batch_size)):
        chunk = windows[i:i + batch_size]
        probs.extend(predict_proba(model, chunk)[:, 1].tolist())
    return PosteriorSequence(tuple(starts), tuple(probs), stride_sec)
