"""Max local scaling, fixed-length windowing and grayscale window images."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from .signal_io import MontagedRecording


@dataclass(frozen=True)
class ScalingParams:
    window_sec: float = 6.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if not self.window_sec > 0:
            raise ValueError("window_sec must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def half_width(self, rate_hz: float) -> int:
        """Samples on each side of the centre sample (N // 2)."""
        return int(round(self.window_sec * rate_hz)) // 2


@dataclass(frozen=True)
class ScaledWindow:
    data: np.ndarray  # [channels, window_samples], values in [-1, +1]
    start_sec: float

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def window_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayscaleImage:
    pixels: np.ndarray  # uint8 [height, width]
    start_sec: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


def _local_max(mag: np.ndarray, half: int) -> np.ndarray:
    # mode="nearest" replicates the edge sample, which for a max filter is the
    # same as clamping the window to the sequence
    return maximum_filter1d(mag, size=2 * half + 1, axis=-1, mode="nearest")


def max_local_scale(x: np.ndarray, rate_hz: float,
                    params: ScalingParams = ScalingParams()) -> np.ndarray:
    """Divide every sample by the peak magnitude of its centred neighbourhood.

    Works on a 1-D signal or along the last axis of a [channels, samples]
    array. Near the ends the neighbourhood is truncated rather than padded.
    Silent stretches (peak below ``epsilon``) come out as zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("cannot scale an empty signal")
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    peak = _local_max(np.abs(x), params.half_width(rate_hz))
    return x / np.maximum(peak, params.epsilon)


def scale_recording(rec: MontagedRecording,
                    params: ScalingParams = ScalingParams()) -> MontagedRecording:
    return MontagedRecording(rec.labels, max_local_scale(rec.data, rec.sample_rate_hz, params),
                             rec.sample_rate_hz, rec.group_delay_sec)


class StreamingScaler:
    """Chunked max local scaling; output lags input by ``half`` samples.

    Emits exactly what :func:`max_local_scale` produces on the full signal.
    """

    def __init__(self, n_channels: int, rate_hz: float, params: ScalingParams = ScalingParams()):
        self.half = params.half_width(rate_hz)
        self.epsilon = params.epsilon
        self.lookahead_sec = self.half / rate_hz
        self._buf = np.zeros((n_channels, 0))
        self._buf_start = 0  # absolute index of _buf[:, 0]
        self._next = 0       # absolute index of the next sample to emit
        self._total = 0

    def _emit(self, stop: int) -> np.ndarray:
        start = self._next
        if stop <= start:
            return self._buf[:, :0].copy()
        lo = max(0, start - self.half) - self._buf_start
        hi = min(self._total, stop + self.half) - self._buf_start
        seg = self._buf[:, lo:hi]
        peak = _local_max(np.abs(seg), self.half)
        off = start - self._buf_start - lo
        out = seg[:, off:off + stop - start] / np.maximum(peak[:, off:off + stop - start], self.epsilon)
        self._next = stop
        keep_from = max(0, self._next - self.half) - self._buf_start
        self._buf = self._buf[:, keep_from:]
        self._buf_start += keep_from
        return out

    def push(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=np.float64)
        self._buf = np.concatenate([self._buf, chunk], axis=1)
        self._total += chunk.shape[1]
        return self._emit(self._total - self.half)

    def flush(self) -> np.ndarray:
        return self._emit(self._total)


def extract_windows(rec: MontagedRecording, window_samples: int = 256,
                    stride_samples: int = 50) -> list[ScaledWindow]:
    """Cut an already scaled recording into windows at starts 0, stride, 2*stride, ...

    A trailing partial window is dropped.
    """
    return window_array(rec.data, rec.sample_rate_hz, window_samples, stride_samples)


def window_array(data: np.ndarray, rate_hz: float, window_samples: int = 256,
                 stride_samples: int = 50, offset_samples: int = 0) -> list[ScaledWindow]:
    """Array form of :func:`extract_windows`.

    ``offset_samples`` is the absolute index of ``data[:, 0]`` and only shifts
    the recorded start times.
    """
    data = np.asarray(data)
    if stride_samples < 1:
        raise ValueError("stride must be at least one sample")
    n = data.shape[-1]
    if window_samples > n:
        raise ValueError(f"window of {window_samples} samples longer than recording ({n})")
    return [ScaledWindow(data[:, s:s + window_samples], (offset_samples + s) / rate_hz)
            for s in range(0, n - window_samples + 1, stride_samples)]


def to_grayscale(w: ScaledWindow) -> GrayscaleImage:
    v = w.data
    if v.size and (v.min() < -1.0 or v.max() > 1.0):
        raise ValueError(f"window at {w.start_sec:.3f}s has values outside [-1, 1]; scaling bug upstream")
    # round half up
    pixels = np.floor((v + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)
    return GrayscaleImage(pixels, w.start_sec)


def keys_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return out


def _resize_weights(n_in: int, n_out: int, a: float) -> np.ndarray:
    # pixel-centre alignment: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    weights = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        w = keys_kernel(src - idx, a)
        np.add.at(weights, (rows, np.clip(idx, 0, n_in - 1)), w)
    return weights


def resize_bicubic(img: GrayscaleImage, out_h: int, out_w: int, a: float = -0.5) -> GrayscaleImage:
    """Separable bicubic resize (Keys kernel, replicated edges), rounded to uint8."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = img.pixels.shape
    if h < 2 or w < 2:
        raise ValueError(f"source image must be at least 2x2, got {h}x{w}")
    if (h, w) == (out_h, out_w):
        return GrayscaleImage(img.pixels.copy(), img.start_sec)
    src = img.pixels.astype(np.float64)
    tmp = src @ _resize_weights(w, out_w, a).T
    out = _resize_weights(h, out_h, a) @ tmp
    pixels = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return GrayscaleImage(pixels, img.start_sec)


def write_pgm(img: GrayscaleImage, directory) -> Path:
    """Dump one window image as binary PGM, named after its start time in ms."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"win_{int(round(img.start_sec * 1000)):08d}.pgm"
    h, w = img.pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.pixels.astype(np.uint8).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1
    return np.frombuffer(blob[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()
