"""End-to-end chain: montage, decimation, scaling, window images, inference, postprocessing.

Two drivers produce the same window images: :func:`window_images` works on a
whole recording at once and :class:`StreamingFrontEnd` consumes it in chunks
the way a live acquisition would. The detector then runs window by window so
both paths feed identical posteriors to the postprocessor.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import LabeledImages
from .detector.infer import PosteriorSequence
from .detector.model import predict_proba
from .postproc import (EventList, PostprocParams, StreamingPostprocessor, pad_to_span,
                       postprocess, to_ms)
from .signal_io import (MontagedRecording, MontageSpec, RawRecording, StreamingDecimator,
                        apply_montage, decimate, default_montage, load_montage)
from .windowing import (GrayscaleImage, ScalingParams, StreamingScaler, resize_bicubic,
                        scale_recording, to_grayscale, window_array)


@dataclass(frozen=True)
class PipelineConfig:
    montage_path: str = ""
    target_hz: float = 50.0
    window_sec: float = 6.0
    window_samples: int = 256
    stride_samples: int = 50
    image_size: int = 256
    model_path: str = ""
    s_th: float = 0.5
    bd_min_sec: float = 0.0
    sd_min_sec: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("target_hz", "window_sec", "window_samples", "stride_samples", "image_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        # validates s_th and the durations
        self.postproc

    @property
    def postproc(self) -> PostprocParams:
        return PostprocParams(self.s_th, self.bd_min_sec, self.sd_min_sec)

    @property
    def scaling(self) -> ScalingParams:
        return ScalingParams(self.window_sec)

    @property
    def stride_sec(self) -> float:
        return self.stride_samples / self.target_hz

    def montage(self) -> MontageSpec:
        return load_montage(self.montage_path) if self.montage_path else default_montage()

    def replace(self, **changes) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed PipelineConfig fields."""
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        kind = types[key]
        try:
            values[key] = int(value) if kind == "int" else float(value) if kind == "float" else value
        except ValueError:
            raise ValueError(f"{source}:{lineno}: bad {kind} value {value!r} for {key}") from None
    return values


def load_config(path=None, **overrides) -> PipelineConfig:
    values = {}
    if path:
        path = Path(path)
        values = parse_config(path.read_text(encoding="utf-8"), str(path))
        if values.get("montage_path") and not Path(values["montage_path"]).is_absolute():
            values["montage_path"] = str(path.parent / values["montage_path"])
        if values.get("model_path") and not Path(values["model_path"]).is_absolute():
            values["model_path"] = str(path.parent / values["model_path"])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def format_config(cfg: PipelineConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


# --------------------------------------------------------------------------
# window timing

def decision_offset_sec(cfg: PipelineConfig, group_delay_sec: float) -> float:
    """Map a window's start (decimated-stream time) to the start of the stride it labels.

    Each posterior labels the stride-long segment centred in its window; the
    anti-alias filter delay is removed so times refer to the recording.
    """
    centre = (cfg.window_samples - cfg.stride_samples) / 2.0 / cfg.target_hz
    return centre - group_delay_sec


def _image(window, size: int) -> GrayscaleImage:
    return resize_bicubic(to_grayscale(window), size, size)


# --------------------------------------------------------------------------
# offline front end

@dataclass
class FrontEndOutput:
    images: list[GrayscaleImage]
    group_delay_sec: float
    scaled: MontagedRecording


def window_images(rec: RawRecording, cfg: PipelineConfig, montage: MontageSpec | None = None) -> FrontEndOutput:
    montage = montage or cfg.montage()
    mont = decimate(apply_montage(rec, montage), cfg.target_hz)
    scaled = scale_recording(mont, cfg.scaling)
    if scaled.n_samples < cfg.window_samples:
        return FrontEndOutput([], mont.group_delay_sec, scaled)
    windows = window_array(scaled.data, scaled.sample_rate_hz, cfg.window_samples, cfg.stride_samples)
    return FrontEndOutput([_image(w, cfg.image_size) for w in windows], mont.group_delay_sec, scaled)


# --------------------------------------------------------------------------
# streaming front end

class StreamingFrontEnd:
    """Chunk-fed montage -> decimator -> scaler -> window images."""

    def __init__(self, names, rate_hz: float, cfg: PipelineConfig, montage: MontageSpec | None = None):
        self.cfg = cfg
        self.montage = montage or cfg.montage()
        self._names = tuple(names)
        self._rate = rate_hz
        # validates channel names once, on an empty recording
        apply_montage(RawRecording(self._names, np.zeros((len(self._names), 0)), rate_hz), self.montage)
        n_ch = len(self.montage.pairs)
        self.decimator = StreamingDecimator(n_ch, rate_hz, cfg.target_hz)
        self.scaler = StreamingScaler(n_ch, self.decimator.target_hz, cfg.scaling)
        self._buf = np.zeros((n_ch, 0))
        self._buf_start = 0   # absolute scaled-sample index of _buf[:, 0]
        self._next_start = 0  # absolute index of the next window start

    @property
    def group_delay_sec(self) -> float:
        return self.decimator.group_delay_sec

    def _windows(self, scaled: np.ndarray) -> list[GrayscaleImage]:
        self._buf = np.concatenate([self._buf, scaled], axis=1)
        out = []
        w, s = self.cfg.window_samples, self.cfg.stride_samples
        while self._next_start + w <= self._buf_start + self._buf.shape[1]:
            lo = self._next_start - self._buf_start
            win = window_array(self._buf[:, lo:lo + w], self.decimator.target_hz, w, w,
                               offset_samples=self._next_start)[0]
            out.append(_image(win, self.cfg.image_size))
            self._next_start += s
        drop = min(self._next_start - self._buf_start, self._buf.shape[1])
        if drop > 0:
            self._buf = self._buf[:, drop:]
            self._buf_start += drop
        return out

    def push(self, chunk: np.ndarray) -> list[GrayscaleImage]:
        rec = RawRecording(self._names, chunk, self._rate)
        mont = apply_montage(rec, self.montage)
        return self._windows(self.scaler.push(self.decimator.push(mont.data)))

    def flush(self) -> list[GrayscaleImage]:
        return self._windows(self.scaler.flush())


# --------------------------------------------------------------------------
# detection

def posteriors(model, images: list[GrayscaleImage], cfg: PipelineConfig,
               group_delay_sec: float) -> PosteriorSequence:
    offset = decision_offset_sec(cfg, group_delay_sec)
    probs = [float(predict_proba(model, [im])[0, 1]) for im in images]
    return PosteriorSequence(tuple(im.start_sec + offset for im in images), tuple(probs), cfg.stride_sec)


def detect_offline(rec: RawRecording, model, cfg: PipelineConfig) -> EventList:
    """Batch reference path: whole-recording preprocessing then offline postprocessing."""
    fe = window_images(rec, cfg)
    post = posteriors(model, fe.images, cfg, fe.group_delay_sec)
    return pad_to_span(postprocess(post, cfg.postproc), 0, to_ms(rec.duration_sec))


@dataclass
class StreamTrace:
    """What a streaming run produced and when."""

    events: EventList
    posteriors: PosteriorSequence
    n_windows: int
    # (stream time sec, committed decision time sec) after every chunk
    commits: list[tuple[float, float]]


def detect_streaming(rec: RawRecording, model, cfg: PipelineConfig, chunk_sec: float = 1.0,
                     on_chunk=None) -> StreamTrace:
    """Replay ``rec`` chunk by chunk through the causal pipeline.

    ``on_chunk(stage, seconds)`` receives per-stage wall time if given.
    """
    import time

    fe = StreamingFrontEnd(rec.names, rec.sample_rate_hz, cfg)
    offset = decision_offset_sec(cfg, fe.group_delay_sec)
    pp = StreamingPostprocessor(cfg.postproc, cfg.stride_sec)
    chunk = max(1, int(round(chunk_sec * rec.sample_rate_hz)))
    events, starts, probs, commits = [], [], [], []

    def consume(images):
        for im in images:
            t0 = time.perf_counter()
            p = float(predict_proba(model, [im])[0, 1])
            t1 = time.perf_counter()
            starts.append(im.start_sec + offset)
            probs.append(p)
            events.extend(pp.push(im.start_sec + offset, p))
            if on_chunk:
                on_chunk("inference", t1 - t0)
                on_chunk("postproc", time.perf_counter() - t1)

    for lo in range(0, rec.n_samples, chunk):
        t0 = time.perf_counter()
        images = fe.push(rec.data[:, lo:lo + chunk])
        if on_chunk:
            on_chunk("front_end", time.perf_counter() - t0)
        consume(images)
        stream_t = min(lo + chunk, rec.n_samples) / rec.sample_rate_hz
        commits.append((stream_t, pp.committed_ms / 1000.0))
    t0 = time.perf_counter()
    images = fe.flush()
    if on_chunk:
        on_chunk("front_end", time.perf_counter() - t0)
    consume(images)
    events.extend(pp.finish())
    ev = pad_to_span(EventList(tuple(events)), 0, to_ms(rec.duration_sec))
    post = PosteriorSequence(tuple(starts), tuple(probs), cfg.stride_sec)
    return StreamTrace(ev, post, len(starts), commits)


# --------------------------------------------------------------------------
# training data

def window_labels(n_windows: int, reference: EventList, cfg: PipelineConfig,
                  group_delay_sec: float, min_overlap: float = 0.5) -> np.ndarray:
    """1 where at least ``min_overlap`` of a window's span lies inside a reference seizure."""
    win_ms = cfg.window_samples / cfg.target_hz * 1000.0
    sz = reference.seizures()
    labels = np.zeros(n_windows, dtype=np.int64)
    for i in range(n_windows):
        a = (i * cfg.stride_sec - group_delay_sec) * 1000.0
        b = a + win_ms
        inside = sum(max(0.0, min(b, e.stop_ms) - max(a, e.start_ms)) for e in sz)
        labels[i] = int(inside >= min_overlap * win_ms)
    return labels


def labeled_windows(recordings, cfg: PipelineConfig, min_overlap: float = 0.5) -> LabeledImages:
    """Window images of (RawRecording, reference EventList) pairs with majority labels."""
    images, labels = [], []
    for rec, ref in recordings:
        fe = window_images(rec, cfg)
        if not fe.images:
            continue
        images.extend(im.pixels for im in fe.images)
        labels.append(window_labels(len(fe.images), ref, cfg, fe.group_delay_sec, min_overlap))
    if not images:
        raise ValueError("no windows could be cut from the training recordings")
    return LabeledImages(np.stack(images), np.concatenate(labels))

