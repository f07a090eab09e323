"""Seeded synthetic scalp recordings with injected seizure-like bursts.

Background is 1/f-shaped noise per electrode plus a weaker common component.
A seizure is a 3 Hz sinusoid with raised-cosine onset/offset ramps whose
amplitude varies across electrodes (a focus) and whose onset is jittered per
electrode, so it survives bipolar differencing. Optional artifacts are brief
(1-3 s) rhythmic transients that look seizure-like for a window or two and
are not part of the reference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .postproc import BCKG, SEIZ, EventList
from .signal_io import RawRecording

ELECTRODES_10_20 = ("FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ",
                    "C4", "T4", "T5", "P3", "PZ", "P4", "T6", "O1", "O2")


@dataclass(frozen=True)
class SynthConfig:
    duration_sec: float = 300.0
    rate_hz: float = 250.0
    n_seizures: int = 4
    seizure_sec: tuple[float, float] = (20.0, 40.0)
    min_gap_sec: float = 20.0
    burst_hz: float = 3.0
    background_uv: float = 20.0
    seizure_gain: float = 5.0     # peak burst amplitude relative to background_uv
    onset_jitter_sec: float = 1.0
    ramp_sec: float = 1.0
    spectral_exponent: float = 1.0
    extra_channels: tuple[str, ...] = ("EKG",)
    n_artifacts: int = 0
    artifact_sec: tuple[float, float] = (1.0, 3.0)


@dataclass(frozen=True)
class SyntheticRecording:
    recording: RawRecording
    reference: EventList


def pink_noise(n: int, rng: np.random.Generator, exponent: float = 1.0) -> np.ndarray:
    """Unit-variance noise with power spectrum ~ 1/f**exponent."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=float)
    f[0] = 1.0
    spec /= f ** (exponent / 2.0)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def _place_seizures(cfg: SynthConfig, rng: np.random.Generator) -> list[tuple[float, float]]:
    lo, hi = cfg.seizure_sec
    durs = rng.uniform(lo, hi, cfg.n_seizures)
    free = cfg.duration_sec - durs.sum() - cfg.min_gap_sec * (cfg.n_seizures + 1)
    if free < 0:
        raise ValueError("recording too short for the requested seizures")
    # split the slack randomly between the gaps
    cuts = np.sort(rng.uniform(0, free, cfg.n_seizures))
    spans = []
    t = 0.0
    prev_cut = 0.0
    for d, c in zip(durs, cuts):
        t += cfg.min_gap_sec + (c - prev_cut)
        prev_cut = c
        spans.append((round(t, 2), round(t + d, 2)))
        t += d
    return spans


def _envelope(t: np.ndarray, start: float, stop: float, ramp: float) -> np.ndarray:
    env = np.zeros_like(t)
    inside = (t >= start) & (t < stop)
    env[inside] = 1.0
    up = inside & (t < start + ramp)
    env[up] = 0.5 - 0.5 * np.cos(np.pi * (t[up] - start) / ramp)
    down = inside & (t > stop - ramp)
    env[down] = np.minimum(env[down], 0.5 - 0.5 * np.cos(np.pi * (stop - t[down]) / ramp))
    return env


def generate_recording(cfg: SynthConfig = SynthConfig(), seed: int = 0) -> SyntheticRecording:
    rng = np.random.default_rng(seed)
    n = int(round(cfg.duration_sec * cfg.rate_hz))
    t = np.arange(n) / cfg.rate_hz
    names = ELECTRODES_10_20 + tuple(cfg.extra_channels)
    common = pink_noise(n, rng, cfg.spectral_exponent)
    data = np.empty((len(names), n))
    for i in range(len(names)):
        data[i] = 0.9 * pink_noise(n, rng, cfg.spectral_exponent) + 0.45 * common
    data *= cfg.background_uv

    spans = _place_seizures(cfg, rng) if cfg.n_seizures else []
    n_el = len(ELECTRODES_10_20)
    for start, stop in spans:
        focus = rng.integers(n_el)
        gains = rng.uniform(0.2, 1.0, n_el)
        gains[focus] = 1.5
        freq = cfg.burst_hz * rng.uniform(0.9, 1.1)
        for i in range(n_el):
            on = start + rng.uniform(0, cfg.onset_jitter_sec)
            phase = rng.uniform(0, 2 * np.pi)
            env = _envelope(t, on, stop, cfg.ramp_sec)
            data[i] += (cfg.seizure_gain * cfg.background_uv * gains[i]
                        * env * np.sin(2 * np.pi * freq * t + phase))

    busy = [(a - cfg.min_gap_sec / 2, b + cfg.min_gap_sec / 2) for a, b in spans]
    placed = 0
    for _ in range(100 * cfg.n_artifacts):
        if placed == cfg.n_artifacts:
            break
        dur = rng.uniform(*cfg.artifact_sec)
        start = rng.uniform(0, cfg.duration_sec - dur)
        if any(start < b and start + dur > a for a, b in busy):
            continue
        busy.append((start, start + dur))
        placed += 1
        focus = rng.integers(n_el)
        gains = rng.uniform(0.0, 0.5, n_el)
        gains[focus] = 1.5
        freq = cfg.burst_hz * rng.uniform(0.8, 1.2)
        env = _envelope(t, start, start + dur, min(cfg.ramp_sec, dur / 2))
        for i in range(n_el):
            data[i] += (cfg.seizure_gain * cfg.background_uv * gains[i]
                        * env * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)))

    rec = RawRecording(names, data, cfg.rate_hz)
    labels = []
    cursor = 0.0
    for start, stop in spans:
        if start > cursor:
            labels.append((cursor, start, BCKG))
        labels.append((start, stop, SEIZ))
        cursor = stop
    if cursor < rec.duration_sec:
        labels.append((cursor, rec.duration_sec, BCKG))
    return SyntheticRecording(rec, EventList.from_spans(labels, confidence=1.0))


def generate_corpus(n_recordings: int, cfg: SynthConfig = SynthConfig(), seed: int = 0) -> list[SyntheticRecording]:
    return [generate_recording(cfg, seed=seed * 1000 + i) for i in range(n_recordings)]
