"""Throughput (xRT) and latency accounting for the streaming pipeline."""
from __future__ import annotations

import resource
import sys
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field

from .pipeline import PipelineConfig, StreamingFrontEnd, decision_offset_sec, detect_streaming
from .postproc import detection_delay
from .signal_io import RawRecording


@dataclass
class BenchReport:
    xrt: float
    processing_sec: float
    signal_sec: float
    n_windows: int
    per_window_latency_ms: float
    # latency breakdown, seconds
    filter_group_delay_sec: float
    scaling_lookahead_sec: float
    window_buffering_sec: float
    postproc_delay_sec: float
    total_latency_sec: float
    measured_max_lag_sec: float
    stride_sec: float
    peak_memory_mb: float
    stage_sec: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def latency_breakdown(cfg: PipelineConfig, group_delay_sec: float, lookahead_sec: float) -> dict:
    """Algorithmic delay of each stage, in seconds.

    ``window_buffering_sec`` is the part of a window that lies after the
    stride-long segment its posterior labels.
    """
    win = cfg.window_samples / cfg.target_hz
    labelled_end = decision_offset_sec(cfg, 0.0) + cfg.stride_sec
    parts = {
        "filter_group_delay_sec": group_delay_sec,
        "scaling_lookahead_sec": lookahead_sec,
        "window_buffering_sec": win - labelled_end,
        "postproc_delay_sec": detection_delay(cfg.postproc),
    }
    parts["total_latency_sec"] = sum(parts.values())
    return parts


def _peak_rss_mb() -> float:
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # bytes on macOS, kilobytes elsewhere
    return peak / (1024.0 * 1024.0) if sys.platform == "darwin" else peak / 1024.0


def run_bench(rec: RawRecording, model, cfg: PipelineConfig, chunk_sec: float = 1.0) -> BenchReport:
    """Replay ``rec`` through the causal pipeline in ``chunk_sec`` pieces and time it."""
    stages: dict[str, float] = defaultdict(float)

    def on_chunk(name, dt):
        stages[name] += dt

    t0 = time.perf_counter()
    trace = detect_streaming(rec, model, cfg, chunk_sec=chunk_sec, on_chunk=on_chunk)
    elapsed = time.perf_counter() - t0

    fe = StreamingFrontEnd(rec.names, rec.sample_rate_hz, cfg)
    parts = latency_breakdown(cfg, fe.group_delay_sec, fe.scaler.lookahead_sec)
    # lag only counts once decisions have started flowing
    lags = [t - c for t, c in trace.commits if c > 0]
    return BenchReport(
        xrt=elapsed / rec.duration_sec,
        processing_sec=elapsed,
        signal_sec=rec.duration_sec,
        n_windows=trace.n_windows,
        per_window_latency_ms=1000.0 * elapsed / max(trace.n_windows, 1),
        measured_max_lag_sec=max(lags) if lags else float("nan"),
        stride_sec=cfg.stride_sec,
        peak_memory_mb=_peak_rss_mb(),
        stage_sec=dict(stages),
        **parts,
    )
