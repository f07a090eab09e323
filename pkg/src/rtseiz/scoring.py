"""Event (OVLP) and epoch scoring of hypothesis annotations against a reference."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .detector.infer import PosteriorSequence
from .postproc import SEIZ, EventList, PostprocParams, detection_delay, pad_to_span, postprocess

SECONDS_PER_DAY = 86400.0
NAN = float("nan")


@dataclass(frozen=True)
class ScoreReport:
    """One metric's summary.

    For ``ovlp`` the counts are events: ``tp``/``fn`` over reference
    seizures, ``fp`` over hypothesis seizures, ``tn`` over reference
    background events untouched by any hypothesis seizure. For ``epoch`` they
    count epochs. Percentages are NaN when their denominator is empty.
    """

    metric: str
    sensitivity_pct: float
    specificity_pct: float
    fa_per_24h: float
    tp: int
    fp: int
    fn: int
    tn: int
    total_dur_sec: float


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [actual bckg/seiz, detected bckg/seiz]

    @property
    def percent(self) -> np.ndarray:
        """Row-normalised percentages; a row with no epochs is all NaN."""
        rows = self.counts.sum(axis=1, keepdims=True).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, 100.0 * self.counts / rows, NAN)

    def format(self) -> str:
        pct = self.percent
        lines = ["actual\\detected  bckg      seiz"]
        for name, row in zip(("bckg", "seiz"), pct):
            lines.append(f"{name:<16}" + "".join(
                f"{'undefined':>10}" if math.isnan(v) else f"{v:9.2f}%" for v in row))
        return "\n".join(lines)


def _check_span(ref: EventList, hyp: EventList) -> None:
    if (ref.start_ms, ref.stop_ms) != (hyp.start_ms, hyp.stop_ms):
        raise ValueError(
            f"reference covers [{ref.start_ms}, {ref.stop_ms}) ms but hypothesis covers "
            f"[{hyp.start_ms}, {hyp.stop_ms}) ms")


def _pct(num: float, den: float) -> float:
    return 100.0 * num / den if den > 0 else NAN


def _overlaps(a: Sequence, b: Sequence) -> list[bool]:
    """For each interval in ``a``, whether some interval of ``b`` overlaps it (both sorted)."""
    hit = []
    j = 0
    for x in a:
        while j < len(b) and b[j].stop_ms <= x.start_ms:
            j += 1
        hit.append(j < len(b) and b[j].start_ms < x.stop_ms)
    return hit


def score_ovlp(ref: EventList, hyp: EventList) -> ScoreReport:
    """Any-overlap event scoring.

    Specificity is the share of reference background time that no hypothesis
    seizure covers.
    """
    _check_span(ref, hyp)
    ref_sz, hyp_sz = ref.seizures(), hyp.seizures()
    ref_bg = [e for e in ref if e.label != SEIZ]
    detected = _overlaps(ref_sz, hyp_sz)
    tp = sum(detected)
    fn = len(ref_sz) - tp
    fp = sum(not h for h in _overlaps(hyp_sz, ref_sz))
    tn = sum(not h for h in _overlaps(ref_bg, hyp_sz))

    bg_ms = sum(e.duration_ms for e in ref_bg)
    covered = 0
    j = 0
    for e in ref_bg:
        while j < len(hyp_sz) and hyp_sz[j].stop_ms <= e.start_ms:
            j += 1
        k = j
        while k < len(hyp_sz) and hyp_sz[k].start_ms < e.stop_ms:
            covered += min(e.stop_ms, hyp_sz[k].stop_ms) - max(e.start_ms, hyp_sz[k].start_ms)
            k += 1
    total = ref.total_dur_sec
    return ScoreReport("ovlp", _pct(tp, tp + fn), _pct(bg_ms - covered, bg_ms),
                       fp * SECONDS_PER_DAY / total if total > 0 else NAN,
                       tp, fp, fn, tn, total)


def _seizure_ms_before(ev: EventList, t: np.ndarray) -> np.ndarray:
    """Seizure milliseconds in [ev.start_ms, t) for each t."""
    sz = ev.seizures()
    if not sz:
        return np.zeros(len(t), dtype=np.int64)
    starts = np.array([e.start_ms for e in sz], dtype=np.int64)
    stops = np.array([e.stop_ms for e in sz], dtype=np.int64)
    clipped = np.clip(t[:, None], starts[None, :], stops[None, :]) - starts[None, :]
    return clipped.sum(axis=1)


def epoch_labels(ev: EventList, epoch_sec: float) -> np.ndarray:
    """Majority label per epoch (True = seizure); exact halves count as seizure."""
    if not epoch_sec > 0:
        raise ValueError("epoch_sec must be positive")
    step = int(round(epoch_sec * 1000.0))
    if step <= 0:
        raise ValueError("epoch shorter than the 1 ms time resolution")
    edges = np.arange(ev.start_ms, ev.stop_ms, step, dtype=np.int64)
    edges = np.append(edges, ev.stop_ms)
    seiz = np.diff(_seizure_ms_before(ev, edges))
    return 2 * seiz >= np.diff(edges)


def _epoch_counts(ref: EventList, hyp: EventList, epoch_sec: float) -> np.ndarray:
    _check_span(ref, hyp)
    r = epoch_labels(ref, epoch_sec)
    h = epoch_labels(hyp, epoch_sec)
    return np.array([[np.sum(~r & ~h), np.sum(~r & h)],
                     [np.sum(r & ~h), np.sum(r & h)]], dtype=np.int64)


def score_epoch(ref: EventList, hyp: EventList, epoch_sec: float = 1.0) -> ScoreReport:
    (tn, fp), (fn, tp) = _epoch_counts(ref, hyp, epoch_sec).tolist()
    total = ref.total_dur_sec
    return ScoreReport("epoch", _pct(tp, tp + fn), _pct(tn, tn + fp),
                       fp * SECONDS_PER_DAY / total if total > 0 else NAN,
                       tp, fp, fn, tn, total)


def confusion_matrix(ref: EventList, hyp: EventList, epoch_sec: float = 1.0) -> ConfusionMatrix:
    return ConfusionMatrix(_epoch_counts(ref, hyp, epoch_sec))


@dataclass(frozen=True)
class SweepRow:
    s_th: float
    bd_min_sec: float
    sd_min_sec: float
    delay_sec: float
    sensitivity_pct: float
    fa_per_24h: float


def sweep_delay(post: PosteriorSequence, ref: EventList, s_th: float,
                grid: Iterable[tuple[float, float]]) -> list[SweepRow]:
    """Postprocess and OVLP-score once per (bd_min, sd_min); rows sorted by delay.

    The hypothesis is padded with background to the reference span before
    scoring.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty parameter grid")
    rows = []
    for bd, sd in grid:
        p = PostprocParams(s_th, bd, sd)
        hyp = pad_to_span(postprocess(post, p), ref.start_ms, ref.stop_ms)
        rep = score_ovlp(ref, hyp)
        rows.append(SweepRow(s_th, bd, sd, detection_delay(p), rep.sensitivity_pct, rep.fa_per_24h))
    return sorted(rows, key=lambda r: r.delay_sec)


REPORT_FIELDS = ["metric", "sensitivity_pct", "specificity_pct", "fa_per_24h",
                 "tp", "fp", "fn", "tn", "total_dur_sec"]
SWEEP_FIELDS = ["delay_sec", "sensitivity_pct", "fa_per_24h"]


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def write_reports(reports: Sequence[ScoreReport], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in reports:
        d = asdict(r)
        writer.writerow([_fmt(d[k]) for k in REPORT_FIELDS])


def write_sweep(rows: Sequence[SweepRow], fh, extended: bool = False) -> None:
    """Sweep table as CSV; ``extended`` prepends the s_th/bd_min/sd_min columns."""
    fields = (["s_th", "bd_min_sec", "sd_min_sec"] if extended else []) + SWEEP_FIELDS
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(fields)
    for r in rows:
        d = asdict(r)
        writer.writerow([_fmt(d[k]) for k in fields])
