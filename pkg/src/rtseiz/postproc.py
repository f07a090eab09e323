"""Turn window posteriors into seizure events: threshold, gap fill, short-event removal.

Event boundaries are kept as integer milliseconds so lists tile time exactly.
The offline functions and :class:`StreamingPostprocessor` share the same
merge arithmetic, which is what makes their outputs identical bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .detector.infer import PosteriorSequence

BCKG = "bckg"
SEIZ = "seiz"
FILE_VERSION = "1"


def to_ms(sec: float) -> int:
    return int(round(sec * 1000.0))


@dataclass(frozen=True)
class PostprocParams:
    s_th: float = 0.5
    bd_min_sec: float = 0.0
    sd_min_sec: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.s_th <= 1.0:
            raise ValueError(f"s_th must be in [0, 1], got {self.s_th}")
        if self.bd_min_sec < 0 or self.sd_min_sec < 0:
            raise ValueError("minimum durations must be non-negative")


@dataclass(frozen=True)
class Event:
    start_ms: int
    stop_ms: int
    label: str
    confidence: float

    @property
    def start_sec(self) -> float:
        return self.start_ms / 1000.0

    @property
    def stop_sec(self) -> float:
        return self.stop_ms / 1000.0

    @property
    def duration_ms(self) -> int:
        return self.stop_ms - self.start_ms

    @property
    def duration_sec(self) -> float:
        return self.duration_ms / 1000.0


@dataclass(frozen=True)
class EventList:
    """Contiguous, alternating-label events covering one time span."""

    events: tuple[Event, ...] = ()

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        for e in events:
            if e.stop_ms <= e.start_ms:
                raise ValueError(f"empty or reversed event {e}")
            if e.label not in (BCKG, SEIZ):
                raise ValueError(f"unknown label {e.label!r}")
        for a, b in zip(events, events[1:]):
            if a.stop_ms != b.start_ms:
                raise ValueError(f"events do not tile: {a.stop_ms} ms != {b.start_ms} ms")
            if a.label == b.label:
                raise ValueError(f"adjacent events share label {a.label!r} at {b.start_ms} ms")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @property
    def start_ms(self) -> int:
        return self.events[0].start_ms if self.events else 0

    @property
    def stop_ms(self) -> int:
        return self.events[-1].stop_ms if self.events else 0

    @property
    def total_dur_sec(self) -> float:
        return (self.stop_ms - self.start_ms) / 1000.0

    def seizures(self) -> list[Event]:
        return [e for e in self.events if e.label == SEIZ]

    def spans(self) -> list[tuple[int, int, str]]:
        """Boundaries and labels only, without confidences."""
        return [(e.start_ms, e.stop_ms, e.label) for e in self.events]

    @classmethod
    def from_spans(cls, spans: Iterable[tuple[float, float, str]], confidence: float = 1.0) -> "EventList":
        """Build from (start_sec, stop_sec, label) triples, merging equal neighbours."""
        events = [Event(to_ms(a), to_ms(b), lab, confidence) for a, b, lab in spans]
        return cls(tuple(_coalesce(events)))


def _merge(members: Sequence[Event], label: str) -> Event:
    """One event spanning ``members`` with their duration-weighted mean confidence."""
    if len(members) == 1:
        e = members[0]
        return e if e.label == label else replace(e, label=label)
    num = math.fsum(e.confidence * e.duration_ms for e in members)
    den = math.fsum(e.duration_ms for e in members)
    return Event(members[0].start_ms, members[-1].stop_ms, label, num / den)


def _coalesce(events: Sequence[Event]) -> list[Event]:
    out: list[Event] = []
    group: list[Event] = []
    for e in events:
        if group and e.label != group[-1].label:
            out.append(_merge(group, group[-1].label))
            group = []
        group.append(e)
    if group:
        out.append(_merge(group, group[-1].label))
    return out


def _regroup(events: Sequence[Event], labels: Sequence[str]) -> EventList:
    """Relabel ``events`` and merge runs of equal new labels."""
    out: list[Event] = []
    group: list[Event] = []
    current = None
    for e, lab in zip(events, labels):
        if group and lab != current:
            out.append(_merge(group, current))
            group = []
        group.append(e)
        current = lab
    if group:
        out.append(_merge(group, current))
    return EventList(tuple(out))


def _window_bounds(post: PosteriorSequence) -> list[tuple[int, int]]:
    # window i ends where window i + 1 begins: at round(start_i + stride)
    if not post.start_sec:
        return []
    stops = [to_ms(t + post.stride_sec) for t in post.start_sec]
    starts = [to_ms(post.start_sec[0])] + stops[:-1]
    return list(zip(starts, stops))


def _run_event(start_ms: int, stop_ms: int, label: str, ps: Sequence[float]) -> Event:
    return Event(start_ms, stop_ms, label, math.fsum(ps) / len(ps))


def threshold(post: PosteriorSequence, s_th: float) -> EventList:
    """Label each window seizure iff p_seiz >= s_th and merge runs.

    Window i covers [start_i, start_i + stride). Event confidence is the mean
    seizure posterior of its windows.
    """
    if not 0.0 <= s_th <= 1.0:
        raise ValueError(f"s_th must be in [0, 1], got {s_th}")
    events: list[Event] = []
    run: list[float] = []
    run_label = None
    run_start = 0
    bounds = _window_bounds(post)
    for (a, b), p in zip(bounds, post.p_seiz):
        lab = SEIZ if p >= s_th else BCKG
        if run and lab != run_label:
            events.append(_run_event(run_start, a, run_label, run))
            run = []
        if not run:
            run_start, run_label = a, lab
        run.append(p)
    if run:
        events.append(_run_event(run_start, bounds[-1][1], run_label, run))
    return EventList(tuple(events))


def fill_background_gaps(ev: EventList, bd_min_sec: float) -> EventList:
    """Relabel background shorter than ``bd_min_sec`` lying between two seizures."""
    limit = bd_min_sec * 1000.0
    events = ev.events
    labels = [
        SEIZ if (e.label == BCKG and 0 < i < len(events) - 1 and e.duration_ms < limit) else e.label
        for i, e in enumerate(events)
    ]
    return _regroup(events, labels)


def remove_short_seizures(ev: EventList, sd_min_sec: float) -> EventList:
    limit = sd_min_sec * 1000.0
    labels = [BCKG if (e.label == SEIZ and e.duration_ms < limit) else e.label for e in ev.events]
    return _regroup(ev.events, labels)


def postprocess(post: PosteriorSequence, p: PostprocParams) -> EventList:
    """Threshold, then fill short background gaps, then drop short seizures.

    Each step runs once; the order matters because the two morphology steps
    do not commute.
    """
    ev = threshold(post, p.s_th)
    ev = fill_background_gaps(ev, p.bd_min_sec)
    return remove_short_seizures(ev, p.sd_min_sec)


def detection_delay(p: PostprocParams) -> float:
    """Intrinsic decision lag of the postprocessor, in seconds."""
    return p.bd_min_sec + p.sd_min_sec


class OutOfOrderPosterior(ValueError):
    pass


class StreamingPostprocessor:
    """Causal version of :func:`postprocess`.

    Feed posteriors in time order with :meth:`push`; each call returns the
    events that became final. :meth:`finish` flushes the rest. Emitted
    events are never revised, and their concatenation equals the offline
    result. ``committed_ms`` is the time up to which every label is already
    decided (possibly inside an event whose end is not yet known).
    """

    def __init__(self, params: PostprocParams, stride_sec: float):
        if not stride_sec > 0:
            raise ValueError("stride must be positive")
        self.params = params
        self.stride_sec = stride_sec
        self._bd = params.bd_min_sec * 1000.0
        self._sd = params.sd_min_sec * 1000.0
        self._last_start: float | None = None
        self._last_stop_ms: int | None = None
        self._done = False
        # thresholding: the open run
        self._run_label: str | None = None
        self._run_start = 0
        self._run_stop = 0
        self._run_ps: list[float] = []
        # gap filling: current seizure group and an undecided short gap after it
        self._group: list[Event] | None = None
        self._gap: Event | None = None
        # short-seizure removal: background members waiting to be merged
        self._pending: list[Event] = []
        self._out: list[Event] = []
        self._out_log: list[Event] = []
        self._emitted_stop: int | None = None

    # -- stage 3 ---------------------------------------------------------
    def _emit(self, e: Event) -> None:
        self._out.append(e)
        self._out_log.append(e)
        self._emitted_stop = e.stop_ms

    def _flush_pending(self) -> None:
        if self._pending:
            self._emit(_merge(self._pending, BCKG))
            self._pending = []

    def _to_removal(self, e: Event) -> None:
        if e.label == SEIZ and not e.duration_ms < self._sd:
            self._flush_pending()
            self._emit(e)
        else:
            self._pending.append(e)

    # -- stage 2 ---------------------------------------------------------
    def _close_group(self) -> None:
        self._to_removal(_merge(self._group, SEIZ))
        self._group = None

    def _to_fill(self, run: Event) -> None:
        if run.label == SEIZ:
            if self._group is None:
                self._group = [run]
            else:
                if self._gap is not None:
                    self._group.append(self._gap)
                    self._gap = None
                self._group.append(run)
        elif self._group is not None:
            if run.duration_ms < self._bd:
                self._gap = run
            else:
                self._close_group()
                self._to_removal(run)
        else:
            self._to_removal(run)

    # -- lookahead shortcuts ---------------------------------------------
    def _known_group_span(self) -> tuple[int, int] | None:
        """(start, stop) of the seizure group as far as it is certain to extend."""
        run_seiz = self._run_label == SEIZ
        if self._group is None:
            return (self._run_start, self._run_stop) if run_seiz else None
        start = self._group[0].start_ms
        if self._gap is not None and run_seiz:
            return start, self._run_stop
        return start, self._group[-1].stop_ms

    def _decide_early(self) -> None:
        # background run after a group already long enough: the group is closed
        if (self._group is not None and self._gap is None and self._run_label == BCKG
                and not (self._run_stop - self._run_start) < self._bd):
            self._close_group()
        span = self._known_group_span()
        if span is not None and not (span[1] - span[0]) < self._sd:
            # the group will survive removal, so the background before it is final
            self._flush_pending()

    @property
    def committed_ms(self) -> int:
        t = self._emitted_stop if self._emitted_stop is not None else 0
        if self._pending:
            t = self._pending[-1].stop_ms
        if self._done:
            return t
        span = self._known_group_span()
        if self._group is not None:
            if span is not None and not (span[1] - span[0]) < self._sd:
                t = span[1]
            return t
        if self._run_label == BCKG:
            return self._run_stop
        if self._run_label == SEIZ and span is not None and not (span[1] - span[0]) < self._sd:
            return self._run_stop
        return t

    def committed_spans(self) -> list[tuple[int, int, str]]:
        """Final labels known so far, as (start_ms, stop_ms, label), up to ``committed_ms``."""
        spans = [(e.start_ms, e.stop_ms, e.label) for e in self._out_log]
        if self._pending:
            spans.append((self._pending[0].start_ms, self._pending[-1].stop_ms, BCKG))
        c = self.committed_ms
        lo = spans[-1][1] if spans else None
        if lo is not None and c > lo or lo is None and c > 0:
            lo = lo if lo is not None else (self._group[0].start_ms if self._group else self._run_start)
            if self._group is not None or self._run_label == SEIZ:
                spans.append((lo, c, SEIZ))
            else:
                spans.append((lo, c, BCKG))
        merged: list[tuple[int, int, str]] = []
        for a, b, lab in spans:
            if merged and merged[-1][2] == lab:
                merged[-1] = (merged[-1][0], b, lab)
            else:
                merged.append((a, b, lab))
        return merged

    # -- public ----------------------------------------------------------
    def push(self, start_sec: float, p_seiz: float) -> list[Event]:
        if self._done:
            raise RuntimeError("stream already finished")
        if self._last_start is not None:
            step = start_sec - self._last_start
            if step <= 0:
                raise OutOfOrderPosterior(
                    f"posterior at {start_sec:.3f}s arrived after {self._last_start:.3f}s")
            if abs(step - self.stride_sec) > 1e-6:
                raise OutOfOrderPosterior(
                    f"posterior at {start_sec:.3f}s breaks the {self.stride_sec}s stride")
        if not 0.0 <= p_seiz <= 1.0:
            raise ValueError(f"posterior {p_seiz} outside [0, 1]")
        a = to_ms(start_sec)
        if self._last_stop_ms is not None:
            a = self._last_stop_ms
        b = to_ms(start_sec + self.stride_sec)
        self._last_start = start_sec
        self._last_stop_ms = b

        lab = SEIZ if p_seiz >= self.params.s_th else BCKG
        if self._run_label is not None and lab != self._run_label:
            self._to_fill(_run_event(self._run_start, self._run_stop, self._run_label, self._run_ps))
            self._run_label = None
        if self._run_label is None:
            self._run_label, self._run_start, self._run_ps = lab, a, []
        self._run_ps.append(p_seiz)
        self._run_stop = b
        self._decide_early()
        return self._take()

    def finish(self) -> list[Event]:
        if self._done:
            return []
        if self._run_label is not None:
            self._to_fill(_run_event(self._run_start, self._run_stop, self._run_label, self._run_ps))
            self._run_label = None
        if self._group is not None:
            self._close_group()
        if self._gap is not None:
            self._to_removal(self._gap)
            self._gap = None
        self._flush_pending()
        self._done = True
        return self._take()

    def _take(self) -> list[Event]:
        out, self._out = self._out, []
        return out


def streaming_postprocess(post: PosteriorSequence, p: PostprocParams) -> EventList:
    sp = StreamingPostprocessor(p, post.stride_sec)
    events: list[Event] = []
    for t, prob in post.entries():
        events.extend(sp.push(t, prob))
    events.extend(sp.finish())
    return EventList(tuple(events))


def pad_to_span(ev: EventList, start_ms: int, stop_ms: int) -> EventList:
    """Extend or clip ``ev`` to [start_ms, stop_ms), filling uncovered time with background."""
    events: list[Event] = []
    if not ev.events:
        return EventList((Event(start_ms, stop_ms, BCKG, 0.0),)) if stop_ms > start_ms else EventList()
    if ev.start_ms > start_ms:
        events.append(Event(start_ms, ev.start_ms, BCKG, 0.0))
    for e in ev.events:
        a, b = max(e.start_ms, start_ms), min(e.stop_ms, stop_ms)
        if b > a:
            events.append(Event(a, b, e.label, e.confidence))
    if ev.stop_ms < stop_ms:
        events.append(Event(ev.stop_ms, stop_ms, BCKG, 0.0))
    return EventList(tuple(_coalesce(events)))


# --------------------------------------------------------------------------
# annotation files

def format_events(ev: EventList) -> str:
    lines = [f"version={FILE_VERSION}"]
    for e in ev.events:
        lines.append(f"{e.start_sec:.4f}\t{e.stop_sec:.4f}\t{e.label}\t{e.confidence:.4f}")
    return "\n".join(lines) + "\n"


def parse_events(text: str, source: str = "<string>") -> EventList:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("version="):
        raise ValueError(f"{source}:1: missing 'version=' header")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ValueError(f"{source}:{lineno}: expected 4 tab-separated fields")
        try:
            a, b, conf = float(fields[0]), float(fields[1]), float(fields[3])
        except ValueError:
            raise ValueError(f"{source}:{lineno}: bad number in {line!r}") from None
        events.append(Event(to_ms(a), to_ms(b), fields[2].strip(), conf))
    try:
        return EventList(tuple(events))
    except ValueError as exc:
        raise ValueError(f"{source}: {exc}") from None


def write_events(ev: EventList, path) -> None:
    Path(path).write_text(format_events(ev), encoding="utf-8")


def read_events(path) -> EventList:
    path = Path(path)
    return parse_events(path.read_text(encoding="utf-8"), str(path))
