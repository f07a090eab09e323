import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import label_array, morphology_oracle
from rtseiz.detector.infer import PosteriorSequence
from rtseiz.postproc import (BCKG, SEIZ, Event, EventList, OutOfOrderPosterior, PostprocParams,
                             StreamingPostprocessor, detection_delay, fill_background_gaps,
                             pad_to_span, parse_events, postprocess, read_events,
                             remove_short_seizures, streaming_postprocess, threshold, write_events)


def ev(*spans):
    return EventList.from_spans(spans)


def post(ps, stride=1.0, t0=0.0):
    return PosteriorSequence.uniform(ps, stride, t0)


# -- event lists -------------------------------------------------------------

def test_eventlist_invariants():
    with pytest.raises(ValueError, match="tile"):
        EventList((Event(0, 10, SEIZ, 1), Event(11, 20, BCKG, 1)))
    with pytest.raises(ValueError, match="share"):
        EventList((Event(0, 10, SEIZ, 1), Event(10, 20, SEIZ, 1)))
    with pytest.raises(ValueError):
        EventList((Event(5, 5, SEIZ, 1),))
    with pytest.raises(ValueError):
        EventList((Event(0, 5, "artf", 1),))
    e = ev((0, 2, "bckg"), (2, 2.5, "seiz"))
    assert e.total_dur_sec == 2.5 and e.stop_ms == 2500


# -- threshold -----------------------------------------------------------------

def test_threshold_uniform():
    out = threshold(post([0.9] * 5), 0.5)
    assert out.spans() == [(0, 5000, SEIZ)]
    assert out[0].confidence == pytest.approx(0.9)


def test_threshold_extremes():
    ps = [0.0, 0.3, 0.99, 0.5]
    assert threshold(post(ps), 0.0).spans() == [(0, 4000, SEIZ)]
    assert threshold(post(ps), 1.0).spans() == [(0, 4000, BCKG)]


def test_threshold_run_length_example():
    out = threshold(post([0.2, 0.8, 0.8, 0.1]), 0.5)
    assert out.spans() == [(0, 1000, BCKG), (1000, 3000, SEIZ), (3000, 4000, BCKG)]
    assert [e.confidence for e in out] == pytest.approx([0.2, 0.8, 0.1])


def test_threshold_is_inclusive():
    assert threshold(post([0.5]), 0.5).spans() == [(0, 1000, SEIZ)]


def test_threshold_errors():
    with pytest.raises(ValueError):
        threshold(post([0.5]), 1.5)
    with pytest.raises(ValueError):
        PostprocParams(s_th=-0.1)
    with pytest.raises(ValueError):
        PostprocParams(bd_min_sec=-1)


# -- morphology ----------------------------------------------------------------

def test_gap_fill_examples():
    e = ev((0, 5, "seiz"), (5, 7, "bckg"), (7, 10, "seiz"))
    assert fill_background_gaps(e, 0).spans() == e.spans()
    assert fill_background_gaps(e, 3).spans() == [(0, 10000, SEIZ)]
    lead = ev((0, 2, "bckg"), (2, 5, "seiz"))
    assert fill_background_gaps(lead, 10).spans() == lead.spans()


def test_gap_fill_matches_label_oracle():
    e = ev((0, 5, "seiz"), (5, 7, "bckg"), (7, 10, "seiz"))
    arr = label_array(e.spans(), 0, 10000)
    gap = ~arr
    gap[:500] = False
    arr[gap] = True  # the only interior gap is 2 s < 3 s
    assert np.array_equal(label_array(fill_background_gaps(e, 3).spans(), 0, 10000), arr)


def test_short_seizure_examples():
    e = ev((0, 1, "seiz"), (1, 10, "bckg"))
    assert remove_short_seizures(e, 0).spans() == e.spans()
    assert remove_short_seizures(e, 2).spans() == [(0, 10000, BCKG)]


def test_alternating_seconds_become_background():
    ps = [0.9, 0.1] * 5
    out = remove_short_seizures(threshold(post(ps), 0.5), 1.5)
    assert out.spans() == [(0, 10000, BCKG)]
    oracle = morphology_oracle(ps, 0, 1000, 0.5, 0.0, 1.5)
    assert out.spans() == oracle


def test_merged_confidence_is_duration_weighted():
    e = EventList((Event(0, 1000, SEIZ, 0.9), Event(1000, 4000, BCKG, 0.1), Event(4000, 5000, SEIZ, 0.7)))
    out = fill_background_gaps(e, 5)
    assert out[0].confidence == pytest.approx((0.9 * 1 + 0.1 * 3 + 0.7 * 1) / 5)


def test_postprocess_degenerate_cases():
    assert len(postprocess(post([]), PostprocParams(0.5, 2, 3))) == 0
    r = np.random.default_rng(0)
    for _ in range(20):
        ps = r.random(30).tolist()
        assert postprocess(post(ps), PostprocParams(0.5, 0, 0)) == threshold(post(ps), 0.5)


def test_order_matters():
    # gap fill first joins two 1 s seizures into a 3 s one that survives sd_min 2.5
    ps = [0.9, 0.1, 0.9, 0.1, 0.1, 0.1]
    out = postprocess(post(ps), PostprocParams(0.5, 1.5, 2.5))
    assert out.spans() == [(0, 3000, SEIZ), (3000, 6000, BCKG)]
    reverse = fill_background_gaps(remove_short_seizures(threshold(post(ps), 0.5), 2.5), 1.5)
    assert reverse.spans() == [(0, 6000, BCKG)]


def _random_case(r):
    n = int(r.integers(0, 60))
    mode = r.integers(3)
    if mode == 0:
        ps = r.random(n)
    elif mode == 1:  # long runs
        ps = np.repeat(r.random(max(1, n // 5) + 1), r.integers(1, 8, max(1, n // 5) + 1))[:n]
    else:
        ps = (r.random(n) < r.random()).astype(float) * r.uniform(0.5, 1.0, n)
    stride_ms = int(r.choice([200, 500, 1000, 1500]))
    t0_ms = 10 * int(r.integers(0, 300))
    params = PostprocParams(float(r.choice([0.5, r.random()])),
                            float(r.choice([0, r.uniform(0, 6), 2.0])),
                            float(r.choice([0, r.uniform(0, 8), 3.0])))
    return list(map(float, ps)), stride_ms, t0_ms, params


def test_randomized_against_label_array_oracle():
    r = np.random.default_rng(2024)
    for _ in range(1000):
        ps, stride_ms, t0_ms, p = _random_case(r)
        got = postprocess(post(ps, stride_ms / 1000, t0_ms / 1000), p).spans()
        assert got == morphology_oracle(ps, t0_ms, stride_ms, p.s_th, p.bd_min_sec, p.sd_min_sec)


def _check_guarantees(out, p):
    for i, e in enumerate(out):
        if e.label == SEIZ:
            assert e.duration_sec >= p.sd_min_sec
        elif 0 < i < len(out) - 1:
            assert e.duration_sec >= p.bd_min_sec


def test_duration_guarantees_and_idempotence():
    r = np.random.default_rng(99)
    for _ in range(500):
        ps, stride_ms, t0_ms, p = _random_case(r)
        out = postprocess(post(ps, stride_ms / 1000, t0_ms / 1000), p)
        _check_guarantees(out, p)
        # feed the output's label array back in as hard posteriors
        cells = label_array(out.spans(), out.start_ms, out.stop_ms)
        again = postprocess(PosteriorSequence.uniform(cells.astype(float).tolist(), 0.01, t0_ms / 1000), p)
        assert again.spans() == out.spans()


def test_monotone_event_counts():
    r = np.random.default_rng(5)
    for _ in range(300):
        ps, stride_ms, t0_ms, p = _random_case(r)
        th = threshold(post(ps, stride_ms / 1000, t0_ms / 1000), p.s_th)
        filled = fill_background_gaps(th, p.bd_min_sec)
        assert len(filled) <= len(th)
        assert len(remove_short_seizures(filled, p.sd_min_sec).seizures()) <= len(filled.seizures())


def test_detection_delay():
    assert detection_delay(PostprocParams(0.7, 0, 0)) == 0
    assert detection_delay(PostprocParams(0.5, 2, 3)) == 5
    grid = [PostprocParams(0.5, bd, sd) for bd in (0, 1, 2) for sd in (0, 1, 2)]
    for a in grid:
        for b in grid:
            if a.bd_min_sec <= b.bd_min_sec and a.sd_min_sec <= b.sd_min_sec:
                assert detection_delay(a) <= detection_delay(b)


# -- streaming -----------------------------------------------------------------

def replay(ps, stride, t0, p):
    """Stream posteriors, recording (time of push end, committed spans) after every push."""
    sp = StreamingPostprocessor(p, stride)
    emitted, trace = [], []
    for i, prob in enumerate(ps):
        t = t0 + i * stride
        emitted.extend(sp.push(t, prob))
        trace.append((round((t + stride) * 1000), sp.committed_ms, sp.committed_spans()))
    emitted.extend(sp.finish())
    return EventList(tuple(emitted)), trace


def test_streaming_matches_offline_example():
    ps = [0.2, 0.8, 0.8, 0.1]
    p = PostprocParams(0.5, 0, 0)
    assert streaming_postprocess(post(ps), p) == postprocess(post(ps), p)


def test_streaming_flushes_short_pending_seizure():
    p = PostprocParams(0.5, 0, 5)
    out = streaming_postprocess(post([0.1, 0.1, 0.9, 0.9]), p)
    assert out.spans() == [(0, 4000, BCKG)]


def test_streaming_equivalence_and_lag_law():
    r = np.random.default_rng(77)
    for _ in range(1000):
        ps, stride_ms, t0_ms, p = _random_case(r)
        stride, t0 = stride_ms / 1000, t0_ms / 1000
        offline = postprocess(post(ps, stride, t0), p)
        streamed, trace = replay(ps, stride, t0, p)
        assert streamed == offline  # spans and confidences
        if not ps:
            continue
        final = offline.spans()
        bound_ms = (p.bd_min_sec + p.sd_min_sec + stride) * 1000
        prev = t0_ms
        for now_ms, committed, spans in trace:
            committed = committed or t0_ms  # 0 means nothing decided yet
            # committed labels never contradict the final answer
            for a, b, lab in spans:
                assert all(not (max(a, fa) < min(b, fb)) or fl == lab for fa, fb, fl in final)
            assert committed >= prev
            prev = committed
            # everything older than the bound is already decided
            assert now_ms - committed <= bound_ms + 1e-6


def test_streaming_rejects_out_of_order():
    sp = StreamingPostprocessor(PostprocParams(), 1.0)
    sp.push(0.0, 0.2)
    with pytest.raises(OutOfOrderPosterior, match="after"):
        sp.push(0.0, 0.3)
    with pytest.raises(OutOfOrderPosterior, match="stride"):
        sp.push(1.5, 0.3)
    with pytest.raises(ValueError):
        sp.push(1.0, 1.2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=40), st.floats(0, 5), st.floats(0, 5), st.floats(0, 1))
def test_streaming_equivalence_property(ps, bd, sd, s_th):
    p = PostprocParams(s_th, bd, sd)
    assert streaming_postprocess(post(ps), p) == postprocess(post(ps), p)


# -- helpers and files ---------------------------------------------------------

def test_pad_to_span():
    e = ev((2, 5, "seiz"), (5, 6, "bckg"))
    assert pad_to_span(e, 0, 10000).spans() == [(0, 2000, BCKG), (2000, 5000, SEIZ), (5000, 10000, BCKG)]
    assert pad_to_span(e, 3000, 4000).spans() == [(3000, 4000, SEIZ)]
    assert pad_to_span(EventList(), 0, 500).spans() == [(0, 500, BCKG)]


def test_file_roundtrip(tmp_path):
    e = EventList((Event(0, 1234, BCKG, 0.12345), Event(1234, 5000, SEIZ, 0.9)))
    write_events(e, tmp_path / "h.txt")
    text = (tmp_path / "h.txt").read_text()
    assert text == "version=1\n0.0000\t1.2340\tbckg\t0.1235\n1.2340\t5.0000\tseiz\t0.9000\n"
    back = read_events(tmp_path / "h.txt")
    assert back.spans() == e.spans()


@pytest.mark.parametrize("text,msg", [
    ("0\t1\tbckg\t1\n", "version"),
    ("version=1\n0\t1\tbckg\n", ":2:"),
    ("version=1\n0\tx\tbckg\t1\n", ":2:"),
    ("version=1\n0\t1\tbckg\t1\n2\t3\tseiz\t1\n", "tile"),
])
def test_file_errors(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_events(text)
