import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtseiz.signal_io import (MontageError, MontageSpec, RawRecording, RecordingError,
                              StreamingDecimator, apply_montage, decimate, decimation_factor,
                              default_montage, load_montage, load_recording, parse_montage,
                              save_recording)
from rtseiz.synth import ELECTRODES_10_20


def _tone_recording(freq, rate=250.0, dur=20.0, amp=1.0):
    t = np.arange(int(dur * rate)) / rate
    from rtseiz.signal_io import MontagedRecording

    return MontagedRecording(("x",), amp * np.sin(2 * np.pi * freq * t)[None, :], rate)


def _settle(rec_out, taps):
    # output samples whose filter support lies fully inside the input
    return int(np.ceil((len(taps) - 1) / 5)) + 1


# -- loading -----------------------------------------------------------------

def test_csv_two_channels_four_rows(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("rate_hz=250\nA,B\n1,5\n2,6\n3,7\n4,8\n")
    rec = load_recording(p)
    assert rec.names == ("A", "B")
    assert rec.sample_rate_hz == 250.0
    assert rec.data.shape == (2, 4)
    np.testing.assert_array_equal(rec.data, [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_csv_ragged_channels_reports_line(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("rate_hz=250\nA,B\n1,5\n2,6\n3\n4\n")
    with pytest.raises(RecordingError, match=r"r\.csv:5: ragged"):
        load_recording(p)


@pytest.mark.parametrize("text,where", [
    ("A,B\n1,2\n", ":1:"),
    ("rate_hz=0\nA\n1\n", ":1:"),
    ("rate_hz=-3\nA\n1\n", ":1:"),
    ("rate_hz=250\n", ":2:"),
    ("rate_hz=250\nA,B\n1,x\n", ":3:"),
    ("rate_hz=250\nA,B\n1,2,3\n", ":3:"),
    ("rate_hz=250\nA,A\n1,2\n", ":2:"),
])
def test_csv_errors_carry_position(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(RecordingError, match=where):
        load_recording(p)


def test_missing_file_is_recording_error(tmp_path):
    with pytest.raises(RecordingError, match="unreadable"):
        load_recording(tmp_path / "nope.csv")


def test_nineteen_channels_ten_seconds(tmp_path, rng):
    rec = RawRecording(ELECTRODES_10_20, rng.standard_normal((19, 2500)), 250.0)
    for name in ("r.csv", "r.eegr"):
        save_recording(rec, tmp_path / name)
        back = load_recording(tmp_path / name)
        assert back.duration_sec == 10.0
        assert back.n_samples == 2500
        assert back.names == ELECTRODES_10_20


def test_binary_roundtrip_is_float32_exact(tmp_path, rng):
    data = rng.standard_normal((3, 100)).astype(np.float32).astype(np.float64)
    rec = RawRecording(("a", "bé", "c"), data, 256.0)
    save_recording(rec, tmp_path / "x.bin")
    back = load_recording(tmp_path / "x.bin")
    assert back.names == rec.names and back.sample_rate_hz == 256.0
    np.testing.assert_array_equal(back.data, data)


def test_binary_layout_by_hand(tmp_path):
    blob = b"EEGR" + struct.pack("<IdQ", 2, 100.0, 3)
    for n in (b"L", b"RR"):
        blob += struct.pack("<I", len(n)) + n
    blob += np.array([1, 2, 3, 4, 5, 6], dtype="<f4").tobytes()
    (tmp_path / "h.eegr").write_bytes(blob)
    rec = load_recording(tmp_path / "h.eegr")
    assert rec.names == ("L", "RR")
    np.testing.assert_array_equal(rec.data, [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize("cut,where", [(2, "@0"), (10, "@4"), (-4, "@")])
def test_binary_truncation_errors(tmp_path, cut, where):
    rec = RawRecording(("a", "b"), np.ones((2, 5)), 100.0)
    save_recording(rec, tmp_path / "t.eegr")
    blob = (tmp_path / "t.eegr").read_bytes()
    (tmp_path / "t.eegr").write_bytes(blob[:cut])
    with pytest.raises(RecordingError, match=where):
        load_recording(tmp_path / "t.eegr")


def test_recording_invariants():
    with pytest.raises(RecordingError):
        RawRecording(("a",), np.zeros((1, 3)), 0.0)
    with pytest.raises(RecordingError):
        RawRecording(("a", "a"), np.zeros((2, 3)), 1.0)
    with pytest.raises(RecordingError):
        RawRecording(("a", "b"), np.zeros((1, 3)), 1.0)


# -- montage -----------------------------------------------------------------

def test_self_difference_is_zero(rng):
    rec = RawRecording(("A", "B"), rng.standard_normal((2, 50)), 10.0)
    out = apply_montage(rec, MontageSpec((("A", "A"),)))
    assert np.all(out.data == 0.0)


def test_elementwise_subtraction():
    rec = RawRecording(("A", "B"), np.array([[1, 2, 3], [0, 1, 1]]), 1.0)
    out = apply_montage(rec, MontageSpec((("A", "B"),)))
    assert out.labels == ("A-B",)
    np.testing.assert_array_equal(out.data, [[1, 1, 2]])


def test_default_montage_against_per_sample_oracle(rng):
    spec = default_montage()
    assert len(spec.pairs) == 20
    rec = RawRecording(ELECTRODES_10_20, rng.standard_normal((19, 40)), 250.0)
    out = apply_montage(rec, spec)
    assert out.data.shape == (len(spec.pairs), 40)
    for i, (a, c) in enumerate(spec.pairs):
        ia, ic = ELECTRODES_10_20.index(a), ELECTRODES_10_20.index(c)
        for n in range(40):
            assert out.data[i, n] == rec.data[ia, n] - rec.data[ic, n]


def test_unknown_channel_rejected():
    rec = RawRecording(("A",), np.zeros((1, 4)), 1.0)
    with pytest.raises(MontageError, match="Q"):
        apply_montage(rec, MontageSpec((("A", "Q"),)))


def test_montage_file_parsing(tmp_path):
    p = tmp_path / "m.montage"
    p.write_text("# comment\nA,B  # trailing\n\n C , D \n")
    spec = load_montage(p)
    assert spec.pairs == (("A", "B"), ("C", "D"))
    assert spec.name == "m"
    with pytest.raises(MontageError, match=":2:"):
        parse_montage("A,B\nA\n")
    with pytest.raises(MontageError):
        parse_montage("# nothing\n")


@settings(max_examples=50, deadline=None)
@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 2**32 - 1))
def test_montage_linearity_exact(alpha, beta, seed):
    # integer-valued samples keep every product and difference exact in float64
    r = np.random.default_rng(seed)
    x = r.integers(-1000, 1000, (4, 30)).astype(float)
    y = r.integers(-1000, 1000, (4, 30)).astype(float)
    names = ("A", "B", "C", "D")
    spec = MontageSpec((("A", "B"), ("C", "A"), ("D", "D"), ("B", "C")))
    lhs = apply_montage(RawRecording(names, alpha * x + beta * y, 1.0), spec).data
    rhs = (alpha * apply_montage(RawRecording(names, x, 1.0), spec).data
           + beta * apply_montage(RawRecording(names, y, 1.0), spec).data)
    assert np.array_equal(lhs, rhs)


# -- decimation --------------------------------------------------------------

def test_decimation_factor_errors():
    assert decimation_factor(250, 50) == 5
    with pytest.raises(ValueError, match="integer"):
        decimation_factor(250, 60)
    with pytest.raises(ValueError, match="above"):
        decimation_factor(250, 500)


def test_dc_preserved():
    from rtseiz.signal_io import MontagedRecording

    rec = MontagedRecording(("x",), np.full((1, 2500), 3.0), 250.0)
    out = decimate(rec, 50.0)
    dec = StreamingDecimator(1, 250.0, 50.0)
    k = _settle(out, dec.taps)
    assert out.sample_rate_hz == 50.0
    assert np.max(np.abs(out.data[0, k:] - 3.0)) < 1e-6


def test_5hz_amplitude_against_delayed_sinusoid():
    rec = _tone_recording(5.0)
    out = decimate(rec, 50.0)
    gd = out.group_delay_sec
    k = _settle(out, StreamingDecimator(1, 250.0, 50.0).taps)
    t = np.arange(out.n_samples) / 50.0
    expected = np.sin(2 * np.pi * 5.0 * (t - gd))
    assert np.max(np.abs(out.data[0, k:] - expected[k:])) < 0.01


def test_40hz_suppressed():
    rec = _tone_recording(40.0)
    out = decimate(rec, 50.0)
    k = _settle(out, StreamingDecimator(1, 250.0, 50.0).taps)
    rms_in = np.sqrt(np.mean(rec.data ** 2))
    rms_out = np.sqrt(np.mean(out.data[0, k:] ** 2))
    assert rms_out < 0.05 * rms_in


@pytest.mark.parametrize("freq", [0.5, 1, 3, 7, 10, 13, 17, 19.5])
def test_passband_flat(freq):
    rec = _tone_recording(freq, dur=30.0)
    out = decimate(rec, 50.0)
    k = _settle(out, StreamingDecimator(1, 250.0, 50.0).taps)
    t = np.arange(out.n_samples) / 50.0
    expected = np.sin(2 * np.pi * freq * (t - out.group_delay_sec))
    assert np.max(np.abs(out.data[0, k:] - expected[k:])) < 0.01


@pytest.mark.parametrize("freq", [25.0, 27.5, 33, 47, 61, 90, 120])
def test_stopband_suppressed(freq):
    # compare against the analytic amplitude rather than aliased output RMS
    taps = StreamingDecimator(1, 250.0, 50.0).taps
    gain = abs(np.sum(taps * np.exp(-2j * np.pi * freq / 250.0 * np.arange(len(taps)))))
    assert gain < 0.05
    rec = _tone_recording(freq)
    out = decimate(rec, 50.0)
    k = _settle(out, taps)
    assert np.max(np.abs(out.data[0, k:])) < 0.05


def test_group_delay_reported():
    dec = StreamingDecimator(1, 250.0, 50.0)
    assert len(dec.taps) % 2 == 1
    assert dec.group_delay_sec == pytest.approx((len(dec.taps) - 1) / 2 / 250.0)
    # linear phase: symmetric taps
    np.testing.assert_array_equal(dec.taps, dec.taps[::-1])


def test_causal_truncation(rng):
    from rtseiz.signal_io import MontagedRecording

    x = rng.standard_normal((3, 2000))
    full = decimate(MontagedRecording(("a", "b", "c"), x, 250.0), 50.0).data
    for cut in (1, 5, 333, 1000, 1999):
        part = decimate(MontagedRecording(("a", "b", "c"), x[:, :cut], 250.0), 50.0).data
        assert np.array_equal(part, full[:, :part.shape[1]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 400), min_size=1, max_size=12), st.integers(0, 1000))
def test_streaming_decimator_chunk_invariant(sizes, seed):
    x = np.random.default_rng(seed).standard_normal((2, sum(sizes)))
    one = StreamingDecimator(2, 250.0, 50.0).push(x)
    dec = StreamingDecimator(2, 250.0, 50.0)
    parts, lo = [], 0
    for n in sizes:
        parts.append(dec.push(x[:, lo:lo + n]))
        lo += n
    assert np.array_equal(np.concatenate(parts, axis=1), one)
