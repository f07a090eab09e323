"""Recording ingest, differential montages and causal decimation."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal


class RecordingError(ValueError):
    """Malformed or inconsistent recording input."""


class MontageError(ValueError):
    """Montage definition cannot be applied."""


@dataclass(frozen=True)
class RawRecording:
    names: tuple[str, ...]
    data: np.ndarray  # [channels, samples], microvolts
    sample_rate_hz: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise RecordingError("recording data must be [channels, samples]")
        if len(self.names) != data.shape[0]:
            raise RecordingError(
                f"{len(self.names)} channel names for {data.shape[0]} channels")
        if len(set(self.names)) != len(self.names):
            raise RecordingError("channel names must be unique")
        if not self.sample_rate_hz > 0:
            raise RecordingError(f"non-positive sample rate {self.sample_rate_hz}")
        data.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_sec(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None


@dataclass(frozen=True)
class MontageSpec:
    pairs: tuple[tuple[str, str], ...]
    name: str = "montage"

    def __post_init__(self):
        if not self.pairs:
            raise MontageError("montage needs at least one pair")
        object.__setattr__(self, "pairs", tuple((a, c) for a, c in self.pairs))

    @property
    def labels(self) -> list[str]:
        return [f"{a}-{c}" for a, c in self.pairs]


@dataclass(frozen=True)
class MontagedRecording:
    labels: tuple[str, ...]
    data: np.ndarray  # [channels, samples]
    sample_rate_hz: float
    # accumulated causal filter delay, seconds
    group_delay_sec: float = field(default=0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != len(self.labels):
            raise RecordingError("montaged data must be [len(labels), samples]")
        if not self.sample_rate_hz > 0:
            raise RecordingError(f"non-positive sample rate {self.sample_rate_hz}")
        data.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_sec(self) -> float:
        return self.n_samples / self.sample_rate_hz


# --------------------------------------------------------------------------
# file formats

MAGIC = b"EEGR"


def load_recording(path, format: str | None = None) -> RawRecording:
    """Read a recording in the CSV or raw-binary format.

    ``format`` is ``"csv"`` or ``"raw-binary"``; when omitted it is inferred
    from the file extension (``.csv`` vs anything else).
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "raw-binary"
    try:
        if format == "csv":
            return _load_csv(path)
        if format in ("raw-binary", "bin", "eegr"):
            return _load_binary(path)
    except OSError as exc:
        raise RecordingError(f"{path}: unreadable file ({exc})") from exc
    raise ValueError(f"unknown recording format {format!r}")


def _load_csv(path: Path) -> RawRecording:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("rate_hz="):
        raise RecordingError(f"{path}:1: missing 'rate_hz=' header")
    try:
        rate = float(lines[0].split("=", 1)[1])
    except ValueError:
        raise RecordingError(f"{path}:1: bad sample rate {lines[0]!r}") from None
    if not rate > 0:
        raise RecordingError(f"{path}:1: non-positive sample rate {rate}")
    if len(lines) < 2 or not lines[1].strip():
        raise RecordingError(f"{path}:2: missing channel-name header")
    names = [n.strip() for n in lines[1].split(",")]
    columns: list[list[float]] = [[] for _ in names]
    last_line = [2] * len(names)
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split(",")
        # empty trailing cells mark a channel that has already ended
        while fields and fields[-1].strip() == "":
            fields.pop()
        if len(fields) > len(names):
            raise RecordingError(
                f"{path}:{lineno}: {len(fields)} values for {len(names)} channels")
        for i, cell in enumerate(fields):
            cell = cell.strip()
            if cell == "":
                raise RecordingError(f"{path}:{lineno}: empty value in column {i + 1}")
            try:
                columns[i].append(float(cell))
                last_line[i] = lineno
            except ValueError:
                raise RecordingError(
                    f"{path}:{lineno}: bad number {cell!r} in column {i + 1}") from None
    lengths = {len(c) for c in columns}
    if len(lengths) > 1:
        detail = ", ".join(f"{n}={len(c)}" for n, c in zip(names, columns))
        raise RecordingError(f"{path}:{min(last_line) + 1}: ragged channel lengths ({detail})")
    try:
        return RawRecording(tuple(names), np.array(columns, dtype=np.float64).reshape(len(names), -1), rate)
    except RecordingError as exc:
        raise RecordingError(f"{path}:2: {exc}") from None


def _load_binary(path: Path) -> RawRecording:
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise RecordingError(f"{path}@0: bad magic {blob[:4]!r}")
    off = 4
    try:
        n_ch, rate, n_samp = struct.unpack_from("<IdQ", blob, off)
    except struct.error:
        raise RecordingError(f"{path}@{off}: truncated header") from None
    if not rate > 0:
        raise RecordingError(f"{path}@{off + 4}: non-positive sample rate {rate}")
    off += struct.calcsize("<IdQ")
    names = []
    for _ in range(n_ch):
        try:
            (n,) = struct.unpack_from("<I", blob, off)
        except struct.error:
            raise RecordingError(f"{path}@{off}: truncated channel name table") from None
        off += 4
        raw = blob[off:off + n]
        if len(raw) != n:
            raise RecordingError(f"{path}@{off}: truncated channel name")
        names.append(raw.decode("utf-8"))
        off += n
    need = n_ch * n_samp * 4
    body = blob[off:]
    if len(body) != need:
        raise RecordingError(
            f"{path}@{off}: expected {need} sample bytes, found {len(body)} (ragged channels?)")
    data = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(n_ch, n_samp)
    return RawRecording(tuple(names), data, rate)


def save_recording(rec: RawRecording, path, format: str | None = None) -> None:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "raw-binary"
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"rate_hz={rec.sample_rate_hz!r}\n")
            fh.write(",".join(rec.names) + "\n")
            for row in rec.data.T:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return
    parts = [MAGIC, struct.pack("<IdQ", len(rec.names), float(rec.sample_rate_hz), rec.n_samples)]
    for name in rec.names:
        enc = name.encode("utf-8")
        parts.append(struct.pack("<I", len(enc)) + enc)
    parts.append(rec.data.astype("<f4").tobytes(order="C"))
    path.write_bytes(b"".join(parts))


def parse_montage(text: str, name: str = "montage") -> MontageSpec:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2 or not all(fields):
            raise MontageError(f"{name}:{lineno}: expected 'ANODE,CATHODE', got {line!r}")
        pairs.append((fields[0], fields[1]))
    return MontageSpec(tuple(pairs), name)


def load_montage(path) -> MontageSpec:
    path = Path(path)
    return parse_montage(path.read_text(encoding="utf-8"), path.stem)


def default_montage() -> MontageSpec:
    """Bundled temporal-central-parasagittal montage (20 pairs, no ear electrodes)."""
    text = resources.files("rtseiz").joinpath("data/tcp_20.montage").read_text(encoding="utf-8")
    return parse_montage(text, "tcp_20")


# --------------------------------------------------------------------------
# transforms

def apply_montage(rec: RawRecording, spec: MontageSpec) -> MontagedRecording:
    index = {n: i for i, n in enumerate(rec.names)}
    missing = sorted({c for pair in spec.pairs for c in pair if c not in index})
    if missing:
        raise MontageError(f"montage {spec.name!r} references unknown channels: {', '.join(missing)}")
    anodes = [index[a] for a, _ in spec.pairs]
    cathodes = [index[c] for _, c in spec.pairs]
    out = rec.data[anodes] - rec.data[cathodes]
    return MontagedRecording(tuple(spec.labels), out, rec.sample_rate_hz)


def decimation_factor(source_hz: float, target_hz: float) -> int:
    if not target_hz > 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    if target_hz > source_hz:
        raise ValueError(f"target rate {target_hz} Hz above source rate {source_hz} Hz")
    ratio = source_hz / target_hz
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 * ratio:
        raise ValueError(f"{source_hz} Hz -> {target_hz} Hz is not an integer decimation")
    return factor


def design_antialias(factor: int, source_hz: float, atten_db: float = 50.0,
                     passband_frac: float = 0.8) -> np.ndarray:
    """Kaiser-windowed sinc low-pass for decimation by ``factor``.

    The stopband edge sits at the output Nyquist and the passband edge at
    ``passband_frac`` of it; the tap count is odd so the group delay is an
    integer number of source samples.
    """
    if factor == 1:
        return np.ones(1)
    nyq_out = source_hz / factor / 2.0
    f_pass = passband_frac * nyq_out
    width = (nyq_out - f_pass) / (source_hz / 2.0)
    numtaps, beta = signal.kaiserord(atten_db, width)
    numtaps |= 1
    cutoff = 0.5 * (f_pass + nyq_out)
    return signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=source_hz)


class StreamingDecimator:
    """Causal FIR decimator that can be fed in arbitrary chunks.

    Only the kept output samples are computed, accumulating taps in a fixed
    order, so any chunking of the input yields bit-identical output.
    """

    def __init__(self, n_channels: int, source_hz: float, target_hz: float):
        self.factor = decimation_factor(source_hz, target_hz)
        self.taps = design_antialias(self.factor, source_hz)
        self.source_hz = source_hz
        self.target_hz = source_hz / self.factor
        self._hist = np.zeros((n_channels, len(self.taps) - 1))
        self._phase = 0  # offset of the next kept sample in the incoming chunk

    @property
    def group_delay_sec(self) -> float:
        return (len(self.taps) - 1) / 2.0 / self.source_hz

    def push(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=np.float64)
        n = chunk.shape[1]
        h = self._hist.shape[1]
        buf = np.concatenate([self._hist, chunk], axis=1)
        pos = h + np.arange(self._phase, n, self.factor)
        acc = np.zeros((chunk.shape[0], len(pos)))
        for k, tap in enumerate(self.taps):
            acc += tap * buf[:, pos - k]
        if h:
            self._hist = buf[:, -h:]
        self._phase = (self._phase - n) % self.factor
        return acc


def decimate(rec: MontagedRecording, target_hz: float = 50.0) -> MontagedRecording:
    """Anti-alias filter then downsample; the filter delay is added to ``group_delay_sec``."""
    dec = StreamingDecimator(len(rec.labels), rec.sample_rate_hz, target_hz)
    out = dec.push(rec.data)
    return MontagedRecording(rec.labels, out, dec.target_hz,
                             rec.group_delay_sec + dec.group_delay_sec)
