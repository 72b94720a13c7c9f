"""Recording data model, the ``.eegr`` file format and the JSON manifest.

File layout (all integers little-endian)::

    b"EEGR" | version u16 | sample_rate f64 | channels u16 | samples u64
    | channels x (u16 byte length + UTF-8 name)
    | f32 payload, channel-major (channels x samples)
    | optional trailer: u32 byte length + UTF-8 JSON {"subject", "spans"}

Samples are stored as float32 microvolts and widened to float64 on load.
"""

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (BadMagic, ChannelMismatch, DataError, TruncatedPayload,
                     UnknownChannel)

MAGIC = b"EEGR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHdHQ")

LABEL_VOCAB = {
    "audio_type": ("V", "M"),
    "genre": ("BA", "CL", "ME", "RE"),
    "taste": ("L", "B", "NL"),
    "language": ("SP", "EN", "IT", "GE", "KO"),
    "known": ("K", "F", "NK"),
}

# 64-electrode cap as recorded; FCz is the reference, FT9/FT10 carry eye movement.
ACTICAP_64 = (
    "Fp1", "Fz", "F3", "F7", "FT9", "FC5", "FC1", "C3", "T7", "TP9", "CP5",
    "CP1", "Pz", "P3", "P7", "O1", "Oz", "O2", "P4", "P8", "TP10", "CP6",
    "CP2", "Cz", "C4", "T8", "FT10", "FC6", "FC2", "F4", "F8", "Fp2", "AF7",
    "AF3", "AFz", "F1", "F5", "FT7", "FC3", "C1", "C5", "TP7", "CP3", "P1",
    "P5", "PO7", "PO3", "POz", "PO4", "PO8", "P6", "P2", "CPz", "CP4", "TP8",
    "C6", "C2", "FC4", "FT8", "F6", "AF8", "AF4", "F2", "FCz",
)
NON_EEG_CHANNELS = ("FCz", "FT9", "FT10")
EEG_61 = tuple(n for n in ACTICAP_64 if n not in NON_EEG_CHANNELS)


@dataclass(frozen=True)
class ChannelLayout:
    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise DataError("channel layout must hold at least one channel")
        if any(not isinstance(n, str) or not n for n in names):
            raise DataError("channel names must be nonempty strings")
        if len(set(names)) != len(names):
            raise DataError("channel names must be unique")

    @property
    def count(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownChannel(f"unknown channel {name!r}") from None


@dataclass(frozen=True)
class LabelSpan:
    start_s: float
    end_s: float
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise DataError(
                f"span bounds must satisfy 0 <= start < end, got "
                f"[{self.start_s}, {self.end_s}]")
        for kind, value in self.labels.items():
            vocab = LABEL_VOCAB.get(kind)
            if vocab is None:
                raise DataError(f"unknown label kind {kind!r}")
            if value not in vocab:
                raise DataError(
                    f"label {value!r} not in {kind} vocabulary {vocab}")

    def to_json(self):
        return {"start_s": self.start_s, "end_s": self.end_s,
                "labels": dict(self.labels)}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["start_s"]), float(obj["end_s"]),
                   dict(obj.get("labels", {})))


@dataclass(frozen=True, eq=False)
class Recording:
    """Multichannel EEG signal, ``samples`` shaped (channels, time) in uV."""

    sample_rate_hz: float
    layout: ChannelLayout
    samples: np.ndarray
    subject_id: str = ""
    segments: tuple = ()

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "segments", tuple(self.segments))
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise DataError("sample_rate_hz must be positive and finite")
        if samples.ndim != 2 or samples.shape[1] < 1:
            raise DataError("samples must be a nonempty channels x time matrix")
        if samples.shape[0] != self.layout.count:
            raise ChannelMismatch(
                f"{samples.shape[0]} sample rows for {self.layout.count} channels")
        for span in self.segments:
            if span.end_s > self.duration_s + 1e-9:
                raise DataError(
                    f"span [{span.start_s}, {span.end_s}] exceeds recording "
                    f"duration {self.duration_s} s")

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and self.layout == other.layout
                and self.subject_id == other.subject_id
                and self.segments == other.segments
                and self.samples.shape == other.samples.shape
                and self.samples.tobytes() == other.samples.tobytes())

    __hash__ = None


def write_recording(rec, path):
    """Write ``rec`` to ``path``. Samples are narrowed to float32."""
    names = [n.encode("utf-8") for n in rec.layout.names]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, float(rec.sample_rate_hz),
                              rec.layout.count, rec.n_samples))
        for raw in names:
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())
        meta = {"subject": rec.subject_id,
                "spans": [s.to_json() for s in rec.segments]}
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_recording(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a recording file")
    if len(data) < _HEADER.size:
        raise TruncatedPayload(f"{path}: header is truncated")
    _, version, rate, n_chan, n_samp = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise BadMagic(f"{path}: unsupported format version {version}")

    pos = _HEADER.size
    names = []
    # a name table that overruns the file means the declared count is wrong
    for _ in range(n_chan):
        if pos + 2 > len(data):
            raise ChannelMismatch(
                f"{path}: header declares {n_chan} channels, found {len(names)} names")
        (length,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + length > len(data):
            raise ChannelMismatch(f"{path}: channel name table overruns file")
        try:
            names.append(data[pos:pos + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise ChannelMismatch(
                f"{path}: undecodable channel name {len(names)}") from None
        pos += length

    n_bytes = 4 * n_chan * n_samp
    if pos + n_bytes > len(data):
        raise TruncatedPayload(
            f"{path}: header declares {n_chan}x{n_samp} samples "
            f"({n_bytes} bytes), payload holds {len(data) - pos} bytes")
    payload = np.frombuffer(data, dtype="<f4", count=n_chan * n_samp, offset=pos)
    pos += n_bytes

    subject, spans = "", ()
    if pos + 4 <= len(data):
        (length,) = struct.unpack_from("<I", data, pos)
        meta = json.loads(data[pos + 4:pos + 4 + length].decode("utf-8"))
        subject = meta.get("subject", "")
        spans = tuple(LabelSpan.from_json(s) for s in meta.get("spans", ()))
    try:
        layout = ChannelLayout(tuple(names))
    except DataError as exc:
        raise ChannelMismatch(f"{path}: {exc}") from None
    return Recording(rate, layout,
                     payload.reshape(n_chan, n_samp).astype(np.float64),
                     subject, spans)


def exclude_channels(rec, names):
    """Drop the named channels, preserving the order of the rest."""
    drop = set(names)
    for name in drop:
        rec.layout.index(name)
    if not drop:
        return rec
    keep = [i for i, n in enumerate(rec.layout.names) if n not in drop]
    layout = ChannelLayout(tuple(rec.layout.names[i] for i in keep))
    return replace(rec, layout=layout, samples=rec.samples[keep])


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    subject: str
    spans: tuple


def read_manifest(path):
    """Parse a manifest JSON; relative recording paths resolve against it."""
    path = Path(path)
    obj = json.loads(path.read_text())
    items = obj["recordings"] if isinstance(obj, dict) else obj
    entries = []
    for item in items:
        rec_path = Path(item["path"])
        if not rec_path.is_absolute():
            rec_path = path.parent / rec_path
        spans = tuple(LabelSpan.from_json(s) for s in item["spans"])
        entries.append(ManifestEntry(rec_path, str(item.get("subject", "")), spans))
    return entries


def write_manifest(entries, path):
    """Write manifest entries; paths are stored relative to the manifest when possible."""
    path = Path(path)
    out = []
    for e in entries:
        p = Path(e.path)
        try:
            p = Path(os.path.relpath(p, path.parent))
        except ValueError:
            pass
        out.append({"path": p.as_posix(), "subject": e.subject,
                    "spans": [s.to_json() for s in e.spans]})
    path.write_text(json.dumps({"recordings": out}, indent=2, sort_keys=True) + "\n")


def load_entry(entry, exclude=()):
    """Load a manifest entry's recording with the manifest's subject and spans applied."""
    rec = load_recording(entry.path)
    rec = replace(rec, subject_id=entry.subject, segments=entry.spans)
    return exclude_channels(rec, exclude)
