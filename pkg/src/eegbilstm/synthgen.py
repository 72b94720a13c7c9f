"""Labelled synthetic multichannel recordings with class-specific channel gains.

Within a span every channel carries the same band-limited carrier (a sum of
sinusoids at random in-band frequencies and phases), scaled by the class's
per-channel gain, plus independent white noise at a per-channel SNR. With the
noise off, the energy ratio of two channels is exactly the squared gain ratio.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadBand, DataError
from .ingest import (EEG_61, LABEL_VOCAB, ChannelLayout, LabelSpan, ManifestEntry,
                     Recording, write_manifest, write_recording)

CARRIER_RMS_UV = 10.0
N_SINUSOIDS = 4


@dataclass(frozen=True)
class ClassProfile:
    name: str
    channel_gains: tuple
    band_hz: tuple = (8.0, 30.0)
    snr_db: float = math.inf  # inf disables noise

    def __post_init__(self):
        gains = tuple(float(g) for g in self.channel_gains)
        object.__setattr__(self, "channel_gains", gains)
        object.__setattr__(self, "band_hz", tuple(float(b) for b in self.band_hz))
        if not gains or any(not (g > 0 and math.isfinite(g)) for g in gains):
            raise DataError(f"profile {self.name!r}: channel gains must be positive")

    def check_band(self, sample_rate_hz):
        lo, hi = self.band_hz
        if not (0 < lo < hi < sample_rate_hz / 2):
            raise BadBand(
                f"profile {self.name!r}: band {self.band_hz} must satisfy "
                f"0 < low < high < {sample_rate_hz / 2}")

    @classmethod
    def from_json(cls, obj):
        snr = obj.get("snr_db")
        return cls(obj["name"], tuple(obj["channel_gains"]),
                   tuple(obj.get("band_hz", (8.0, 30.0))),
                   math.inf if snr is None or snr == "inf" else float(snr))


def contrast_profiles(n_channels=61, contrast_db=12.0, n_boosted=5, snr_db=0.0,
                      names=("M", "V"), identical=False):
    """Two profiles; the second boosts ``n_boosted`` channels by ``contrast_db``.

    Every boosted channel differs from each unboosted channel by ``contrast_db``
    between the classes. ``identical=True`` gives both classes the same gains.
    """
    base = np.ones(n_channels)
    boosted = base.copy()
    if not identical:
        boosted[:n_boosted] = 10.0 ** (contrast_db / 20.0)
    return [ClassProfile(names[0], tuple(base), snr_db=snr_db),
            ClassProfile(names[1], tuple(boosted), snr_db=snr_db)]


def generate_span(profile, n_samples, sample_rate_hz, rng):
    """One span of signal, shaped (channels, n_samples), in microvolts."""
    profile.check_band(sample_rate_hz)
    lo, hi = profile.band_hz
    t = np.arange(n_samples) / sample_rate_hz
    freqs = rng.uniform(lo, hi, N_SINUSOIDS)
    phases = rng.uniform(0.0, 2.0 * np.pi, N_SINUSOIDS)
    carrier = np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0)
    carrier *= CARRIER_RMS_UV / np.sqrt(np.mean(carrier ** 2))
    gains = np.asarray(profile.channel_gains)
    signal = gains[:, None] * carrier[None, :]
    if math.isfinite(profile.snr_db):
        noise_rms = gains * CARRIER_RMS_UV / 10.0 ** (profile.snr_db / 20.0)
        signal = signal + noise_rms[:, None] * rng.standard_normal(signal.shape)
    # match on-disk precision so a write/load round trip is exact
    return signal.astype(np.float32).astype(np.float64)


def _span_order(profiles, spans_per_class):
    return [p for _ in range(spans_per_class) for p in profiles]


def _check(profiles, spans_per_class, label_kind, channel_names):
    if len(profiles) < 2:
        raise DataError("need at least 2 class profiles")
    if spans_per_class < 1:
        raise DataError("spans_per_class must be positive")
    C = len(profiles[0].channel_gains)
    if any(len(p.channel_gains) != C for p in profiles):
        raise DataError("all profiles must cover the same channels")
    vocab = LABEL_VOCAB[label_kind]
    for p in profiles:
        if p.name not in vocab:
            raise DataError(f"profile name {p.name!r} not in {label_kind} vocabulary {vocab}")
    if channel_names is None:
        channel_names = EEG_61 if C == 61 else tuple(f"Ch{i + 1}" for i in range(C))
    return ChannelLayout(tuple(channel_names))


def generate(profiles, spans_per_class, span_s, sample_rate_hz, seed=0,
             label_kind="audio_type", channel_names=None, subject="synth"):
    """One recording holding every span back to back, labels cycling through profiles.

    Span ``j`` draws from its own generator seeded by ``(seed, j)``.
    Returns ``(recording, manifest_entry_spans)``; the spans are also attached
    to the recording.
    """
    layout = _check(profiles, spans_per_class, label_kind, channel_names)
    for p in profiles:
        p.check_band(sample_rate_hz)
    n = int(round(span_s * sample_rate_hz))
    blocks, spans = [], []
    for j, profile in enumerate(_span_order(profiles, spans_per_class)):
        rng = np.random.default_rng([int(seed), j])
        blocks.append(generate_span(profile, n, sample_rate_hz, rng))
        spans.append(LabelSpan(j * n / sample_rate_hz, (j + 1) * n / sample_rate_hz,
                               {label_kind: profile.name}))
    rec = Recording(float(sample_rate_hz), layout, np.concatenate(blocks, axis=1),
                    subject, spans)
    return rec, tuple(spans)


def generate_files(profiles, spans_per_class, span_s, sample_rate_hz, out_dir, seed=0,
                   label_kind="audio_type", channel_names=None, subject="synth"):
    """Write one ``.eegr`` file per span plus ``manifest.json`` into ``out_dir``.

    Span ``j`` uses the same generator seed as in :func:`generate`, so the
    file set holds exactly the spans of the single-recording variant.
    """
    layout = _check(profiles, spans_per_class, label_kind, channel_names)
    for p in profiles:
        p.check_band(sample_rate_hz)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = int(round(span_s * sample_rate_hz))
    entries = []
    for j, profile in enumerate(_span_order(profiles, spans_per_class)):
        rng = np.random.default_rng([int(seed), j])
        span = LabelSpan(0.0, n / sample_rate_hz, {label_kind: profile.name})
        rec = Recording(float(sample_rate_hz), layout,
                        generate_span(profile, n, sample_rate_hz, rng), subject, [span])
        path = out_dir / f"span_{j:04d}.eegr"
        write_recording(rec, path)
        entries.append(ManifestEntry(path, subject, (span,)))
    manifest = out_dir / "manifest.json"
    write_manifest(entries, manifest)
    return manifest


def load_profiles(path):
    """Read ``{"label_kind", "channels"?, "profiles": [...]}`` or a bare profile list."""
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, list):
        obj = {"profiles": obj}
    profiles = [ClassProfile.from_json(p) for p in obj["profiles"]]
    return profiles, obj.get("label_kind", "audio_type"), obj.get("channels")
