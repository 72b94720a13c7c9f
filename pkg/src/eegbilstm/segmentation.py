"""Fixed-length, overlapping trial segmentation of labelled spans."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SpanTooShort, ZeroHop


def nearest_int(x):
    """Round half up; avoids banker's rounding on exact .5 sample counts."""
    return int(math.floor(x + 0.5))


def trial_geometry(trial_len_s, overlap_frac, sample_rate_hz):
    """Return ``(trial_len_samples, hop_samples)`` for a segmentation config."""
    if not trial_len_s > 0:
        raise DataError(f"trial length must be positive, got {trial_len_s}")
    if overlap_frac < 0:
        raise DataError(f"overlap must lie in [0, 1), got {overlap_frac}")
    trial_len = nearest_int(trial_len_s * sample_rate_hz)
    if trial_len < 2:
        raise DataError(
            f"trial of {trial_len_s} s at {sample_rate_hz} Hz is shorter than 2 samples")
    hop = nearest_int(trial_len * (1.0 - overlap_frac))
    if hop < 1:
        raise ZeroHop(f"overlap {overlap_frac} leaves a hop of {hop} samples")
    return trial_len, hop


def trial_count(span_len_samples, trial_len_samples, hop_samples):
    if span_len_samples < trial_len_samples:
        return 0
    return (span_len_samples - trial_len_samples) // hop_samples + 1


def span_bounds(span, sample_rate_hz):
    return nearest_int(span.start_s * sample_rate_hz), nearest_int(span.end_s * sample_rate_hz)


@dataclass(frozen=True, eq=False)
class Trial:
    index: int
    samples: np.ndarray
    sample_rate_hz: float
    labels: dict = field(default_factory=dict)
    start_sample: int = 0

    @property
    def n_channels(self):
        return self.samples.shape[0]


def segment(rec, span, trial_len_s, overlap_frac):
    """Cut ``span`` of ``rec`` into trials; a trailing partial window is discarded.

    Trials are read-only views into the recording's sample matrix.
    """
    trial_len, hop = trial_geometry(trial_len_s, overlap_frac, rec.sample_rate_hz)
    start, stop = span_bounds(span, rec.sample_rate_hz)
    stop = min(stop, rec.n_samples)
    n = trial_count(stop - start, trial_len, hop)
    if n == 0:
        raise SpanTooShort(
            f"span [{span.start_s}, {span.end_s}] s holds {stop - start} samples, "
            f"a trial needs {trial_len}")
    trials = []
    for k in range(n):
        s0 = start + k * hop
        trials.append(Trial(k, rec.samples[:, s0:s0 + trial_len],
                            rec.sample_rate_hz, dict(span.labels), s0))
    return trials


def segment_array(rec, span, trial_len_s, overlap_frac):
    """Stack of span trials as one array shaped (trials, channels, trial_len)."""
    trials = segment(rec, span, trial_len_s, overlap_frac)
    return np.stack([t.samples for t in trials])
