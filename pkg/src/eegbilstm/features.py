"""Per-channel spectral energy and the inter-channel energy difference matrices.

For a trial with channels ``x_m[t]`` of length ``N``:

* ``e_m = (1/N) * sum_k |X_m[k]|**2`` with ``X_m`` the full two-sided DFT,
  which equals ``sum_t x_m[t]**2`` by Parseval.
* ``E_m = 10 log10(e_m)`` in dB.
* ``E[i, j] = E_i - E_j`` (zero diagonal, antisymmetric).
* ``E'(n) = (E(n+1) - E(n-1)) / 2`` across consecutive trials of one span.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import KindMismatch, NegativeEnergy, ShapeMismatch, TooFewTrials
from .validation import check_trials

ENERGY_FLOOR = 1e-30
PLAIN = "plain"
DERIVATIVE = "derivative"
THREADS_ENV = "EEGBILSTM_THREADS"


def normalize_kind(kind):
    if kind in ("plain", "E"):
        return PLAIN
    if kind in ("derivative", "deriv", "E'"):
        return DERIVATIVE
    raise ValueError(f"feature kind must be 'plain' or 'derivative', got {kind!r}")


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    bin_hz: float


def spectrum(trial, m):
    x = np.asarray(trial.samples[m], dtype=np.float64)
    return Spectrum(np.fft.fft(x), trial.sample_rate_hz / x.shape[0])


def channel_energy(trial, m, domain="frequency"):
    """Energy of channel ``m`` (0-based) in uV^2 * sample."""
    if not 0 <= m < trial.samples.shape[0]:
        raise IndexError(f"channel index {m} out of range")
    if domain == "time":
        x = np.asarray(trial.samples[m], dtype=np.float64)
        return float(np.dot(x, x))
    spec = spectrum(trial, m)
    return float(np.sum(np.abs(spec.bins) ** 2) / spec.bins.shape[0])


def channel_energies(samples):
    """Frequency-domain energies over the last axis of ``samples``."""
    samples = np.asarray(samples, dtype=np.float64)
    X = np.fft.fft(samples, axis=-1)
    return np.sum(X.real ** 2 + X.imag ** 2, axis=-1) / samples.shape[-1]


def energy_db(e):
    """``10 log10(e)`` with silent channels clamped to ``ENERGY_FLOOR``."""
    arr = np.asarray(e, dtype=np.float64)
    if np.any(arr < 0):
        raise NegativeEnergy(f"energy must be nonnegative, got min {arr.min()}")
    out = 10.0 * np.log10(np.maximum(arr, ENERGY_FLOOR))
    return float(out) if out.ndim == 0 else out


def energy_vector(trial):
    return energy_db(channel_energies(trial.samples))


@dataclass(frozen=True, eq=False)
class EnergyDiffMatrix:
    m: np.ndarray
    kind: str = PLAIN

    @property
    def shape(self):
        return self.m.shape


def energy_diff_matrix(ev):
    ev = np.asarray(ev, dtype=np.float64)
    if ev.ndim != 1 or ev.shape[0] < 2:
        raise ShapeMismatch("energy vector must be 1-D with at least 2 channels")
    return EnergyDiffMatrix(ev[:, None] - ev[None, :], PLAIN)


def derivative_matrix(prev, next):
    """Centered derivative of E between trials n-1 (``prev``) and n+1 (``next``)."""
    if prev.kind != PLAIN or next.kind != PLAIN:
        raise KindMismatch("derivative needs two plain energy difference matrices")
    if prev.shape != next.shape:
        raise ShapeMismatch(f"shapes differ: {prev.shape} vs {next.shape}")
    return EnergyDiffMatrix((next.m - prev.m) / 2.0, DERIVATIVE)


def diff_matrices(energies_db):
    """Batched ``E`` for energy vectors stacked as (n, C)."""
    return energies_db[:, :, None] - energies_db[:, None, :]


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def trial_energies_db(trial_stack, n_jobs=None):
    """dB energies for a (n, C, L) trial stack, optionally split across threads."""
    n_jobs = _threads() if n_jobs is None else max(1, int(n_jobs))
    if n_jobs == 1 or len(trial_stack) < 2 * n_jobs:
        return energy_db(channel_energies(trial_stack))
    chunks = np.array_split(np.arange(len(trial_stack)), n_jobs)
    with ThreadPoolExecutor(n_jobs) as pool:
        parts = list(pool.map(lambda idx: channel_energies(trial_stack[idx]), chunks))
    return energy_db(np.concatenate(parts))


def featurize_stack(trial_stack, kind=PLAIN, n_jobs=None):
    """Feature matrices for consecutive trials of one span, shaped (n', C, C).

    The derivative kind drops the first and last trial.
    """
    kind = normalize_kind(kind)
    trial_stack = check_trials(trial_stack)
    n = trial_stack.shape[0]
    if kind == DERIVATIVE and n < 3:
        raise TooFewTrials(f"derivative features need at least 3 trials, got {n}")
    E = diff_matrices(trial_energies_db(trial_stack, n_jobs))
    if kind == PLAIN:
        return E
    return (E[2:] - E[:-2]) / 2.0


def featurize(trials, kind=PLAIN):
    """Feature matrices for an ordered list of :class:`Trial` from one span."""
    if not trials:
        raise TooFewTrials("no trials to featurize")
    return featurize_stack(np.stack([t.samples for t in trials]), kind)


def write_energy_csv(path, energies_db, channel_names, labels=None):
    """Per-trial, per-channel dB energies for external topographic plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["label"] if labels is not None else []) + list(channel_names))
        for i, row in enumerate(np.asarray(energies_db)):
            lead = [labels[i]] if labels is not None else []
            w.writerow(lead + [repr(float(v)) for v in row])


class EnergyDiffTransformer(TransformerMixin, BaseEstimator):
    """Map raw trials (n, C, L) to energy-difference feature matrices.

    With ``kind="derivative"`` the input must be the consecutive trials of a
    single span; the output then has two fewer items than the input.
    """

    def __init__(self, kind="plain", n_jobs=None):
        self.kind = kind
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_trials(X)
        normalize_kind(self.kind)
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_trials(X)
        if hasattr(self, "n_channels_") and X.shape[1] != self.n_channels_:
            raise ShapeMismatch(
                f"fitted on {self.n_channels_} channels, got {X.shape[1]}")
        return featurize_stack(X, self.kind, self.n_jobs)
