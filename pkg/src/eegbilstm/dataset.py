"""Labelled feature datasets built from a manifest, and the feature archive format.

Feature archive (little-endian)::

    b"EEGF" | version u16 | kind u8 (0 plain, 1 derivative) | C u16 | count u64
    | K u16 | K x (u16 byte length + UTF-8 class name)
    | count x (label id u32 + C*C f64 row-major matrix)
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, EmptyDataset, MissingLabel, ShapeMismatch, TruncatedPayload
from .features import DERIVATIVE, PLAIN, featurize_stack, normalize_kind, trial_energies_db
from .ingest import LABEL_VOCAB, load_entry, read_manifest
from .segmentation import segment_array


@dataclass(frozen=True)
class PipelineConfig:
    trial_ms: float = 400.0
    overlap: float = 0.5
    feature_kind: str = PLAIN
    exclude: tuple = ()
    classes: tuple = None

    @property
    def trial_len_s(self):
        return self.trial_ms / 1000.0


@dataclass(eq=False)
class Dataset:
    X: np.ndarray  # (n, C, C) feature matrices
    y: np.ndarray  # (n,) class indices into class_vocab
    class_vocab: tuple
    kind: str = PLAIN

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.intp)
        self.class_vocab = tuple(self.class_vocab)
        if self.X.ndim != 3 or self.X.shape[0] != self.y.shape[0]:
            raise ShapeMismatch(f"items {self.X.shape} do not match labels {self.y.shape}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.class_vocab)):
            raise ShapeMismatch("label index outside the class vocabulary")

    def __len__(self):
        return self.X.shape[0]

    @property
    def labels(self):
        return [self.class_vocab[i] for i in self.y]

    def subset(self, idx):
        return Dataset(self.X[idx], self.y[idx], self.class_vocab, self.kind)

    def class_counts(self):
        return np.bincount(self.y, minlength=len(self.class_vocab))


def _span_label(span, label_kind):
    if label_kind not in span.labels:
        raise MissingLabel(
            f"span [{span.start_s}, {span.end_s}] has no {label_kind!r} label")
    return span.labels[label_kind]


def iter_span_trials(manifest, label_kind, cfg):
    """Yield ``(label, trial_stack, channel_names)`` for every usable span."""
    if label_kind not in LABEL_VOCAB:
        raise ValueError(f"unknown label kind {label_kind!r}")
    entries = read_manifest(manifest) if not isinstance(manifest, list) else manifest
    for entry in entries:
        for span in entry.spans:
            _span_label(span, label_kind)
        rec = load_entry(entry, cfg.exclude)
        for span in rec.segments:
            label = span.labels[label_kind]
            if cfg.classes is not None and label not in cfg.classes:
                continue
            yield label, segment_array(rec, span, cfg.trial_len_s, cfg.overlap), rec.layout.names


def build_dataset(manifest, label_kind, cfg=PipelineConfig(), n_jobs=None):
    """Segment and featurise every labelled span listed in ``manifest``.

    The class vocabulary is ``cfg.classes`` when given (spans with other
    labels are skipped), otherwise the sorted set of observed labels.
    """
    kind = normalize_kind(cfg.feature_kind)
    feats, labels = [], []
    for label, stack, _ in iter_span_trials(manifest, label_kind, cfg):
        f = featurize_stack(stack, kind, n_jobs)
        feats.append(f)
        labels.extend([label] * len(f))
    if not labels:
        raise EmptyDataset("manifest produced no trials")
    vocab = tuple(cfg.classes) if cfg.classes is not None else tuple(sorted(set(labels)))
    index = {c: i for i, c in enumerate(vocab)}
    return Dataset(np.concatenate(feats), [index[l] for l in labels], vocab, kind)


def collect_energies(manifest, label_kind, cfg=PipelineConfig()):
    """Per-trial dB energy vectors with labels, for CSV export."""
    rows, labels, names = [], [], None
    for label, stack, names in iter_span_trials(manifest, label_kind, cfg):
        rows.append(trial_energies_db(stack))
        labels.extend([label] * len(stack))
    if not rows:
        raise EmptyDataset("manifest produced no trials")
    return np.concatenate(rows), labels, names


# -- feature archive ---------------------------------------------------------------

FEAT_MAGIC = b"EEGF"
FEAT_VERSION = 1
_FEAT_HEADER = struct.Struct("<4sHBHQH")


def _record_dtype(C):
    return np.dtype([("label", "<u4"), ("m", "<f8", (C, C))])


def write_features(ds, path):
    n, C, C2 = ds.X.shape
    if C != C2:
        raise ShapeMismatch(f"feature matrices must be square, got {C}x{C2}")
    with open(path, "wb") as fh:
        fh.write(_FEAT_HEADER.pack(FEAT_MAGIC, FEAT_VERSION, int(ds.kind == DERIVATIVE),
                                   C, n, len(ds.class_vocab)))
        for name in ds.class_vocab:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        rec = np.empty(n, dtype=_record_dtype(C))
        rec["label"] = ds.y
        rec["m"] = ds.X
        fh.write(rec.tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FEAT_MAGIC:
        raise BadMagic(f"{path}: not a feature archive")
    _, version, kind, C, n, K = _FEAT_HEADER.unpack_from(data, 0)
    if version != FEAT_VERSION:
        raise BadMagic(f"{path}: unsupported feature archive version {version}")
    pos = _FEAT_HEADER.size
    vocab = []
    for _ in range(K):
        (length,) = struct.unpack_from("<H", data, pos)
        vocab.append(data[pos + 2:pos + 2 + length].decode("utf-8"))
        pos += 2 + length
    dt = _record_dtype(C)
    if pos + n * dt.itemsize > len(data):
        raise TruncatedPayload(f"{path}: declares {n} sequences, file is short")
    rec = np.frombuffer(data, dtype=dt, count=n, offset=pos)
    return Dataset(rec["m"].astype(np.float64), rec["label"].astype(np.intp), vocab,
                   DERIVATIVE if kind else PLAIN)
