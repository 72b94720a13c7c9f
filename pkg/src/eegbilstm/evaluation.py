"""Balanced random splits, confusion matrices, metrics and the repeated-run protocol."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bilstm import TrainConfig, init_model, predict_proba_batch, train
from .errors import ClassTooSmall, EmptyMatrix, IndexOutOfRange, LengthMismatch
from .segmentation import nearest_int


def balanced_split_indices(y, n_classes, train_frac=0.5, seed=0):
    """Undersample every class to the smallest class size, then split each class.

    Returns sorted ``(train_idx, test_idx)`` index arrays.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    y = np.asarray(y, dtype=np.intp)
    counts = np.bincount(y, minlength=n_classes)
    if counts.min() < 2:
        k = int(np.argmin(counts))
        raise ClassTooSmall(f"class {k} has {counts[k]} items, need at least 2")
    m = int(counts.min())
    n_train = min(max(nearest_int(train_frac * m), 1), m - 1)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in range(n_classes):
        members = np.flatnonzero(y == k)
        chosen = rng.permutation(members)[:m]
        train_idx.append(chosen[:n_train])
        test_idx.append(chosen[n_train:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split_balanced(dataset, train_frac=0.5, seed=0):
    tr, te = balanced_split_indices(dataset.y, len(dataset.class_vocab), train_frac, seed)
    return dataset.subset(tr), dataset.subset(te)


@dataclass(eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    class_vocab: tuple = ()

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts, self.class_vocab)

    def tolist(self):
        return self.counts.tolist()


def confusion(truths, preds, n_classes=None, class_vocab=()):
    truths = np.asarray(truths, dtype=np.intp).ravel()
    preds = np.asarray(preds, dtype=np.intp).ravel()
    if truths.shape != preds.shape:
        raise LengthMismatch(f"{truths.size} truths vs {preds.size} predictions")
    if n_classes is None:
        n_classes = len(class_vocab) if class_vocab else (
            int(max(truths.max(initial=-1), preds.max(initial=-1))) + 1)
    for arr in (truths, preds):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise IndexOutOfRange(f"class index outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts, tuple(class_vocab))


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


@dataclass
class Metrics:
    accuracy: float
    precision: float = None
    recall: float = None
    f_score: float = None
    positive: object = None
    per_class_precision: list = field(default_factory=list)
    per_class_recall: list = field(default_factory=list)
    per_class_f_score: list = field(default_factory=list)
    undefined: list = field(default_factory=list)

    def to_json(self):
        return dict(self.__dict__)


def metrics(cm, positive_class=None):
    """Accuracy plus per-class precision, recall and F-score.

    ``positive_class`` selects the headline precision/recall/F: a class index,
    ``"macro"`` for the unweighted class mean, or ``None`` which means class 0
    for binary problems and accuracy only otherwise. Zero denominators yield 0
    and are listed in ``undefined``.
    """
    counts = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix holds no items")
    K = counts.shape[0]
    diag = np.diag(counts)
    rows, cols = counts.sum(axis=1), counts.sum(axis=0)
    out = Metrics(accuracy=int(diag.sum()) / total)
    for k in range(K):
        p, p_bad = _ratio(int(diag[k]), int(cols[k]))
        r, r_bad = _ratio(int(diag[k]), int(rows[k]))
        f, f_bad = _ratio(2 * p * r, p + r)
        out.per_class_precision.append(p)
        out.per_class_recall.append(r)
        out.per_class_f_score.append(f)
        for name, bad in (("precision", p_bad), ("recall", r_bad), ("f_score", f_bad)):
            if bad:
                out.undefined.append(f"{name}[{k}]")

    if positive_class is None and K == 2:
        positive_class = 0
    if positive_class == "macro":
        out.precision = math.fsum(out.per_class_precision) / K
        out.recall = math.fsum(out.per_class_recall) / K
        out.f_score = math.fsum(out.per_class_f_score) / K
    elif positive_class is not None:
        if not 0 <= positive_class < K:
            raise IndexOutOfRange(f"positive class {positive_class} outside [0, {K})")
        out.precision = out.per_class_precision[positive_class]
        out.recall = out.per_class_recall[positive_class]
        out.f_score = out.per_class_f_score[positive_class]
    out.positive = positive_class
    return out


# -- repeated evaluation ---------------------------------------------------------------

def _mean(values):
    if any(v is None for v in values):
        return None
    return math.fsum(values) / len(values)


@dataclass
class EvalReport:
    class_vocab: tuple
    confusion: ConfusionMatrix
    runs: int
    per_run: list
    accuracy: float
    precision: float = None
    recall: float = None
    f_score: float = None
    positive: object = None
    config: dict = field(default_factory=dict)

    @property
    def per_run_accuracies(self):
        return [r["accuracy"] for r in self.per_run]

    def to_json(self):
        return {
            "class_vocab": list(self.class_vocab),
            "runs": self.runs,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "positive": self.positive,
            "confusion": self.confusion.tolist(),
            "per_run": self.per_run,
            "config": self.config,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj):
        vocab = tuple(obj["class_vocab"])
        return cls(vocab, ConfusionMatrix(np.asarray(obj["confusion"], dtype=np.int64), vocab),
                   obj["runs"], obj["per_run"], obj["accuracy"], obj.get("precision"),
                   obj.get("recall"), obj.get("f_score"), obj.get("positive"),
                   obj.get("config", {}))


def evaluate_run(dataset, seed, train_frac=0.5, hidden_size=20, train_cfg=TrainConfig(),
                 positive_class=None, columns_as_steps=False):
    """One split -> train -> predict -> metrics pass. Returns (run record, model)."""
    tr, te = split_balanced(dataset, train_frac, seed)
    model = init_model(dataset.X.shape[2], hidden_size, dataset.class_vocab, seed,
                       columns_as_steps)
    cfg = TrainConfig(train_cfg.epochs, train_cfg.learning_rate, train_cfg.batch_size,
                      seed, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    model, trace = train(model, tr.X, tr.y, cfg)
    preds = np.argmax(predict_proba_batch(model, te.X), axis=1)
    cm = confusion(te.y, preds, len(dataset.class_vocab), dataset.class_vocab)
    m = metrics(cm, positive_class)
    record = {
        "seed": int(seed),
        "n_train": len(tr),
        "n_test": len(te),
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f_score": m.f_score,
        "per_class_precision": m.per_class_precision,
        "per_class_recall": m.per_class_recall,
        "per_class_f_score": m.per_class_f_score,
        "undefined": m.undefined,
        "loss_trace": list(trace),
        "confusion": cm.tolist(),
    }
    return record, model


def repeated_eval(dataset, n_runs=10, seed=0, train_frac=0.5, hidden_size=20,
                  train_cfg=TrainConfig(), positive_class=None, columns_as_steps=False,
                  config=None):
    """Run the protocol ``n_runs`` times with seeds ``seed + i``.

    Aggregate metrics are arithmetic means over runs; the aggregate confusion
    matrix is the elementwise sum of the per-run matrices.
    Returns ``(report, models)``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    K = len(dataset.class_vocab)
    records, models = [], []
    total = ConfusionMatrix(np.zeros((K, K), dtype=np.int64), dataset.class_vocab)
    for i in range(n_runs):
        rec, model = evaluate_run(dataset, seed + i, train_frac, hidden_size, train_cfg,
                                  positive_class, columns_as_steps)
        records.append(rec)
        models.append(model)
        total = total + ConfusionMatrix(np.asarray(rec["confusion"], dtype=np.int64))
    if positive_class is None and K == 2:
        positive_class = 0
    report = EvalReport(
        class_vocab=dataset.class_vocab,
        confusion=total,
        runs=n_runs,
        per_run=records,
        accuracy=_mean([r["accuracy"] for r in records]),
        precision=_mean([r["precision"] for r in records]),
        recall=_mean([r["recall"] for r in records]),
        f_score=_mean([r["f_score"] for r in records]),
        positive=positive_class,
        config=dict(config or {}),
    )
    return report, models


# -- text rendering --------------------------------------------------------------------

def render_confusion(cm, class_vocab=None):
    """Plain-text confusion chart: true classes down, predicted classes across."""
    counts = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm)
    vocab = list(class_vocab or getattr(cm, "class_vocab", ()) or range(len(counts)))
    vocab = [str(v) for v in vocab]
    w = max(max(len(str(int(c))) for c in counts.ravel()), max(len(v) for v in vocab)) + 2
    lab = max(len(v) for v in vocab)
    lead = "True Class "
    lines = []
    for k, row in enumerate(counts):
        prefix = lead if k == 0 else " " * len(lead)
        lines.append(prefix + vocab[k].ljust(lab) + "".join(str(int(c)).rjust(w) for c in row))
    pad = " " * (len(lead) + lab)
    lines.append(pad + "".join(v.rjust(w) for v in vocab))
    lines.append(pad + "Predicted Class".center(w * len(vocab)))
    return "\n".join(lines)


def render_report(report):
    """Confusion chart plus a metric table in percent."""

    def pct(v):
        return "-" if v is None else f"{100 * v:.2f}"

    out = [render_confusion(report.confusion, report.class_vocab), ""]
    head = ["Runs", "Accuracy (%)", "F-score (%)", "Recall (%)", "Precision (%)"]
    vals = [str(report.runs), pct(report.accuracy), pct(report.f_score),
            pct(report.recall), pct(report.precision)]
    widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
    out.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
    out.append("  ".join(v.rjust(w) for v, w in zip(vals, widths)))
    if report.positive not in (None, "macro"):
        out.append(f"positive class: {report.class_vocab[report.positive]}")
    elif report.positive == "macro":
        out.append("precision/recall/F-score: macro average")
    return "\n".join(out)
