"""Experiment configuration (versioned JSON, unknown keys rejected)."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .bilstm import TrainConfig
from .errors import ConfigError, ZeroHop
from .features import normalize_kind
from .ingest import LABEL_VOCAB

SCHEMA_VERSION = 1

# experiment label axis -> (manifest label key, class vocabulary or None for observed)
LABEL_TASKS = {
    "audio_type": ("audio_type", None),
    "genre": ("genre", None),
    "taste": ("taste", ("L", "NL")),
    "taste3": ("taste", ("L", "B", "NL")),
    "language": ("language", None),
    "known": ("known", None),
}

_TOP_KEYS = {"version", "manifest", "out_dir", "trial_ms", "overlap", "feature_kind",
             "label_kind", "classes", "exclude_channels", "train", "eval_runs",
             "train_frac", "seed", "positive_class", "columns_as_steps", "energies_csv"}
_TRAIN_KEYS = {"epochs", "hidden", "learning_rate", "batch_size"}


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    out_dir: str
    trial_ms: float = 400.0
    overlap: float = 0.5
    feature_kind: str = "plain"
    label_kind: str = "audio_type"
    classes: tuple = None
    exclude_channels: tuple = ()
    epochs: int = 5
    hidden: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    eval_runs: int = 10
    train_frac: float = 0.5
    seed: int = 0
    positive_class: str = None
    columns_as_steps: bool = False
    energies_csv: bool = False
    base_dir: str = field(default=".", compare=False)

    @property
    def label_key(self):
        return LABEL_TASKS[self.label_kind][0]

    @property
    def class_list(self):
        return self.classes if self.classes is not None else LABEL_TASKS[self.label_kind][1]

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def train_config(self):
        return TrainConfig(self.epochs, self.learning_rate, self.batch_size, self.seed)

    def echo(self):
        """Experiment axes for reports; the output directory is left out."""
        d = asdict(self)
        d.pop("base_dir")
        d.pop("out_dir")
        for k in ("classes", "exclude_channels"):
            if d[k] is not None:
                d[k] = list(d[k])
        d["version"] = SCHEMA_VERSION
        return d


def _number(obj, key, kind=float, default=None, prefix=""):
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or \
            (kind is int and not float(v).is_integer()) or not math.isfinite(v):
        raise ConfigError(prefix + key, f"expected a finite {kind.__name__}, got {v!r}")
    return kind(v)


def parse_config(obj, base_dir="."):
    if not isinstance(obj, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if obj.get("version") != SCHEMA_VERSION:
        raise ConfigError("version", f"expected {SCHEMA_VERSION}, got {obj.get('version')!r}")
    for key in ("manifest", "out_dir"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ConfigError(key, "required path string")

    trial_ms = _number(obj, "trial_ms", default=400.0)
    if trial_ms <= 0:
        raise ConfigError("trial_ms", "must be positive")
    overlap = _number(obj, "overlap", default=0.5)
    if overlap < 0:
        raise ConfigError("overlap", "must lie in [0, 1)")
    if overlap >= 1:
        raise ZeroHop(f"overlap: {overlap} leaves no hop between trials")

    try:
        feature_kind = normalize_kind(obj.get("feature_kind", "plain"))
    except ValueError as exc:
        raise ConfigError("feature_kind", str(exc)) from None
    label_kind = obj.get("label_kind", "audio_type")
    if label_kind not in LABEL_TASKS:
        raise ConfigError("label_kind", f"expected one of {sorted(LABEL_TASKS)}")
    vocab = LABEL_VOCAB[LABEL_TASKS[label_kind][0]]

    classes = obj.get("classes")
    if classes is not None:
        if not isinstance(classes, list) or len(classes) < 2 or len(set(classes)) != len(classes):
            raise ConfigError("classes", "expected a list of at least 2 distinct labels")
        bad = [c for c in classes if c not in vocab]
        if bad:
            raise ConfigError("classes", f"{bad} not in {label_kind} vocabulary {vocab}")
        classes = tuple(classes)
    exclude = obj.get("exclude_channels", [])
    if not isinstance(exclude, list) or not all(isinstance(c, str) for c in exclude):
        raise ConfigError("exclude_channels", "expected a list of channel names")

    train = obj.get("train", {})
    if not isinstance(train, dict):
        raise ConfigError("train", "expected an object")
    unknown = set(train) - _TRAIN_KEYS
    if unknown:
        raise ConfigError("train." + sorted(unknown)[0], "unknown key")
    epochs = _number(train, "epochs", int, 5, "train.")
    hidden = _number(train, "hidden", int, 20, "train.")
    batch = _number(train, "batch_size", int, 32, "train.")
    lr = _number(train, "learning_rate", float, 1e-3, "train.")
    for name, v in (("train.epochs", epochs), ("train.hidden", hidden),
                    ("train.batch_size", batch)):
        if v < 1:
            raise ConfigError(name, "must be positive")
    if lr < 0:
        raise ConfigError("train.learning_rate", "must be nonnegative")

    runs = _number(obj, "eval_runs", int, 10)
    if runs < 1:
        raise ConfigError("eval_runs", "must be at least 1")
    frac = _number(obj, "train_frac", float, 0.5)
    if not 0 < frac < 1:
        raise ConfigError("train_frac", "must lie in (0, 1)")
    seed = _number(obj, "seed", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")

    positive = obj.get("positive_class")
    effective = classes if classes is not None else LABEL_TASKS[label_kind][1] or vocab
    if positive is not None and positive != "macro" and positive not in effective:
        raise ConfigError("positive_class", f"{positive!r} is not a class of this task")
    for key in ("columns_as_steps", "energies_csv"):
        if not isinstance(obj.get(key, False), bool):
            raise ConfigError(key, "expected true or false")

    return ExperimentConfig(
        manifest=obj["manifest"], out_dir=obj["out_dir"], trial_ms=trial_ms,
        overlap=overlap, feature_kind=feature_kind, label_kind=label_kind,
        classes=classes, exclude_channels=tuple(exclude), epochs=epochs, hidden=hidden,
        learning_rate=lr, batch_size=batch, eval_runs=runs, train_frac=frac, seed=seed,
        positive_class=positive, columns_as_steps=obj.get("columns_as_steps", False),
        energies_csv=obj.get("energies_csv", False), base_dir=str(base_dir))


def load_config(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(obj, path.parent)
