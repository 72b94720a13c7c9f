"""Full pipeline: segment -> featurise -> split -> train -> evaluate -> report."""

import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path

from .bilstm import write_checkpoint
from .dataset import PipelineConfig, build_dataset, collect_energies, read_features, write_features
from .errors import ExperimentLocked
from .evaluation import render_report, repeated_eval
from .features import write_energy_csv
from .ingest import read_manifest

LOCK_NAME = ".lock"


@contextmanager
def experiment_lock(out_dir):
    """Exclusive lock on an experiment directory for one invocation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ExperimentLocked(f"{out_dir} is in use (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def feature_cache_key(manifest, label_key, pcfg):
    """Content hash over the manifest, every referenced recording and the stage config."""
    h = hashlib.sha256()
    h.update(Path(manifest).read_bytes())
    for entry in read_manifest(manifest):
        h.update(_file_digest(entry.path).encode())
    stage = {"label": label_key, "trial_ms": pcfg.trial_ms, "overlap": pcfg.overlap,
             "kind": pcfg.feature_kind, "exclude": list(pcfg.exclude),
             "classes": None if pcfg.classes is None else list(pcfg.classes)}
    h.update(json.dumps(stage, sort_keys=True).encode())
    return h.hexdigest()[:20]


def feature_stage(cfg, out_dir):
    """Build (or reuse from cache) the feature archive; returns ``(dataset, path)``.

    The returned dataset is always the one reloaded from disk.
    """
    manifest = cfg.resolve(cfg.manifest)
    pcfg = PipelineConfig(cfg.trial_ms, cfg.overlap, cfg.feature_kind,
                          tuple(cfg.exclude_channels), cfg.class_list)
    cache = Path(out_dir) / "cache"
    cache.mkdir(exist_ok=True)
    path = cache / f"features-{feature_cache_key(manifest, cfg.label_key, pcfg)}.eegf"
    if not path.exists():
        ds = build_dataset(manifest, cfg.label_key, pcfg)
        tmp = path.with_suffix(".tmp")
        write_features(ds, tmp)
        tmp.replace(path)
    if cfg.energies_csv:
        energies, labels, names = collect_energies(manifest, cfg.label_key, pcfg)
        write_energy_csv(Path(out_dir) / "energies.csv", energies, names, labels)
    return read_features(path), path


def run_experiment(cfg):
    """Execute every stage and write artifacts under ``cfg.out_dir``.

    Writes ``report.json``, ``report.txt`` and ``checkpoints/run_XX.eegm``;
    returns the :class:`~eegbilstm.evaluation.EvalReport`.
    """
    out_dir = cfg.resolve(cfg.out_dir)
    with experiment_lock(out_dir):
        ds, _ = feature_stage(cfg, out_dir)
        positive = cfg.positive_class
        if positive is not None and positive != "macro":
            positive = ds.class_vocab.index(positive)
        report, models = repeated_eval(
            ds, cfg.eval_runs, cfg.seed, cfg.train_frac, cfg.hidden, cfg.train_config,
            positive, cfg.columns_as_steps, config=cfg.echo())
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        for i, model in enumerate(models):
            write_checkpoint(model, ckpt_dir / f"run_{i:02d}.eegm")
        (out_dir / "report.json").write_text(report.dumps())
        (out_dir / "report.txt").write_text(render_report(report) + "\n")
    return report
