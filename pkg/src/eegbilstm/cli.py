"""Command-line entry point: ``eegbilstm <subcommand> ...``."""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bilstm import TrainConfig, init_model, train, write_checkpoint
from .config import LABEL_TASKS, load_config
from .dataset import PipelineConfig, build_dataset, collect_energies, read_features, write_features
from .errors import EEGError
from .evaluation import EvalReport, render_report, repeated_eval
from .experiment import run_experiment
from .features import THREADS_ENV, write_energy_csv
from .ingest import load_entry, read_manifest
from .segmentation import segment
from .synthgen import contrast_profiles, generate_files, load_profiles


def _csv(value):
    return tuple(v for v in value.split(",") if v) if value else ()


def _pipeline(args):
    key, classes = LABEL_TASKS[args.label_kind]
    if args.classes:
        classes = _csv(args.classes)
    return key, PipelineConfig(args.trial_ms, args.overlap, getattr(args, "kind", "plain"),
                               _csv(args.exclude), classes)


def cmd_synth(args):
    if args.classes:
        profiles, label_kind, channels = load_profiles(args.classes)
    else:
        profiles = contrast_profiles(args.channels, args.contrast_db, args.boosted,
                                     args.snr_db, identical=args.identical)
        label_kind, channels = "audio_type", None
    manifest = generate_files(profiles, args.spans, args.span_s, args.rate, args.out,
                              args.seed, label_kind, channels)
    print(manifest)


def cmd_segment(args):
    total = 0
    for entry in read_manifest(args.manifest):
        rec = load_entry(entry)
        for span in rec.segments:
            n = len(segment(rec, span, args.trial_ms / 1000.0, args.overlap))
            total += n
            print(json.dumps({"path": str(entry.path), "start_s": span.start_s,
                              "end_s": span.end_s, "labels": span.labels, "trials": n},
                             sort_keys=True))
    print(json.dumps({"total_trials": total}))


def cmd_featurize(args):
    key, pcfg = _pipeline(args)
    ds = build_dataset(args.manifest, key, pcfg)
    write_features(ds, args.out)
    if args.energies_csv:
        energies, labels, names = collect_energies(args.manifest, key, pcfg)
        write_energy_csv(args.energies_csv, energies, names, labels)
    counts = dict(zip(ds.class_vocab, ds.class_counts().tolist()))
    print(json.dumps({"out": str(args.out), "sequences": len(ds), "channels": ds.X.shape[1],
                      "kind": ds.kind, "class_counts": counts}, sort_keys=True))


def _train_cfg(args):
    return TrainConfig(args.epochs, args.lr, args.batch_size, args.seed)


def cmd_train(args):
    ds = read_features(args.features)
    model = init_model(ds.X.shape[2], args.hidden, ds.class_vocab, args.seed,
                       args.columns_as_steps)
    model, trace = train(model, ds.X, ds.y, _train_cfg(args))
    write_checkpoint(model, args.out)
    for epoch, value in enumerate(trace, 1):
        print(f"epoch {epoch}: mean loss {value:.6f}")


def cmd_eval(args):
    ds = read_features(args.features)
    positive = args.positive
    if positive is not None and positive != "macro":
        positive = ds.class_vocab.index(positive)
    echo = {"features": str(args.features), "runs": args.runs, "train_frac": args.train_frac,
            "seed": args.seed, "hidden": args.hidden, "epochs": args.epochs,
            "learning_rate": args.lr, "batch_size": args.batch_size}
    report, models = repeated_eval(ds, args.runs, args.seed, args.train_frac, args.hidden,
                                   _train_cfg(args), positive, args.columns_as_steps, echo)
    if args.checkpoint_dir:
        d = Path(args.checkpoint_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(models):
            write_checkpoint(m, d / f"run_{i:02d}.eegm")
    Path(args.out).write_text(report.dumps())
    print(render_report(report))


def cmd_run(args):
    report = run_experiment(load_config(args.config))
    print(render_report(report))


def cmd_report(args):
    report = EvalReport.from_json(json.loads(Path(args.report).read_text()))
    print(render_report(report))


def _add_segmentation(p):
    p.add_argument("--trial-ms", type=float, default=400.0)
    p.add_argument("--overlap", type=float, default=0.5)


def _add_training(p):
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--hidden", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--columns-as-steps", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eegbilstm",
        description="Energy-difference features and bi-LSTM classification of EEG trials.",
        epilog=f"Set {THREADS_ENV} to featurise with several threads.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labelled synthetic recordings")
    p.add_argument("--classes", help="profiles JSON; default is a two-class contrast set")
    p.add_argument("--spans", type=int, default=50, help="spans per class")
    p.add_argument("--span-s", type=float, default=30.0)
    p.add_argument("--rate", type=float, default=2500.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=61)
    p.add_argument("--contrast-db", type=float, default=12.0)
    p.add_argument("--boosted", type=int, default=5)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--identical", action="store_true", help="same gains for both classes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="report trial counts per span")
    p.add_argument("--manifest", required=True)
    _add_segmentation(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("featurize", help="build a feature archive")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=("plain", "deriv", "derivative"), default="plain")
    p.add_argument("--label-kind", choices=sorted(LABEL_TASKS), default="audio_type")
    p.add_argument("--classes", help="comma-separated class subset and order")
    p.add_argument("--exclude", default="", help="comma-separated channels to drop")
    p.add_argument("--energies-csv", help="also write per-channel dB energies here")
    p.add_argument("--out", required=True)
    _add_segmentation(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one model on a feature archive")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="repeated balanced split evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--train-frac", type=float, default=0.5)
    p.add_argument("--positive", help="positive class name or 'macro'")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--out", required=True)
    _add_training(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full pipeline from an experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a stored report")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except EEGError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
