import json

import numpy as np
import pytest

from eegbilstm.bilstm import read_checkpoint
from eegbilstm.cli import main
from eegbilstm.config import load_config, parse_config
from eegbilstm.dataset import PipelineConfig, build_dataset, read_features, write_features
from eegbilstm.errors import ConfigError, ExperimentLocked, ZeroHop
from eegbilstm.evaluation import repeated_eval
from eegbilstm.experiment import experiment_lock, run_experiment


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--channels", "6", "--boosted", "2", "--spans", "3",
                 "--span-s", "2", "--rate", "250", "--seed", "1", "--out", str(out)]) == 0
    return out


def base_config(synth_dir, out_dir, **extra):
    cfg = {"version": 1, "manifest": str(synth_dir / "manifest.json"), "out_dir": str(out_dir),
           "trial_ms": 400, "overlap": 0.5, "feature_kind": "plain", "label_kind": "audio_type",
           "train": {"epochs": 2, "hidden": 4, "learning_rate": 0.01, "batch_size": 16},
           "eval_runs": 2, "train_frac": 0.5, "seed": 3}
    cfg.update(extra)
    return cfg


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


def test_config_defaults_and_paths(tmp_path):
    path = write_cfg(tmp_path / "c.json", {"version": 1, "manifest": "m.json", "out_dir": "o"})
    cfg = load_config(path)
    assert (cfg.trial_ms, cfg.overlap, cfg.epochs, cfg.hidden, cfg.eval_runs) == (400, 0.5, 5, 20, 10)
    assert cfg.resolve(cfg.manifest) == tmp_path / "m.json"
    assert cfg.class_list is None
    assert parse_config({"version": 1, "manifest": "m", "out_dir": "o",
                         "label_kind": "taste3"}).class_list == ("L", "B", "NL")


@pytest.mark.parametrize("patch, field", [
    ({"trail_ms": 400}, "trail_ms"),
    ({"train": {"epoch": 5}}, "train.epoch"),
    ({"version": 2}, "version"),
    ({"feature_kind": "wavelet"}, "feature_kind"),
    ({"label_kind": "mood"}, "label_kind"),
    ({"eval_runs": 0}, "eval_runs"),
    ({"train_frac": 1.0}, "train_frac"),
    ({"classes": ["L", "X"], "label_kind": "taste"}, "classes"),
    ({"positive_class": "B", "label_kind": "taste"}, "positive_class"),
    ({"train": {"hidden": 2.5}}, "train.hidden"),
])
def test_config_errors_name_fields(patch, field):
    obj = {"version": 1, "manifest": "m", "out_dir": "o"}
    obj.update(patch)
    with pytest.raises(ConfigError) as info:
        parse_config(obj)
    assert info.value.field == field


def test_overlap_one_fails_fast(tmp_path, synth_dir, capsys):
    cfg = write_cfg(tmp_path / "c.json", base_config(synth_dir, tmp_path / "out", overlap=1.0))
    with pytest.raises(ZeroHop):
        load_config(cfg)
    code = main(["run", "--config", str(cfg)])
    assert code == ZeroHop.exit_code != 0
    assert "ZeroHop" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_run_writes_artifacts(tmp_path, synth_dir, capsys):
    cfg = write_cfg(tmp_path / "c.json", base_config(synth_dir, tmp_path / "out",
                                                     energies_csv=True))
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["runs"] == 2 and 0.0 <= report["accuracy"] <= 1.0
    assert report["config"]["trial_ms"] == 400 and "out_dir" not in report["config"]
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["run_00.eegm", "run_01.eegm"]
    assert (out / "energies.csv").read_text().startswith("label,Ch1,")
    assert "Predicted Class" in (out / "report.txt").read_text()
    assert not (out / ".lock").exists()
    assert "Accuracy (%)" in capsys.readouterr().out


def test_run_twice_byte_identical(tmp_path, synth_dir):
    blobs = []
    for name in ("a", "b"):
        cfg = write_cfg(tmp_path / f"{name}.json", base_config(synth_dir, tmp_path / name))
        assert main(["run", "--config", str(cfg)]) == 0
        d = tmp_path / name
        blobs.append([(d / "report.json").read_bytes()]
                     + [p.read_bytes() for p in sorted((d / "checkpoints").iterdir())])
    assert blobs[0] == blobs[1]


def test_cache_reused_and_composition_exact(tmp_path, synth_dir):
    cfg = load_config(write_cfg(tmp_path / "c.json", base_config(synth_dir, tmp_path / "out")))
    report = run_experiment(cfg)
    cached = list((tmp_path / "out" / "cache").glob("*.eegf"))
    assert len(cached) == 1
    mtime = cached[0].stat().st_mtime_ns
    assert run_experiment(cfg).dumps() == report.dumps()
    assert cached[0].stat().st_mtime_ns == mtime

    # stage outputs on disk equal the in-memory composition of module operations
    in_memory = build_dataset(synth_dir / "manifest.json", "audio_type", PipelineConfig(400, 0.5))
    on_disk = read_features(cached[0])
    assert on_disk.X.tobytes() == in_memory.X.tobytes()
    np.testing.assert_array_equal(on_disk.y, in_memory.y)
    assert on_disk.class_vocab == in_memory.class_vocab

    direct, models = repeated_eval(in_memory, cfg.eval_runs, cfg.seed, cfg.train_frac,
                                   cfg.hidden, cfg.train_config, config=cfg.echo())
    assert direct.dumps() == report.dumps()
    for i, model in enumerate(models):
        saved = read_checkpoint(tmp_path / "out" / "checkpoints" / f"run_{i:02d}.eegm")
        for a, b in zip(model.arrays(), saved.arrays()):
            assert a.tobytes() == b.tobytes()

    changed = load_config(write_cfg(tmp_path / "d.json",
                                    base_config(synth_dir, tmp_path / "out", trial_ms=200)))
    run_experiment(changed)
    assert len(list((tmp_path / "out" / "cache").glob("*.eegf"))) == 2


def test_lock_blocks_concurrent_use(tmp_path):
    with experiment_lock(tmp_path / "x"):
        with pytest.raises(ExperimentLocked):
            with experiment_lock(tmp_path / "x"):
                pass
    with experiment_lock(tmp_path / "x"):
        pass


def test_stage_subcommands(tmp_path, synth_dir, capsys):
    manifest = str(synth_dir / "manifest.json")
    assert main(["segment", "--manifest", manifest, "--trial-ms", "400", "--overlap", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    # 2 s spans at 250 Hz: 100-sample trials, hop 50 -> 9 per span, 6 spans
    assert json.loads(lines[0])["trials"] == 9
    assert json.loads(lines[-1]) == {"total_trials": 54}

    feats = tmp_path / "f.eegf"
    assert main(["featurize", "--manifest", manifest, "--kind", "deriv",
                 "--out", str(feats), "--energies-csv", str(tmp_path / "e.csv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["sequences"] == 54 - 12 and summary["kind"] == "derivative"
    assert read_features(feats).kind == "derivative"

    ckpt = tmp_path / "m.eegm"
    assert main(["train", "--features", str(feats), "--epochs", "2", "--hidden", "3",
                 "--seed", "1", "--out", str(ckpt)]) == 0
    assert capsys.readouterr().out.count("epoch") == 2
    assert read_checkpoint(ckpt).H == 3

    rep = tmp_path / "r.json"
    assert main(["eval", "--features", str(feats), "--runs", "2", "--train-frac", "0.5",
                 "--seed", "4", "--epochs", "1", "--hidden", "3", "--out", str(rep),
                 "--checkpoint-dir", str(tmp_path / "ck")]) == 0
    capsys.readouterr()
    assert json.loads(rep.read_text())["runs"] == 2
    assert len(list((tmp_path / "ck").iterdir())) == 2

    assert main(["report", str(rep)]) == 0
    assert "True Class" in capsys.readouterr().out


def test_feature_archive_layout(tmp_path, synth_dir):
    ds = build_dataset(synth_dir / "manifest.json", "audio_type", PipelineConfig(400, 0.5))
    path = tmp_path / "f.eegf"
    write_features(ds, path)
    raw = path.read_bytes()
    assert raw[:4] == b"EEGF"
    C = ds.X.shape[1]
    tail = raw[-(4 + 8 * C * C):]
    assert int.from_bytes(tail[:4], "little") == ds.y[-1]
    np.testing.assert_array_equal(np.frombuffer(tail[4:], "<f8").reshape(C, C), ds.X[-1])


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope.json")]) == 1
    bad = tmp_path / "bad.eegf"
    bad.write_bytes(b"XXXX")
    assert main(["train", "--features", str(bad), "--out", str(tmp_path / "m")]) == 3
