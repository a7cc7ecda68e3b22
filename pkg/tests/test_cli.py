import json
from pathlib import Path

import pytest
from filelock import FileLock

from accent_asr import cli, synth
from accent_asr.cli import run_cli
from accent_asr.config import (
    OPTIONS, ParseError, PipelineConfig, TypeMismatch, UnknownKey, config_schema, load_config,
)
from accent_asr.manifest import read_manifest


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_empty_config_is_all_defaults(tmp_path):
    cfg = load_config(write_json(tmp_path / "c.json", {}))
    assert cfg.values == PipelineConfig.default().values
    assert cfg.train().epochs == 30


def test_partial_config_merges(tmp_path):
    cfg = load_config(write_json(tmp_path / "c.json", {"epochs": 30, "mfcc": {"n_mels": 30},
                                                       "model.n_hidden": 32}))
    assert cfg.train().epochs == 30
    assert cfg.mfcc().n_mels == 30 and cfg.mfcc().n_coeffs == 26
    assert cfg.model().n_hidden == 32


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(UnknownKey) as err:
        load_config(write_json(tmp_path / "c.json", {"epocs": 30}))
    assert err.value.key == "epocs"
    with pytest.raises(UnknownKey):
        load_config(write_json(tmp_path / "c.json", {"mfcc": {"windw_ms": 1}}))


@pytest.mark.parametrize("doc", [{"epochs": "30"}, {"epochs": 1.5}, {"epochs": True},
                                 {"augment": "gain"}, {"fine_tune": 1}])
def test_type_mismatch(tmp_path, doc):
    with pytest.raises(TypeMismatch):
        load_config(write_json(tmp_path / "c.json", doc))


def test_parse_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{epochs: 3}")
    with pytest.raises(ParseError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ParseError):
        load_config(write_json(tmp_path / "list.json", [1]))


def test_int_widens_to_float(tmp_path):
    cfg = load_config(write_json(tmp_path / "c.json", {"learning_rate": 1}))
    assert cfg["learning_rate"] == 1.0 and isinstance(cfg["learning_rate"], float)


def test_shipped_schema_is_current():
    shipped = Path(__file__).resolve().parents[1] / "docs" / "config.schema.json"
    assert json.loads(shipped.read_text(encoding="utf-8")) == config_schema()
    assert set(config_schema()["properties"]) == set(OPTIONS)


def test_usage_error_prints_help(capsys):
    assert run_cli(["frobnicate"]) == 1
    assert run_cli([]) == 1
    assert run_cli(["train", "--epochs", "many"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "prepare" in capsys.readouterr().out


def test_config_error_is_user_error(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"epocs": 30})
    assert run_cli(["train", "--config", str(cfg)]) == 1
    assert "epocs" in capsys.readouterr().err


def test_missing_inputs_are_user_errors(tmp_path):
    assert run_cli(["prepare", "--out", str(tmp_path)]) == 1
    assert run_cli(["transcribe", "--out", str(tmp_path)]) == 1
    assert run_cli(["evaluate", "--out", str(tmp_path)]) == 1
    assert run_cli(["validate", "--out", str(tmp_path / "nothing")]) == 1


def test_internal_error_exit_code(monkeypatch, tmp_path, capsys):
    def boom(cfg):
        raise RuntimeError("bug")
    monkeypatch.setitem(cli.HANDLERS, "validate", boom)
    assert run_cli(["validate", "--out", str(tmp_path)]) == 2
    assert "RuntimeError" in capsys.readouterr().err


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    index = synth.write_corpus(root / "corpus", synth.FIXTURE_TRANSCRIPTS, 22050)
    out = root / "work"
    assert run_cli(["prepare", "--corpus", str(root / "corpus"), "--index", str(index),
                    "--out", str(out), "--split", "0.8,0.1,0.1", "--seed", "42"]) == 0
    return root, out


def test_prepare_outputs(prepared):
    root, out = prepared
    for name in ("train.csv", "dev.csv", "test.csv", "alphabet.txt"):
        assert (out / name).is_file()
    total = sum(len(read_manifest(out / f"{n}.csv")) for n in ("train", "dev", "test"))
    assert total == len(synth.FIXTURE_TRANSCRIPTS)
    assert not list((root / "corpus").glob("*.csv"))


def test_flag_overrides_config(prepared, tmp_path):
    _, out = prepared
    cfg = write_json(tmp_path / "run.json", {"epochs": 5, "model": {"n_hidden": 8},
                                             "checkpoint_dir": str(tmp_path / "ckpt")})
    assert run_cli(["train", "--config", str(cfg), "--epochs", "1", "--out", str(out)]) == 0
    log = (tmp_path / "ckpt" / "train_log.txt").read_text().splitlines()
    assert len(log) == 1 and log[0].startswith("epoch=1 train_loss=")
    assert (tmp_path / "ckpt" / "ckpt-1.bin").is_file()


def test_train_evaluate_transcribe_lm(prepared, tmp_path, capsys):
    root, out = prepared
    ckpt = tmp_path / "ckpt"
    common = ["--out", str(out), "--checkpoint_dir", str(ckpt), "--model.n_hidden", "8"]
    assert run_cli(["train", "--epochs", "1", *common]) == 0
    assert run_cli(["lm-train", "--out", str(out), "--lm_out", str(tmp_path / "lm.txt"),
                    "--lm_train.order", "3"]) == 0
    assert (tmp_path / "lm.txt").read_text().startswith("#ngram ")
    capsys.readouterr()
    assert run_cli(["evaluate", "--out", str(out), "--checkpoint", str(ckpt),
                    "--manifest", str(out / "train.csv"), "--report_dir", str(tmp_path / "ev"),
                    "--decoder", "beam", "--beam.width", "4", "--lm", str(tmp_path / "lm.txt")]) == 0
    report = capsys.readouterr().out
    assert report.startswith("decoder beam(width=4")
    assert "mean WER " in report
    assert run_cli(["transcribe", "--checkpoint", str(ckpt / "ckpt-1.bin"),
                    "--wav", str(root / "corpus" / "utt03.wav")]) == 0
    printed = capsys.readouterr().out
    assert printed.count("\n") == 1
    assert run_cli(["evaluate", "--out", str(out), "--checkpoint", str(ckpt),
                    "--decoder", "viterbi"]) == 1


def test_validate_exit_status(prepared, tmp_path, capsys):
    _, out = prepared
    assert run_cli(["validate", "--out", str(out)]) == 0
    rows = (out / "train.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    name, size, text = rows[1].split(",")
    bad.write_text("\n".join([rows[0], f"{(out / name).resolve()},{int(size) + 1},{text}"]) + "\n")
    assert run_cli(["validate", "--manifest", str(bad)]) == 1
    assert "INVALID" in capsys.readouterr().err


def test_locked_output_directory(prepared, tmp_path):
    _, out = prepared
    with FileLock(str(out / ".lock")):
        assert run_cli(["prepare", "--corpus", str(tmp_path), "--index", str(tmp_path / "i"),
                        "--out", str(out)]) == 1
