"""Command-line entry point: prepare, train, evaluate, transcribe, lm-train, validate.

Exit codes: 0 success, 1 user error, 2 internal error. Diagnostics go to
stderr; machine outputs go to files or stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from contextlib import contextmanager
from pathlib import Path

from filelock import FileLock, Timeout

from . import audio, checkpoint, evaluation, manifest, train
from .config import OPTIONS, PipelineConfig, load_config
from .errors import AsrError
from .lm import NgramModel, train_ngram
from .text import Alphabet, build_alphabet

log = logging.getLogger("accent_asr")

COMMANDS = {
    "prepare": "convert a corpus and write train/dev/test manifests plus alphabet.txt",
    "train": "train or resume the acoustic model",
    "evaluate": "score a manifest with a checkpoint and write WER/CER reports",
    "transcribe": "print the transcript of one audio file",
    "lm-train": "train a character n-gram model from a manifest",
    "validate": "check manifests against the file system",
}


class UsageError(AsrError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_options(parser):
    parser.add_argument("--config", help="JSON config file (flags override it)")
    for key, (default, typ, help_text) in OPTIONS.items():
        flag = "--" + key
        kwargs = {"dest": key, "default": argparse.SUPPRESS, "help": f"{help_text} [{default!r}]"}
        if typ is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kwargs)
        elif typ is list:
            parser.add_argument(flag, action="append", **kwargs)
        else:
            parser.add_argument(flag, type=typ, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="accent-asr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True
    for name, help_text in COMMANDS.items():
        _add_options(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig.default()
    flags = {k: v for k, v in vars(args).items() if k in OPTIONS}
    return cfg.with_overrides(flags)


@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with FileLock(str(out_dir / ".lock"), timeout=0):
            yield
    except Timeout:
        raise UsageError(f"{out_dir} is locked by another running command") from None


def _alphabet_for(cfg: PipelineConfig, rows) -> Alphabet:
    path = cfg.out_path("alphabet", "alphabet.txt")
    if path.is_file():
        return Alphabet.load(path)
    return build_alphabet(r.transcript for r in rows)


def cmd_prepare(cfg: PipelineConfig) -> int:
    if not cfg["corpus"] or not cfg["index"]:
        raise UsageError("prepare needs --corpus and --index")
    out = Path(cfg["out"])
    spec = cfg.split_spec()
    with output_lock(out):
        rows = manifest.scan_corpus(cfg["corpus"], cfg["index"], out, workers=cfg["workers"])
        parts = manifest.split_corpus(rows, spec)
        for name, part in zip(("train", "dev", "test"), parts):
            manifest.write_manifest(part, out / f"{name}.csv")
        build_alphabet(r.transcript for r in rows).save(out / "alphabet.txt")
    log.info("prepared %d utterances: train=%d dev=%d test=%d",
             len(rows), *(len(p) for p in parts))
    return 0


def _checkpoint_dir(cfg) -> Path:
    return cfg.out_path("checkpoint_dir", "checkpoints")


def cmd_train(cfg: PipelineConfig) -> int:
    train_csv = cfg.out_path("train_manifest", "train.csv")
    dev_csv = cfg.out_path("dev_manifest", "dev.csv")
    ckpt_dir = _checkpoint_dir(cfg)
    train_cfg = cfg.train(str(ckpt_dir))
    alphabet = None
    if not cfg["load_checkpoint"]:
        alphabet = _alphabet_for(cfg, manifest.read_manifest(train_csv))
    with output_lock(Path(cfg["out"])):
        result = train.run_training(train_csv, dev_csv if dev_csv.is_file() else None,
                                    cfg.model(), train_cfg, cfg.augments(),
                                    alphabet=alphabet, mfcc=cfg.mfcc())
        lines = [train.format_log_line(e) for e in result.log]
        with open(ckpt_dir / "train_log.txt", "a", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(line + "\n" for line in lines))
    log.info("last checkpoint: %s", result.checkpoint_path)
    return 0


def _beam(cfg: PipelineConfig):
    if cfg["decoder"] == "greedy":
        return None
    if cfg["decoder"] != "beam":
        raise UsageError(f"decoder must be 'greedy' or 'beam', got {cfg['decoder']!r}")
    lm = NgramModel.load(cfg["lm"]) if cfg["lm"] else None
    return cfg.beam(lm)


def _checkpoint(cfg) -> Path:
    return Path(cfg["checkpoint"]) if cfg["checkpoint"] else _checkpoint_dir(cfg)


def cmd_evaluate(cfg: PipelineConfig) -> int:
    test_csv = cfg.out_path("manifest", "test.csv")
    report_dir = cfg.out_path("report_dir", "eval")
    report, _ = evaluation.evaluate(test_csv, _checkpoint(cfg), _beam(cfg), report_dir)
    sys.stdout.write(report.to_text())
    return 0


def cmd_transcribe(cfg: PipelineConfig) -> int:
    if not cfg["wav"]:
        raise UsageError("transcribe needs --wav")
    state = checkpoint.load_checkpoint(_checkpoint(cfg))
    text = evaluation.transcribe_clip(state, audio.read_wav(cfg["wav"]), _beam(cfg))
    sys.stdout.write(text + "\n")
    return 0


def cmd_lm_train(cfg: PipelineConfig) -> int:
    rows = manifest.read_manifest(cfg.out_path("manifest", "train.csv"))
    alphabet = _alphabet_for(cfg, rows)
    model = train_ngram([r.transcript for r in rows], cfg["lm_train.order"],
                        cfg["lm_train.k"], symbols=alphabet.symbols)
    out = cfg.out_path("lm_out", "lm.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    log.info("wrote %d-gram model with %d contexts to %s", model.order, len(model.counts), out)
    return 0


def cmd_validate(cfg: PipelineConfig) -> int:
    if cfg["manifest"]:
        paths = [Path(cfg["manifest"])]
    else:
        out = Path(cfg["out"])
        paths = [out / f"{n}.csv" for n in ("train", "dev", "test") if (out / f"{n}.csv").is_file()]
    if not paths:
        raise UsageError("no manifests to validate")
    bad = 0
    for path in paths:
        for row_no, name, problem in manifest.validate_manifest(path):
            log.error("INVALID %s:%d %s %s", path, row_no, name, problem)
            bad += 1
    log.info("validated %d manifest(s): %d problem(s)", len(paths), bad)
    return 1 if bad else 0


HANDLERS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "transcribe": cmd_transcribe,
    "lm-train": cmd_lm_train,
    "validate": cmd_validate,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging()
    try:
        return HANDLERS[args.command](resolve_config(args))
    except (AsrError, FileNotFoundError) as exc:
        log.error("error: %s", exc)
        return 1
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 2


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time, so redirections are honoured."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging():
    root = logging.getLogger("accent_asr")
    if not any(isinstance(h, _StderrHandler) for h in root.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
    root.setLevel(logging.INFO)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
