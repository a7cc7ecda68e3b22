"""Pipeline configuration: one flat namespace of dotted keys with strict JSON loading.

Precedence is command-line flag > config file > built-in default. Config files
may nest sections (``{"mfcc": {"window_ms": 25}}``) or spell keys dotted
(``{"mfcc.window_ms": 25}``); both flatten to the same key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .augment import parse_augment_spec
from .ctc import BeamConfig
from .errors import AsrError
from .features import MfccConfig
from .manifest import SplitSpec
from .model import ModelConfig
from .train import TrainConfig

# key: (default, type, help)
OPTIONS = {
    "corpus": (None, str, "root directory of the source corpus"),
    "index": (None, str, "transcript index file (id<TAB>text)"),
    "out": ("work", str, "output directory for manifests, checkpoints and reports"),
    "split": ("0.8,0.1,0.1", str, "train,dev,test fractions"),
    "seed": (42, int, "seed for splitting, batch order, augmentation and dropout"),
    "workers": (1, int, "worker threads for audio conversion and feature loading"),
    "train_manifest": (None, str, "training manifest (default <out>/train.csv)"),
    "dev_manifest": (None, str, "validation manifest (default <out>/dev.csv)"),
    "manifest": (None, str, "manifest for evaluate / lm-train / validate"),
    "alphabet": (None, str, "alphabet file (default <out>/alphabet.txt when present)"),
    "checkpoint_dir": (None, str, "checkpoint directory (default <out>/checkpoints)"),
    "checkpoint": (None, str, "checkpoint file or directory for evaluate / transcribe"),
    "load_checkpoint": (None, str, "checkpoint to resume or fine-tune from"),
    "fine_tune": (False, bool, "reset counters and optimizer state when loading a checkpoint"),
    "epochs": (30, int, "total training epochs"),
    "batch_size": (8, int, "utterances per optimizer step"),
    "learning_rate": (1e-3, float, "optimizer step size"),
    "optimizer": ("adam", str, "adam or sgd (debug)"),
    "clip_norm": (5.0, float, "global gradient-norm clipping threshold"),
    "early_stop_patience": (None, int, "stop after this many epochs without improvement"),
    "keep_checkpoints": (5, int, "newest epoch checkpoints kept besides the best one (null keeps all)"),
    "augment": ([], list, "augmentation spec, e.g. gain[p=0.5,db=-6:0] (repeatable)"),
    "decoder": ("greedy", str, "greedy or beam"),
    "lm": (None, str, "character n-gram model file used by the beam decoder"),
    "wav": (None, str, "audio file to transcribe"),
    "report_dir": (None, str, "evaluation output directory (default <out>/eval)"),
    "lm_out": (None, str, "where lm-train writes the model (default <out>/lm.txt)"),
    "mfcc.window_ms": (32.0, float, "analysis window length"),
    "mfcc.step_ms": (20.0, float, "frame step"),
    "mfcc.n_fft": (512, int, "FFT size (power of two)"),
    "mfcc.n_mels": (40, int, "mel filters"),
    "mfcc.n_coeffs": (26, int, "cepstral coefficients kept"),
    "mfcc.preemphasis": (0.97, float, "pre-emphasis coefficient"),
    "mfcc.log_floor": (1e-10, float, "floor applied before the log"),
    "mfcc.context": (0, int, "frames of context stacked on each side"),
    "model.n_hidden": (128, int, "hidden width of every layer"),
    "model.relu_clip": (20.0, float, "upper clip of the ReLU activations"),
    "model.dropout": (0.0, float, "dropout rate on the dense layers during training"),
    "model.seed": (0, int, "weight initialization seed"),
    "beam.width": (32, int, "beam width"),
    "beam.alpha": (0.75, float, "language model weight"),
    "beam.beta": (1.0, float, "per-character insertion bonus"),
    "lm_train.order": (5, int, "n-gram order"),
    "lm_train.k": (0.5, float, "add-k smoothing constant"),
}


class ConfigError(AsrError, ValueError):
    pass


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError, KeyError):
    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self):
        return f"unknown config key {self.key!r}"


class TypeMismatch(ConfigError, TypeError):
    pass


def defaults() -> dict:
    return {k: (list(v[0]) if isinstance(v[0], list) else v[0]) for k, v in OPTIONS.items()}


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def coerce(key: str, value: Any) -> Any:
    """Check ``value`` against the declared type of ``key``; ints widen to floats."""
    if key not in OPTIONS:
        raise UnknownKey(key)
    default, typ, _ = OPTIONS[key]
    if value is None and default is None:
        return None
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is list:
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return list(value)
        raise TypeMismatch(f"{key}: expected a list of strings, got {value!r}")
    if (typ is int and isinstance(value, bool)) or not isinstance(value, typ):
        raise TypeMismatch(f"{key}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in _flatten(overrides).items():
        merged[key] = coerce(key, value)
    return merged


def load_config(path) -> "PipelineConfig":
    """Strictly parse a JSON config file and merge it over the defaults."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return PipelineConfig(merge(defaults(), doc))


def config_schema() -> dict:
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "array"}
    props = {}
    for key, (default, typ, help_text) in OPTIONS.items():
        kind = names[typ]
        prop = {"type": kind if default is not None else [kind, "null"],
                "default": default, "description": help_text}
        if typ is list:
            prop["items"] = {"type": "string"}
        props[key] = prop
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "accent-asr pipeline configuration (flattened dotted keys)",
        "type": "object",
        "additionalProperties": False,
        "properties": props,
    }


@dataclass
class PipelineConfig:
    values: dict

    def __getitem__(self, key):
        if key not in self.values:
            raise UnknownKey(key)
        return self.values[key]

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls(defaults())

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        return PipelineConfig(merge(self.values, overrides))

    def out_path(self, key: str, fallback: str) -> Path:
        """The configured path for ``key`` or ``<out>/<fallback>``."""
        value = self.values[key]
        return Path(value) if value is not None else Path(self.values["out"]) / fallback

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def _build(self, factory, **kwargs):
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def mfcc(self):
        return self._build(MfccConfig, **self.section("mfcc"))

    def model(self):
        return self._build(ModelConfig, **self.section("model"))

    def split_spec(self):
        return self._build(SplitSpec.parse, text=self["split"], seed=self["seed"])

    def train(self, checkpoint_dir: Optional[str] = None):
        return self._build(
            TrainConfig,
            epochs=self["epochs"], batch_size=self["batch_size"],
            learning_rate=self["learning_rate"], optimizer=self["optimizer"],
            clip_norm=self["clip_norm"], seed=self["seed"],
            checkpoint_dir=checkpoint_dir, load_checkpoint=self["load_checkpoint"],
            fine_tune=self["fine_tune"], early_stop_patience=self["early_stop_patience"],
            workers=self["workers"], keep_checkpoints=self["keep_checkpoints"])

    def beam(self, lm=None):
        return self._build(BeamConfig, beam_width=self["beam.width"],
                           lm_weight=self["beam.alpha"], insertion_bonus=self["beam.beta"],
                           lm=lm)

    def augments(self):
        return [parse_augment_spec(s) for s in self["augment"]]
