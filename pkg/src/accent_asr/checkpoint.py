"""Self-describing binary checkpoints.

Layout::

    b"ASRC" | u32 version | u64 metadata length | metadata (UTF-8 JSON) |
    float64 little-endian tensor payload | u32 CRC-32 of everything before

The metadata lists tensor names and shapes in payload order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AsrError
from .features import MfccConfig
from .model import PARAM_NAMES, ModelConfig, ModelParams
from .text import Alphabet

MAGIC = b"ASRC"
FORMAT_VERSION = 1
BEST_MARKER = "best"

_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(AsrError):
    pass


class ChecksumMismatch(CheckpointError):
    pass


class VersionUnsupported(CheckpointError):
    pass


class CheckpointIncompatible(CheckpointError):
    pass


class IoFailure(CheckpointError, OSError):
    pass


@dataclass(eq=False)
class TrainState:
    """Everything needed to resume: weights, Adam moments, counters and frontend config."""

    params: ModelParams
    alphabet: Alphabet
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    adam_m: Optional[dict] = None
    adam_v: Optional[dict] = None
    adam_step: int = 0
    epoch: int = 0
    global_step: int = 0
    best_dev_loss: Optional[float] = None
    best_epoch: Optional[int] = None
    stale_epochs: int = 0

    def __post_init__(self):
        if self.adam_m is None:
            self.adam_m = {k: np.zeros_like(v) for k, v in self.params.tensors.items()}
        if self.adam_v is None:
            self.adam_v = {k: np.zeros_like(v) for k, v in self.params.tensors.items()}


def _tensor_order():
    return ([("param", n) for n in PARAM_NAMES] + [("adam_m", n) for n in PARAM_NAMES]
            + [("adam_v", n) for n in PARAM_NAMES])


def encode_checkpoint(state: TrainState) -> bytes:
    sources = {"param": state.params.tensors, "adam_m": state.adam_m, "adam_v": state.adam_v}
    tensors = []
    chunks = []
    for group, name in _tensor_order():
        arr = np.ascontiguousarray(sources[group][name], dtype="<f8")
        tensors.append({"group": group, "name": name, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": state.params.config.to_dict(),
        "mfcc_config": asdict(state.mfcc),
        "alphabet": list(state.alphabet.symbols),
        "adam_step": state.adam_step,
        "epoch": state.epoch,
        "global_step": state.global_step,
        "best_dev_loss": state.best_dev_loss,
        "best_epoch": state.best_epoch,
        "stale_epochs": state.stale_epochs,
        "tensors": tensors,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":"),
                            ensure_ascii=False, allow_nan=False).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(meta_bytes)) + meta_bytes + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(data: bytes) -> TrainState:
    if len(data) < _PREFIX.size + 4:
        raise ChecksumMismatch("checkpoint too short")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch("checkpoint CRC-32 mismatch (truncated or corrupt)")
    magic, version, meta_len = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError("not an ASRC checkpoint")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"checkpoint format version {version} is not supported")
    meta = json.loads(body[_PREFIX.size:_PREFIX.size + meta_len].decode("utf-8"))
    offset = _PREFIX.size + meta_len
    groups = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in meta["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
        groups[entry["group"]][entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
        offset += 8 * count
    if offset != len(body):
        raise CheckpointError("checkpoint payload size disagrees with its metadata")
    params = ModelParams(ModelConfig(**meta["model_config"]), groups["param"])
    params.check()
    return TrainState(
        params=params,
        alphabet=Alphabet(tuple(meta["alphabet"])),
        mfcc=MfccConfig(**meta["mfcc_config"]),
        adam_m=groups["adam_m"],
        adam_v=groups["adam_v"],
        adam_step=meta["adam_step"],
        epoch=meta["epoch"],
        global_step=meta["global_step"],
        best_dev_loss=meta["best_dev_loss"],
        best_epoch=meta["best_epoch"],
        stale_epochs=meta["stale_epochs"],
    )


def checkpoint_name(epoch: int) -> str:
    return f"ckpt-{epoch}.bin"


def save_checkpoint(state: TrainState, directory) -> Path:
    directory = Path(directory)
    path = directory / checkpoint_name(state.epoch)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(encode_checkpoint(state))
        tmp.replace(path)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> TrainState:
    path = Path(path)
    if path.is_dir():
        path = best_checkpoint(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)


def mark_best(directory, name: str) -> None:
    (Path(directory) / BEST_MARKER).write_text(name + "\n", encoding="utf-8")


def best_checkpoint(directory) -> Path:
    """Resolve the checkpoint named by the directory's ``best`` marker file."""
    marker = Path(directory) / BEST_MARKER
    if not marker.is_file():
        raise IoFailure(f"no '{BEST_MARKER}' marker in {directory}")
    return Path(directory) / marker.read_text(encoding="utf-8").strip()


def prune(directory, keep: int) -> list:
    """Delete all but the newest ``keep`` epoch checkpoints, sparing the best one."""
    directory = Path(directory)
    marker = directory / BEST_MARKER
    best = marker.read_text(encoding="utf-8").strip() if marker.is_file() else None
    found = []
    for path in directory.glob("ckpt-*.bin"):
        stem = path.stem[len("ckpt-"):]
        if stem.isdigit():
            found.append((int(stem), path))
    found.sort()
    removed = []
    for _, path in found[:-keep]:
        if path.name != best:
            path.unlink()
            removed.append(path)
    return removed


def check_compatible(state: TrainState, cfg: ModelConfig) -> None:
    have = state.params.config
    for dim in ("n_input", "n_hidden", "n_output"):
        if getattr(have, dim) != getattr(cfg, dim):
            raise CheckpointIncompatible(
                f"checkpoint has {dim}={getattr(have, dim)}, run is configured "
                f"for {getattr(cfg, dim)}")
