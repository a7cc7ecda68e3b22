"""Epoch-driven CTC training with validation, checkpointing and resume."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import audio, checkpoint, ctc, features, manifest
from .augment import apply_augmentations
from .checkpoint import TrainState
from .errors import AsrError
from .model import ModelConfig, backward, forward, init_model
from .text import Alphabet, build_alphabet, encode_labels

log = logging.getLogger(__name__)


class AlphabetMismatch(AsrError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    checkpoint_dir: Optional[str] = None
    load_checkpoint: Optional[str] = None
    fine_tune: bool = False
    early_stop_patience: Optional[int] = None
    workers: int = 1
    keep_checkpoints: Optional[int] = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.keep_checkpoints is not None and self.keep_checkpoints < 1:
            raise ValueError("keep_checkpoints must be >= 1")


@dataclass
class Utterance:
    index: int
    wav_path: Path
    transcript: str
    labels: list
    n_samples: int
    feats: Optional[np.ndarray] = None


@dataclass
class TrainResult:
    state: TrainState
    log: list = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    skipped: int = 0


def load_utterances(manifest_path, alphabet: Alphabet, mfcc: features.MfccConfig,
                    workers: int = 1, cache_features: bool = True) -> tuple:
    """Read a manifest and return ``(utterances, n_skipped)``.

    Rows whose transcript the alphabet cannot encode, or whose audio is shorter
    than one analysis window, are skipped with a warning.
    """
    rows = manifest.read_manifest(manifest_path)
    window = mfcc.window_samples()

    def load(item):
        i, row = item
        if not alphabet.covers(row.transcript):
            return None, "alphabet"
        wav = manifest.resolve_wav(manifest_path, row)
        clip = audio.to_canonical(audio.read_wav(wav))
        if len(clip) < window:
            return None, "too-short"
        feats = features.featurize(clip, mfcc).frames if cache_features else None
        return Utterance(i, wav, row.transcript, encode_labels(row.transcript, alphabet),
                         len(clip), feats), None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(load, enumerate(rows)))
    utts, skipped = [], 0
    for (i, row), (utt, reason) in zip(enumerate(rows), results):
        if utt is None:
            log.warning("SKIP %s %s", row.wav_filename, reason)
            skipped += 1
        else:
            utts.append(utt)
    return utts, skipped


def epoch_order(utts, epoch: int, seed: int) -> list:
    """Epoch 1 runs shortest-first; later epochs use a permutation keyed by (seed, epoch)."""
    if epoch == 1:
        return sorted(utts, key=lambda u: (u.n_samples, u.index))
    perm = np.random.default_rng([seed & 0xFFFFFFFF, epoch]).permutation(len(utts))
    return [utts[i] for i in perm]


def _features(utt: Utterance, mfcc, augments, seed, sample_index):
    if not augments and utt.feats is not None:
        return utt.feats
    clip = audio.to_canonical(audio.read_wav(utt.wav_path))
    if augments:
        clip = apply_augmentations(clip, augments, seed, sample_index)
    if len(clip) < mfcc.window_samples():
        return None
    return features.featurize(clip, mfcc).frames


def utterance_loss_grad(params, feats, labels, blank, rng=None):
    """CTC loss and parameter gradients for one utterance."""
    _, cache = forward(params, feats, rng)
    loss, d_logits = ctc.ctc_loss_grad(cache["log_probs"], labels, blank)
    return loss, backward(params, cache, d_logits)


def clip_by_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def apply_update(state: TrainState, grads: dict, cfg: TrainConfig) -> None:
    """One optimizer step, in place. ``sgd`` is a plain debug mode."""
    tensors = state.params.tensors
    if cfg.optimizer == "sgd":
        for name, g in grads.items():
            tensors[name] -= cfg.learning_rate * g
        return
    state.adam_step += 1
    t = state.adam_step
    corr1 = 1.0 - cfg.beta1 ** t
    corr2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        tensors[name] -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.epsilon)


def mean_loss(params, utts, blank) -> float:
    losses = []
    for u in utts:
        _, cache = forward(params, u.feats)
        try:
            losses.append(ctc.ctc_loss(cache["log_probs"], u.labels, blank))
        except ctc.Infeasible:
            continue
    return float(np.mean(losses)) if losses else math.nan


def format_log_line(entry: dict) -> str:
    return (f"epoch={entry['epoch']} train_loss={entry['train_loss']:.6f} "
            f"dev_loss={entry['dev_loss']:.6f} lr={entry['lr']:g} skipped={entry['skipped']}")


def train_step(state: TrainState, batch, cfg: TrainConfig, mfcc, augments,
               n_train: int) -> tuple:
    """Accumulate the mean batch gradient, clip it and apply one update.

    Returns ``(losses, n_skipped)``.
    """
    params = state.params
    blank = state.alphabet.blank_index
    total = None
    losses, skipped = [], 0
    for pos, utt in enumerate(batch):
        sample_index = (state.epoch - 1) * n_train + utt.index
        feats = _features(utt, mfcc, augments, cfg.seed, sample_index)
        if feats is None or feats.shape[0] < ctc.min_frames(utt.labels):
            skipped += 1
            continue
        rng = None
        if params.config.dropout:
            rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, state.global_step, pos])
        loss, grads = utterance_loss_grad(params, feats, utt.labels, blank, rng)
        losses.append(loss)
        if total is None:
            total = grads
        else:
            for k in total:
                total[k] += grads[k]
    if losses:
        for g in total.values():
            g /= len(losses)
        clip_by_global_norm(total, cfg.clip_norm)
        apply_update(state, total, cfg)
    state.global_step += 1
    return losses, skipped


def _initial_state(train_rows, model_cfg, cfg, alphabet, mfcc) -> TrainState:
    if cfg.load_checkpoint:
        state = checkpoint.load_checkpoint(cfg.load_checkpoint)
        derived = replace(model_cfg, n_input=state.mfcc.feature_width,
                          n_output=state.alphabet.n_output)
        checkpoint.check_compatible(state, derived)
        if cfg.fine_tune:
            state = TrainState(state.params, state.alphabet, state.mfcc)
        return state
    if alphabet is None:
        alphabet = build_alphabet(r.transcript for r in train_rows)
    derived = replace(model_cfg, n_input=mfcc.feature_width, n_output=alphabet.n_output)
    return TrainState(init_model(derived), alphabet, mfcc)


def run_training(train_manifest, dev_manifest, model_cfg: ModelConfig, cfg: TrainConfig,
                 augments=(), alphabet: Optional[Alphabet] = None,
                 mfcc: features.MfccConfig = features.MfccConfig(),
                 stop_after_epoch: Optional[int] = None) -> TrainResult:
    """Train (or resume/fine-tune) on a manifest, checkpointing every epoch.

    ``model_cfg.n_input`` and ``n_output`` are derived from the MFCC config and
    alphabet. When resuming, the checkpoint's alphabet and frontend win, and
    training continues up to ``cfg.epochs`` in total. ``stop_after_epoch``
    simulates an interruption (used by the resume tests).
    """
    checkpoint_dir = Path(cfg.checkpoint_dir or "checkpoints")
    train_rows = manifest.read_manifest(train_manifest)
    state = _initial_state(train_rows, model_cfg, cfg, alphabet, mfcc)
    mfcc = state.mfcc
    blank = state.alphabet.blank_index

    utts, skipped_rows = load_utterances(train_manifest, state.alphabet, mfcc, cfg.workers)
    if not utts:
        raise AlphabetMismatch(f"no usable rows in {train_manifest}")
    dev_utts = []
    if dev_manifest is not None and Path(dev_manifest).is_file():
        dev_utts, _ = load_utterances(dev_manifest, state.alphabet, mfcc, cfg.workers)
    n_train = len(manifest.read_manifest(train_manifest))

    result = TrainResult(state, skipped=skipped_rows)
    last_path = None
    while state.epoch < cfg.epochs:
        state.epoch += 1
        order = epoch_order(utts, state.epoch, cfg.seed)
        losses, skipped = [], 0
        for start in range(0, len(order), cfg.batch_size):
            batch_losses, batch_skipped = train_step(
                state, order[start:start + cfg.batch_size], cfg, mfcc, augments, n_train)
            losses.extend(batch_losses)
            skipped += batch_skipped
        train_loss = float(np.mean(losses)) if losses else math.nan
        dev_loss = mean_loss(state.params, dev_utts, blank) if dev_utts else math.nan
        entry = {"epoch": state.epoch, "train_loss": train_loss, "dev_loss": dev_loss,
                 "lr": cfg.learning_rate, "skipped": skipped}
        log.info(format_log_line(entry))
        result.log.append(entry)

        # without a dev set the best checkpoint is tracked on training loss
        watched = dev_loss if dev_utts else train_loss
        improved = not math.isnan(watched) and (
            state.best_dev_loss is None or watched < state.best_dev_loss)
        if improved:
            state.best_dev_loss, state.best_epoch, state.stale_epochs = watched, state.epoch, 0
        else:
            state.stale_epochs += 1
        last_path = checkpoint.save_checkpoint(state, checkpoint_dir)
        if improved:
            checkpoint.mark_best(checkpoint_dir, last_path.name)
        if cfg.keep_checkpoints:
            checkpoint.prune(checkpoint_dir, cfg.keep_checkpoints)

        if cfg.early_stop_patience and state.stale_epochs >= cfg.early_stop_patience:
            log.info("early stop: no improvement for %d epochs", state.stale_epochs)
            break
        if stop_after_epoch is not None and state.epoch >= stop_after_epoch:
            break
    result.checkpoint_path = last_path
    return result
