"""CTC loss via log-space forward-backward, plus greedy and prefix beam decoders."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AsrError
from .lm import BOUNDARY
from .text import Alphabet

NEG_INF = -np.inf


class CtcError(AsrError, ValueError):
    pass


class Infeasible(CtcError):
    pass


class InvalidLabel(CtcError):
    pass


def min_frames(labels) -> int:
    """Fewest frames that can emit ``labels``: one per label plus a blank between repeats."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _extended(labels, blank):
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    skip = np.zeros(ext.size, dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    return ext, skip


def _check(logprobs, labels, blank):
    logprobs = np.asarray(logprobs, dtype=np.float64)
    if logprobs.ndim != 2:
        raise CtcError(f"log-probabilities must be 2-D, got shape {logprobs.shape}")
    n_out = logprobs.shape[1]
    if not 0 <= blank < n_out:
        raise InvalidLabel(f"blank index {blank} outside [0, {n_out})")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    for lab in labels:
        if lab < 0 or lab >= n_out or lab == blank:
            raise InvalidLabel(f"label {lab} is blank or outside [0, {n_out})")
    if logprobs.shape[0] < min_frames(labels):
        raise Infeasible(
            f"{logprobs.shape[0]} frames cannot emit {labels.size} labels "
            f"(needs {min_frames(labels)})")
    return logprobs, labels


def ctc_forward(logprobs, labels, blank):
    """Log forward variables ``alpha[t, s]`` over the blank-extended labels (emission included)."""
    logprobs, labels = _check(logprobs, labels, blank)
    ext, skip = _extended(labels, blank)
    return _alpha(logprobs, ext, skip)


def _alpha(lp, ext, skip):
    t_len, s_len = lp.shape[0], ext.size
    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if s_len > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + lp[t, ext]
    return alpha


def _beta(lp, ext, skip):
    # beta[t, s]: log mass of completing the labelling from state s at t, emission at t excluded
    t_len, s_len = lp.shape[0], ext.size
    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = 0.0
    if s_len > 1:
        beta[-1, -2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc
    return beta


def ctc_loss(logprobs, labels, blank) -> float:
    logprobs, labels = _check(logprobs, labels, blank)
    ext, skip = _extended(labels, blank)
    alpha = _alpha(logprobs, ext, skip)
    return float(-np.logaddexp.reduce(alpha[-1, -2:]))


def ctc_loss_grad(logprobs, labels, blank):
    """Negative log-likelihood of ``labels`` and its gradient w.r.t. the pre-softmax logits.

    ``logprobs`` must be a log-softmax output, shape ``(T, n_output)``. The
    gradient is ``softmax - posterior``, where ``posterior[t, k]`` is the
    probability that frame ``t`` emits symbol ``k`` given the labelling.

    Raises:
        Infeasible: fewer frames than labels plus repeats.
        InvalidLabel: a label equals the blank or is out of range.
    """
    logprobs, labels = _check(logprobs, labels, blank)
    ext, skip = _extended(labels, blank)
    alpha = _alpha(logprobs, ext, skip)
    beta = _beta(logprobs, ext, skip)
    log_likelihood = np.logaddexp.reduce(alpha[-1, -2:])
    occupancy = np.exp(alpha + beta - log_likelihood)
    posterior = np.zeros_like(logprobs)
    np.add.at(posterior.T, ext, occupancy.T)
    grad = np.exp(logprobs) - posterior
    return float(-log_likelihood), grad


def state_posteriors(logprobs, labels, blank) -> np.ndarray:
    """Per-frame symbol posteriors given the labelling; rows sum to one."""
    loss, grad = ctc_loss_grad(logprobs, labels, blank)
    return np.exp(np.asarray(logprobs, dtype=np.float64)) - grad


def greedy_ids(logprobs, blank) -> list:
    path = np.argmax(np.asarray(logprobs), axis=1)
    out = []
    prev = None
    for k in path:
        if k != prev and k != blank:
            out.append(int(k))
        prev = k
    return out


def greedy_decode(logprobs, alphabet: Alphabet) -> str:
    """Best-path decoding: frame argmax, collapse repeats, drop blanks."""
    return "".join(alphabet.symbols[i] for i in greedy_ids(logprobs, alphabet.blank_index))


@dataclass
class BeamConfig:
    beam_width: int = 32
    lm_weight: float = 0.75
    insertion_bonus: float = 1.0
    lm: Optional[object] = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")

    def describe(self) -> str:
        lm = "none" if self.lm is None else f"{self.lm.order}-gram"
        return (f"beam(width={self.beam_width}, alpha={self.lm_weight}, "
                f"beta={self.insertion_bonus}, lm={lm})")


def beam_decode(logprobs, cfg: BeamConfig, alphabet: Alphabet) -> str:
    """CTC prefix beam search with optional character LM fusion.

    Beam entries are (prefix, ends-in-blank) states, each holding its own log
    mass, so a prefix contributes up to two entries. Entries are ranked by
    ``log P_ctc + lm_weight * log P_lm(prefix) + insertion_bonus * len(prefix)``
    and pruned to ``beam_width``; at the end both halves of each prefix are
    merged and the best prefix is returned. Ranking per state rather than per
    prefix makes width 1 follow the frame-wise argmax path exactly.

    With an LM, extensions by characters the LM does not know are not proposed,
    and finished prefixes are also charged the LM's end-of-sentence probability.
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    blank = alphabet.blank_index
    n_tokens = lp.shape[1]
    alpha, beta = cfg.lm_weight, cfg.insertion_bonus
    lm = cfg.lm if alpha != 0.0 else None
    symbols = alphabet.symbols
    allowed = [k != blank and (lm is None or symbols[k] in lm.vocab) for k in range(n_tokens)]

    lm_cache = {(): 0.0}

    def lm_score(prefix):
        if prefix not in lm_cache:
            context = "".join(symbols[k] for k in prefix[:-1])
            lm_cache[prefix] = lm_score(prefix[:-1]) + lm.log_prob(context, symbols[prefix[-1]])
        return lm_cache[prefix]

    def rank(prefix, mass):
        score = mass + beta * len(prefix)
        if lm is not None:
            score += alpha * lm_score(prefix)
        return score

    beams = {((), True): 0.0}
    for t in range(lp.shape[0]):
        row = lp[t]
        candidates = {}
        for (prefix, ended_blank), mass in beams.items():
            for k in range(n_tokens):
                if k == blank:
                    key = (prefix, True)
                elif prefix and k == prefix[-1] and not ended_blank:
                    key = (prefix, False)
                elif allowed[k]:
                    key = (prefix + (k,), False)
                else:
                    continue
                value = mass + row[k]
                old = candidates.get(key)
                candidates[key] = value if old is None else np.logaddexp(old, value)
        order = sorted(candidates.items(), key=lambda kv: -rank(kv[0][0], kv[1]))
        beams = dict(order[:cfg.beam_width])

    merged = {}
    for (prefix, _), mass in beams.items():
        merged[prefix] = np.logaddexp(merged[prefix], mass) if prefix in merged else mass
    def final(prefix, mass):
        score = rank(prefix, mass)
        if lm is not None:
            score += alpha * lm.log_prob("".join(symbols[k] for k in prefix), BOUNDARY)
        return score

    best = max(merged.items(), key=lambda kv: final(*kv))[0]
    return "".join(symbols[k] for k in best)


def log_prefix_probability(logprobs, labels, blank) -> float:
    """log P(labels | logprobs) marginalized over alignments; -inf when infeasible."""
    try:
        return -ctc_loss(logprobs, labels, blank)
    except Infeasible:
        return NEG_INF
